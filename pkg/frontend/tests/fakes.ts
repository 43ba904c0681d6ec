// Canned fetch for unit tests: route table of method+path prefix handlers.

export type Route = {
    method: string;
    path: string | RegExp;
    status?: number;
    body: unknown | ((url: string, init?: RequestInit) => unknown);
};

export function fakeFetch(routes: Route[], log: string[] = []): typeof fetch {
    return (async (input: any, init?: RequestInit) => {
        const url = String(input);
        const method = init?.method ?? "GET";
        log.push(`${method} ${url}`);
        for (const route of routes) {
            const matches =
                route.method === method &&
                (typeof route.path === "string" ? url.includes(route.path) : route.path.test(url));
            if (matches) {
                const body =
                    typeof route.body === "function" ? (route.body as any)(url, init) : route.body;
                return new Response(JSON.stringify(body), {
                    status: route.status ?? 200,
                    headers: { "Content-Type": "application/json" },
                });
            }
        }
        throw new TypeError(`no route for ${method} ${url} (network unreachable)`);
    }) as typeof fetch;
}
