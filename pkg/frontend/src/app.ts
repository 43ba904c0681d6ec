// Browser bootstrap: wires the model to the static page in index.html.
// The registry base URL comes from ?registry=... or defaults to same-host
// port 8081.

import { RegistryApi } from "./api.js";
import { renderActivityList, renderBusinessControls } from "./views.js";
import { BusinessPanel, DashboardModel } from "./viewmodel.js";

function requireElement(id: string): HTMLElement {
    const el = document.getElementById(id);
    if (!el) {
        throw new Error(`missing #${id}`);
    }
    return el;
}

export function boot(): void {
    const params = new URLSearchParams(window.location.search);
    const base = params.get("registry") ?? `http://${window.location.hostname}:8081`;
    const api = new RegistryApi(base);
    const model = new DashboardModel(api);
    let panel: BusinessPanel | null = null;

    const listContainer = requireElement("activities");
    const businessContainer = requireElement("business");
    const status = requireElement("status");

    const redraw = () => {
        renderActivityList(model, listContainer);
        renderBusinessControls(model, panel, businessContainer);
    };

    const lat = Number(params.get("lat") ?? "43.11");
    const lon = Number(params.get("lon") ?? "12.39");
    const radius = Number(params.get("radius") ?? "10000");

    model
        .browseNearby(lat, lon, radius)
        .catch(() => undefined)
        .then(redraw);
    model.startPolling();
    setInterval(redraw, 1000);

    (document.getElementById("login-form") as HTMLFormElement | null)?.addEventListener(
        "submit",
        async (event) => {
            event.preventDefault();
            const email = (document.getElementById("email") as HTMLInputElement).value;
            const password = (document.getElementById("password") as HTMLInputElement).value;
            try {
                await model.login(email, password);
                panel = model.isBusiness ? new BusinessPanel(api, model) : null;
                status.textContent = `logged in as ${email} (${model.session?.role})`;
            } catch (err) {
                status.textContent = String(err instanceof Error ? err.message : err);
            }
            redraw();
        },
    );
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
    boot();
} else if (typeof document !== "undefined") {
    document.addEventListener("DOMContentLoaded", boot);
}
