// HTTP client for the registry API. Every method maps 1:1 onto an endpoint
// and error responses surface the server's message verbatim, so the UI can
// show exactly what the server said (client-side gating never replaces it).

export interface Geo {
    lat: number;
    lon: number;
}

export interface ActivityCard {
    activity_id: string;
    name: string;
    address: string;
    geo: Geo;
    capacity: number;
    distance_m?: number;
    occupancy?: number;
    as_of_ms?: number | null;
}

export interface OccupancyResponse {
    occupancy: number;
    capacity: number;
    as_of_ms: number | null;
}

export interface LoginResponse {
    token: string;
    role: "standard" | "business";
}

export interface OtpGrant {
    otp: string;
    ttl_s: number;
    expires_ms: number;
}

export interface Association {
    device_id: string;
    activity_id: string;
    location_id: string;
    activity_name: string;
}

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

type FetchLike = typeof fetch;

export class RegistryApi {
    constructor(private baseUrl: string, private fetchFn: FetchLike = fetch) {
        this.baseUrl = baseUrl.replace(/\/+$/, "");
    }

    private async call(method: string, path: string, body?: unknown, token?: string): Promise<any> {
        const headers: Record<string, string> = { "Content-Type": "application/json" };
        if (token) {
            headers["Authorization"] = `Bearer ${token}`;
        }
        const response = await this.fetchFn(this.baseUrl + path, {
            method,
            headers,
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const payload = await response.json().catch(() => ({}));
        if (!response.ok) {
            throw new ApiError(response.status, payload.error ?? `HTTP ${response.status}`);
        }
        return payload;
    }

    register(email: string, password: string): Promise<{ user_id: string; role: string }> {
        return this.call("POST", "/auth/register", { email, password });
    }

    login(email: string, password: string): Promise<LoginResponse> {
        return this.call("POST", "/auth/login", { email, password });
    }

    nearby(lat: number, lon: number, radiusM: number): Promise<{ activities: ActivityCard[] }> {
        return this.call("GET", `/activities/nearby?lat=${lat}&lon=${lon}&radius=${radiusM}`);
    }

    occupancy(activityId: string, token?: string): Promise<OccupancyResponse> {
        return this.call("GET", `/activities/${activityId}/occupancy`, undefined, token);
    }

    createActivity(token: string, name: string, address: string, capacity: number): Promise<any> {
        return this.call("POST", "/activities", { name, address, capacity }, token);
    }

    issueOtp(token: string, activityId: string): Promise<OtpGrant> {
        return this.call("POST", `/activities/${activityId}/otp`, {}, token);
    }

    associateDevice(deviceId: string, otp: string): Promise<Association> {
        return this.call("POST", "/devices/associate", { device_id: deviceId, otp });
    }

    devices(token: string, activityId: string): Promise<{ devices: { device_id: string }[] }> {
        return this.call("GET", `/activities/${activityId}/devices`, undefined, token);
    }
}
