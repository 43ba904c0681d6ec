// Screen state for the dashboard. The model never derives occupancy
// numbers: everything displayed is a value some API response carried, plus
// the timestamp it was true at. When the registry is unreachable, the last
// known data stays on screen but is flagged stale behind an offline banner.

import { ActivityCard, ApiError, OccupancyResponse, RegistryApi } from "./api.js";

export interface Session {
    token: string;
    role: "standard" | "business";
    email: string;
}

export const DEFAULT_POLL_INTERVAL_MS = 5000;

export class DashboardModel {
    activities: ActivityCard[] = [];
    occupancy = new Map<string, OccupancyResponse>();
    session: Session | null = null;
    offline = false;
    stale = false;
    lastError = "";
    private timer: ReturnType<typeof setTimeout> | null = null;

    constructor(
        private api: RegistryApi,
        public pollIntervalMs: number = DEFAULT_POLL_INTERVAL_MS,
    ) {}

    get isBusiness(): boolean {
        return this.session?.role === "business";
    }

    async register(email: string, password: string): Promise<void> {
        await this.api.register(email, password);
    }

    async login(email: string, password: string): Promise<Session> {
        const reply = await this.api.login(email, password);
        this.session = { token: reply.token, role: reply.role, email };
        return this.session;
    }

    logout(): void {
        this.session = null;
    }

    // The "map": no tile server in scope, so nearby results render as the
    // distance-sorted list the API already returns.
    async browseNearby(lat: number, lon: number, radiusM: number): Promise<ActivityCard[]> {
        try {
            const reply = await this.api.nearby(lat, lon, radiusM);
            this.activities = reply.activities;
            for (const activity of this.activities) {
                if (activity.occupancy !== undefined) {
                    this.occupancy.set(activity.activity_id, {
                        occupancy: activity.occupancy,
                        capacity: activity.capacity,
                        as_of_ms: activity.as_of_ms ?? null,
                    });
                }
            }
            this.offline = false;
            this.stale = false;
            return this.activities;
        } catch (err) {
            this.noteFailure(err);
            throw err;
        }
    }

    async pollOnce(): Promise<void> {
        let failed = false;
        for (const activity of this.activities) {
            try {
                const reply = await this.api.occupancy(activity.activity_id, this.session?.token);
                this.occupancy.set(activity.activity_id, reply);
            } catch (err) {
                if (err instanceof ApiError) {
                    // hidden/denied: drop the number rather than show stale
                    this.occupancy.delete(activity.activity_id);
                } else {
                    failed = true;
                }
            }
        }
        if (failed) {
            this.offline = true;
            this.stale = true;
        } else {
            this.offline = false;
            this.stale = false;
        }
    }

    startPolling(): void {
        if (this.timer !== null) {
            return;
        }
        const tick = async () => {
            await this.pollOnce().catch(() => undefined);
            this.timer = setTimeout(tick, this.pollIntervalMs);
        };
        this.timer = setTimeout(tick, this.pollIntervalMs);
    }

    stopPolling(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
    }

    private noteFailure(err: unknown): void {
        if (err instanceof ApiError) {
            this.lastError = err.message;
        } else {
            this.offline = true;
            this.stale = this.activities.length > 0;
            this.lastError = "registry unreachable";
        }
    }
}

// Business-side flows: create an activity, issue an OTP, pair a device.
// Server validation errors land in lastError verbatim for inline display.
export class BusinessPanel {
    lastError = "";
    lastOtp = "";
    devices: string[] = [];
    activityId = "";

    constructor(private api: RegistryApi, private model: DashboardModel) {}

    private get token(): string {
        const session = this.model.session;
        if (!session) {
            throw new ApiError(401, "not logged in");
        }
        return session.token;
    }

    async createActivity(name: string, address: string, capacity: number): Promise<string> {
        this.lastError = "";
        try {
            const activity = await this.api.createActivity(this.token, name, address, capacity);
            this.activityId = activity.activity_id;
            return this.activityId;
        } catch (err) {
            this.remember(err);
            throw err;
        }
    }

    async issueOtp(): Promise<string> {
        this.lastError = "";
        try {
            const grant = await this.api.issueOtp(this.token, this.activityId);
            this.lastOtp = grant.otp;
            return grant.otp;
        } catch (err) {
            this.remember(err);
            throw err;
        }
    }

    async associateDevice(deviceId: string, otp: string): Promise<void> {
        this.lastError = "";
        try {
            await this.api.associateDevice(deviceId, otp);
            await this.refreshDevices();
        } catch (err) {
            this.remember(err);
            if (err instanceof ApiError && /expired/i.test(err.message)) {
                this.lastError = `${err.message} - issue a new OTP`;
            }
            throw err;
        }
    }

    async refreshDevices(): Promise<string[]> {
        const reply = await this.api.devices(this.token, this.activityId);
        this.devices = reply.devices.map((d) => d.device_id);
        return this.devices;
    }

    private remember(err: unknown): void {
        this.lastError = err instanceof ApiError ? err.message : String(err);
    }
}
