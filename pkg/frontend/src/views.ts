// DOM rendering. Pure functions from model state to elements; occupancy
// numbers are printed exactly as the API returned them.

import { DashboardModel, BusinessPanel } from "./viewmodel.js";

export function renderActivityList(model: DashboardModel, container: HTMLElement): void {
    container.innerHTML = "";
    const banner = document.createElement("div");
    banner.className = "banner";
    banner.dataset.role = "offline-banner";
    if (model.offline) {
        banner.textContent = model.stale
            ? "offline - showing last known data"
            : "offline - no data";
        banner.classList.add("visible");
    }
    container.appendChild(banner);

    if (model.activities.length === 0) {
        const empty = document.createElement("p");
        empty.dataset.role = "empty-state";
        empty.textContent = "No activities in range.";
        container.appendChild(empty);
        return;
    }

    const list = document.createElement("ul");
    list.dataset.role = "activity-list";
    for (const activity of model.activities) {
        const item = document.createElement("li");
        item.dataset.activityId = activity.activity_id;
        item.classList.toggle("stale", model.stale);

        const name = document.createElement("span");
        name.className = "name";
        name.textContent = activity.name;
        item.appendChild(name);

        if (activity.distance_m !== undefined) {
            const distance = document.createElement("span");
            distance.className = "distance";
            distance.textContent = `${activity.distance_m} m`;
            item.appendChild(distance);
        }

        const occupancy = document.createElement("span");
        occupancy.className = "occupancy";
        occupancy.dataset.role = "occupancy";
        const current = model.occupancy.get(activity.activity_id);
        if (current) {
            occupancy.textContent = `${current.occupancy} / ${current.capacity}`;
            occupancy.dataset.asOf = current.as_of_ms === null ? "" : String(current.as_of_ms);
        } else {
            occupancy.textContent = "n/a";
        }
        item.appendChild(occupancy);
        list.appendChild(item);
    }
    container.appendChild(list);
}

export function renderBusinessControls(
    model: DashboardModel,
    panel: BusinessPanel | null,
    container: HTMLElement,
): void {
    container.innerHTML = "";
    if (!model.isBusiness || panel === null) {
        // standard users and anonymous visitors get no management controls
        return;
    }
    const section = document.createElement("section");
    section.dataset.role = "business-controls";

    const error = document.createElement("p");
    error.dataset.role = "inline-error";
    error.textContent = panel.lastError;
    section.appendChild(error);

    const otp = document.createElement("p");
    otp.dataset.role = "otp";
    otp.textContent = panel.lastOtp;
    section.appendChild(otp);

    const devices = document.createElement("ul");
    devices.dataset.role = "device-list";
    for (const deviceId of panel.devices) {
        const item = document.createElement("li");
        item.textContent = deviceId;
        item.dataset.deviceId = deviceId;
        devices.appendChild(item);
    }
    section.appendChild(devices);
    container.appendChild(section);
}
