// DOM and canvas drawing for the three panels. Pure functions of the
// console state; canvas access degrades to no-ops where unavailable.

import type { ConsoleState } from "./state.js";
import { traceSeries } from "./state.js";
import { AFFECT_METRICS, type Markers } from "./types.js";

export const BLOCK_COLORS: Record<string, string> = {
  blue: "#2f6fde",
  green: "#2da44e",
  orange: "#e8833a",
  purple: "#8250df",
  red: "#d1242f",
  yellow: "#d4a72c",
};

const TABLE_M = 1.0;

export function workspaceToCanvas(
  [x, y]: [number, number],
  width: number,
  height: number,
): [number, number] {
  return [(x / TABLE_M) * width, height - (y / TABLE_M) * height];
}

/** Pick the block whose table position is nearest the click, within reach. */
export function hitTestBlock(
  markers: Markers | null,
  clickXm: number,
  clickYm: number,
  toleranceM = 0.06,
): string | null {
  if (!markers) return null;
  let best: string | null = null;
  let bestDist = toleranceM;
  for (const [block, [bx, by]] of Object.entries(markers.blocks)) {
    const d = Math.hypot(bx - clickXm, by - clickYm);
    if (d <= bestDist) {
      best = block;
      bestDist = d;
    }
  }
  return best;
}

export function drawWorkspace(canvas: HTMLCanvasElement, state: ConsoleState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#f6f1e7";
  ctx.fillRect(0, 0, width, height);
  const markers = state.snapshot?.markers ?? null;
  const pose = state.snapshot?.joints ?? null;
  if (!markers) return;

  const annotationFor = new Map(markers.annotations.map((a) => [a.block, a.marker]));

  if (markers.influence.floor_circle) {
    const { center, radius_m } = markers.influence.floor_circle;
    const [cx, cy] = workspaceToCanvas([center[0], center[1]], width, height);
    ctx.beginPath();
    ctx.strokeStyle = "rgba(209,36,47,0.6)";
    ctx.setLineDash([6, 4]);
    ctx.arc(cx, cy, (radius_m / TABLE_M) * width, 0, Math.PI * 2);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const size = 0.05 * width;
  const sorted = Object.entries(markers.blocks).sort(
    (a, b) => a[1][2] - b[1][2], // draw low stacks first
  );
  for (const [block, [bx, by, bz]] of sorted) {
    const [cx, cy] = workspaceToCanvas([bx, by], width, height);
    const marker = annotationFor.get(block);
    ctx.globalAlpha = marker === "claimed_faded" ? 0.35 : 1.0;
    ctx.fillStyle = BLOCK_COLORS[block] ?? "#777";
    const lift = (bz / 0.05) * 3; // hint stacking height
    ctx.fillRect(cx - size / 2, cy - size / 2 - lift, size, size);
    ctx.globalAlpha = 1.0;
    ctx.strokeStyle = "#3336";
    ctx.strokeRect(cx - size / 2, cy - size / 2 - lift, size, size);

    ctx.fillStyle = "#1f2328";
    ctx.font = `${Math.round(size * 0.6)}px system-ui`;
    ctx.textAlign = "center";
    if (marker === "pickup_next") {
      ctx.fillText("▲", cx, cy - size - lift - 2); // upward arrow
    } else if (marker === "reserved_later") {
      ctx.fillStyle = "#d1242f";
      ctx.fillText("✕", cx, cy + size * 0.25 - lift); // cross mark
    }
  }

  if (pose) {
    const [ex, ey] = workspaceToCanvas(
      [pose.end_effector[0], pose.end_effector[1]],
      width,
      height,
    );
    ctx.beginPath();
    ctx.fillStyle = "#1f2328";
    ctx.arc(ex, ey, 5, 0, Math.PI * 2);
    ctx.fill();
  }
}

export function renderGauges(root: HTMLElement, state: ConsoleState): void {
  const sample = state.snapshot?.affective;
  for (const metric of AFFECT_METRICS) {
    const bar = root.querySelector<HTMLElement>(`[data-gauge="${metric}"] .fill`);
    const label = root.querySelector<HTMLElement>(`[data-gauge="${metric}"] .value`);
    const value = sample ? sample[metric] : 0;
    if (bar) bar.style.width = `${Math.round(value * 100)}%`;
    if (label) label.textContent = value.toFixed(2);
  }
}

export function drawEegTraces(canvas: HTMLCanvasElement, state: ConsoleState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);
  const series = traceSeries(state);
  const lane = height / Math.max(1, series.length);
  const scaleUv = 150;
  series.forEach((trace, i) => {
    const mid = lane * i + lane / 2;
    ctx.strokeStyle = ["#59d2fe", "#9bf387", "#ffd166", "#ff7096"][i % 4];
    ctx.beginPath();
    const n = trace.values.length;
    for (let k = 0; k < n; k++) {
      const x = (k / Math.max(1, n - 1)) * width;
      const y = mid - (trace.values[k] / scaleUv) * (lane / 2);
      if (k === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.fillStyle = "#e6edf3";
    ctx.font = "11px system-ui";
    ctx.textAlign = "left";
    ctx.fillText(trace.channel, 4, lane * i + 12);
  });
}

export function renderAlerts(list: HTMLElement, state: ConsoleState): void {
  const items = [...state.alerts].slice(-20).reverse();
  list.innerHTML = "";
  for (const alert of items) {
    const li = document.createElement("li");
    const seconds = (alert.timestamp_ms / 1000).toFixed(1);
    li.textContent = `${seconds}s  ${alert.kind}`;
    li.className = `alert alert-${alert.kind.replace(/\s+/g, "-")}`;
    list.appendChild(li);
  }
}

export function renderStatus(root: HTMLElement, state: ConsoleState, stale: boolean): void {
  const status = state.snapshot?.plan;
  const stateEl = root.querySelector<HTMLElement>("[data-exec-state]");
  if (stateEl) {
    stateEl.textContent = status
      ? `${status.state}${status.halt_cause ? ` (${status.halt_cause})` : ""}`
      : "-";
    stateEl.dataset.state = status?.state ?? "unknown";
  }
  const planEl = root.querySelector<HTMLElement>("[data-plan]");
  if (planEl && status) {
    planEl.innerHTML = "";
    status.plan.forEach((action, i) => {
      const li = document.createElement("li");
      li.textContent = action;
      if (i < status.step_index) li.className = "done";
      else if (i === status.step_index) li.className = "active";
      planEl.appendChild(li);
    });
  }
  const staleEl = root.querySelector<HTMLElement>("[data-stale]");
  if (staleEl) staleEl.hidden = !stale;
}
