// Console wiring: initial GET refresh, push-stream consumption, and the
// interaction handlers (claim-by-click, controls, blink, override sliders).

import { GatewayClient } from "./api.js";
import {
  applyConnection,
  applyStreamLine,
  fromInitialFetch,
  initialState,
  isStale,
  type ConsoleState,
} from "./state.js";
import {
  drawEegTraces,
  drawWorkspace,
  hitTestBlock,
  renderAlerts,
  renderGauges,
  renderStatus,
} from "./render.js";
import { AFFECT_METRICS, type AffectMetric } from "./types.js";

const client = new GatewayClient("");
let state: ConsoleState = initialState();

const workspace = document.getElementById("workspace") as HTMLCanvasElement;
const traces = document.getElementById("eeg-traces") as HTMLCanvasElement;
const gauges = document.getElementById("gauges") as HTMLElement;
const alertList = document.getElementById("alert-list") as HTMLElement;
const statusRoot = document.getElementById("status-panel") as HTMLElement;

function render(): void {
  drawWorkspace(workspace, state);
  drawEegTraces(traces, state);
  renderGauges(gauges, state);
  renderAlerts(alertList, state);
  renderStatus(statusRoot, state, isStale(state, state.lastUpdateTs));
}

async function refreshFromGets(): Promise<void> {
  const [plan, joints, markers, affective, alerts, eeg] = await Promise.all([
    client.getPlan().catch(() => null),
    client.getJoints().catch(() => null),
    client.getMarkers().catch(() => null),
    client.getAffective().catch(() => null),
    client.getAlerts().catch(() => ({ alerts: [] })),
    client.getRawEeg().catch(() => ({ windows: [] })),
  ]);
  state = fromInitialFetch(plan, joints, markers, affective, alerts.alerts, eeg.windows);
  render();
}

function bindControls(): void {
  for (const command of ["start", "stop", "resume"] as const) {
    document
      .getElementById(`btn-${command}`)
      ?.addEventListener("click", () => void client.control(command).catch(console.warn));
  }
  document
    .getElementById("btn-blink")
    ?.addEventListener("click", () => void client.blink().catch(console.warn));

  for (const metric of AFFECT_METRICS) {
    const slider = document.getElementById(`slider-${metric}`) as HTMLInputElement | null;
    slider?.addEventListener("change", () => {
      void client
        .affectOverride(metric as AffectMetric, Number(slider.value))
        .catch(console.warn);
    });
  }

  workspace?.addEventListener("click", (event) => {
    const rect = workspace.getBoundingClientRect();
    const xm = ((event.clientX - rect.left) / rect.width) * 1.0;
    const ym = (1 - (event.clientY - rect.top) / rect.height) * 1.0;
    const block = hitTestBlock(state.snapshot?.markers ?? null, xm, ym);
    if (!block) return;
    const claimed = state.snapshot?.plan?.claimed ?? [];
    const call = claimed.includes(block) ? client.release(block) : client.claim(block);
    void call.catch(console.warn);
  });
}

function start(): void {
  bindControls();
  void refreshFromGets();
  client.openStream(
    (line) => {
      state = applyStreamLine(state, line);
      render();
    },
    (connected) => {
      state = applyConnection(state, connected);
      render();
    },
  );
  // stale indicator even when the stream goes quiet
  setInterval(() => {
    const staleEl = document.querySelector<HTMLElement>("[data-stale]");
    if (staleEl) staleEl.hidden = state.connected;
  }, 500);
}

start();
