// Pure console state: fold stream lines / GET results into what the panels
// render. Keeping this free of DOM access makes the update logic testable.

import type {
  AffectiveSample,
  Alert,
  EegWindowWire,
  PanelSnapshot,
  StreamLine,
} from "./types.js";

export const EEG_TRACE_SECONDS = 5;

export interface ConsoleState {
  snapshot: PanelSnapshot | null;
  /** rolling stimulus-free trace buffer, newest last, keyed by start_ms */
  eegWindows: EegWindowWire[];
  alerts: Alert[];
  connected: boolean;
  lastUpdateTs: number;
}

export function initialState(): ConsoleState {
  return {
    snapshot: null,
    eegWindows: [],
    alerts: [],
    connected: false,
    lastUpdateTs: 0,
  };
}

function appendWindow(
  windows: EegWindowWire[],
  incoming: EegWindowWire | null,
): EegWindowWire[] {
  if (!incoming) return windows;
  if (windows.some((w) => w.start_ms === incoming.start_ms)) return windows;
  const next = [...windows, incoming].sort((a, b) => a.start_ms - b.start_ms);
  const horizon = incoming.start_ms - EEG_TRACE_SECONDS * 1000;
  return next.filter((w) => w.start_ms >= horizon);
}

export function applyStreamLine(state: ConsoleState, line: StreamLine): ConsoleState {
  return {
    snapshot: line.panels,
    eegWindows: appendWindow(state.eegWindows, line.panels.raw_eeg_latest),
    alerts: line.panels.alerts ?? state.alerts,
    connected: true,
    lastUpdateTs: line.ts,
  };
}

export function applyConnection(state: ConsoleState, connected: boolean): ConsoleState {
  return { ...state, connected };
}

/** Rebuild from plain GETs (page refresh path). */
export function fromInitialFetch(
  plan: PanelSnapshot["plan"],
  joints: PanelSnapshot["joints"],
  markers: PanelSnapshot["markers"],
  affective: AffectiveSample | null,
  alerts: Alert[],
  eegWindows: EegWindowWire[],
): ConsoleState {
  return {
    snapshot: {
      plan,
      joints,
      markers,
      affective,
      alerts,
      raw_eeg_count: eegWindows.length,
      raw_eeg_latest: eegWindows.length ? eegWindows[eegWindows.length - 1] : null,
      events_tail: [],
    },
    eegWindows,
    alerts,
    connected: false,
    lastUpdateTs: 0,
  };
}

/** Stale when nothing has arrived for a couple of stream intervals. */
export function isStale(state: ConsoleState, nowTs: number, limitMs = 1000): boolean {
  return !state.connected || nowTs - state.lastUpdateTs > limitMs;
}

/** Flatten the rolling windows into one trace per channel for drawing. */
export function traceSeries(state: ConsoleState): { channel: string; values: number[] }[] {
  if (state.eegWindows.length === 0) return [];
  const channels = state.eegWindows[0].channels;
  return channels.map((channel, idx) => ({
    channel,
    values: state.eegWindows.flatMap((w) => w.samples[idx] ?? []),
  }));
}
