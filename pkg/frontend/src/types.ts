// Wire types mirroring the gateway's JSON payloads.

export interface ExecStatus {
  state: "idle" | "running" | "halted" | "done";
  plan: string[];
  step_index: number;
  claimed: string[];
  halt_cause: string | null;
  goal_reached: boolean;
}

export interface ArmPose {
  end_effector: [number, number, number];
  joints: number[];
  target_block: string | null;
}

export interface Annotation {
  block: string;
  marker: "pickup_next" | "reserved_later" | "claimed_faded";
  plan_step: number;
}

export interface Markers {
  annotations: Annotation[];
  influence: {
    sphere_radius_m: number;
    floor_circle: { center: [number, number, number]; radius_m: number } | null;
  };
  blocks: Record<string, [number, number, number]>;
}

export const AFFECT_METRICS = [
  "engagement",
  "stress",
  "relaxation",
  "excitement",
  "interest",
] as const;

export type AffectMetric = (typeof AFFECT_METRICS)[number];

export interface AffectiveSample {
  type: "AffectiveSample";
  timestamp_ms: number;
  engagement: number;
  stress: number;
  relaxation: number;
  excitement: number;
  interest: number;
}

export interface Alert {
  kind: string;
  timestamp_ms: number;
  [extra: string]: unknown;
}

export interface EegWindowWire {
  start_ms: number;
  rate_hz: number;
  channels: string[];
  samples: number[][];
}

export interface PanelSnapshot {
  plan: ExecStatus | null;
  joints: ArmPose | null;
  markers: Markers | null;
  affective: AffectiveSample | null;
  alerts: Alert[];
  raw_eeg_count: number;
  raw_eeg_latest: EegWindowWire | null;
  events_tail: Record<string, unknown>[];
}

export interface StreamLine {
  ts: number;
  panels: PanelSnapshot;
}
