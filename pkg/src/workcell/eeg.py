"""Synthetic EEG stream, feature extraction, event classifier, and monitor.

The hardware headset is replaced by a seeded generator producing 4-channel
windows at 128 Hz: pink-ish background noise with a 10 Hz alpha component,
blink windows carrying a large slow frontal lobe on AF3/AF4, and
stimulus-locked oddball epochs with a small positive deflection peaking
300 ms after the stimulus.

Each 1 s window reduces to 28 features (per channel: mean, variance,
peak-to-peak, and delta/theta/alpha/beta band power from a Hann-tapered
magnitude spectrum). A linear one-vs-rest maximum-margin classifier is
trained on standardized features by subgradient descent on the hinge loss
with L2 regularization. p300 events are scored separately by correlating
the probe-minus-standard difference wave against a 250-400 ms positive-peak
template, since ERP detection is locked to stimulus time.

The monitor daemon consumes the EEG queue, turns blink detections into STOP
commands on the robot command queue, raises p300 alerts on tagged epochs,
and raises an edge-triggered alert when the affect stream shows stress held
above threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .bus import Broker, Consumer, QueueName

CHANNELS = ("AF3", "F3", "AF4", "F4")
RATE_HZ = 128.0
WINDOW_S = 1.0
STRIDE_S = 0.25

BANDS = (
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("beta", 13.0, 30.0),
)

LABELS = ("none", "blink", "p300", "high_stress")


@dataclass
class EegWindow:
    """One fixed-length multichannel sample block, microvolts."""

    samples: np.ndarray  # shape (4, N)
    rate_hz: float = RATE_HZ
    start_ms: int = 0
    channels: tuple[str, ...] = CHANNELS
    stimulus_tag: Optional[str] = None

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channels):
            raise ValueError("samples must be channels x N")

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def to_dict(self) -> dict:
        return {
            "type": "EegWindow",
            "rate_hz": self.rate_hz,
            "start_ms": self.start_ms,
            "channels": list(self.channels),
            "stimulus_tag": self.stimulus_tag,
            "samples": [[float(v) for v in row] for row in self.samples],
        }

    @staticmethod
    def from_dict(d: dict) -> "EegWindow":
        return EegWindow(
            samples=np.array(d["samples"], dtype=float),
            rate_hz=d["rate_hz"],
            start_ms=d["start_ms"],
            channels=tuple(d["channels"]),
            stimulus_tag=d.get("stimulus_tag"),
        )


@dataclass(frozen=True)
class Detection:
    """Classifier outcome: event label plus the deciding margin."""

    label: str
    margin: float


@dataclass
class RobotCommand:
    command: str  # STOP | RESUME | START
    cause: str
    timestamp_ms: int

    def to_dict(self) -> dict:
        return {
            "type": "RobotCommand",
            "command": self.command,
            "cause": self.cause,
            "timestamp_ms": self.timestamp_ms,
        }


# -- synthesis ------------------------------------------------------------

BACKGROUND_NOISE_UV = 6.0
ALPHA_AMPLITUDE_UV = 5.0
BLINK_AMPLITUDE_UV = 150.0
BLINK_DURATION_S = 0.4
P300_AMPLITUDE_UV = 15.0
P300_PEAK_S = 0.300
P300_SIGMA_S = 0.05


def _pink_noise(rng: np.random.Generator, n: int, rms_uv: float) -> np.ndarray:
    """Approximate 1/f noise via spectral shaping of white noise."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0)
    scale = np.ones_like(freqs)
    nonzero = freqs > 0
    scale[nonzero] = 1.0 / np.sqrt(freqs[nonzero] / freqs[nonzero][0])
    shaped = np.fft.irfft(spectrum * scale, n)
    rms = np.sqrt(np.mean(shaped**2))
    return shaped * (rms_uv / rms) if rms > 0 else shaped


def _background(rng: np.random.Generator, n: int, rate_hz: float) -> np.ndarray:
    """Background activity for all channels: 1/f noise plus 10 Hz alpha."""
    t = np.arange(n) / rate_hz
    out = np.empty((len(CHANNELS), n))
    for c in range(len(CHANNELS)):
        phase = rng.uniform(0, 2 * math.pi)
        out[c] = _pink_noise(rng, n, BACKGROUND_NOISE_UV) + ALPHA_AMPLITUDE_UV * np.sin(
            2 * math.pi * 10.0 * t + phase
        )
    return out


def _blink_lobe(n: int, rate_hz: float, start_s: float) -> np.ndarray:
    """Raised-cosine deflection of BLINK_DURATION_S starting at ``start_s``."""
    t = np.arange(n) / rate_hz
    lobe = np.zeros(n)
    inside = (t >= start_s) & (t < start_s + BLINK_DURATION_S)
    phase = (t[inside] - start_s) / BLINK_DURATION_S
    lobe[inside] = BLINK_AMPLITUDE_UV * 0.5 * (1 - np.cos(2 * math.pi * phase))
    return lobe


def background_window(
    rng: np.random.Generator, start_ms: int = 0, n: int = int(RATE_HZ * WINDOW_S)
) -> EegWindow:
    return EegWindow(_background(rng, n, RATE_HZ), RATE_HZ, start_ms)


def blink_window(
    rng: np.random.Generator, start_ms: int = 0, n: int = int(RATE_HZ * WINDOW_S)
) -> EegWindow:
    """Background plus a large slow lobe on the frontal pair only."""
    samples = _background(rng, n, RATE_HZ)
    lobe_start = rng.uniform(0.05, WINDOW_S - BLINK_DURATION_S - 0.05)
    lobe = _blink_lobe(n, RATE_HZ, lobe_start)
    for c, name in enumerate(CHANNELS):
        if name in ("AF3", "AF4"):
            samples[c] += lobe
    return EegWindow(samples, RATE_HZ, start_ms)


def p300_epoch(
    rng: np.random.Generator,
    oddball: bool,
    start_ms: int = 0,
    tag: str = "stim",
    n: int = int(RATE_HZ * WINDOW_S),
) -> EegWindow:
    """Stimulus-locked epoch; oddballs carry the positive 300 ms deflection."""
    samples = _background(rng, n, RATE_HZ)
    if oddball:
        t = np.arange(n) / RATE_HZ
        bump = P300_AMPLITUDE_UV * np.exp(
            -0.5 * ((t - P300_PEAK_S) / P300_SIGMA_S) ** 2
        )
        samples += bump  # deflection appears on all four channels
    return EegWindow(samples, RATE_HZ, start_ms, stimulus_tag=tag)


def synth_stream(
    kind: str,
    duration_s: float,
    rng: np.random.Generator,
    stride_s: float = STRIDE_S,
) -> list[EegWindow]:
    """Generate a deterministic window stream of the given kind.

    ``background`` and ``blink`` emit one window per stride; ``p300_oddball``
    emits one tagged epoch per second with a 20% oddball rate (tag suffix
    ``/odd`` or ``/std`` carries ground truth for evaluation).
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    windows: list[EegWindow] = []
    if kind in ("background", "blink"):
        count = int(duration_s / stride_s)
        make = background_window if kind == "background" else blink_window
        for i in range(count):
            windows.append(make(rng, start_ms=int(i * stride_s * 1000)))
    elif kind == "p300_oddball":
        for i in range(int(duration_s)):
            oddball = bool(rng.random() < 0.2)
            suffix = "odd" if oddball else "std"
            windows.append(
                p300_epoch(rng, oddball, start_ms=i * 1000, tag=f"stim-{i}/{suffix}")
            )
    else:
        raise ValueError(f"unknown stream kind {kind!r}")
    return windows


# -- features --------------------------------------------------------------

N_FEATURES = 7 * len(CHANNELS)

FEATURE_NAMES = tuple(
    f"{ch}.{name}"
    for ch in CHANNELS
    for name in ("mean", "variance", "ptp", "delta", "theta", "alpha", "beta")
)


def extract_features(window: EegWindow) -> np.ndarray:
    """28 features: per channel mean, variance, peak-to-peak, 4 band powers.

    Band powers are fractions of the Hann-tapered magnitude spectrum scaled
    by the channel variance, so their sum never exceeds the total power.
    """
    x = window.samples
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite samples")
    n = x.shape[1]
    taper = np.hanning(n)
    freqs = np.fft.rfftfreq(n, d=1.0 / window.rate_hz)
    out = np.empty(7 * x.shape[0])
    for c in range(x.shape[0]):
        row = x[c]
        mean = float(row.mean())
        var = float(row.var())
        ptp = float(row.max() - row.min())
        spec = np.abs(np.fft.rfft((row - mean) * taper)) ** 2
        # double the shared bins of the one-sided spectrum
        weights = np.full(spec.shape, 2.0)
        weights[0] = 1.0
        if n % 2 == 0:
            weights[-1] = 1.0
        energy = spec * weights
        total = float(energy.sum())
        base = 7 * c
        out[base] = mean
        out[base + 1] = var
        out[base + 2] = ptp
        for b, (_, lo, hi) in enumerate(BANDS):
            band = float(energy[(freqs >= lo) & (freqs < hi)].sum())
            out[base + 3 + b] = var * band / total if total > 0 else 0.0
    return out


def band_powers(features: np.ndarray, channel: int) -> dict[str, float]:
    base = 7 * channel
    return {name: float(features[base + 3 + i]) for i, (name, _, _) in enumerate(BANDS)}


# -- classifier ------------------------------------------------------------


@dataclass
class ClassifierConfig:
    epochs: int = 300
    reg_lambda: float = 1e-3
    seed: int = 7
    min_per_class: int = 20


class LinearEventClassifier:
    """One-vs-rest maximum-margin linear separator on standardized features.

    Trained with Pegasos-style subgradient steps on the hinge loss; the
    standardization statistics are stored so a saved classifier reloads
    bit-exact.
    """

    def __init__(
        self,
        classes: tuple[str, ...],
        weights: np.ndarray,
        bias: np.ndarray,
        mu: np.ndarray,
        sigma: np.ndarray,
    ) -> None:
        self.classes = classes
        self.weights = weights  # (k, d)
        self.bias = bias  # (k,)
        self.mu = mu
        self.sigma = sigma

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mu) / self.sigma

    def margins(self, features: np.ndarray) -> np.ndarray:
        if features.shape[-1] != self.weights.shape[1]:
            raise ValueError(
                f"feature dimension {features.shape[-1]} != {self.weights.shape[1]}"
            )
        z = self.standardize(features)
        return self.weights @ z + self.bias

    def classify(self, features: np.ndarray, threshold: float = 0.0) -> Detection:
        m = self.margins(features)
        idx = int(np.argmax(m))
        top = float(m[idx])
        if top > threshold and self.classes[idx] != "none":
            return Detection(self.classes[idx], top)
        return Detection("none", top)

    def save(self, path: str) -> None:
        blob = {
            "classes": list(self.classes),
            "weights": [[float(v) for v in row] for row in self.weights],
            "bias": [float(v) for v in self.bias],
            "mu": [float(v) for v in self.mu],
            "sigma": [float(v) for v in self.sigma],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh)

    @staticmethod
    def load(path: str) -> "LinearEventClassifier":
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        return LinearEventClassifier(
            classes=tuple(blob["classes"]),
            weights=np.array(blob["weights"], dtype=float),
            bias=np.array(blob["bias"], dtype=float),
            mu=np.array(blob["mu"], dtype=float),
            sigma=np.array(blob["sigma"], dtype=float),
        )


def train_classifier(
    labeled: list[tuple[np.ndarray, str]],
    cfg: ClassifierConfig | None = None,
) -> LinearEventClassifier:
    """Fit the one-vs-rest hinge-loss separators on standardized features."""
    cfg = cfg or ClassifierConfig()
    if not labeled:
        raise ValueError("empty training set")
    classes = tuple(sorted({label for _, label in labeled}))
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    counts = {c: sum(1 for _, l in labeled if l == c) for c in classes}
    thin = {c: n for c, n in counts.items() if n < cfg.min_per_class}
    if thin:
        raise ValueError(f"classes below {cfg.min_per_class} examples: {thin}")

    X = np.stack([f for f, _ in labeled])
    y = np.array([classes.index(l) for _, l in labeled])
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma[sigma == 0] = 1.0
    Z = (X - mu) / sigma

    rng = np.random.default_rng(cfg.seed)
    n, d = Z.shape
    k = len(classes)
    # bias folded in as a constant feature so it shrinks with the weights
    A = np.hstack([Z, np.ones((n, 1))])
    W = np.zeros((k, d + 1))
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for i in order:
            step += 1
            eta = 1.0 / (cfg.reg_lambda * step)
            a = A[i]
            for c in range(k):
                target = 1.0 if y[i] == c else -1.0
                margin = target * (W[c] @ a)
                W[c] *= 1.0 - eta * cfg.reg_lambda
                if margin < 1.0:
                    W[c] += eta * target * a
    return LinearEventClassifier(classes, W[:, :d], W[:, d].copy(), mu, sigma)


# -- p300 template scoring ---------------------------------------------------

P300_TEMPLATE_LO_S = 0.250
P300_TEMPLATE_HI_S = 0.400


def p300_template(n: int, rate_hz: float = RATE_HZ) -> np.ndarray:
    """Positive raised-cosine bump supported on 250-400 ms post-stimulus."""
    t = np.arange(n) / rate_hz
    template = np.zeros(n)
    inside = (t >= P300_TEMPLATE_LO_S) & (t < P300_TEMPLATE_HI_S)
    phase = (t[inside] - P300_TEMPLATE_LO_S) / (P300_TEMPLATE_HI_S - P300_TEMPLATE_LO_S)
    template[inside] = 0.5 * (1 - np.cos(2 * math.pi * phase))
    return template


def detect_p300(standard_epochs: list[EegWindow], probe: EegWindow) -> float:
    """Correlation of the probe-minus-standard wave with the p300 template."""
    if len(standard_epochs) < 10:
        raise ValueError("need at least 10 standard epochs for the template")
    n = probe.n
    for ep in standard_epochs:
        if ep.n != n:
            raise ValueError("epoch lengths differ")
    standard = np.mean([ep.samples.mean(axis=0) for ep in standard_epochs], axis=0)
    diff = probe.samples.mean(axis=0) - standard
    template = p300_template(n, probe.rate_hz)
    denom = float(np.linalg.norm(diff) * np.linalg.norm(template))
    if denom == 0:
        return 0.0
    return float(np.dot(diff, template) / denom)


# -- monitor daemon ----------------------------------------------------------

STRESS_ALERT_LEVEL = 0.8
STRESS_ALERT_HOLD_MS = 2000
P300_ALERT_THRESHOLD = 0.5
ALERTS_TOPIC = "alerts"


class EegMonitor:
    """Consumes EEG windows and the affect stream; emits commands and alerts."""

    def __init__(
        self,
        broker: Broker,
        classifier: LinearEventClassifier,
        affect_reader: Optional[Callable[[], object]] = None,
        group: str = "monitor",
        standard_pool: int = 30,
    ) -> None:
        self.broker = broker
        self.classifier = classifier
        self.affect_reader = affect_reader
        self._consumer = Consumer(broker, QueueName.EEG.value, group)
        self._standards: list[EegWindow] = []
        self._standard_pool = standard_pool
        self._stress_since: Optional[int] = None
        self._stress_alerted = False
        self.commands_sent = 0

    def _publish_command(self, command: str, cause: str, ts: int) -> None:
        self.broker.publish(
            QueueName.ROBOT_COMMAND, RobotCommand(command, cause, ts)
        )
        self.commands_sent += 1

    def _publish_alert(self, kind: str, ts: int, **extra) -> None:
        alert = {"kind": kind, "timestamp_ms": ts}
        alert.update(extra)
        self.broker.publish(ALERTS_TOPIC, alert, on_full="drop_oldest")

    def _handle_window(self, window: EegWindow, ts: int) -> None:
        if window.stimulus_tag is not None:
            if len(self._standards) >= 10:
                score = detect_p300(self._standards, window)
                if score > P300_ALERT_THRESHOLD:
                    self._publish_alert("p300", ts, score=score, tag=window.stimulus_tag)
            self._standards.append(window)
            if len(self._standards) > self._standard_pool:
                self._standards.pop(0)
            return
        detection = self.classifier.classify(extract_features(window))
        if detection.label == "blink":
            self._publish_command("STOP", "blink", ts)
            self._publish_alert("control blink", ts, margin=detection.margin)

    def drain(self) -> int:
        """Classify all pending EEG windows; returns how many were handled."""
        handled = 0
        for msg in self._consumer.drain():
            body = msg.body
            window = body if isinstance(body, EegWindow) else EegWindow.from_dict(body)
            self._handle_window(window, msg.timestamp_ms)
            handled += 1
        return handled

    def check_stress(self, now_ms: int) -> None:
        """Edge-triggered high-stress alert after a sustained hold."""
        if self.affect_reader is None:
            return
        sample = self.affect_reader()
        stress = getattr(sample, "stress", 0.0)
        if stress > STRESS_ALERT_LEVEL:
            if self._stress_since is None:
                self._stress_since = now_ms
            held = now_ms - self._stress_since
            if held >= STRESS_ALERT_HOLD_MS and not self._stress_alerted:
                self._publish_alert("high_stress", now_ms, stress=stress)
                self._stress_alerted = True
        else:
            self._stress_since = None
            self._stress_alerted = False

    def run(self, poll_ms: int = 50) -> None:
        """Blocking loop for threaded use; exits when the broker closes."""
        while not self.broker.closed:
            msg = self._consumer.get(timeout_ms=poll_ms)
            if msg is None:
                continue
            body = msg.body
            window = body if isinstance(body, EegWindow) else EegWindow.from_dict(body)
            self._handle_window(window, msg.timestamp_ms)


# -- corpus ------------------------------------------------------------------

CORPUS_SEED = 20240811


def make_corpus(
    n_blink: int = 100,
    n_background: int = 100,
    seed: int = CORPUS_SEED,
) -> list[tuple[EegWindow, str]]:
    """The bundled labeled corpus: generated, not shipped, under a pinned seed."""
    rng = np.random.default_rng(seed)
    out: list[tuple[EegWindow, str]] = []
    for i in range(n_background):
        out.append((background_window(rng, start_ms=i * 1000), "none"))
    for i in range(n_blink):
        out.append((blink_window(rng, start_ms=(n_background + i) * 1000), "blink"))
    return out


def save_corpus(corpus: list[tuple[EegWindow, str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for window, label in corpus:
            rec = window.to_dict()
            rec["label"] = label
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_corpus(path: str) -> list[tuple[EegWindow, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            out.append((EegWindow.from_dict(rec), rec["label"]))
    return out


def train_default_classifier(
    corpus: Optional[list[tuple[EegWindow, str]]] = None,
) -> LinearEventClassifier:
    corpus = corpus if corpus is not None else make_corpus()
    labeled = [(extract_features(w), label) for w, label in corpus]
    return train_classifier(labeled)
