"""Motion recordings: CSV ingestion, windowed training samples and a
synthetic hand-motion generator.

CSV layout::

    # unit: degrees
    time_ms,J11_x,J11_y,J11_z,...
    0,12.5,0.1,...
    10,12.7,0.1,...
"""
import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .errors import ContractError, HorizonError, IngestionError, SpecError
from .skeleton import build_skeleton

HORIZON_TOL_FRAMES = 0.1
UNIFORMITY_TOL = 0.01

# Per-joint standard deviations measured on VRHands recordings (degrees), joints J11..J53
VRHANDS_STD = {
    "x": (0.34, 0.60, 0.52, 0.02, 0.25, 0.12, 0.03, 1.33, 0.17, 0.31, 0.85, 0.87, 0.62, 0.54),
    "y": (0.19, 0.24, 3.63, 0.04, 0.18, 1.53, 0.04, 0.76, 1.29, 0.41, 0.57, 3.73, 0.70, 0.30),
    "z": (5.71, 7.76, 16.94, 23.19, 14.63, 19.17, 25.62, 16.06, 21.43, 23.99, 13.58, 24.04,
          21.55, 13.71),
}
REINTERHAND_STD_MM = 15.0


@dataclass
class MotionSequence:
    frames: np.ndarray           # (N, C)
    meta: kin.SeriesMeta
    timestamps_ms: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ContractError(f"frames must be (N, C), got shape {self.frames.shape}")
        if self.timestamps_ms is None:
            self.timestamps_ms = np.arange(len(self.frames)) * self.meta.t_s * 1000.0
        if self.meta.channels and len(self.meta.channels) != self.frames.shape[1]:
            raise ContractError(f"{len(self.meta.channels)} channel names for "
                                f"{self.frames.shape[1]} columns")

    def __len__(self):
        return len(self.frames)

    @property
    def t_s(self):
        return self.meta.t_s

    @property
    def layout(self):
        return layout_for_channels(self.frames.shape[1])


def layout_for_channels(C):
    for name in ("vrhands14", "reinterhand21"):
        if build_skeleton(name).n_channels == C:
            return name
    raise ContractError(f"no built-in skeleton has {C} channels")


# -- CSV ------------------------------------------------------------------------

def write_motion_csv(seq, path):
    channels = list(seq.meta.channels) or build_skeleton(seq.layout).channel_names()
    with open(path, "w", newline="") as fh:
        fh.write(f"# unit: {seq.meta.unit}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_ms"] + channels)
        for ts, row in zip(seq.timestamps_ms, seq.frames):
            w.writerow([repr(float(ts))] + [repr(float(v)) for v in row])


def load_motion_csv(path):
    """Parse a recording, validating the unit tag and timestamp uniformity."""
    path = Path(path)
    unit = None
    header = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, _, val = s[1:].partition(":")
                if key.strip().lower() == "unit":
                    unit = val.strip().lower()
                continue
            cells = next(csv.reader(io.StringIO(s)))
            if header is None:
                header = [c.strip() for c in cells]
                if not header or header[0] != "time_ms":
                    raise IngestionError(f"{path}: header must start with 'time_ms'")
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise IngestionError(f"{path}: non-numeric value on line {lineno}") from None
            if len(cells) != len(header):
                raise IngestionError(f"{path}: line {lineno} has {len(cells)} fields, "
                                     f"header has {len(header)}")
    if unit is None:
        raise IngestionError(f"{path}: missing '# unit:' line")
    if unit in ("millimetres", "millimeters"):
        unit = "mm"
    if unit not in ("degrees", "mm"):
        raise IngestionError(f"{path}: unknown unit {unit!r}")
    if header is None or not rows:
        raise IngestionError(f"{path}: no data rows")
    data = np.array(rows)
    ts = data[:, 0]
    if len(ts) >= 2:
        diffs = np.diff(ts)
        step = float(np.median(diffs))
        if not step > 0:
            raise IngestionError(f"{path}: timestamps are not increasing")
        bad = np.flatnonzero(np.abs(diffs - step) > UNIFORMITY_TOL * step)
        if bad.size:
            r = int(bad[0]) + 1
            raise IngestionError(f"{path}: non-uniform timestamp at data row {r} "
                                 f"(gap {diffs[bad[0]]:g} ms, expected {step:g} ms)")
        t_s = step / 1000.0
    else:
        t_s = 0.010
    meta = kin.SeriesMeta(t_s=t_s, unit=unit, channels=tuple(header[1:]))
    return MotionSequence(data[:, 1:], meta, ts, name=path.stem)


# -- samples ----------------------------------------------------------------------

def horizon_frames(horizon_ms, t_s, tol=HORIZON_TOL_FRAMES):
    """Frame offset for a horizon; rejects horizons that fall between frames."""
    x = horizon_ms / 1000.0 / t_s
    k = int(round(x))
    if abs(x - k) > tol or k < 0:
        raise HorizonError(f"horizon {horizon_ms:g} ms is {x:.3f} frames at "
                           f"{1.0 / t_s:g} Hz; not a whole frame offset")
    return k


def default_horizons_ms(t_s, unseen=False):
    """Ten training horizons at 4, 8, .. 40 frames, or the midpoints between them."""
    frames = np.arange(1, 11) * 4 - (2 if unseen else 0)
    return tuple(float(f * t_s * 1000.0) for f in frames)


@dataclass
class Samples:
    windows: np.ndarray                        # (N, W, C)
    targets: dict                              # horizon ms -> (N, C)
    oracle_vel: np.ndarray                     # (N, C)
    oracle_acc: np.ndarray                     # (N, C)
    t0: np.ndarray = None                      # frame index of the current time
    recording: np.ndarray = None               # recording id per sample
    t_s: float = 0.010
    unit: str = "degrees"

    def __len__(self):
        return len(self.windows)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Samples(self.windows[idx], {h: v[idx] for h, v in self.targets.items()},
                       self.oracle_vel[idx], self.oracle_acc[idx],
                       None if self.t0 is None else self.t0[idx],
                       None if self.recording is None else self.recording[idx],
                       self.t_s, self.unit)

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ContractError("no samples to concatenate")
        keys = list(parts[0].targets)
        return Samples(np.concatenate([p.windows for p in parts]),
                       {h: np.concatenate([p.targets[h] for p in parts]) for h in keys},
                       np.concatenate([p.oracle_vel for p in parts]),
                       np.concatenate([p.oracle_acc for p in parts]),
                       np.concatenate([p.t0 for p in parts]),
                       np.concatenate([p.recording for p in parts]),
                       parts[0].t_s, parts[0].unit)


def empty_samples(C, window, horizons_ms, t_s, unit="degrees"):
    z = np.zeros((0, C))
    return Samples(np.zeros((0, window, C)), {float(h): z.copy() for h in horizons_ms}, z.copy(),
                   z.copy(), np.zeros(0, dtype=int), np.zeros(0, dtype=int), t_s, unit)


def make_samples(seq, horizons_ms, stride=1, window=16, sigma=kin.GAUSS_SIGMA, recording=0):
    """Every window of ``window`` frames with ground truth at each horizon.

    Oracle derivative targets come from the whole recording, then are read
    at each window's last frame. Windows whose horizons or oracle support
    would leave the recording are skipped.
    """
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    horizons_ms = tuple(float(h) for h in horizons_ms)
    offsets = [horizon_frames(h, seq.t_s) for h in horizons_ms]
    N, C = seq.frames.shape
    radius = len(kin.gaussian_kernel(sigma)) // 2
    first = max(window - 1, radius)
    last = N - 1 - max(max(offsets, default=0), radius)
    if last < first:
        return empty_samples(C, window, horizons_ms, seq.t_s, seq.meta.unit)
    t0 = np.arange(first, last + 1, stride)
    gv = kin.gaussian_derivative_oracle(seq.frames, seq.t_s, 1, sigma)
    ga = kin.gaussian_derivative_oracle(seq.frames, seq.t_s, 2, sigma)
    idx = t0[:, None] + np.arange(-window + 1, 1)[None, :]
    return Samples(seq.frames[idx], {h: seq.frames[t0 + k] for h, k in zip(horizons_ms, offsets)},
                   gv[t0], ga[t0], t0, np.full(len(t0), recording), seq.t_s, seq.meta.unit)


def samples_from_sequences(seqs, horizons_ms, stride=1, window=16, sigma=kin.GAUSS_SIGMA):
    parts = [make_samples(s, horizons_ms, stride, window, sigma, recording=i)
             for i, s in enumerate(seqs)]
    nonempty = [p for p in parts if len(p)]
    if not nonempty:
        s0 = seqs[0]
        return empty_samples(s0.frames.shape[1], window, horizons_ms, s0.t_s, s0.meta.unit)
    return Samples.concat(nonempty)


# -- dataset directories ----------------------------------------------------------

SPLITS = ("train", "val", "test")


def load_splits(root):
    """``{split: [MotionSequence]}`` from ``root/train``, ``root/val``, ``root/test``.

    Splits are by recording file, so no window can straddle partitions.
    """
    root = Path(root)
    out = {}
    for split in SPLITS:
        d = root / split
        out[split] = [load_motion_csv(p) for p in sorted(d.glob("*.csv"))] if d.is_dir() else []
    if not out["train"]:
        raise IngestionError(f"{root}: no recordings under train/")
    return out


# -- synthetic motion -------------------------------------------------------------

@dataclass
class SynthSpec:
    layout: str = "vrhands14"
    rate_hz: float = 100.0
    duration_s: float = 60.0
    seed: int = 0
    std_targets: tuple = None        # per channel; defaults to VRHANDS_STD
    n_sines: int = 4
    f_min_hz: float = 0.1
    f_max_hz: float = 1.0
    finger_coupling: float = 0.9     # share of each channel driven by its finger's common motion
    noise_ratio: float = 0.02        # white tracking noise, fraction of channel std
    intent_rate_hz: float = 0.0      # mean rate of step-like posture changes
    intent_scale: float = 1.0        # intent step size, in channel stds
    jerk_bound: float = None         # units/s^3 bound on intent transitions
    amplitude_bound: float = 180.0

    def channel_stds(self):
        skel = build_skeleton(self.layout)
        if self.std_targets is not None:
            s = np.asarray(self.std_targets, dtype=np.float64)
            if s.shape == ():
                s = np.full(skel.n_channels, float(s))
            if s.shape != (skel.n_channels,):
                raise SpecError(f"{len(s)} std targets for {skel.n_channels} channels")
            return s
        if self.layout == "vrhands14":
            return np.array([VRHANDS_STD[a][j] for j in range(14) for a in "xyz"])
        return np.full(skel.n_channels, REINTERHAND_STD_MM)

    def validate(self):
        if not self.rate_hz > 0 or not self.duration_s > 0:
            raise SpecError("rate and duration must be positive")
        if not 1 <= self.n_sines <= 5:
            raise SpecError(f"n_sines must be in 1..5, got {self.n_sines}")
        if not 0 < self.f_min_hz <= self.f_max_hz:
            raise SpecError(f"need 0 < f_min <= f_max, got {self.f_min_hz}, {self.f_max_hz}")
        if self.f_max_hz >= self.rate_hz / 2:
            raise SpecError(f"f_max {self.f_max_hz} Hz is at or above Nyquist for {self.rate_hz} Hz")
        if self.duration_s * self.f_min_hz < 1.0:
            raise SpecError("duration too short to hold one period of the slowest component; "
                            "the std target cannot be met")
        if not 0.0 <= self.finger_coupling <= 1.0:
            raise SpecError("finger_coupling must lie in [0, 1]")
        stds = self.channel_stds()
        if np.any(stds < 0):
            raise SpecError("std targets must be non-negative")
        # a zero-mean sum of sines with std s has peak amplitude at least s*sqrt(2)
        if np.any(stds * np.sqrt(2.0) > self.amplitude_bound):
            raise SpecError("std target exceeds what the amplitude bound allows")
        if self.jerk_bound is not None:
            floor = stds * np.sqrt(2.0) * (2 * np.pi * self.f_min_hz) ** 3
            if np.any(floor > self.jerk_bound):
                raise SpecError("jerk bound unreachable: even the slowest component at the "
                                "std target exceeds it")


def _finger_groups(layout):
    skel = build_skeleton(layout)
    groups = []
    for j in skel.joints:
        if layout == "vrhands14":
            groups.append(int(j[1]))
        elif "_" in j:
            groups.append(j.split("_")[0])
        else:
            groups.append(j)
    names = sorted(set(groups), key=str)
    return [names.index(g) for g in groups], len(names)


def _min_jerk(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10 - 15 * tau + 6 * tau ** 2)


def synth_generate(spec):
    """Deterministic smooth multi-channel hand motion.

    Each channel mixes its finger's common sinusoid bundle with its own
    (``finger_coupling`` sets the share), optionally adds minimum-jerk
    posture steps, is scaled to its std target, then receives white noise.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    skel = build_skeleton(spec.layout)
    n = int(round(spec.duration_s * spec.rate_hz))
    t = np.arange(n) / spec.rate_hz
    stds = spec.channel_stds()
    groups, n_groups = _finger_groups(spec.layout)

    def bundle():
        f = rng.uniform(spec.f_min_hz, spec.f_max_hz, spec.n_sines)
        ph = rng.uniform(0.0, 2 * np.pi, spec.n_sines)
        a = rng.uniform(0.3, 1.0, spec.n_sines)
        x = (a[:, None] * np.sin(2 * np.pi * f[:, None] * t[None] + ph[:, None])).sum(axis=0)
        sd = x.std()
        return x / sd if sd > 0 else x

    def intents(scale):
        x = np.zeros(n)
        if spec.intent_rate_hz <= 0:
            return x
        k = rng.poisson(spec.intent_rate_hz * spec.duration_s)
        starts = np.sort(rng.uniform(0, spec.duration_s, k))
        level = 0.0
        for s in starts:
            step = rng.normal(0.0, spec.intent_scale) * scale
            if spec.jerk_bound is not None and step != 0:
                dur = (60.0 * abs(step) / spec.jerk_bound) ** (1.0 / 3.0)
            else:
                dur = 0.3
            x += step * _min_jerk((t - s) / dur)
            level += step
        return x

    shared = [bundle() for _ in range(n_groups)]
    out = np.zeros((n, skel.n_channels))
    for j in range(skel.n_joints):
        for a in range(3):
            c = 3 * j + a
            if stds[c] == 0:
                continue
            mix = spec.finger_coupling * shared[groups[j]] + (1 - spec.finger_coupling) * bundle()
            mix = mix + intents(1.0)
            sd = mix.std()
            out[:, c] = mix / sd * stds[c] if sd > 0 else 0.0
    if spec.noise_ratio > 0:
        out += rng.standard_normal(out.shape) * (stds * spec.noise_ratio)
    unit = "degrees" if spec.layout == "vrhands14" else "mm"
    meta = kin.SeriesMeta(1.0 / spec.rate_hz, unit, tuple(skel.channel_names()))
    return MotionSequence(out, meta, np.arange(n) * 1000.0 / spec.rate_hz,
                          name=f"synth_{spec.layout}_{spec.seed}")


def synth_dataset(root, minutes=10.0, n_recordings=10, split=(8, 1, 1), seed=0, **spec_kw):
    """Write ``n_recordings`` synthetic CSVs into ``root/{train,val,test}``."""
    root = Path(root)
    if sum(split) != n_recordings:
        raise SpecError("split sizes must add up to the recording count")
    per = minutes * 60.0 / n_recordings
    names = [s for s, k in zip(SPLITS, split) for _ in range(k)]
    seqs = {s: [] for s in SPLITS}
    for i, part in enumerate(names):
        seq = synth_generate(SynthSpec(duration_s=per, seed=seed * 1000 + i, **spec_kw))
        d = root / part
        d.mkdir(parents=True, exist_ok=True)
        write_motion_csv(seq, d / f"rec{i:02d}.csv")
        seqs[part].append(seq)
    return seqs
