"""GPS trajectory ingestion and pre-processing.

Pipeline, in this fixed order::

    parse_plt -> project_and_resample -> speed_filter
              -> segment_for_stationarity -> make_windows

plus a dataset split, a plain-text dataset file, and a synthetic trajectory
generator used wherever real Geolife data is not available.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .mdn import MixtureParams, WINDOW, sample

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371000.0
PLT_HEADER_LINES = 6
# PLT day counts start here (Excel/OLE convention)
PLT_EPOCH = datetime(1899, 12, 30, tzinfo=timezone.utc)
MIN_WINDOW_LEN = WINDOW + 2


@dataclass
class RawTrajectory:
    lat: np.ndarray
    lon: np.ndarray
    alt: np.ndarray
    t: np.ndarray
    source_id: str = ""

    def __len__(self):
        return len(self.t)


@dataclass
class TrajectorySegment:
    positions: np.ndarray
    interval_s: float
    parent_id: str = ""

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.positions)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.positions, axis=0)


@dataclass
class DatasetSplit:
    train: list
    validation: list
    ratio: float = 0.9


@dataclass
class PipelineConfig:
    resample_interval_s: float = 60.0
    gap_factor: float = 5.0
    vmax_mps: float = 2.5
    speed_percentile: float = 95.0
    stationarity_target: float = 0.92
    stationarity_min_len: int = 64
    mean_gap_max: float = 0.5
    var_ratio_lo: float = 0.5
    var_ratio_hi: float = 2.0


# ---------------------------------------------------------------- parsing

def parse_plt(text: str, source_id: str = "", stats: dict | None = None) -> list[RawTrajectory]:
    """Parse one Geolife ``.plt`` file.

    Malformed records are skipped (counted in ``stats["records_skipped"]``);
    a non-increasing timestamp starts a new trajectory, so the result is a
    list of pieces. A file without records yields one empty trajectory.
    """
    stats = {} if stats is None else stats
    rows = []
    for line in text.splitlines()[PLT_HEADER_LINES:]:
        if not line.strip():
            continue
        f = line.strip().split(",")
        try:
            if len(f) != 7:
                raise ValueError(line)
            lat, lon, alt = float(f[0]), float(f[1]), float(f[3])
            ts = datetime.strptime(f"{f[5].strip()} {f[6].strip()}", "%Y-%m-%d %H:%M:%S")
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError(line)
        except ValueError:
            stats["records_skipped"] = stats.get("records_skipped", 0) + 1
            continue
        rows.append((lat, lon, alt, ts.replace(tzinfo=timezone.utc).timestamp()))
    skipped = stats.get("records_skipped", 0)
    if skipped:
        log.warning("%s: skipped %d malformed records so far", source_id or "<plt>", skipped)
    stats["records_parsed"] = stats.get("records_parsed", 0) + len(rows)

    pieces, cur = [], []
    for r in rows:
        if cur and r[3] <= cur[-1][3]:
            pieces.append(cur)
            cur = []
        cur.append(r)
    pieces.append(cur)
    out = []
    for k, p in enumerate(pieces):
        a = np.array(p, dtype=float).reshape(-1, 4)
        sid = source_id if len(pieces) == 1 else f"{source_id}#{k}"
        out.append(RawTrajectory(a[:, 0], a[:, 1], a[:, 2], a[:, 3], sid))
    return out


def to_plt_text(traj: RawTrajectory) -> str:
    """Render a trajectory in the Geolife PLT layout (altitude in feet)."""
    lines = ["Geolife trajectory", "WGS 84", "Altitude is in Feet", "Reserved 3",
             "0,2,255,My Track,0,0,2,8421376", "0"]
    for la, lo, al, t in zip(traj.lat, traj.lon, traj.alt, traj.t):
        ts = datetime.fromtimestamp(float(t), tz=timezone.utc)
        days = (ts - PLT_EPOCH) / timedelta(days=1)
        lines.append(f"{la:.6f},{lo:.6f},0,{al:g},{days:.10f},"
                     f"{ts:%Y-%m-%d},{ts:%H:%M:%S}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- geometry

def project(lat, lon, lat0, lon0):
    """Local equirectangular projection (meters) about ``(lat0, lon0)``."""
    lat, lon = np.asarray(lat, dtype=float), np.asarray(lon, dtype=float)
    x = EARTH_RADIUS_M * np.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(lat - lat0)
    return np.stack([x, y], axis=-1)


def unproject(xy, lat0, lon0):
    xy = np.asarray(xy, dtype=float)
    lat = lat0 + np.degrees(xy[..., 1] / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(xy[..., 0] / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp, dl = p2 - p1, np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


def project_and_resample(raw: RawTrajectory, target_interval_s: float = 60.0,
                         gap_factor: float = 5.0) -> list[TrajectorySegment]:
    """Project to the local plane and linearly interpolate onto a uniform grid.

    Gaps longer than ``gap_factor * target_interval_s`` split the trajectory.
    """
    if target_interval_s <= 0:
        raise ValueError("target interval must be positive")
    if len(raw) < 2:
        return []
    xy = project(raw.lat, raw.lon, raw.lat[0], raw.lon[0])
    t = raw.t
    cuts = np.flatnonzero(np.diff(t) > gap_factor * target_interval_s) + 1
    out = []
    for k, (a, b) in enumerate(zip(np.r_[0, cuts], np.r_[cuts, len(t)])):
        if b - a < 2:
            continue
        ts = t[a:b]
        n = int(np.floor((ts[-1] - ts[0]) / target_interval_s + 1e-9)) + 1
        if n < 2:
            continue
        grid = ts[0] + target_interval_s * np.arange(n)
        pos = np.stack([np.interp(grid, ts, xy[a:b, 0]), np.interp(grid, ts, xy[a:b, 1])], axis=-1)
        out.append(TrajectorySegment(pos, target_interval_s, f"{raw.source_id}/{k}"))
    return out


# ---------------------------------------------------------------- filters

def step_speeds(segment: TrajectorySegment) -> np.ndarray:
    return np.linalg.norm(segment.deltas, axis=1) / segment.interval_s


def speed_filter(segment: TrajectorySegment, vmax_mps: float = 2.5, percentile: float = 95.0) -> bool:
    """True (keep) unless the given percentile of step speeds exceeds ``vmax_mps``."""
    v = step_speeds(segment)
    if v.size == 0:
        return True
    return bool(np.percentile(v, percentile) <= vmax_mps)


def _halves_pass(x, mean_gap_max, lo, hi):
    h = len(x) // 2
    a, b = x[:h], x[h:]
    if len(a) < 2 or len(b) < 2:
        return True
    va, vb = a.var(), b.var()
    pooled = math.sqrt((va + vb) / 2)
    gap = abs(a.mean() - b.mean())
    if pooled == 0:
        return gap == 0
    if va == 0 or vb == 0:
        return False
    return gap < mean_gap_max * pooled and lo <= va / vb <= hi


def is_stationary(segment: TrajectorySegment, cfg: PipelineConfig | None = None) -> bool:
    """Split-half mean/variance check on the differenced X and Y series."""
    cfg = cfg or PipelineConfig()
    d = segment.deltas
    return all(_halves_pass(d[:, k], cfg.mean_gap_max, cfg.var_ratio_lo, cfg.var_ratio_hi)
               for k in (0, 1))


def _bisect(seg):
    mid = len(seg) // 2
    # halves share the midpoint sample so no displacement is lost
    return [TrajectorySegment(seg.positions[:mid + 1], seg.interval_s, seg.parent_id),
            TrajectorySegment(seg.positions[mid:], seg.interval_s, seg.parent_id)]


def segment_for_stationarity(segments, cfg: PipelineConfig | None = None) -> list[TrajectorySegment]:
    """Bisect non-stationary segments until the pass rate reaches the target.

    Accepts one segment or a list; the pass-rate target applies to the whole
    emitted collection. Failing segments shorter than the minimum length are
    discarded. Order of the input is preserved.
    """
    cfg = cfg or PipelineConfig()
    current = [segments] if isinstance(segments, TrajectorySegment) else list(segments)
    while True:
        flags = [is_stationary(s, cfg) for s in current]
        kept = [(s, f) for s, f in zip(current, flags) if f or len(s) >= cfg.stationarity_min_len]
        if not kept:
            return []
        current = [s for s, _ in kept]
        flags = [f for _, f in kept]
        if all(flags) or np.mean(flags) >= cfg.stationarity_target:
            return current
        nxt = []
        for s, f in kept:
            nxt.extend([s] if f else _bisect(s))
        current = nxt


def stationarity_pass_rate(segments, cfg: PipelineConfig | None = None) -> float:
    if not segments:
        return float("nan")
    return float(np.mean([is_stationary(s, cfg) for s in segments]))


# ---------------------------------------------------------------- windows

def make_windows(segment: TrajectorySegment, window: int = WINDOW):
    """Sliding stride-1 windows of ``window`` deltas; the next delta is the target.

    Returns ``(windows (n, 2*window), targets (n, 2))`` with ``n = len - window - 1``.
    """
    d = segment.deltas
    n = len(d) - window
    if n < 1:
        return np.empty((0, 2 * window)), np.empty((0, 2))
    w = np.lib.stride_tricks.sliding_window_view(d[:-1], (window, 2))[:, 0]
    return w.reshape(n, 2 * window).copy(), d[window:].copy()


def windows_from_segments(segments, window: int = WINDOW):
    ws, ts = [], []
    for s in segments:
        w, t = make_windows(s, window)
        ws.append(w)
        ts.append(t)
    if not ws:
        return np.empty((0, 2 * window)), np.empty((0, 2))
    return np.concatenate(ws), np.concatenate(ts)


def split_segments(segments, ratio: float = 0.9, seed: int = 0) -> DatasetSplit:
    """Disjoint train/validation split by segment count."""
    n = len(segments)
    idx = np.random.default_rng(seed).permutation(n)
    k = int(round(ratio * n))
    tr, va = sorted(idx[:k]), sorted(idx[k:])
    return DatasetSplit([segments[i] for i in tr], [segments[i] for i in va], ratio)


# ---------------------------------------------------------------- synthesis

def synthesize_trajectory(kernel: MixtureParams, steps: int, start=(0.0, 0.0),
                          rng: np.random.Generator | None = None,
                          interval_s: float = 60.0) -> TrajectorySegment:
    """Random walk with iid displacements drawn from ``kernel``."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    batch = MixtureParams(np.broadcast_to(kernel.alpha, (steps,) + kernel.alpha.shape),
                          np.broadcast_to(kernel.mu, (steps,) + kernel.mu.shape),
                          np.broadcast_to(kernel.sigma, (steps,) + kernel.sigma.shape),
                          np.broadcast_to(kernel.rho, (steps,) + kernel.rho.shape))
    d = sample(batch, rng)
    pos = np.vstack([np.asarray(start, dtype=float)[None, :], np.asarray(start) + np.cumsum(d, axis=0)])
    return TrajectorySegment(pos, interval_s, "synthetic")


def pedestrian_kernel(rng: np.random.Generator, speed=(0.3, 1.3), interval_s=60.0) -> MixtureParams:
    """A two-component walking kernel: a drifting mode and a lingering mode."""
    heading = rng.uniform(0, 2 * np.pi)
    v = rng.uniform(*speed) * interval_s
    drift = v * np.array([np.cos(heading), np.sin(heading)])
    w_move = rng.uniform(0.6, 0.9)
    s_move = rng.uniform(0.15, 0.35) * v
    s_stay = rng.uniform(3.0, 10.0)
    return MixtureParams(
        [w_move, 1 - w_move],
        [drift, [0.0, 0.0]],
        [[s_move, s_move * rng.uniform(0.7, 1.3)], [s_stay, s_stay]],
        [rng.uniform(-0.5, 0.5), 0.0],
    ).validate()


def kernel_bank(n: int, seed: int = 0, interval_s: float = 60.0) -> list[MixtureParams]:
    rng = np.random.default_rng(seed)
    return [pedestrian_kernel(rng, interval_s=interval_s) for _ in range(n)]


def synthetic_raw(kernel: MixtureParams, steps: int, rng: np.random.Generator,
                  lat0=39.98, lon0=116.32, t0=1224730384.0, interval_s=5.0,
                  source_id="synthetic") -> RawTrajectory:
    """A lat/lon trajectory drawn from ``kernel`` (kernel units: meters per ``interval_s``)."""
    seg = synthesize_trajectory(kernel, steps, rng=rng, interval_s=interval_s)
    lat, lon = unproject(seg.positions, lat0, lon0)
    t = t0 + interval_s * np.arange(len(seg))
    return RawTrajectory(lat, lon, np.full(len(seg), 164.0), t, source_id)


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    segments: list
    manifest: dict = field(default_factory=dict)


def preprocess_texts(named_texts, cfg: PipelineConfig | None = None) -> PipelineResult:
    """Run the full pipeline over ``(source_id, plt_text)`` pairs."""
    cfg = cfg or PipelineConfig()
    stats = {"files": 0, "records_parsed": 0, "records_skipped": 0}
    resampled = []
    n_traj = 0
    for sid, text in named_texts:
        stats["files"] += 1
        for raw in parse_plt(text, sid, stats):
            if len(raw):
                n_traj += 1
            resampled.extend(project_and_resample(raw, cfg.resample_interval_s, cfg.gap_factor))
    fast = [s for s in resampled if not speed_filter(s, cfg.vmax_mps, cfg.speed_percentile)]
    walk = [s for s in resampled if speed_filter(s, cfg.vmax_mps, cfg.speed_percentile)]
    stat = segment_for_stationarity(walk, cfg)
    final = [s for s in stat if len(s) >= MIN_WINDOW_LEN]
    n_windows = sum(len(s) - WINDOW - 1 for s in final)
    manifest = dict(stats,
                    trajectories=n_traj,
                    segments_resampled=len(resampled),
                    segments_dropped_speed=len(fast),
                    segments_after_stationarity=len(stat),
                    segments_dropped_short=len(stat) - len(final),
                    stationarity_pass_rate=stationarity_pass_rate(final, cfg) if final else None,
                    segments=len(final),
                    windows=n_windows)
    return PipelineResult(final, manifest)


def find_plt_files(input_dir) -> list[Path]:
    return sorted(p for p in Path(input_dir).rglob("*") if p.suffix.lower() == ".plt")


def preprocess_directory(input_dir, cfg: PipelineConfig | None = None) -> PipelineResult:
    files = find_plt_files(input_dir)
    root = Path(input_dir)

    def texts():
        for p in files:
            yield str(p.relative_to(root).as_posix()), p.read_text(errors="replace")

    return preprocess_texts(texts(), cfg)


# ---------------------------------------------------------------- dataset file
#
# CSV, one segment per row:
#   segment_id,parent_id,sampling_interval_s,n_samples,x0,y0,x1,y1,...
# preceded by a single comment line "# vnfmig-dataset v1". Floats use repr.

DATASET_MAGIC = "# vnfmig-dataset v1"


def write_dataset(segments, path):
    with open(path, "w", newline="") as f:
        f.write(DATASET_MAGIC + "\n")
        w = csv.writer(f, lineterminator="\n")
        for i, s in enumerate(segments):
            w.writerow([i, s.parent_id, repr(float(s.interval_s)), len(s)]
                       + [repr(float(v)) for v in s.positions.ravel()])


def read_dataset(path) -> list[TrajectorySegment]:
    with open(path, newline="") as f:
        first = f.readline().rstrip("\n")
        if first != DATASET_MAGIC:
            raise ValueError(f"{path}: not a vnfmig dataset file")
        out = []
        for row in csv.reader(f):
            n = int(row[3])
            pos = np.array([float(v) for v in row[4:]]).reshape(n, 2)
            out.append(TrajectorySegment(pos, float(row[2]), row[1]))
    return out


def write_manifest(manifest: dict, path):
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def write_synthetic_corpus(out_dir, n_files=4, steps=2000, seed=0, interval_s=5.0,
                           speed=(0.3, 1.3)) -> list[str]:
    """Write Geolife-layout ``.plt`` files of synthetic pedestrians; returns paths."""
    rng = np.random.default_rng(seed)
    base = Path(out_dir) / "Data"
    paths = []
    for i in range(n_files):
        kernel = pedestrian_kernel(rng, speed=speed, interval_s=interval_s)
        raw = synthetic_raw(kernel, steps, rng, interval_s=interval_s, source_id=f"{i:03d}")
        d = base / f"{i:03d}" / "Trajectory"
        os.makedirs(d, exist_ok=True)
        p = d / f"2008102300{i:04d}.plt"
        p.write_text(to_plt_text(raw))
        paths.append(str(p))
    return paths
