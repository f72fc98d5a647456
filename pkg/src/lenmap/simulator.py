"""Matrix-free Monte Carlo of the finite-width random network.

A trial never materializes a weight matrix: each row is regenerated from its
(seed, trial, layer, row) counter address as the dot product is accumulated,
so peak memory stays O(N + D) plus the bounded capture buffer. Identical
(config, trial) always reproduces the same bits regardless of worker count.

Ensembles run in fixed 64-trial chunks merged in chunk order. Workers only
change which process computes a chunk, never the chunk boundaries or merge
order, so results are byte-stable under LENMAP_WORKERS.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .activations import Activation
from .quadrature import OVERFLOW_LIMIT
from .rng import input_signs, layer_preacts

CHUNK_TRIALS = 64
MAX_WIDTH = 1_000_000
MAX_DEPTH = 16383  # layer index shares a 16-bit counter field with purpose bits
MAX_TRIALS = 2**32 - 1  # trial index occupies one 32-bit counter word

INPUT_SPECS = ("ones", "alternating")


class LayerOverflowError(RuntimeError):
    """A pre-activation or activation magnitude passed the overflow sentinel."""

    def __init__(self, layer: int):
        super().__init__(f"overflow at layer {layer}: magnitude exceeds {OVERFLOW_LIMIT:g}")
        self.layer = layer


@dataclass(frozen=True)
class NetworkConfig:
    width: int
    depth: int
    sigma_w: float
    sigma_b: float
    activation: Activation
    input_spec: str | tuple[str, int] = "ones"
    master_seed: int = 0

    def __post_init__(self):
        if not (1 <= self.width <= MAX_WIDTH):
            raise ValueError(f"width must be in [1, {MAX_WIDTH}]")
        if not (1 <= self.depth <= MAX_DEPTH):
            raise ValueError(f"depth must be in [1, {MAX_DEPTH}]")
        if self.sigma_w < 0.0 or self.sigma_b < 0.0:
            raise ValueError("sigma_w and sigma_b must be nonnegative")
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        spec = self.input_spec
        ok = spec in INPUT_SPECS or (
            isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "signs"
            and isinstance(spec[1], int) and 0 <= spec[1] < 2**64
        )
        if not ok:
            raise ValueError(f"unknown input_spec: {spec!r}")


def input_vector(cfg: NetworkConfig) -> np.ndarray:
    """The quenched +-1 input x_0; identical for every trial of a config."""
    if cfg.input_spec == "ones":
        return np.ones(cfg.width)
    if cfg.input_spec == "alternating":
        x = np.ones(cfg.width)
        x[1::2] = -1.0
        return x
    return input_signs(cfg.input_spec[1], cfg.width)


@dataclass(frozen=True)
class CaptureSpec:
    """Raw pre-activation capture for one layer: which units, how many values."""

    layer: int
    units: tuple[int, ...] | str = "all"
    max_samples: int = 200_000
    histogram: tuple[int, float, float] | None = None  # (bins, lo, hi)

    def __post_init__(self):
        if self.layer < 1:
            raise ValueError("capture layer must be >= 1")
        if self.units != "all":
            units = tuple(int(u) for u in self.units)
            if len(units) == 0 or len(set(units)) != len(units) or min(units) < 0:
                raise ValueError("units must be distinct nonnegative indices")
            object.__setattr__(self, "units", units)
        if self.max_samples < 1:
            raise ValueError("max_samples must be positive")
        if self.histogram is not None:
            bins, lo, hi = self.histogram
            if bins < 1 or not lo < hi:
                raise ValueError("histogram needs bins >= 1 and lo < hi")

    def unit_indices(self, width: int) -> np.ndarray:
        if self.units == "all":
            return np.arange(width)
        idx = np.asarray(self.units, dtype=int)
        if idx.max() >= width:
            raise ValueError("captured unit index out of range for this width")
        return idx


@dataclass(frozen=True)
class DeviationCheck:
    """Reference per-layer lengths and the tolerance for success counting."""

    qtilde: np.ndarray
    epsilon: float

    def __post_init__(self):
        q = np.asarray(self.qtilde, dtype=float)
        if not np.all(np.isfinite(q)):
            raise ValueError("reference lengths must all be finite")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "qtilde", q)


@dataclass(frozen=True)
class LayerObservables:
    q: np.ndarray  # q[l] = (1/N) sum_i h_{l,i}^2, q[0] = 1
    r: np.ndarray  # r[l] = (1/N) sum_i x_{l,i}^2, r[0] = 1
    captured: np.ndarray | None = None


def _mean_square(v: np.ndarray) -> float:
    # compensated: N can reach 1e5 with heavy-tailed magnitudes
    return math.fsum((v * v).tolist()) / v.shape[0]


def forward_once(cfg: NetworkConfig, trial_index: int,
                 capture: CaptureSpec | None = None) -> LayerObservables:
    if not (0 <= trial_index <= MAX_TRIALS):
        raise ValueError("trial_index out of the 32-bit counter range")
    if capture is not None and capture.layer > cfg.depth:
        raise ValueError("capture layer exceeds network depth")

    x = input_vector(cfg)
    n = cfg.width
    w_scale = cfg.sigma_w / math.sqrt(n)
    q = np.empty(cfg.depth + 1)
    r = np.empty(cfg.depth + 1)
    q[0] = 1.0
    r[0] = 1.0
    captured = None

    for layer in range(1, cfg.depth + 1):
        h = layer_preacts(x, cfg.master_seed, trial_index, layer, w_scale, cfg.sigma_b)
        hmax = float(np.max(np.abs(h)))
        if not np.isfinite(hmax) or hmax > OVERFLOW_LIMIT:
            raise LayerOverflowError(layer)
        q[layer] = _mean_square(h)
        if capture is not None and capture.layer == layer:
            captured = h[capture.unit_indices(n)].copy()
        x = np.asarray(cfg.activation(h), dtype=float)
        xmax = float(np.max(np.abs(x)))
        if not np.isfinite(xmax) or xmax > OVERFLOW_LIMIT:
            raise LayerOverflowError(layer)
        r[layer] = _mean_square(x)

    return LayerObservables(q=q, r=r, captured=captured)


@dataclass
class EnsembleStats:
    """Mergeable running statistics over completed trials.

    Moments use Welford/Chan updates; captured rows are kept first-K up to the
    capture budget; histogram counts cover every completed trial regardless of
    that budget, so total histogram mass is trial_count * captured units.
    """

    width: int
    depth: int
    trial_count: int = 0
    overflow_count: int = 0
    overflow_by_layer: dict = field(default_factory=dict)
    q_mean: np.ndarray | None = None
    q_m2: np.ndarray | None = None
    r_mean: np.ndarray | None = None
    r_m2: np.ndarray | None = None
    captured: np.ndarray | None = None  # (kept trials, units)
    capture_units: int = 0
    capture_budget_rows: int = 0
    hist_edges: np.ndarray | None = None
    hist_counts: np.ndarray | None = None  # bins + 2: [under, bins..., over]
    success_joint: int = 0
    success_layers: np.ndarray | None = None

    def __post_init__(self):
        n = self.depth + 1
        if self.q_mean is None:
            self.q_mean = np.zeros(n)
            self.q_m2 = np.zeros(n)
            self.r_mean = np.zeros(n)
            self.r_m2 = np.zeros(n)

    def add_trial(self, obs: LayerObservables, check: DeviationCheck | None) -> None:
        self.trial_count += 1
        k = self.trial_count
        for mean, m2, vals in ((self.q_mean, self.q_m2, obs.q), (self.r_mean, self.r_m2, obs.r)):
            delta = vals - mean
            mean += delta / k
            m2 += delta * (vals - mean)
        if obs.captured is not None:
            row = obs.captured[None, :]
            if self.captured is None:
                self.capture_units = row.shape[1]
                self.captured = row.copy()
            elif self.captured.shape[0] < self.capture_budget_rows:
                self.captured = np.concatenate([self.captured, row])
            if self.hist_edges is not None:
                self._accumulate_hist(obs.captured)
        if check is not None:
            dev = np.abs(obs.q - check.qtilde)
            ok = dev <= check.epsilon
            self.success_layers += ok
            if ok.all():
                self.success_joint += 1

    def add_overflow(self, layer: int) -> None:
        self.overflow_count += 1
        self.overflow_by_layer[layer] = self.overflow_by_layer.get(layer, 0) + 1

    def _accumulate_hist(self, values: np.ndarray) -> None:
        edges = self.hist_edges
        counts, _ = np.histogram(values, bins=edges)
        self.hist_counts[1:-1] += counts
        self.hist_counts[0] += int(np.sum(values < edges[0]))
        self.hist_counts[-1] += int(np.sum(values > edges[-1]))

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if (self.width, self.depth) != (other.width, other.depth):
            raise ValueError("cannot merge statistics from different configurations")
        out = EnsembleStats(width=self.width, depth=self.depth)
        na, nb = self.trial_count, other.trial_count
        n = na + nb
        out.trial_count = n
        out.overflow_count = self.overflow_count + other.overflow_count
        out.overflow_by_layer = dict(self.overflow_by_layer)
        for layer, c in other.overflow_by_layer.items():
            out.overflow_by_layer[layer] = out.overflow_by_layer.get(layer, 0) + c
        if n == 0:
            pass
        elif na == 0:
            out.q_mean = other.q_mean.copy(); out.q_m2 = other.q_m2.copy()
            out.r_mean = other.r_mean.copy(); out.r_m2 = other.r_m2.copy()
        elif nb == 0:
            out.q_mean = self.q_mean.copy(); out.q_m2 = self.q_m2.copy()
            out.r_mean = self.r_mean.copy(); out.r_m2 = self.r_m2.copy()
        else:
            for attr in ("q", "r"):
                ma, sa = getattr(self, f"{attr}_mean"), getattr(self, f"{attr}_m2")
                mb, sb = getattr(other, f"{attr}_mean"), getattr(other, f"{attr}_m2")
                delta = mb - ma
                setattr(out, f"{attr}_mean", ma + delta * (nb / n))
                setattr(out, f"{attr}_m2", sa + sb + delta * delta * (na * nb / n))
        out.capture_units = self.capture_units or other.capture_units
        out.capture_budget_rows = max(self.capture_budget_rows, other.capture_budget_rows)
        parts = [c for c in (self.captured, other.captured) if c is not None]
        if parts:
            out.captured = np.concatenate(parts)[: out.capture_budget_rows]
        if self.hist_edges is not None or other.hist_edges is not None:
            out.hist_edges = self.hist_edges if self.hist_edges is not None else other.hist_edges
            counts = [c for c in (self.hist_counts, other.hist_counts) if c is not None]
            out.hist_counts = counts[0].copy() if len(counts) == 1 else counts[0] + counts[1]
        if self.success_layers is not None or other.success_layers is not None:
            zero = np.zeros(self.depth + 1, dtype=int)
            sa = self.success_layers if self.success_layers is not None else zero
            sb = other.success_layers if other.success_layers is not None else zero
            out.success_layers = sa + sb
            out.success_joint = self.success_joint + other.success_joint
        return out

    def q_variance(self) -> np.ndarray:
        if self.trial_count < 2:
            return np.full(self.depth + 1, np.nan)
        return self.q_m2 / (self.trial_count - 1)

    def r_variance(self) -> np.ndarray:
        if self.trial_count < 2:
            return np.full(self.depth + 1, np.nan)
        return self.r_m2 / (self.trial_count - 1)

    def captured_values(self) -> np.ndarray:
        if self.captured is None:
            return np.empty(0)
        return self.captured.reshape(-1)


def _new_chunk_stats(cfg: NetworkConfig, capture: CaptureSpec | None,
                     check: DeviationCheck | None) -> EnsembleStats:
    stats = EnsembleStats(width=cfg.width, depth=cfg.depth)
    if capture is not None:
        units = capture.unit_indices(cfg.width).shape[0]
        stats.capture_units = units
        stats.capture_budget_rows = max(capture.max_samples // units, 1)
        if capture.histogram is not None:
            bins, lo, hi = capture.histogram
            stats.hist_edges = np.linspace(lo, hi, bins + 1)
            stats.hist_counts = np.zeros(bins + 2, dtype=np.int64)
    if check is not None:
        stats.success_layers = np.zeros(cfg.depth + 1, dtype=int)
    return stats


def _run_chunk(args) -> EnsembleStats:
    cfg, start, stop, capture, check = args
    stats = _new_chunk_stats(cfg, capture, check)
    for trial in range(start, stop):
        try:
            obs = forward_once(cfg, trial, capture)
        except LayerOverflowError as err:
            stats.add_overflow(err.layer)
            continue
        stats.add_trial(obs, check)
    return stats


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get("LENMAP_WORKERS")
        if env is not None:
            workers = int(env)
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


def simulate_ensemble(cfg: NetworkConfig, trials: int,
                      capture: CaptureSpec | None = None,
                      check: DeviationCheck | None = None,
                      workers: int | None = None) -> EnsembleStats:
    """Aggregate forward_once over trials 0..trials-1.

    Chunk boundaries and merge order are fixed by trial index alone, so any
    worker count yields the same EnsembleStats bits.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trials > MAX_TRIALS:
        raise ValueError("trials exceeds the 32-bit counter range")
    if check is not None and check.qtilde.shape[0] != cfg.depth + 1:
        raise ValueError("reference length must cover layers 0..depth")

    workers = resolve_workers(workers)
    chunk_args = [
        (cfg, start, min(start + CHUNK_TRIALS, trials), capture, check)
        for start in range(0, trials, CHUNK_TRIALS)
    ]
    total = _new_chunk_stats(cfg, capture, check)
    if workers == 1 or len(chunk_args) == 1:
        for args in chunk_args:
            total = total.merge(_run_chunk(args))
    else:
        ctx = get_context("fork" if os.name == "posix" else "spawn")
        with ctx.Pool(processes=min(workers, len(chunk_args))) as pool:
            for chunk_stats in pool.imap(_run_chunk, chunk_args):
                total = total.merge(chunk_stats)
    return total
