"""Activation functions and a numerical permissibility audit.

An activation is a named scalar map applied elementwise. Builtins cover the
usual suspects plus two deliberately pathological ones (``reciprocal``,
``exp_square``) used to exercise divergence handling downstream.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

GROWTH_HINTS = (
    "bounded",
    "polynomial",
    "subgaussian-exponential",
    "gaussian-or-faster",
    "singular",
)

# exp(690) < 1e300, so squared magnitudes stay representable in float64.
_EXP_ARG_CAP = 690.0

# Audit configuration: growth verdict threshold and magnitude cap.
GROWTH_THRESHOLD = 1e-2
BOUNDEDNESS_CAP = 1e300


def _relu(z):
    return np.maximum(np.asarray(z, dtype=float), 0.0)


def _heaviside(z):
    # 1 for z > 0, 0 for z <= 0 (value at the jump is 0).
    return np.where(np.asarray(z, dtype=float) > 0.0, 1.0, 0.0)


def _identity(z):
    return np.asarray(z, dtype=float) + 0.0


def _tanh(z):
    return np.tanh(np.asarray(z, dtype=float))


def _reciprocal(z):
    # 1/z patched to 0 at z = 0.
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    np.divide(1.0, z, out=out, where=(z != 0.0))
    return out


def _exp_square(z, alpha):
    z = np.asarray(z, dtype=float)
    return np.exp(np.minimum(alpha * z * z, _EXP_ARG_CAP))


def _scaled_eval(z, c, base_fn):
    return base_fn(np.asarray(z, dtype=float) * c)


def _log_abs_from_eval(z, fn):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(fn(z)))


def _log_abs_exp_square(z, alpha):
    # Exact log magnitude; immune to the eval clip.
    z = np.asarray(z, dtype=float)
    return alpha * z * z


def _log_abs_scaled(z, c, base_log):
    return base_log(np.asarray(z, dtype=float) * c)


@dataclass(frozen=True)
class Activation:
    """Named elementwise map with growth metadata.

    ``fn`` accepts scalars or numpy arrays. ``log_abs_fn`` returns
    log|fn(z)| (``-inf`` at zeros) and exists so that fast-growing
    activations can report magnitudes beyond float64 range.
    """

    name: str
    fn: Callable
    growth_hint: str
    log_abs_fn: Callable = None  # filled by constructors below

    def __post_init__(self):
        if self.growth_hint not in GROWTH_HINTS:
            raise ValueError(f"unknown growth hint {self.growth_hint!r}")
        if self.log_abs_fn is None:
            object.__setattr__(self, "log_abs_fn", partial(_log_abs_from_eval, fn=self.fn))

    def __call__(self, z):
        return self.fn(z)

    def log_abs(self, z):
        return self.log_abs_fn(z)


RELU = Activation("relu", _relu, "polynomial")
HEAVISIDE = Activation("heaviside", _heaviside, "bounded")
IDENTITY = Activation("identity", _identity, "polynomial")
TANH = Activation("tanh", _tanh, "bounded")
RECIPROCAL = Activation("reciprocal", _reciprocal, "singular")

_BUILTINS = {a.name: a for a in (RELU, HEAVISIDE, IDENTITY, TANH, RECIPROCAL)}


def exp_square(alpha: float) -> Activation:
    """exp(alpha * z**2); grows at least as fast as a Gaussian for alpha > 0."""
    alpha = float(alpha)
    if alpha <= 0.0:
        raise ValueError(f"exp_square needs alpha > 0, got {alpha}")
    return Activation(
        f"exp_square:{alpha:g}",
        partial(_exp_square, alpha=alpha),
        "gaussian-or-faster",
        partial(_log_abs_exp_square, alpha=alpha),
    )


def scaled(c: float, base: Activation) -> Activation:
    """z -> base(c * z)."""
    c = float(c)
    return Activation(
        f"scale:{c:g}:{base.name}",
        partial(_scaled_eval, c=c, base_fn=base.fn),
        base.growth_hint,
        partial(_log_abs_scaled, c=c, base_log=base.log_abs_fn),
    )


def parse_activation(name: str) -> Activation:
    """Resolve a CLI activation name.

    Accepted: relu, heaviside, tanh, identity, reciprocal, exp_square:<alpha>,
    and the prefix scale:<c>: applied to any of those.
    """
    name = name.strip()
    if name.startswith("scale:"):
        parts = name.split(":", 2)
        if len(parts) != 3 or not parts[2]:
            raise ValueError(f"malformed scale prefix in {name!r}")
        try:
            c = float(parts[1])
        except ValueError:
            raise ValueError(f"non-numeric scale factor in {name!r}") from None
        return scaled(c, parse_activation(parts[2]))
    if name.startswith("exp_square:"):
        try:
            alpha = float(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"non-numeric exp_square parameter in {name!r}") from None
        return exp_square(alpha)
    try:
        return _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


@dataclass(frozen=True)
class ProbeGrid:
    """Log-spaced probe points on both signs of [lo, hi]."""

    lo: float = 1e-6
    hi: float = 1e3
    points_per_sign: int = 4096

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi):
            raise ValueError("need 0 < lo < hi")
        if 2 * self.points_per_sign < 1000:
            raise ValueError("probe grid needs at least 1000 points")

    def points(self) -> np.ndarray:
        xs = np.geomspace(self.lo, self.hi, self.points_per_sign)
        return np.concatenate([-xs[::-1], xs])


@dataclass(frozen=True)
class PermissibilityReport:
    activation: str
    interval_bounded: bool
    growth_exponent_estimate: float
    verdict: str  # permissible-evidence | violates-boundedness | violates-growth | inconclusive
    probe_lo: float
    probe_hi: float
    notes: str


def _refine_toward_zero(act: Activation, start: float) -> float | None:
    """Follow growing magnitudes toward x = 0; return a witness |phi| > cap or None.

    Only the origin is probed as a candidate singularity; poles elsewhere are
    out of scope for these heuristics.
    """
    for sign in (1.0, -1.0):
        x = sign * start
        prev = abs(float(act(x)))
        while abs(x) > 1e-305:
            x *= 0.1
            cur = abs(float(act(x)))
            if not np.isfinite(cur) or cur > BOUNDEDNESS_CAP:
                return x
            if cur <= prev:
                break
            prev = cur
    return None


def audit_permissibility(act: Activation, probe: ProbeGrid = ProbeGrid()) -> PermissibilityReport:
    """Probe-based evidence for/against permissibility.

    Checks two conditions numerically: boundedness on finite intervals
    (magnitude cap, with geometric refinement toward 0 when values grow
    inward) and subgaussian growth (max of log|phi(x)|/x^2 over the
    outermost probe decade, clipped below at 0, against a 1e-2 threshold).
    The verdict is heuristic evidence, not a proof.
    """
    xs = probe.points()
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.abs(np.asarray(act(xs), dtype=float))

    notes = [
        "heuristic probe evidence, not a proof of permissibility",
        f"grid: {2 * probe.points_per_sign} log-spaced points, |x| in [{probe.lo:g}, {probe.hi:g}]",
    ]

    if np.isnan(vals).any():
        return PermissibilityReport(
            act.name, False, float("nan"), "inconclusive", probe.lo, probe.hi,
            "; ".join(notes + ["NaN encountered during probing"]),
        )

    # Boundedness on finite intervals. Direct cap hits first; otherwise chase
    # magnitudes growing toward the origin (the only candidate pole probed).
    witness = None
    if (vals > BOUNDEDNESS_CAP).any():
        witness = float(xs[int(np.argmax(vals > BOUNDEDNESS_CAP))])
    else:
        inner = np.abs(xs) <= probe.lo * 10.0
        nxt = (np.abs(xs) > probe.lo * 10.0) & (np.abs(xs) <= probe.lo * 100.0)
        if inner.any() and nxt.any() and vals[inner].max() > max(vals[nxt].max(), 1.0):
            witness = _refine_toward_zero(act, probe.lo)
    bounded = witness is None

    # Growth exponent over the outermost decade, both signs.
    outer = np.abs(xs) >= probe.hi / 10.0
    with np.errstate(divide="ignore"):
        la = np.asarray(act.log_abs(xs[outer]), dtype=float)
    finite = np.isfinite(la)
    if finite.any():
        growth = max(0.0, float(np.max(la[finite] / np.square(xs[outer][finite]))))
    else:
        growth = 0.0  # vanishes on the whole outer decade
    notes.append(f"growth estimate from outermost decade |x| in [{probe.hi/10:g}, {probe.hi:g}]")

    if not bounded:
        verdict = "violates-boundedness"
        notes.append(f"magnitude exceeds {BOUNDEDNESS_CAP:g} near x = {witness:g}")
    elif growth > GROWTH_THRESHOLD:
        verdict = "violates-growth"
    else:
        verdict = "permissible-evidence"

    return PermissibilityReport(
        act.name, bounded, growth, verdict, probe.lo, probe.hi, "; ".join(notes)
    )
