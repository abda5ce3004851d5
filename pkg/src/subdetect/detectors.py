"""Constituent test statistics, their cutoffs and the dispatching test.

Seven statistics are available: the global linear statistic, the truncated
chi-square statistic on column means (axis 1) or row means (axis 2), and
their Bonferroni versions maximised over row subsets (axis 1) or column
subsets (axis 2).  Axis-2 variants run the axis-1 code on the transposed
matrix with the shape transposed.

The dispatching test picks one constituent from the regime that attains
the reduced rate and a density ratio, then rejects when the statistic is
strictly above its cutoff.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core_model import ProblemShape, ShapeError
from .gauss import TruncationConstant, nu_tau
from .rates import RateBreakdown, Regime, log_e_binom, rate_breakdown

__all__ = [
    "DEFAULT_CAP",
    "TRUNCATION_C",
    "EnumerationCapError",
    "DetectorKind",
    "CutoffMode",
    "TheoreticalConstants",
    "DetectorSpec",
    "TestOutcome",
    "DeltaStar",
    "col_means_full",
    "col_means_subset",
    "stat_linear",
    "stat_trunc_chi2",
    "stat_max_lin",
    "stat_max_trunc_chi2",
    "max_trunc_chi2_multi",
    "truncation_tau",
    "evaluate_statistic",
    "theoretical_cutoff",
    "theoretical_cutoffs",
    "dispatch_kind",
    "delta_star",
]

DEFAULT_CAP = 10**6
TRUNCATION_C = 2.0


class EnumerationCapError(RuntimeError):
    """The number of subsets to enumerate exceeds the configured cap."""

    def __init__(self, n_subsets: int, cap: int):
        super().__init__(f"enumerating {n_subsets} subsets exceeds the cap of {cap}")
        self.n_subsets = n_subsets
        self.cap = cap


class DetectorKind(str, enum.Enum):
    Linear = "Linear"
    TruncChi2Axis1 = "TruncChi2Axis1"
    TruncChi2Axis2 = "TruncChi2Axis2"
    MaxLinAxis1 = "MaxLinAxis1"
    MaxLinAxis2 = "MaxLinAxis2"
    MaxTruncChi2Axis1 = "MaxTruncChi2Axis1"
    MaxTruncChi2Axis2 = "MaxTruncChi2Axis2"

    @property
    def axis(self) -> int | None:
        if self is DetectorKind.Linear:
            return None
        return 1 if self.value.endswith("1") else 2

    @property
    def family(self) -> str:
        if self is DetectorKind.Linear:
            return "linear"
        if self.value.startswith("MaxLin"):
            return "max_lin"
        if self.value.startswith("MaxTrunc"):
            return "max_trunc"
        return "trunc"

    @property
    def truncated(self) -> bool:
        return self.family in ("trunc", "max_trunc")


def _as_matrix(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.size == 0:
        raise ShapeError("expected a non-empty 2-D matrix")
    return np.ascontiguousarray(y)


def _oriented(y: np.ndarray, axis: int) -> np.ndarray:
    if axis == 1:
        return y
    if axis == 2:
        return np.ascontiguousarray(y.T)
    raise ValueError(f"axis must be 1 or 2, got {axis!r}")


def col_means_full(y) -> np.ndarray:
    """Column sums scaled by ``1/sqrt(d1)``; standard normal under the null."""
    y = _as_matrix(y)
    return _kernels.column_fold(y) / math.sqrt(y.shape[0])


def col_means_subset(y, rows) -> np.ndarray:
    """Column sums over ``rows`` scaled by ``1/sqrt(len(rows))``."""
    y = _as_matrix(y)
    rows = sorted(int(i) for i in rows)
    if not rows or len(set(rows)) != len(rows) or rows[0] < 0 or rows[-1] >= y.shape[0]:
        raise ShapeError("row subset must be non-empty, distinct and in range")
    return _kernels.column_fold(y[rows]) / math.sqrt(len(rows))


def stat_linear(y) -> float:
    y = _as_matrix(y)
    return float(y.sum() / math.sqrt(y.size))


def stat_trunc_chi2(y, axis: int, tau: TruncationConstant) -> float:
    """Sum of ``(m_j**2 - nu) 1(|m_j| > tau)`` over the full-axis means ``m_j``."""
    means = col_means_full(_oriented(_as_matrix(y), axis))
    return float(_kernels.truncated_sum(means, tau.tau, tau.nu))


def stat_max_lin(y, axis: int, s: int) -> tuple[float, tuple[int, ...]]:
    """Best subset-averaged linear statistic over all size-``s`` subsets.

    The objective is increasing in the sum of the chosen rows' totals, so
    the maximiser is the ``s`` largest row sums (lowest index on ties).
    """
    y = _oriented(_as_matrix(y), axis)
    d, m = y.shape
    if not 1 <= s <= d:
        raise ShapeError(f"subset size {s} must lie in [1, {d}]")
    row_sums = y.sum(axis=1)
    chosen = np.sort(np.argsort(-row_sums, kind="stable")[:s])
    total = 0.0
    for i in chosen:
        total += row_sums[i]
    return float(total / math.sqrt(s * m)), tuple(int(i) for i in chosen)


def _check_cap(d: int, s: int, cap: int) -> int:
    n_subsets = math.comb(d, s)
    if n_subsets > cap:
        raise EnumerationCapError(n_subsets, cap)
    return n_subsets


def max_trunc_chi2_multi(y, axis: int, s: int, taus, cap: int = DEFAULT_CAP):
    """Bonferroni truncated statistic at several thresholds in one pass.

    Returns a list of ``(value, argmax subset)`` per threshold and the
    number of subsets covered.
    """
    y = _oriented(_as_matrix(y), axis)
    d = y.shape[0]
    if not 1 <= s <= d:
        raise ShapeError(f"subset size {s} must lie in [1, {d}]")
    work = _check_cap(d, s, cap)
    tau_arr = np.array([t.tau for t in taus], dtype=np.float64)
    nu_arr = np.array([t.nu for t in taus], dtype=np.float64)
    best, subsets = _kernels.max_truncated_subset(y, s, tau_arr, nu_arr)
    results = [(float(best[q]), tuple(int(i) for i in subsets[q])) for q in range(len(tau_arr))]
    return results, work


def stat_max_trunc_chi2(y, axis: int, s1: int, s2: int, tau: TruncationConstant,
                        cap: int = DEFAULT_CAP) -> tuple[float, tuple[int, ...], int]:
    """Exact maximum of the truncated statistic over row (axis 1) or column
    (axis 2) subsets of size ``s1`` or ``s2``.

    The maximum is not floored at zero.  Ties go to the colexicographically
    smallest subset.

    Raises
    ------
    EnumerationCapError
        If the number of subsets exceeds ``cap``.
    """
    s = s1 if axis == 1 else s2
    (result,), work = max_trunc_chi2_multi(y, axis, s, [tau], cap)
    return result[0], result[1], work


def truncation_tau(kind: DetectorKind, shape: ProblemShape, c: float = TRUNCATION_C) -> TruncationConstant | None:
    """Default threshold of a truncated constituent (``None`` otherwise)."""
    kind = DetectorKind(kind)
    if not kind.truncated:
        return None
    d1, d2, s1, s2 = shape.as_tuple() if kind.axis == 1 else shape.transpose().as_tuple()
    if kind.family == "trunc":
        ratio = d2 / s2**2
    else:
        ratio = d2 / s2**2 * log_e_binom(d1, s1)
    return nu_tau(math.sqrt(c * math.log1p(ratio)))


def evaluate_statistic(kind: DetectorKind, y, shape: ProblemShape, tau: TruncationConstant | None = None,
                       cap: int = DEFAULT_CAP) -> tuple[float, tuple[int, ...] | None, int]:
    """Compute one constituent statistic as ``(value, argmax subset, work)``."""
    kind = DetectorKind(kind)
    if kind.truncated and tau is None:
        tau = truncation_tau(kind, shape)
    if kind is DetectorKind.Linear:
        return stat_linear(y), None, 1
    if kind.family == "trunc":
        return stat_trunc_chi2(y, kind.axis, tau), None, 1
    s = shape.s1 if kind.axis == 1 else shape.s2
    if kind.family == "max_lin":
        value, subset = stat_max_lin(y, kind.axis, s)
        return value, subset, 1
    return stat_max_trunc_chi2(y, kind.axis, shape.s1, shape.s2, tau, cap)


@dataclass(frozen=True)
class CutoffMode:
    """How a cutoff was obtained: ``theoretical`` (multiplier) or ``calibrated``."""

    mode: str
    multiplier: float | None = None
    level: float | None = None
    n_reps: int | None = None
    seed: int | None = None

    @classmethod
    def theoretical(cls, multiplier: float) -> "CutoffMode":
        return cls("theoretical", multiplier=float(multiplier))

    @classmethod
    def calibrated(cls, level: float, n_reps: int, seed: int) -> "CutoffMode":
        return cls("calibrated", level=float(level), n_reps=int(n_reps), seed=int(seed))


@dataclass(frozen=True)
class TheoreticalConstants:
    """Multipliers of the closed-form cutoffs and the truncation constant.

    The defaults keep the null rejection rate of every constituent well
    under 0.1 at desk shapes; ``linear`` is the Gaussian tail bound
    ``sqrt(2 log(2/alpha))`` at ``alpha = 0.2``.
    """

    trunc: float = 4.0
    linear: float = math.sqrt(2.0 * math.log(10.0))
    max_trunc: float = 4.0
    max_lin: float = 2.5
    truncation: float = TRUNCATION_C

    def __post_init__(self):
        if min(self.trunc, self.linear, self.max_trunc, self.max_lin, self.truncation) <= 0:
            raise ValueError("theoretical constants must be positive")

    def multiplier(self, kind: DetectorKind) -> float:
        return {"linear": self.linear, "trunc": self.trunc,
                "max_lin": self.max_lin, "max_trunc": self.max_trunc}[DetectorKind(kind).family]


def theoretical_cutoff(kind: DetectorKind, shape: ProblemShape, multiplier: float) -> float:
    """Closed-form cutoff of a constituent, scaled by ``multiplier``."""
    kind = DetectorKind(kind)
    if kind is DetectorKind.Linear:
        return multiplier
    d1, d2, s1, s2 = shape.as_tuple() if kind.axis == 1 else shape.transpose().as_tuple()
    if kind.family == "trunc":
        return multiplier * s2 * math.log1p(d2 / s2**2)
    le = log_e_binom(d1, s1)
    if kind.family == "max_lin":
        return multiplier * math.sqrt(le)
    return multiplier * (s2 * math.log1p(d2 / s2**2 * le) + le)


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    cutoff: float
    reject: bool
    constituent: DetectorKind
    subset_argmax: tuple[int, ...] | None = None
    work_count: int = 1
    grid_point: tuple[int, int] | None = None

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic, "cutoff": self.cutoff, "reject": self.reject,
            "constituent": self.constituent.value,
            "subset_argmax": list(self.subset_argmax) if self.subset_argmax is not None else None,
            "work_count": self.work_count,
            "grid_point": list(self.grid_point) if self.grid_point is not None else None,
        }


@dataclass(frozen=True)
class DetectorSpec:
    """A constituent test: statistic kind, threshold and rejection cutoff."""

    kind: DetectorKind
    shape: ProblemShape
    tau: TruncationConstant | None
    cutoff: float
    cutoff_mode: CutoffMode = field(default_factory=lambda: CutoffMode("manual"))
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        if self.kind.truncated != (self.tau is not None):
            raise ValueError(f"{self.kind.value}: tau must be given exactly for truncated statistics")
        if self.cutoff_mode.mode == "theoretical" and self.cutoff < 0:
            raise ValueError("theoretical cutoffs are nonnegative")

    @property
    def name(self) -> str:
        return self.kind.value

    def statistic(self, y) -> tuple[float, tuple[int, ...] | None, int]:
        return evaluate_statistic(self.kind, y, self.shape, self.tau, self.cap)

    def outcome(self, value: float, subset=None, work: int = 1) -> TestOutcome:
        return TestOutcome(value, self.cutoff, value > self.cutoff, self.kind, subset, work)

    def test(self, y) -> TestOutcome:
        return self.outcome(*self.statistic(y))


def theoretical_cutoffs(shape: ProblemShape, constants: TheoreticalConstants | None = None,
                        cap: int = DEFAULT_CAP) -> dict[DetectorKind, DetectorSpec]:
    """One spec per constituent with closed-form cutoffs."""
    k = constants or TheoreticalConstants()
    specs = {}
    for kind in DetectorKind:
        mult = k.multiplier(kind)
        specs[kind] = DetectorSpec(
            kind, shape, truncation_tau(kind, shape, k.truncation),
            theoretical_cutoff(kind, shape, mult), CutoffMode.theoretical(mult), cap,
        )
    return specs


def dispatch_kind(shape: ProblemShape, rates: RateBreakdown | None = None) -> DetectorKind:
    """Constituent chosen by the regime attaining the reduced rate."""
    rates = rates or rate_breakdown(shape)
    d1, d2, s1, s2 = shape.as_tuple()
    if rates.regime is Regime.PhiA:
        return DetectorKind.TruncChi2Axis1 if d2 / s2**2 >= 1 else DetectorKind.Linear
    if rates.regime is Regime.PhiB:
        return DetectorKind.TruncChi2Axis2 if d1 / s1**2 >= 1 else DetectorKind.Linear
    if rates.regime is Regime.PsiBetaC:
        if d2 / s2**2 * log_e_binom(d1, s1) >= 1:
            return DetectorKind.MaxTruncChi2Axis1
        return DetectorKind.MaxLinAxis1
    if d1 / s1**2 * log_e_binom(d2, s2) >= 1:
        return DetectorKind.MaxTruncChi2Axis2
    return DetectorKind.MaxLinAxis2


def delta_star(y, shape: ProblemShape, rates: RateBreakdown | None, specs) -> TestOutcome:
    """Run exactly the constituent selected by :func:`dispatch_kind`."""
    kind = dispatch_kind(shape, rates)
    if kind not in specs:
        raise KeyError(f"no spec provided for the dispatched constituent {kind.value}")
    return specs[kind].test(y)


@dataclass(frozen=True)
class DeltaStar:
    """The dispatching test bound to a shape and its constituent specs."""

    shape: ProblemShape
    specs: dict
    rates: RateBreakdown = None

    def __post_init__(self):
        if self.rates is None:
            object.__setattr__(self, "rates", rate_breakdown(self.shape))

    @property
    def constituent(self) -> DetectorKind:
        return dispatch_kind(self.shape, self.rates)

    @property
    def name(self) -> str:
        return f"DeltaStar[{self.constituent.value}]"

    def test(self, y) -> TestOutcome:
        return delta_star(y, self.shape, self.rates, self.specs)
