"""Sparsity-agnostic tests over dyadic grids of candidate sparsities.

The adaptive test evaluates the dispatching test at every point of a
dyadic grid on the same observation and rejects if any point rejects.
Identical constituent tests at different grid points are computed once,
and Bonferroni truncated statistics sharing an axis and subset size are
computed in a single enumeration pass.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _montecarlo as mc
from .core_model import ProblemShape, SeedSpec, ShapeError, noise_matrix
from .detectors import (
    DEFAULT_CAP,
    TRUNCATION_C,
    DetectorKind,
    EnumerationCapError,
    TestOutcome,
    TheoreticalConstants,
    dispatch_kind,
    max_trunc_chi2_multi,
    stat_linear,
    stat_max_lin,
    stat_trunc_chi2,
    truncation_tau,
)
from .gauss import TruncationConstant, nu_tau
from .rates import log_binom, rate_breakdown

__all__ = [
    "GridFlavor",
    "DyadicGrid",
    "dyadic_values",
    "build_grid",
    "covering_points",
    "adaptive_tau_max_trunc",
    "AdaptiveConstants",
    "adaptive_cutoff",
    "AdaptiveDeltaStar",
    "delta_star_ada",
    "adaptivity_diagnostic",
]


class GridFlavor(str, enum.Enum):
    Omega = "Omega"
    Omega1 = "Omega1"
    Omega2 = "Omega2"
    OmegaBar = "OmegaBar"


def dyadic_values(d: int) -> tuple[int, ...]:
    """``ceil(d / 2**m)`` for ``m = 0, ..., ceil(log2 d)``, deduplicated, descending."""
    d = int(d)
    if d < 1:
        raise ShapeError("dimension must be positive")
    m_max = (d - 1).bit_length()  # ceil(log2 d)
    values = {max(1, -(-d // 2**m)) for m in range(m_max + 1)}
    return tuple(sorted(values, reverse=True))


def covering_points(d: int, s: int) -> tuple[int, int]:
    """Closest grid values ``s_minus <= s <= s_plus`` on the dyadic grid of ``d``."""
    if not 1 <= s <= d:
        raise ShapeError(f"s={s} must lie in [1, {d}]")
    values = dyadic_values(d)
    return max(v for v in values if v <= s), min(v for v in values if v >= s)


@dataclass(frozen=True)
class DyadicGrid:
    """Candidate sparsities.

    Product flavors store ``(s1, s2)`` pairs; ``Omega1`` stores
    ``(s1, None)`` and ``Omega2`` stores ``(None, s2)``.  Points are in
    canonical order: first coordinate descending, then second descending.
    """

    d1: int
    d2: int
    flavor: GridFlavor
    points: tuple
    c: float = 1.0

    def __len__(self) -> int:
        return len(self.points)


def build_grid(d1: int, d2: int, flavor: GridFlavor | str = GridFlavor.Omega, c: float = 1.0) -> DyadicGrid:
    """Dyadic grid with ceiling rounding.

    ``Omega2`` keeps column sizes with ``c * s2**2 <= d2`` and ``s2 >= 3``;
    ``OmegaBar`` keeps pairs with ``(d2 / s2**2) log C(d1, s1) >= c``.
    """
    flavor = GridFlavor(flavor)
    rows, cols = dyadic_values(d1), dyadic_values(d2)
    if flavor is GridFlavor.Omega:
        points = [(a, b) for a in rows for b in cols]
    elif flavor is GridFlavor.Omega1:
        points = [(a, None) for a in rows]
    elif flavor is GridFlavor.Omega2:
        points = [(None, b) for b in cols if c * b * b <= d2 and b >= 3]
    else:
        points = [(a, b) for a in rows for b in cols if d2 / b**2 * log_binom(d1, a) >= c]
    return DyadicGrid(int(d1), int(d2), flavor, tuple(points), float(c))


def _log2_floor1(d: int) -> float:
    # log2 factors are floored at 1 so single-row or single-column matrices stay defined
    return max(1.0, math.log2(d))


def _log_scan_count(d1: int, s1: int, d2: int) -> float:
    return log_binom(d1, s1) + math.log(_log2_floor1(d1)) + math.log(_log2_floor1(d2))


def adaptive_tau_max_trunc(s1: int, s2: int, d1: int, d2: int, c: float = TRUNCATION_C) -> float:
    """Threshold of the Bonferroni truncated statistic inflated for the grid scan."""
    if d1 < 2 or d2 < 2:
        raise ShapeError("the adaptive threshold needs d1, d2 >= 2")
    ProblemShape(d1, d2, s1, s2)
    return math.sqrt(c * math.log1p(d2 / s2**2 * _log_scan_count(d1, s1, d2)))


def _adaptive_tau(kind: DetectorKind, shape: ProblemShape, c: float) -> TruncationConstant | None:
    if kind.family != "max_trunc":
        return truncation_tau(kind, shape, c)
    d1, d2, s1, s2 = shape.as_tuple() if kind.axis == 1 else shape.transpose().as_tuple()
    return nu_tau(math.sqrt(c * math.log1p(d2 / s2**2 * _log_scan_count(d1, s1, d2))))


@dataclass(frozen=True)
class AdaptiveConstants:
    """Multipliers of the closed-form adaptive cutoffs.

    ``level`` enters the Bonferroni truncated cutoff through
    ``log((2 / level) C(d1, s1) log2 d1 log2 d2)``.
    """

    linear: float = 3.0
    trunc: float = 6.0
    max_lin: float = 2.5
    max_trunc: float = 1.0
    level: float = 0.1
    truncation: float = TRUNCATION_C


def adaptive_cutoff(kind: DetectorKind, shape: ProblemShape, tau: TruncationConstant | None = None,
                    constants: AdaptiveConstants | None = None) -> float:
    """Closed-form cutoff of one constituent at grid point ``(shape.s1, shape.s2)``."""
    k = constants or AdaptiveConstants()
    kind = DetectorKind(kind)
    if kind is DetectorKind.Linear:
        return k.linear
    d1, d2, s1, s2 = shape.as_tuple() if kind.axis == 1 else shape.transpose().as_tuple()
    if kind.family == "trunc":
        return k.trunc * s2 * math.log1p(d2 / s2**2)
    if kind.family == "max_lin":
        return k.max_lin * math.sqrt(2.0 * (1.0 + log_binom(d1, s1) + math.log(_log2_floor1(d1))))
    if tau is None:
        tau = _adaptive_tau(kind, shape, k.truncation)
    scan = math.log(2.0 / k.level) + _log_scan_count(d1, s1, d2)
    spread = d2 * math.exp(-0.5 * tau.tau**2) * scan
    return k.max_trunc * 9.0 * (math.sqrt(spread) + scan)


@dataclass(frozen=True)
class _Constituent:
    kind: DetectorKind
    s: int | None  # subset size on the scanned axis
    tau: TruncationConstant | None
    shape: ProblemShape  # first grid point using it


class AdaptiveDeltaStar:
    """Maximum of the dispatching test over a dyadic grid of sparsities.

    Parameters
    ----------
    d1, d2 : int
        Matrix dimensions.
    cap : int
        Enumeration cap for Bonferroni truncated statistics.
    on_cap : {"raise", "skip"}
        What to do with grid points whose dispatched test exceeds the cap.
        Skipped points are listed in ``skipped``.
    truncation : float
        Truncation constant ``C`` in the thresholds.
    """

    def __init__(self, d1: int, d2: int, cap: int = DEFAULT_CAP, on_cap: str = "raise",
                 truncation: float = TRUNCATION_C):
        if on_cap not in ("raise", "skip"):
            raise ValueError("on_cap must be 'raise' or 'skip'")
        self.d1, self.d2, self.cap = int(d1), int(d2), int(cap)
        self.grid = build_grid(d1, d2, GridFlavor.Omega)
        self.skipped: list[tuple[int, int]] = []
        self.points: list[tuple[int, int]] = []
        self.point_test: list[int] = []
        self.tests: list[_Constituent] = []
        index = {}
        for s1, s2 in self.grid.points:
            shape = ProblemShape(d1, d2, s1, s2)
            kind = dispatch_kind(shape, rate_breakdown(shape))
            s = None
            if kind.axis is not None and kind.family != "trunc":
                s = s1 if kind.axis == 1 else s2
            if kind.family == "max_trunc":
                d = d1 if kind.axis == 1 else d2
                if math.comb(d, s) > self.cap:
                    if on_cap == "raise":
                        raise EnumerationCapError(math.comb(d, s), self.cap)
                    self.skipped.append((s1, s2))
                    continue
            tau = _adaptive_tau(kind, shape, truncation)
            key = (kind, s, tau)
            if key not in index:
                index[key] = len(self.tests)
                self.tests.append(_Constituent(kind, s, tau, shape))
            self.points.append((s1, s2))
            self.point_test.append(index[key])
        if not self.points:
            raise EnumerationCapError(0, self.cap)
        self.cutoffs: np.ndarray | None = None
        self.cutoff_info: dict = {}

    name = "DeltaStarAda"

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.d1, self.d2):
            raise ShapeError(f"expected a {self.d1}x{self.d2} matrix, got {y.shape}")
        return y

    def _fill(self, y, i: int, values: np.ndarray, subsets: list, done: np.ndarray) -> None:
        t = self.tests[i]
        if t.kind is DetectorKind.Linear:
            values[i] = stat_linear(y)
        elif t.kind.family == "trunc":
            values[i] = stat_trunc_chi2(y, t.kind.axis, t.tau)
        elif t.kind.family == "max_lin":
            values[i], subsets[i] = stat_max_lin(y, t.kind.axis, t.s)
        else:
            # one enumeration pass serves every threshold sharing this axis and size
            members = [j for j, u in enumerate(self.tests) if u.kind is t.kind and u.s == t.s]
            results, _ = max_trunc_chi2_multi(y, t.kind.axis, t.s, [self.tests[j].tau for j in members], self.cap)
            for j, (value, subset) in zip(members, results):
                values[j], subsets[j], done[j] = value, subset, True
        done[i] = True

    def statistics(self, y) -> tuple[np.ndarray, list]:
        """Every distinct constituent statistic and its argmax subset."""
        y = self._check(y)
        values = np.empty(len(self.tests))
        subsets = [None] * len(self.tests)
        done = np.zeros(len(self.tests), dtype=bool)
        for i in range(len(self.tests)):
            if not done[i]:
                self._fill(y, i, values, subsets, done)
        return values, subsets

    def set_theoretical(self, constants: AdaptiveConstants | None = None) -> "AdaptiveDeltaStar":
        k = constants or AdaptiveConstants()
        self.cutoffs = np.array([adaptive_cutoff(t.kind, t.shape, t.tau, k) for t in self.tests])
        self.cutoff_info = {"mode": "theoretical", "constants": k}
        return self

    def null_statistics(self, n_reps: int, seed: int, threads: int = 1) -> np.ndarray:
        root = mc.stream_root(seed, mc.CALIBRATION_STREAM)
        rows = mc.map_replicates(
            lambda r: self.statistics(noise_matrix(self.d1, self.d2, SeedSpec(root, r)))[0], n_reps, threads
        )
        return np.array(rows).reshape(n_reps, len(self.tests))

    def calibrate(self, level: float, n_reps: int, seed: int, threads: int = 1) -> "AdaptiveDeltaStar":
        """Equal-rank cutoffs making the whole grid scan level ``level`` under the null."""
        stats = self.null_statistics(n_reps, seed, threads)
        self.cutoffs, j, fw = mc.joint_cutoffs(stats, level)
        self.cutoff_info = {"mode": "calibrated", "level": level, "n_reps": n_reps, "seed": seed,
                            "rank": j, "in_sample_rejections": fw}
        return self

    def outcome(self, values: np.ndarray, subsets=None) -> TestOutcome:
        if self.cutoffs is None:
            raise RuntimeError("cutoffs are not set; call calibrate() or set_theoretical()")
        best = None
        for p, ti in enumerate(self.point_test):
            margin = values[ti] - self.cutoffs[ti]
            if values[ti] > self.cutoffs[ti]:
                best = p
                break
            if best is None or margin > values[self.point_test[best]] - self.cutoffs[self.point_test[best]]:
                best = p
        ti = self.point_test[best]
        t = self.tests[ti]
        return TestOutcome(
            float(values[ti]), float(self.cutoffs[ti]), bool(values[ti] > self.cutoffs[ti]), t.kind,
            subsets[ti] if subsets is not None else None, 1, self.points[best],
        )

    def test(self, y) -> TestOutcome:
        """Evaluate grid points in canonical order, stopping at the first rejection."""
        if self.cutoffs is None:
            raise RuntimeError("cutoffs are not set; call calibrate() or set_theoretical()")
        y = self._check(y)
        values = np.full(len(self.tests), -np.inf)
        subsets = [None] * len(self.tests)
        done = np.zeros(len(self.tests), dtype=bool)
        for ti in self.point_test:
            if not done[ti]:
                self._fill(y, ti, values, subsets, done)
            if values[ti] > self.cutoffs[ti]:
                return self.outcome(values, subsets)
        return self.outcome(values, subsets)


def delta_star_ada(y, d1: int, d2: int, specs: AdaptiveDeltaStar | None = None) -> TestOutcome:
    """Run the adaptive test; without ``specs`` use the closed-form cutoffs."""
    test = specs if specs is not None else AdaptiveDeltaStar(d1, d2).set_theoretical()
    if (test.d1, test.d2) != (d1, d2):
        raise ShapeError("adaptive test was built for different dimensions")
    return test.test(y)


def adaptivity_diagnostic(shape: ProblemShape, c_prime: float = 1.0) -> dict:
    """Report the side conditions under which the adaptive guarantee holds.

    Nothing is enforced; the test is defined regardless.
    """
    d1, d2, s1, s2 = shape.as_tuple()

    def loglog(d):
        return math.log(math.log(d)) if d > math.e else -math.inf

    checks = {
        "min_dimension_at_least_8": min(d1, d2) >= 8,
        "min_sparsity_at_least_3": min(s1, s2) >= 3,
        "rows_vs_columns": s1 + loglog(d2) >= c_prime * loglog(d1),
        "columns_vs_rows": s2 + loglog(d1) >= c_prime * loglog(d2),
        "ratio_at_least_e": min(d1 / s1, d2 / s2) >= math.e,
    }
    checks["all_hold"] = all(checks.values())
    checks["c_prime"] = c_prime
    checks["covering_rows"] = covering_points(d1, s1)
    checks["covering_columns"] = covering_points(d2, s2)
    return checks
