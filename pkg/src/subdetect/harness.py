"""Monte Carlo risk estimation, cutoff calibration, signal sweeps and
rate comparison studies.

Random streams: under one root seed, null replicates, alternative noise,
random supports and calibration samples each get their own derived
stream, and replicate ``r`` of a stream is regenerated from ``(stream,
r)`` alone.  Alternative replicate ``r`` uses the same noise for every
detector and every signal strength (common random numbers), so risk
curves are monotone in the signal up to detector behavior rather than
sampling noise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _montecarlo as mc
from ._montecarlo import InsufficientReplicatesError
from .core_model import (
    PlantedMean,
    ProblemShape,
    SeedSpec,
    ShapeError,
    make_planted_mean,
    noise_matrix,
    sample_random_support,
)
from .detectors import (
    DEFAULT_CAP,
    CutoffMode,
    DeltaStar,
    DetectorKind,
    DetectorSpec,
    EnumerationCapError,
    dispatch_kind,
    evaluate_statistic,
    truncation_tau,
)
from .rates import (
    Corollary,
    CorollaryConstants,
    bi_rate,
    corollary_rate,
    rate_breakdown,
    s1_equals_1_regime,
)

__all__ = [
    "InsufficientReplicatesError",
    "SupportPolicy",
    "RiskEstimate",
    "SweepResult",
    "StudyKind",
    "StudyTable",
    "canonical_mean",
    "null_statistics",
    "calibrate_cutoff",
    "calibrated_spec",
    "calibrated_delta_star",
    "null_rejections",
    "alt_rejections",
    "estimate_risk",
    "mu_sweep",
    "rate_comparison_study",
    "cor1_shapes",
    "prop3_shapes",
    "s1eq1_shapes",
    "phase_grid",
]


class SupportPolicy(str, enum.Enum):
    Canonical = "canonical"
    Random = "random"


def _se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class RiskEstimate:
    detector: str
    shape: ProblemShape
    mu: float
    type_i: float
    type_i_se: float
    type_ii: float
    type_ii_se: float
    n_reps: int
    seed: int
    support_policy: SupportPolicy = SupportPolicy.Canonical

    @property
    def risk(self) -> float:
        return self.type_i + self.type_ii

    @property
    def risk_se(self) -> float:
        return math.hypot(self.type_i_se, self.type_ii_se)

    def as_dict(self) -> dict:
        return {
            "detector": self.detector, "d1": self.shape.d1, "d2": self.shape.d2,
            "s1": self.shape.s1, "s2": self.shape.s2, "mu": self.mu,
            "type_i": self.type_i, "type_i_se": self.type_i_se,
            "type_ii": self.type_ii, "type_ii_se": self.type_ii_se,
            "risk": self.risk, "n_reps": self.n_reps, "seed": self.seed,
            "support_policy": self.support_policy.value,
        }


def _detector_name(detector) -> str:
    return getattr(detector, "name", type(detector).__name__)


def canonical_mean(shape: ProblemShape, mu: float) -> PlantedMean:
    """Planted block on the first ``s1`` rows and first ``s2`` columns."""
    return make_planted_mean(shape, range(shape.s1), range(shape.s2), mu)


def null_statistics(kind: DetectorKind, shape: ProblemShape, n_reps: int, seed: int, threads: int = 1,
                    tau=None, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Statistic values on ``n_reps`` null matrices from the calibration stream."""
    kind = DetectorKind(kind)
    if kind.truncated and tau is None:
        tau = truncation_tau(kind, shape)
    root = mc.stream_root(seed, mc.CALIBRATION_STREAM)

    def one(r):
        y = noise_matrix(shape.d1, shape.d2, SeedSpec(root, r))
        return evaluate_statistic(kind, y, shape, tau, cap)[0]

    return np.array(mc.map_replicates(one, n_reps, threads), dtype=np.float64)


def calibrate_cutoff(kind: DetectorKind, shape: ProblemShape, level: float, n_reps: int, seed: int,
                     threads: int = 1, tau=None, cap: int = DEFAULT_CAP) -> float:
    """Conservative empirical ``(1 - level)`` null quantile.

    Returns the largest order statistic ``X_(n - j)`` whose in-sample
    exceedance count ``j`` is small enough that a fresh null sample exceeds
    it with probability at most ``level``, with 95% confidence over the
    calibration draws (one-sided binomial bound on the exceedance count).

    Raises
    ------
    InsufficientReplicatesError
        If ``n_reps < 10 / level``.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if n_reps < 10.0 / level:
        raise InsufficientReplicatesError(f"need at least {math.ceil(10.0 / level)} replicates for level {level}")
    stats = null_statistics(kind, shape, n_reps, seed, threads, tau, cap)
    cutoffs, _, _ = mc.joint_cutoffs(stats, level)
    return float(cutoffs[0])


def calibrated_spec(kind: DetectorKind, shape: ProblemShape, level: float, n_reps: int, seed: int,
                    threads: int = 1, cap: int = DEFAULT_CAP) -> DetectorSpec:
    kind = DetectorKind(kind)
    tau = truncation_tau(kind, shape)
    cutoff = calibrate_cutoff(kind, shape, level, n_reps, seed, threads, tau, cap)
    return DetectorSpec(kind, shape, tau, cutoff, CutoffMode.calibrated(level, n_reps, seed), cap)


def calibrated_delta_star(shape: ProblemShape, level: float, n_reps: int, seed: int, threads: int = 1,
                          cap: int = DEFAULT_CAP) -> DeltaStar:
    """Dispatching test with only its dispatched constituent calibrated at ``level``."""
    rates = rate_breakdown(shape)
    kind = dispatch_kind(shape, rates)
    return DeltaStar(shape, {kind: calibrated_spec(kind, shape, level, n_reps, seed, threads, cap)}, rates)


def null_rejections(detector, shape: ProblemShape, n_reps: int, seed: int, threads: int = 1) -> np.ndarray:
    root = mc.stream_root(seed, mc.NULL_STREAM)

    def one(r):
        return detector.test(noise_matrix(shape.d1, shape.d2, SeedSpec(root, r))).reject

    return np.array(mc.map_replicates(one, n_reps, threads), dtype=bool)


def alt_rejections(detector, shape: ProblemShape, mu: float, n_reps: int, seed: int, threads: int = 1,
                   support_policy: SupportPolicy | str = SupportPolicy.Canonical) -> np.ndarray:
    """Rejections under the planted alternative with every block entry equal to ``mu``."""
    policy = SupportPolicy(support_policy)
    noise_root = mc.stream_root(seed, mc.ALT_STREAM)
    support_root = mc.stream_root(seed, mc.SUPPORT_STREAM)
    fixed = canonical_mean(shape, mu)

    def one(r):
        y = noise_matrix(shape.d1, shape.d2, SeedSpec(noise_root, r))
        if policy is SupportPolicy.Random:
            rows, cols = sample_random_support(shape, SeedSpec(support_root, r))
        else:
            rows, cols = fixed.row_support, fixed.col_support
        y[np.ix_(rows, cols)] += mu
        return detector.test(y).reject

    return np.array(mc.map_replicates(one, n_reps, threads), dtype=bool)


def estimate_risk(detector, shape: ProblemShape, mu: float, n_reps: int, seed: int,
                  support_policy: SupportPolicy | str = SupportPolicy.Canonical, threads: int = 1,
                  null_reject: np.ndarray | None = None) -> RiskEstimate:
    """Type-I error, type-II error at the planted alternative, and their sum.

    ``null_reject`` reuses precomputed null rejections (they do not depend
    on ``mu``).
    """
    if n_reps < 100:
        raise ValueError("risk estimation needs at least 100 replicates")
    if not math.isfinite(mu) or mu < 0:
        raise ShapeError("mu must be finite and nonnegative")
    if null_reject is None:
        null_reject = null_rejections(detector, shape, n_reps, seed, threads)
    alt = alt_rejections(detector, shape, mu, n_reps, seed, threads, support_policy)
    p1 = float(np.mean(null_reject))
    p2 = 1.0 - float(np.mean(alt))
    return RiskEstimate(_detector_name(detector), shape, float(mu), p1, _se(p1, len(null_reject)),
                        p2, _se(p2, n_reps), n_reps, seed, SupportPolicy(support_policy))


@dataclass(frozen=True)
class SweepResult:
    """Risk along ``mu = m * sqrt(R)`` for increasing multiples ``m``."""

    shape: ProblemShape
    rate: float
    multiples: tuple[float, ...]
    estimates: tuple[RiskEstimate, ...]
    eta: float = 0.2

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.multiples, self.multiples[1:])):
            raise ValueError("multiples must be strictly increasing")

    @property
    def last_high_risk(self) -> float | None:
        """Largest multiple with risk at least 0.5."""
        hits = [m for m, e in zip(self.multiples, self.estimates) if e.risk >= 0.5]
        return hits[-1] if hits else None

    @property
    def first_low_risk(self) -> float | None:
        """Smallest multiple with risk at most ``eta``."""
        hits = [m for m, e in zip(self.multiples, self.estimates) if e.risk <= self.eta]
        return hits[0] if hits else None

    def rows(self) -> list[dict]:
        return [{"multiple": m, **e.as_dict()} for m, e in zip(self.multiples, self.estimates)]


def mu_sweep(detector, shape: ProblemShape, multiples, n_reps: int, seed: int, threads: int = 1,
             support_policy: SupportPolicy | str = SupportPolicy.Canonical, eta: float = 0.2) -> SweepResult:
    """Risk at each ``mu = m * sqrt(R)`` with one shared null sample."""
    multiples = tuple(float(m) for m in multiples)
    if any(m < 0 for m in multiples):
        raise ValueError("multiples must be nonnegative")
    rate = rate_breakdown(shape).R
    null_reject = null_rejections(detector, shape, n_reps, seed, threads)
    estimates = tuple(
        estimate_risk(detector, shape, m * math.sqrt(rate), n_reps, seed, support_policy, threads, null_reject)
        for m in multiples
    )
    return SweepResult(shape, rate, multiples, estimates, eta)


class StudyKind(str, enum.Enum):
    Cor1Match = "Cor1Match"
    Prop3Trend = "Prop3Trend"
    S1Eq1Table = "S1Eq1Table"


@dataclass(frozen=True)
class StudyTable:
    kind: StudyKind
    rows: tuple[dict, ...]
    verdict: dict = field(default_factory=dict)


RATIO_BAND = (1.0 / 50.0, 50.0)
_TABLE_TESTS = {"max_trunc_chi2": DetectorKind.MaxTruncChi2Axis1, "max_lin": DetectorKind.MaxLinAxis1}


def cor1_shapes() -> list[ProblemShape]:
    """Twenty balanced shapes meeting the first corollary's hypotheses."""
    shapes = []
    for d in (256, 1024, 4096, 16384, 65536):
        for s in (4, 8, 16, 32):
            shapes.append(ProblemShape(d, d, s, s))
    return shapes


def prop3_shapes(col_sizes=(16, 32, 64, 128, 256)) -> list[ProblemShape]:
    """Growing shapes meeting the fourth corollary's hypotheses.

    ``d2 = s2**3`` keeps ``s2 / d2`` vanishing and ``log d2`` small against
    ``s2**0.5``; ``s1 = ceil(200 s2 log d2)`` and ``d1 = 100 s1`` give
    ``s1**2 > d1 s2 log d2`` with ``s1 <= d1 / 100``.
    """
    shapes = []
    for s2 in col_sizes:
        d2 = s2**3
        s1 = math.ceil(200 * s2 * math.log(d2))
        shapes.append(ProblemShape(100 * s1, d2, s1, s2))
    return shapes


def s1eq1_shapes() -> list[ProblemShape]:
    """Three instances for each of the three single-row regimes."""
    return [
        ProblemShape(64, 64, 1, 2), ProblemShape(1024, 256, 1, 4), ProblemShape(4096, 4096, 1, 6),
        ProblemShape(16, 16, 1, 8), ProblemShape(64, 64, 1, 24), ProblemShape(16, 256, 1, 32),
        ProblemShape(16, 1024, 1, 6), ProblemShape(64, 4096, 1, 12), ProblemShape(256, 16384, 1, 32),
    ]


def rate_comparison_study(shapes, which: StudyKind | str, constants: CorollaryConstants | None = None) -> StudyTable:
    """Compare the minimax rate with closed forms across a shape grid.

    Assumption violations are reported per row and excluded from the
    verdict rather than raised.
    """
    which = StudyKind(which)
    rows = []
    for shape in shapes:
        b = rate_breakdown(shape)
        row = {"d1": shape.d1, "d2": shape.d2, "s1": shape.s1, "s2": shape.s2,
               "R": b.R, "Rtilde": b.Rtilde, "regime": b.regime.value}
        try:
            row["bi_rate"] = bi_rate(shape)
            row["ratio"] = b.R / row["bi_rate"]
        except ShapeError:
            row["bi_rate"] = row["ratio"] = math.nan
        if which is StudyKind.Cor1Match:
            row["assumptions"] = corollary_rate(shape, Corollary.Cor1, constants)[0]
        elif which is StudyKind.Prop3Trend:
            row["assumptions"] = corollary_rate(shape, Corollary.Cor4, constants)[0]
        else:
            if shape.s1 != 1:
                row["assumptions"] = False
            else:
                t = s1_equals_1_regime(shape)
                dispatched = dispatch_kind(shape, b)
                row.update({
                    "assumptions": True, "table_row": t.label, "table_rate": t.rate,
                    "table_test": t.test, "dispatched": dispatched.value,
                    "table_ratio": b.R / t.rate,
                    "label_match": dispatched is _TABLE_TESTS[t.test],
                })
        rows.append(row)

    ok = [r for r in rows if r["assumptions"]]
    lo, hi = RATIO_BAND
    if which is StudyKind.Cor1Match:
        ratios = [r["ratio"] for r in ok]
        verdict = {"n_conforming": len(ok), "min_ratio": min(ratios, default=math.nan),
                   "max_ratio": max(ratios, default=math.nan),
                   "within_band": bool(ok) and all(lo <= x <= hi for x in ratios)}
    elif which is StudyKind.Prop3Trend:
        ratios = [r["ratio"] for r in ok]
        verdict = {"n_conforming": len(ok), "ratios": ratios,
                   "strictly_decreasing": len(ratios) >= 2 and all(b < a for a, b in zip(ratios, ratios[1:]))}
    else:
        ratios = [r["table_ratio"] for r in ok]
        verdict = {"n_conforming": len(ok),
                   "labels_match": bool(ok) and all(r["label_match"] for r in ok),
                   "min_ratio": min(ratios, default=math.nan), "max_ratio": max(ratios, default=math.nan),
                   "within_band": bool(ok) and all(lo <= x <= hi for x in ratios)}
    return StudyTable(which, tuple(rows), verdict)


def phase_grid(d1: int, d2: int, row_sizes, col_sizes, multiple: float, n_reps: int, seed: int,
               level: float = 0.1, calib_reps: int | None = None, threads: int = 1,
               cap: int = DEFAULT_CAP) -> list[dict]:
    """Risk of the calibrated dispatching test over a grid of ``(s1, s2)``.

    Each cell uses ``mu = multiple * sqrt(R(s1, s2))``.  Cells whose
    dispatched test exceeds the enumeration cap are reported with
    ``risk = nan`` and ``status = "cap"``.
    """
    out = []
    for s1 in row_sizes:
        for s2 in col_sizes:
            shape = ProblemShape(d1, d2, s1, s2)
            b = rate_breakdown(shape)
            cell = {"s1": s1, "s2": s2, "R": b.R, "regime": b.regime.value,
                    "constituent": dispatch_kind(shape, b).value}
            try:
                test = calibrated_delta_star(shape, level, calib_reps or n_reps, seed, threads, cap)
                est = estimate_risk(test, shape, multiple * math.sqrt(b.R), n_reps, seed, threads=threads)
                cell.update({"risk": est.risk, "type_i": est.type_i, "type_ii": est.type_ii, "status": "ok"})
            except EnumerationCapError:
                cell.update({"risk": math.nan, "type_i": math.nan, "type_ii": math.nan, "status": "cap"})
            out.append(cell)
    return out
