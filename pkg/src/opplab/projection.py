"""Finite-set laboratory for the 5-dimensional representation machinery.

Vectors live in weight coordinates (w0, ..., w4), coordinate i carrying
weight (2 - i) for the diagonal flow: adjoint_a(t) scales coordinate i by
e^((2-i)t).  The unipotent action is the exponential of the coordinate
shift (N w)_i = w_{i+1}:

    adjoint_u(r, w)_i = sum_{k >= i} w_k r^(k-i) / (k-i)!

This factorial-free normalization is the unique one reproducing the
projection family

    xi_r(w) = (adjoint_u(r, w)_0, adjoint_u(r, w)_1),

a polynomial in r with coefficients w0 + w1 r + w2 r^2/2 + ... in the top
coordinate.  The "plus part" w+ = (w0, w1) collects the positive-weight
coordinates; coordinates are declared orthonormal, which fixes all norms.

The survey machinery measures, for a finite set Theta in the unit ball,
how often the projections xi_r concentrate more than an alpha-dimensional
set should: a point w violates at scale b when more than
C * egbd * b^(alpha - c*eps) * #Theta of the images land within b of
xi_r(w), and a parameter r is exceptional when the violating fraction
exceeds b^eps.  All implied constants of the motivating asymptotics are
explicit knobs here (C, c, eps); nothing asymptotic is asserted.

The Margulis-style function on a finite configuration is a truncated
energy: given the displacement vectors w of near returns (closer than
b * inj, with inj frozen to 1 in this linearized picture),

    value = (b * inj)^(-alpha)                      if #returns <= M,
            sum of |w|^(-alpha) over all but the M smallest norms otherwise,

where dropping exactly the M smallest norms realizes the minimum over all
ways to discard M returns (exchange argument; the test suite cross-checks
against exhaustive subset enumeration).  Weights on configurations are
carried for bookkeeping but never bias counts or energies here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyConfig
from .util import parallel_map, uniform_ball

#: a_t-weight of each coordinate.
WEIGHTS = np.array([2.0, 1.0, 0.0, -1.0, -2.0])

SURVEY_CSV_HEADER = ("r", "exceptional_fraction", "max_count", "energy_median", "energy_p95")

_FACTORIALS = np.array([1.0, 1.0, 2.0, 6.0, 24.0])


def shift_exponential(r: float) -> np.ndarray:
    """The 5x5 matrix of adjoint_u(r): upper triangular, entry r^(k-i)/(k-i)!."""
    mat = np.zeros((5, 5))
    for i in range(5):
        for k in range(i, 5):
            mat[i, k] = r ** (k - i) / _FACTORIALS[k - i]
    return mat


def adjoint_u(r: float, w) -> np.ndarray:
    """Unipotent action on a vector or an (n, 5) batch."""
    w = np.asarray(w, dtype=float)
    return w @ shift_exponential(r).T


def adjoint_a(t: float, w) -> np.ndarray:
    """Diagonal action: coordinate i scales by e^((2-i) t)."""
    w = np.asarray(w, dtype=float)
    return w * np.exp(WEIGHTS * t)


def plus_part(w) -> np.ndarray:
    """Projection to the positive-weight coordinates (w0, w1)."""
    return np.asarray(w, dtype=float)[..., :2]


def xi(r: float, w) -> np.ndarray:
    """The restricted projection: plus part of the transported vector."""
    return adjoint_u(r, w)[..., :2]


def adjoint_u_rows(W: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Row i of the result is adjoint_u(r[i], W[i]); vectorized over rows."""
    W = np.asarray(W, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(W)
    for i in range(5):
        for k in range(i, 5):
            out[:, i] += W[:, k] * r ** (k - i) / _FACTORIALS[k - i]
    return out


def expansion_check(w, r: float, ell: float) -> tuple[float, float, bool]:
    """Verify |adjoint_a(ell, y)| >= e^ell * |y+| for y = adjoint_u(r, w).

    The inequality is exact in the weight basis (the plus coordinates scale
    by e^(2 ell) and e^ell, both >= e^ell for ell >= 0); the boolean allows
    1e-9 slack for floating point.
    """
    if ell < 0:
        raise ValueError(f"ell must be >= 0, got {ell}")
    y = adjoint_u(r, np.asarray(w, dtype=float))
    lhs = float(np.linalg.norm(adjoint_a(ell, y)))
    rhs = float(math.exp(ell) * np.linalg.norm(y[:2]))
    return lhs, rhs, lhs >= rhs - 1e-9


def expansion_check_rows(W: np.ndarray, r: np.ndarray, ell: np.ndarray):
    """Vectorized expansion_check over rows; returns (lhs, rhs, ok) arrays."""
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 0):
        raise ValueError("ell must be >= 0")
    y = adjoint_u_rows(W, r)
    scaled = y * np.exp(WEIGHTS[None, :] * ell[:, None])
    lhs = np.linalg.norm(scaled, axis=1)
    rhs = np.exp(ell) * np.linalg.norm(y[:, :2], axis=1)
    return lhs, rhs, lhs >= rhs - 1e-9


@dataclass
class FiniteConfig:
    """A finite set of representation vectors, optionally weighted.

    Weights must be nonnegative and sum to 1 (within 1e-12); they are
    carried through serialization but do not enter counts or energies.
    """

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 5:
            raise ValueError(f"points must be an (n, 5) array, got shape {pts.shape}")
        self.points = pts
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(pts),):
                raise ValueError("weights length must match the number of points")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
            self.weights = w

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def random_ball(cls, n: int, radius: float = 1.0, seed: int = 0) -> "FiniteConfig":
        rng = np.random.default_rng(seed)
        return cls(points=uniform_ball(rng, n, 5) * radius)

    @classmethod
    def from_json_obj(cls, obj) -> "FiniteConfig":
        if isinstance(obj, dict):
            return cls(
                points=np.asarray(obj["points"], dtype=float),
                weights=None if obj.get("weights") is None else np.asarray(obj["weights"]),
            )
        return cls(points=np.asarray(obj, dtype=float))

    def to_json_obj(self):
        if self.weights is None:
            return [[float(x) for x in row] for row in self.points]
        return {
            "points": [[float(x) for x in row] for row in self.points],
            "weights": [float(x) for x in self.weights],
        }


def _require_unit_ball(config: FiniteConfig) -> np.ndarray:
    if len(config) == 0:
        raise EmptyConfig("the configuration has no points")
    pts = config.points
    top = float(np.max(np.linalg.norm(pts, axis=1)))
    if top > 1.0 + 1e-9:
        raise ValueError(f"points must lie in the closed unit ball (max norm {top:.6g})")
    return pts


def nonconcentration_constant(config: FiniteConfig, alpha: float, b1: float) -> float:
    """Least egbd with #(B(w,b) & Theta) <= egbd * b^alpha * #Theta on the test family.

    The test family is all centers w in Theta and the dyadic scales
    b1, 2*b1, 4*b1, ..., capped at 1; the continuous supremum over
    b in [b1, 1] exceeds this by at most a factor 2^alpha.
    """
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")
    if not 0 < b1 <= 1:
        raise ValueError(f"b1 must be in (0, 1], got {b1}")
    pts = _require_unit_ball(config)
    n = len(pts)
    sq = np.sum(pts**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T), 0.0)
    best = 0.0
    b = b1
    while True:
        scale = min(b, 1.0)
        counts = np.count_nonzero(d2 <= scale * scale, axis=1)
        best = max(best, float(np.max(counts)) / (scale**alpha * n))
        if scale >= 1.0:
            break
        b *= 2.0
    return best


def projection_concentration(config: FiniteConfig, r: float, b: float) -> np.ndarray:
    """For each point, how many of the xi_r-images lie within b of its own."""
    if len(config) == 0:
        raise EmptyConfig("the configuration has no points")
    img = xi(r, config.points)
    sq = np.sum(img**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (img @ img.T), 0.0)
    return np.count_nonzero(d2 <= b * b, axis=1).astype(np.int64)


@dataclass(frozen=True)
class ProjectionParams:
    """Scales and the measured non-concentration constant for a survey."""

    alpha: float
    b1: float
    b: float
    eps: float
    egbd: float

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must be in (0, 2], got {self.alpha}")
        if not 0 < self.b1 <= 1:
            raise ValueError(f"b1 must be in (0, 1], got {self.b1}")
        if self.b < self.b1:
            raise ValueError(f"need b >= b1, got b={self.b} < b1={self.b1}")
        if not 0 < self.eps < 1e-4 * self.alpha:
            raise ValueError(f"eps must be in (0, {1e-4 * self.alpha:g}), got {self.eps}")
        if self.egbd < 1:
            raise ValueError(f"egbd must be >= 1, got {self.egbd}")

    @classmethod
    def measured(
        cls,
        config: FiniteConfig,
        alpha: float,
        b1: float,
        b: float,
        eps: Optional[float] = None,
    ) -> "ProjectionParams":
        """Measure egbd from the configuration itself (clamped up to 1)."""
        egbd = max(1.0, nonconcentration_constant(config, alpha, b1))
        if eps is None:
            eps = 0.5e-4 * alpha
        return cls(alpha=alpha, b1=b1, b=b, eps=eps, egbd=egbd)


@dataclass(frozen=True)
class SurveyRow:
    r: float
    exceptional_fraction: float
    max_count: int
    energy_median: float
    energy_p95: float

    def csv_row(self) -> tuple:
        return (self.r, self.exceptional_fraction, self.max_count, self.energy_median, self.energy_p95)

    def to_json_obj(self) -> dict:
        return {
            "r": self.r,
            "exceptional_fraction": self.exceptional_fraction,
            "max_count": self.max_count,
            "energy_median": self.energy_median,
            "energy_p95": self.energy_p95,
        }


@dataclass
class SurveyResult:
    rows: list[SurveyRow]
    exceptional_r_fraction: float
    count_bound: float
    row_threshold: float

    def to_json_obj(self) -> dict:
        return {
            "rows": [row.to_json_obj() for row in self.rows],
            "exceptional_r_fraction": self.exceptional_r_fraction,
            "count_bound": self.count_bound,
            "row_threshold": self.row_threshold,
        }


def projection_survey(
    config: FiniteConfig,
    params: ProjectionParams,
    r_grid: Sequence[float],
    *,
    survey_const: float = 10.0,
    survey_exp: float = 10.0,
    row_threshold: Optional[float] = None,
) -> SurveyResult:
    """Concentration statistics of xi_r over a grid of r in [0, 1].

    A point violates at r when more than
    survey_const * egbd * b^(alpha - survey_exp*eps) * #Theta images fall
    within b of its own; r is exceptional when the violating fraction
    exceeds row_threshold (default b^eps).  Truncated-at-b pairwise
    energies of the image are reported per r as summary quantiles.
    """
    pts = _require_unit_ball(config)
    rs = [float(r) for r in r_grid]
    if any(r < 0 or r > 1 for r in rs):
        raise ValueError("r_grid must lie in [0, 1]")
    n = len(pts)
    b, alpha = params.b, params.alpha
    bound = survey_const * params.egbd * b ** (alpha - survey_exp * params.eps) * n
    threshold = b**params.eps if row_threshold is None else float(row_threshold)
    b2 = b * b
    self_term = 1.0 / b2 if alpha == 2.0 else b2 ** (-alpha / 2.0)

    def one_r(r: float) -> SurveyRow:
        img = xi(r, pts)
        sq = np.sum(img**2, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (img @ img.T), 0.0)
        counts = np.count_nonzero(d2 <= b2, axis=1)
        clipped = np.maximum(d2, b2)
        energy = 1.0 / clipped if alpha == 2.0 else clipped ** (-alpha / 2.0)
        row_energy = energy.sum(axis=1) - self_term
        return SurveyRow(
            r=r,
            exceptional_fraction=float(np.count_nonzero(counts > bound) / n),
            max_count=int(counts.max()),
            energy_median=float(np.median(row_energy)),
            energy_p95=float(np.percentile(row_energy, 95)),
        )

    rows = parallel_map(one_r, rs)
    exc = sum(row.exceptional_fraction > threshold for row in rows) / len(rows) if rows else 0.0
    return SurveyResult(
        rows=rows,
        exceptional_r_fraction=float(exc),
        count_bound=bound,
        row_threshold=threshold,
    )


@dataclass(frozen=True)
class MargulisParams:
    """Knobs of the truncated-energy function.

    inj is frozen to 1 in this linearized simulator; ell, scale and kappa
    are carried for experiment bookkeeping and do not enter margulis_value.
    """

    b: float
    truncation: int
    alpha: float
    inj: float = 1.0
    ell: float = 0.0
    scale: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0 < self.b <= 0.1:
            raise ValueError(f"b must be in (0, 1/10], got {self.b}")
        if self.truncation < 0 or int(self.truncation) != self.truncation:
            raise ValueError(f"truncation must be a nonnegative integer, got {self.truncation}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.inj <= 0:
            raise ValueError(f"inj must be positive, got {self.inj}")


def margulis_value(neighbors, params: MargulisParams) -> float:
    """Truncated energy of the near returns listed in ``neighbors``.

    The caller supplies the displacement vectors of returns closer than
    b * inj (no filtering happens here, so the floor case can be exercised
    directly).  With more than ``truncation`` returns, the M smallest norms
    are dropped and the rest contribute |w|^(-alpha); a zero norm makes the
    value infinite, as it should.
    """
    arr = np.asarray(neighbors, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0, 5)
    if arr.ndim != 2:
        raise ValueError(f"neighbors must be a (k, 5) array, got shape {arr.shape}")
    norms = np.sort(np.linalg.norm(arr, axis=1))
    return _truncated_energy(norms, params.b, params.truncation, params.alpha, params.inj)


def _truncated_energy(sorted_norms: np.ndarray, b: float, m: int, alpha: float, inj: float) -> float:
    if len(sorted_norms) <= m:
        return float((b * inj) ** (-alpha))
    kept = sorted_norms[m:]
    with np.errstate(divide="ignore"):
        # fsum: the value is the correctly rounded sum, independent of term
        # order, so independently computed references can match it exactly
        return math.fsum(kept ** (-alpha))


@dataclass
class ImprovementStats:
    """Ratio distribution of transported to original truncated energies."""

    rho_values: list[float]
    rho_medians: list[float]
    ratio_median: float
    ratio_mean: float
    ratio_p95: float
    ratio_min: float
    ratio_max: float
    floor_fraction_before: float
    floor_fraction_after: float
    ratios: np.ndarray = field(repr=False)

    def to_json_obj(self) -> dict:
        return {
            "rho_values": self.rho_values,
            "rho_medians": self.rho_medians,
            "ratio_median": self.ratio_median,
            "ratio_mean": self.ratio_mean,
            "ratio_p95": self.ratio_p95,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "floor_fraction_before": self.floor_fraction_before,
            "floor_fraction_after": self.floor_fraction_after,
        }


def _margulis_profile(pts: np.ndarray, b: float, m: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-point truncated energy over a configuration; inj = 1 throughout."""
    n = len(pts)
    sq = np.sum(pts**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T), 0.0)
    d = np.sqrt(d2)
    values = np.empty(n)
    at_floor = np.empty(n, dtype=bool)
    for i in range(n):
        row = d[i]
        nb = np.sort(row[(row < b) & (np.arange(n) != i)])
        at_floor[i] = len(nb) <= m
        values[i] = _truncated_energy(nb, b, m, alpha, 1.0)
    return values, at_floor


def improvement_step_sim(
    config: FiniteConfig,
    alpha: float,
    ell: float,
    b: float,
    r_samples: int,
    truncation: int,
    seed: int = 0,
) -> ImprovementStats:
    """Transport the configuration by adjoint_a(ell) o adjoint_u(rho) and
    compare truncated energies before and after, averaged over sampled rho.

    Purely observational: the returned statistics assert nothing beyond
    their own arithmetic.  Deterministic for a fixed seed.
    """
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must be in (0, 2), got {alpha}")
    if r_samples < 1:
        raise ValueError(f"r_samples must be >= 1, got {r_samples}")
    MargulisParams(b=b, truncation=truncation, alpha=alpha)  # range validation
    pts = _require_unit_ball(config)
    old, old_floor = _margulis_profile(pts, b, truncation, alpha)
    rng = np.random.default_rng(seed)
    rhos = (np.arange(r_samples) + rng.random(r_samples)) / r_samples

    def one_rho(rho: float) -> tuple[np.ndarray, float]:
        moved = adjoint_a(ell, adjoint_u(rho, pts))
        new, new_floor = _margulis_profile(moved, b, truncation, alpha)
        return new / old, float(np.mean(new_floor))

    results = parallel_map(one_rho, [float(r) for r in rhos])
    ratios = np.stack([r for r, _ in results])
    flat = ratios.ravel()
    return ImprovementStats(
        rho_values=[float(r) for r in rhos],
        rho_medians=[float(np.median(row)) for row in ratios],
        ratio_median=float(np.median(flat)),
        ratio_mean=float(np.mean(flat)),
        ratio_p95=float(np.percentile(flat, 95)),
        ratio_min=float(np.min(flat)),
        ratio_max=float(np.max(flat)),
        floor_fraction_before=float(np.mean(old_floor)),
        floor_fraction_after=float(np.mean([f for _, f in results])),
        ratios=ratios,
    )
