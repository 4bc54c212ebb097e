"""Proximity of a real form to scalar multiples of integral forms.

For an integral form Q' (integer Gram entries, det != 0) put

    lam(Q') = sign(det Q') * |det Q'|^(-1/3)

so that lam*Q' always has determinant +1, matching the normalize()
convention.  best_rational_approx minimizes dist = sup-norm of the entry
difference Q - lam(Q')*Q' over integral Q' with entries bounded by R.  Up
to R = 12 the search is exhaustive over the canonical half of the entry
box (dist is invariant under Q' -> -Q', so only representatives with
positive leading nonzero entry are visited) and the result is certified
optimal; beyond that a heuristic candidate generator (integer-multiple
rounding plus a weighted 7-dimensional lattice reduction) provides an
upper bound flagged non-certified.

"Integral form" means integer Gram entries, not merely integer values:
the classical integer-valued forms with half-integer cross entries are
representable here after doubling.

The dichotomy driver compares the approximation distance against the
threshold R^a_exp (log T)^a_exp / T and falls back to a witness-table run
over targets |s| <= R^k_exp with tolerance R^(-k_exp); the exponents stand
in for absolute constants that are not pinned down numerically, so they
are configuration, not truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .enumeration import DEFAULT_CEILING, WitnessTable, witness_table
from .errors import NoCandidate
from .forms import NormalizedForm, TernaryForm, normalize
from .lattice import lll_reduce
from .util import parallel_map

EXHAUSTIVE_LIMIT = 12


@dataclass(frozen=True)
class IntegralForm:
    """Integer Gram entries, same (m11, m22, m33, m12, m13, m23) order as TernaryForm."""

    m11: int
    m22: int
    m33: int
    m12: int = 0
    m13: int = 0
    m23: int = 0

    @property
    def entries(self) -> tuple[int, int, int, int, int, int]:
        return (self.m11, self.m22, self.m33, self.m12, self.m13, self.m23)

    def determinant(self) -> int:
        """Exact integer determinant of the Gram matrix."""
        a, b, c = self.m11, self.m22, self.m33
        d, e, f = self.m12, self.m13, self.m23
        return a * (b * c - f * f) - d * (d * c - f * e) + e * (d * f - b * e)

    def sup_norm(self) -> int:
        return max(abs(x) for x in self.entries)

    def as_form(self) -> TernaryForm:
        return TernaryForm(*(float(x) for x in self.entries))

    def to_json_obj(self) -> dict[str, int]:
        keys = ("m11", "m22", "m33", "m12", "m13", "m23")
        return {k: int(v) for k, v in zip(keys, self.entries)}


def signed_inverse_cuberoot(det: int | float) -> float:
    """sign(det) * |det|^(-1/3); the unique lam with det(lam*Q') = +1."""
    d = float(det)
    return math.copysign(abs(d) ** (-1.0 / 3.0), d)


def _entry_distance(q_entries: Sequence[float], qprime: IntegralForm) -> float:
    lam = signed_inverse_cuberoot(qprime.determinant())
    return max(abs(q - lam * m) for q, m in zip(q_entries, qprime.entries))


@dataclass(frozen=True)
class ApproxResult:
    """Best (or best-found) integral approximation at entry bound R."""

    qprime: IntegralForm
    lam: float
    dist: float
    bound: float
    certified: bool

    def to_json_obj(self) -> dict:
        return {
            "qprime": self.qprime.to_json_obj(),
            "lambda": self.lam,
            "dist": self.dist,
            "bound": self.bound,
            "certified": self.certified,
        }


def _as_entries(q) -> tuple[float, ...]:
    form = q.form if isinstance(q, NormalizedForm) else q
    if not isinstance(form, TernaryForm):
        raise TypeError(f"expected TernaryForm or NormalizedForm, got {type(q).__name__}")
    return form.entries


# columns of the 4-entry tail (m33, m12, m13, m23) enumerated lexicographically
def _tail_combos(r: int) -> np.ndarray:
    rng = np.arange(-r, r + 1, dtype=np.int64)
    grids = np.meshgrid(rng, rng, rng, rng, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _tail_canonical_mask(tail: np.ndarray) -> np.ndarray:
    """First nonzero of the tail positive (used only when m11 = m22 = 0)."""
    nz = tail != 0
    has = nz.any(axis=1)
    first = tail[np.arange(len(tail)), np.argmax(nz, axis=1)]
    return has & (first > 0)


def _chunk_min(args) -> Optional[tuple[float, tuple[int, ...]]]:
    q6, m11, m22, tail, tail_mask = args
    m33 = tail[:, 0]
    m12 = tail[:, 1]
    m13 = tail[:, 2]
    m23 = tail[:, 3]
    det = (
        m11 * (m22 * m33 - m23 * m23)
        - m12 * (m12 * m33 - m23 * m13)
        + m13 * (m12 * m23 - m22 * m13)
    )
    valid = det != 0
    if tail_mask is not None:
        valid &= tail_mask
    if not np.any(valid):
        return None
    detf = det.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.sign(detf) * np.abs(detf) ** (-1.0 / 3.0)
    dist = np.abs(q6[0] - lam * m11)
    np.maximum(dist, np.abs(q6[1] - lam * m22), out=dist)
    np.maximum(dist, np.abs(q6[2] - lam * m33), out=dist)
    np.maximum(dist, np.abs(q6[3] - lam * m12), out=dist)
    np.maximum(dist, np.abs(q6[4] - lam * m13), out=dist)
    np.maximum(dist, np.abs(q6[5] - lam * m23), out=dist)
    dist[~valid] = np.inf
    j = int(np.argmin(dist))
    if not np.isfinite(dist[j]):
        return None
    cand = (int(m11), int(m22), int(m33[j]), int(m12[j]), int(m13[j]), int(m23[j]))
    return float(dist[j]), cand


def _exhaustive_search(q6: np.ndarray, r: int) -> IntegralForm:
    """Certified minimizer over the canonical half of the entry box [-r, r]^6."""
    tail = _tail_combos(r)
    tail_mask = _tail_canonical_mask(tail)
    jobs = []
    for m11 in range(0, r + 1):
        for m22 in range(-r if m11 > 0 else 0, r + 1):
            mask = tail_mask if (m11 == 0 and m22 == 0) else None
            jobs.append((q6, m11, m22, tail, mask))
    results = parallel_map(_chunk_min, jobs)
    best: Optional[tuple[float, tuple[int, ...]]] = None
    # chunk scan order is lexicographic, so strict improvement keeps the
    # lexicographically least minimizer
    for res in results:
        if res is None:
            continue
        if best is None or res[0] < best[0] or (res[0] == best[0] and res[1] < best[1]):
            best = res
    if best is None:
        raise NoCandidate(f"no nondegenerate integral form with entries in [-{r}, {r}]")
    return IntegralForm(*best[1])


def _heuristic_candidates(q6: np.ndarray, r: int) -> list[IntegralForm]:
    """Non-certified candidate pool: rounded multiples and reduced lattice columns."""
    cands: set[tuple[int, ...]] = set()
    cands.add((1, -1, -1, 0, 0, 0))  # guarantees a nondegenerate fallback

    top = float(np.max(np.abs(q6)))
    n_max = min(int(r / max(top, 1e-12)) + 1, 200_000)
    ns = np.arange(1, n_max + 1, dtype=float)
    mult = np.rint(ns[:, None] * q6[None, :]).astype(np.int64)
    ok = np.max(np.abs(mult), axis=1) <= r
    for row in mult[ok]:
        cands.add(tuple(int(x) for x in row))

    # lattice of pairs (n, m): short vectors of (n, W*(n*q - m)) give m ~ n*q
    for w_scale in (1e2, 1e4, 1e6, 1e8, 1e10, 1e12):
        basis = np.zeros((7, 7))
        basis[0, 0] = 1.0
        basis[1:, 0] = w_scale * q6
        for i in range(6):
            basis[1 + i, 1 + i] = -w_scale
        _, transform = lll_reduce(basis)
        for col in range(7):
            n = int(transform[0, col])
            if n == 0:
                continue
            m = transform[1:, col] if n > 0 else -transform[1:, col]
            if np.max(np.abs(m)) <= r:
                cands.add(tuple(int(x) for x in m))
    forms = [IntegralForm(*t) for t in sorted(cands)]
    return [f for f in forms if f.determinant() != 0]


def best_rational_approx(
    q, R: float, *, exhaustive_limit: int = EXHAUSTIVE_LIMIT
) -> ApproxResult:
    """Best integral approximation with entries bounded by R.

    Exhaustive (certified) for floor(R) <= exhaustive_limit, heuristic
    upper bound otherwise.  Ties resolve to the lexicographically least
    canonical representative, so results are deterministic.
    """
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    q6 = np.asarray(_as_entries(q), dtype=float)
    r = int(math.floor(R))
    if r <= exhaustive_limit:
        qprime = _exhaustive_search(q6, r)
        certified = True
    else:
        pool = _heuristic_candidates(q6, r)
        if not pool:
            raise NoCandidate(f"heuristic pool empty at R={R}")
        qprime = min(pool, key=lambda f: (_entry_distance(q6, f), f.entries))
        certified = False
    return ApproxResult(
        qprime=qprime,
        lam=signed_inverse_cuberoot(qprime.determinant()),
        dist=_entry_distance(q6, qprime),
        bound=float(R),
        certified=certified,
    )


@dataclass(frozen=True)
class WitnessSummary:
    """Coverage summary of the witness-table run inside a dichotomy report."""

    targets: int
    witnessed: int
    fraction: float
    eps: float
    grid_step: float
    span: float

    def to_json_obj(self) -> dict:
        return {
            "targets": self.targets,
            "witnessed": self.witnessed,
            "fraction": self.fraction,
            "eps": self.eps,
            "grid_step": self.grid_step,
            "span": self.span,
        }


@dataclass
class DichotomyOutcome:
    """Tagged outcome: branch is "rational_approx" or "small_values".

    The approximation result is echoed on both branches (the decision used
    it either way); the witness summary and table exist only on the
    small-values branch.
    """

    branch: str
    thresholds: dict
    approx: ApproxResult
    witness: Optional[WitnessSummary] = None
    table: Optional[WitnessTable] = None

    def to_json_obj(self) -> dict:
        return {
            "branch": self.branch,
            "thresholds": self.thresholds,
            "approx": self.approx.to_json_obj(),
            "witness_summary": None if self.witness is None else self.witness.to_json_obj(),
        }


def dichotomy_report(
    q,
    R: float,
    T: float,
    *,
    eps: Optional[float] = None,
    grid_step: float = 0.1,
    a_exp: float = 4.0,
    k_exp: float = 0.125,
    ceiling: Optional[int] = DEFAULT_CEILING,
) -> DichotomyOutcome:
    """Decide which side of the witness-or-rational dichotomy the form is on.

    If the best integral approximation at bound R comes within
    R^a_exp (log T)^a_exp / T, that branch wins.  Otherwise a witness table
    runs over s in [-R^k_exp, R^k_exp] with tolerance eps (default
    R^(-k_exp)); a grid coarser than that span degenerates to the single
    target s = 0.
    """
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    if T < R**a_exp:
        raise ValueError(f"need T >= R**a_exp = {R**a_exp:.6g} for a meaningful threshold")
    qn = q if isinstance(q, NormalizedForm) else normalize(q)
    threshold = R**a_exp * math.log(T) ** a_exp / T
    approx = best_rational_approx(qn, R)
    eps_eff = float(eps) if eps is not None else R ** (-k_exp)
    span = R**k_exp
    thresholds = {
        "R": float(R),
        "T": float(T),
        "a_exp": a_exp,
        "k_exp": k_exp,
        "approx_threshold": threshold,
        "eps": eps_eff,
        "grid_step": grid_step,
        "target_span": span,
    }
    if approx.dist <= threshold:
        return DichotomyOutcome(branch="rational_approx", thresholds=thresholds, approx=approx)
    if 2.0 * span < grid_step:
        table = witness_table(qn, 0.0, 0.0, grid_step, eps_eff, T, ceiling=ceiling)
    else:
        table = witness_table(qn, -span, span, grid_step, eps_eff, T, ceiling=ceiling)
    summary = WitnessSummary(
        targets=len(table.targets),
        witnessed=table.witnessed,
        fraction=table.witnessed / len(table.targets),
        eps=eps_eff,
        grid_step=grid_step,
        span=span,
    )
    return DichotomyOutcome(
        branch="small_values",
        thresholds=thresholds,
        approx=approx,
        witness=summary,
        table=table,
    )


@dataclass(frozen=True)
class GapRow:
    R: float
    dist: float
    qprime: IntegralForm
    lam: float
    certified: bool

    def to_json_obj(self) -> dict:
        return {
            "R": self.R,
            "dist": self.dist,
            "qprime": self.qprime.to_json_obj(),
            "lambda": self.lam,
            "certified": self.certified,
        }


@dataclass
class GapResult:
    """dist(R) profile; non-increasing because best-so-far is carried forward."""

    rows: list[GapRow]
    fit_coefficient: Optional[float]
    fit_exponent: Optional[float]

    def to_json_obj(self) -> dict:
        return {
            "rows": [r.to_json_obj() for r in self.rows],
            "fit_coefficient": self.fit_coefficient,
            "fit_exponent": self.fit_exponent,
        }


def algebraicity_gap(q, R_list: Sequence[float], *, exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> GapResult:
    """Approximation distance as a function of the entry bound R.

    R_list must be ascending.  The reported distance at each R is the best
    found at any bound up to R, which makes the column non-increasing even
    on the heuristic path (the exhaustive path is nested, hence already
    monotone).  When at least two distances are positive, a log-log least
    squares fit dist ~ c * R^(-E) is reported.
    """
    rs = [float(x) for x in R_list]
    if not rs:
        raise ValueError("R_list must be nonempty")
    if any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError("R_list must be strictly ascending")
    rows: list[GapRow] = []
    best: Optional[ApproxResult] = None
    for R in rs:
        res = best_rational_approx(q, R, exhaustive_limit=exhaustive_limit)
        if best is None or res.dist < best.dist:
            best = res
        rows.append(
            GapRow(R=R, dist=best.dist, qprime=best.qprime, lam=best.lam, certified=best.certified)
        )
    fit_c = fit_e = None
    dists = [row.dist for row in rows]
    if len(rows) >= 2 and all(d > 0 for d in dists):
        slope, intercept = np.polyfit(np.log(rs), np.log(dists), 1)
        fit_c = float(math.exp(intercept))
        fit_e = float(-slope)
    return GapResult(rows=rows, fit_coefficient=fit_c, fit_exponent=fit_e)
