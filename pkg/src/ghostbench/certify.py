"""Numerical certificates: weak-expander constants, the gap they imply for
the Laplacian, operator-norm localization, ghost decay and truncation error.

Conventions used in every report:

* edge sums run over *ordered* pairs ``(x, y)`` with ``d(x, y) <= R``, so an
  unordered boundary edge counts twice;
* ratio denominators are ``sum |phi|``;
* supports are radius-``S`` balls around points. A set of diameter at most
  ``S`` sits inside the radius-``S`` ball around any of its points, so ball
  bounds are conservative by up to a factor 2 in the radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .bandop import BandOperator, laplacian, op_norm, truncate
from .coarse_space import BoxSpace, MetricSpace, ball, geometry_profile
from .spectral import lambda_min_compressed

EXHAUSTIVE_CAP = 20
_CHUNK = 1 << 16

CONVENTIONS = {
    "edge_pairs": "ordered, d(x,y) <= R, diagonal included (contributes 0)",
    "denominator": "sum |phi(x)|",
    "supports": "radius-S balls; diameter-S sets are covered with radius/diameter slack 2",
}


@dataclass(frozen=True)
class SubsetRatio:
    value: Fraction
    subset: tuple[int, ...]
    boundary: int
    exact: bool


def _ball_structure(space: MetricSpace, radius: float, support: np.ndarray):
    """Internal edge list and per-vertex count of ordered pairs leaving the support."""
    close = (space.dist <= radius) & ~np.eye(space.n, dtype=bool)
    inside = np.zeros(space.n, dtype=bool)
    inside[support] = True
    sub = close[np.ix_(support, support)]
    external = 2 * (close[support] & ~inside).sum(axis=1)
    iu, ju = np.nonzero(np.triu(sub, 1))
    return iu, ju, external.astype(np.int64), sub


def _pick(sizes: np.ndarray, bounds: np.ndarray, masks: np.ndarray) -> tuple[Fraction, int, int]:
    """Exact minimum of bounds/sizes; ties go to the larger set, then the smaller mask."""
    ratio = bounds / sizes
    lo = ratio.min()
    cand = np.flatnonzero(ratio <= lo * (1 + 1e-12) + 1e-15)
    best = None
    for i in cand:
        key = (Fraction(int(bounds[i]), int(sizes[i])), -int(sizes[i]), int(masks[i]))
        if best is None or key < best:
            best = key
    return best[0], -best[1], best[2]


def _exhaustive(iu, ju, external, k):
    best = None
    total = 1 << k
    shifts = np.arange(k, dtype=np.int64)
    for start in range(1, total, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.int64)
        sizes = bits.sum(axis=1)
        bounds = bits @ external + 2 * (bits[:, iu] ^ bits[:, ju]).sum(axis=1)
        val, size, mask = _pick(sizes, bounds, masks)
        key = (val, -size, mask)
        if best is None or key < best:
            best = key
    val, _, mask = best
    chosen = [i for i in range(k) if mask >> i & 1]
    return val, chosen


def _local_search(sub: np.ndarray, external: np.ndarray):
    """Greedy peel from the full support, then single-vertex add/remove moves."""
    adj = sub.astype(np.int64)
    k = len(external)

    def boundary(a):
        inside = a.astype(np.int64)
        return int(external @ inside + 2 * (inside @ adj @ (1 - inside)))

    def ratio(a):
        s = int(a.sum())
        return Fraction(boundary(a), s) if s else None

    a = np.ones(k, dtype=bool)
    best_a, best_r = a.copy(), ratio(a)
    while a.sum() > 1:
        trials = []
        for i in np.flatnonzero(a):
            t = a.copy()
            t[i] = False
            trials.append((ratio(t), int(i)))
        r, i = min(trials)
        a[i] = False
        if r < best_r:
            best_a, best_r = a.copy(), r
    a = best_a.copy()
    improved = True
    while improved:
        improved = False
        for i in range(k):
            t = a.copy()
            t[i] = not t[i]
            r = ratio(t)
            if r is not None and r < best_r:
                a, best_r, improved = t, r, True
    return best_r, [int(i) for i in np.flatnonzero(a)]


def subset_ratio_min(space: MetricSpace, radius: float, support: Sequence[int]) -> SubsetRatio:
    """Minimum over nonempty ``A`` in ``support`` of ``|edge boundary of A| / |A|``.

    Exact for supports of at most 20 points, otherwise a local-search upper
    bound (``exact=False``).
    """
    support = np.asarray(sorted(set(int(p) for p in support)), dtype=int)
    if support.size == 0:
        raise ValueError("support must be nonempty")
    iu, ju, external, sub = _ball_structure(space, radius, support)
    if support.size <= EXHAUSTIVE_CAP:
        val, chosen = _exhaustive(iu, ju, external, support.size)
        exact = True
    else:
        val, chosen = _local_search(sub, external)
        exact = False
    subset = tuple(int(support[i]) for i in chosen)
    return SubsetRatio(val, subset, val.numerator * len(subset) // val.denominator, exact)


def edge_boundary(space: MetricSpace, radius: float, subset: Sequence[int]) -> int:
    """Ordered pairs within ``radius`` with exactly one end in ``subset``."""
    inside = np.zeros(space.n, dtype=bool)
    inside[list(subset)] = True
    close = (space.dist <= radius) & ~np.eye(space.n, dtype=bool)
    return int((close & (inside[:, None] ^ inside[None, :])).sum())


@dataclass
class WeakExpanderReport:
    R: float
    S: tuple[float, ...]
    entries: list[dict] = field(default_factory=list)

    def constant(self, block: int, S: float) -> Fraction:
        return next(e["c"] for e in self.entries if e["block"] == block and e["S"] == S)

    def uniform_constant(self, S: float) -> Fraction:
        return min(e["c"] for e in self.entries if e["S"] == S)

    def all_exact(self, S: float) -> bool:
        return all(e["exact"] for e in self.entries if e["S"] == S)

    def rows(self) -> list[dict]:
        return [
            {
                "block": e["block"],
                "size": e["size"],
                "R": self.R,
                "S": e["S"],
                "c": float(e["c"]),
                "c_exact": f"{e['c'].numerator}/{e['c'].denominator}",
                "center": e["center"],
                "witness_size": len(e["subset"]),
                "exact": e["exact"],
            }
            for e in self.entries
        ]


def unique_balls(space: MetricSpace, radius: float):
    seen: dict[bytes, tuple[int, np.ndarray]] = {}
    for x in range(space.n):
        b = ball(space, x, radius)
        seen.setdefault(b.tobytes(), (x, b))
    return list(seen.values())


def weak_expander_constants(box: BoxSpace, R: float, S_values: Sequence[float]) -> WeakExpanderReport:
    """``c_n(R, S)``: the worst ball of radius ``S`` in block ``n``, witness included."""
    if R <= 0 or any(s <= 0 for s in S_values):
        raise ValueError("R and S must be positive")
    report = WeakExpanderReport(float(R), tuple(float(s) for s in S_values))
    for k, block in enumerate(box.blocks):
        offset = box.starts[k]
        for S in report.S:
            best, exact = None, True
            for x, b in unique_balls(block, S):
                r = subset_ratio_min(block, R, b)
                exact &= r.exact
                if best is None or r.value < best[1].value:
                    best = (x, r)
            x, r = best
            report.entries.append(
                {
                    "block": k + 1,
                    "size": block.n,
                    "S": S,
                    "c": r.value,
                    "center": int(x + offset),
                    "subset": tuple(int(p + offset) for p in r.subset),
                    "exact": exact,
                }
            )
    return report


def kappa_threshold(c: float, M: int) -> float:
    """Laplacian gap guaranteed by an L1 constant ``c`` and ball bound ``M``."""
    return float(c) ** 2 / (8 * M)


@dataclass
class KappaLedger:
    R: float
    S: float
    c: float
    M: int
    threshold: float
    rows: list[dict]

    @property
    def violations(self) -> list[dict]:
        return [r for r in self.rows if not r["ok"]]


def verify_kappa_bound(
    box: BoxSpace, R: float, S: float, report: WeakExpanderReport, c: float | None = None
) -> KappaLedger:
    """Check ``lambda_min(P_B Delta_R P_B) >= c^2 / 8M`` on every radius-``S`` ball."""
    if not report.all_exact(S):
        raise ValueError("refusing to verify against a heuristic (non-exact) constant")
    if c is None:
        c = report.uniform_constant(S)
    M = geometry_profile(box.realized, [R]).counts[0]
    threshold = kappa_threshold(c, M)
    lap = laplacian(box, R)
    rows = []
    for k, block in enumerate(box.blocks):
        off = box.starts[k]
        for x, b in unique_balls(block, S):
            lam = lambda_min_compressed(lap, b + off)
            rows.append({"block": k + 1, "center": int(x + off), "size": int(b.size),
                         "lambda_min": lam, "threshold": threshold, "ok": lam >= threshold})
    return KappaLedger(float(R), float(S), float(c), M, threshold, rows)


@dataclass
class LocalizationProfile:
    S: tuple[float, ...]
    loc: tuple[float, ...]
    centers: tuple[int, ...]
    norm: float

    def rows(self) -> list[dict]:
        return [{"S": s, "loc": v, "center": x, "norm": self.norm} for s, v, x in zip(self.S, self.loc, self.centers)]


def _top_singular_on(square: sp.csr_array, pts: np.ndarray, cache: dict) -> float:
    """``||T P||`` for the coordinate projection ``P`` onto ``pts``, given ``T^2``."""
    sub = square[pts][:, pts]
    ncomp, labels = sp.csgraph.connected_components(sub, directed=False)
    best = 0.0
    for c in range(ncomp):
        idx = pts[labels == c]
        key = idx.tobytes()
        if key not in cache:
            block = square[idx][:, idx].toarray()
            cache[key] = float(np.sqrt(max(np.linalg.eigvalsh(block)[-1], 0.0)))
        best = max(best, cache[key])
    return best


def localization_profile(op: BandOperator, S_values: Sequence[float]) -> LocalizationProfile:
    """``loc_S(T) = max_x ||T P_ball(x,S)||``, the best norm a vector supported
    in a radius-``S`` ball can reach."""
    square = sp.csr_array(op.matrix @ op.matrix)
    cache: dict = {}
    loc, centers = [], []
    for S in S_values:
        best, at = -1.0, -1
        for x, b in unique_balls(op.space, S):
            v = _top_singular_on(square, b, cache)
            if v > best:
                best, at = v, x
        loc.append(best)
        centers.append(int(at))
    return LocalizationProfile(tuple(float(s) for s in S_values), tuple(loc), tuple(centers), op_norm(op))


@dataclass
class GhostDecayReport:
    rows: list[dict]

    @property
    def g(self) -> list[float]:
        return [r["g"] for r in self.rows]

    @property
    def e(self) -> list[float]:
        return [r["e"] for r in self.rows]


def _groups_of(blocks) -> list[np.ndarray]:
    if isinstance(blocks, BoxSpace):
        return [blocks.block_indices(k) for k in range(len(blocks))]
    return [np.asarray(g, dtype=int) for g in blocks]


def ghost_decay(op: BandOperator, blocks) -> GhostDecayReport:
    """Per block: largest column norm ``g`` and largest entry ``e`` touching it."""
    m = sp.csc_array(op.matrix)
    sq = sp.csc_array(m.multiply(m))
    colnorm = np.sqrt(np.asarray(sq.sum(axis=0)).ravel())
    absm = abs(m)
    colmax = np.asarray(absm.max(axis=0).toarray()).ravel() if absm.nnz else np.zeros(op.n)
    rows = []
    for k, g in enumerate(_groups_of(blocks)):
        rows.append({"block": k + 1, "size": int(g.size), "g": float(colnorm[g].max()), "e": float(colmax[g].max())})
    return GhostDecayReport(rows)


@dataclass
class RoeMembershipProfile:
    radii: tuple[float, ...]
    errors: tuple[float, ...]
    propagation: float

    def rows(self) -> list[dict]:
        return [{"R": r, "err": e} for r, e in zip(self.radii, self.errors)]


def roe_membership_profile(op: BandOperator, radii: Sequence[float]) -> RoeMembershipProfile:
    """``||T - truncate(T, R)||`` for each ``R``."""
    errs = []
    for R in radii:
        rest = op - truncate(op, R)
        errs.append(op_norm(rest) if rest.matrix.nnz else 0.0)
    return RoeMembershipProfile(tuple(float(r) for r in radii), tuple(errs), op.propagation)
