"""The two ghost constructions.

* ``build_gap_ghost``: a low bump of the scale-R Laplacian on a box space.
* ``onl_block_construction`` + ``build_block_ghost``: the inductive choice of
  normalized blocks ``T_n`` from localized witnesses, then a high bump of
  their direct sum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .bandop import BandOperator, block_decompose, compress, laplacian, op_norm, spectral_bounds
from .certify import GhostDecayReport, unique_balls, ghost_decay, localization_profile
from .coarse_space import BoxSpace, annular_decomposition, r_separated_decomposition, set_diameter
from .spectral import FilterApprox, SpectralFilter, apply_filter, design_filter, lambda_min_compressed, taper_log

log = logging.getLogger(__name__)

NORM_TOL = 1e-6
TOP_EIG_TOL = 1e-3
GAP_TOL = 1e-9


class NoWitness(RuntimeError):
    """No localized witness exists at the requested scale."""


class ProviderExhausted(RuntimeError):
    """The inductive construction stopped early; ``partial`` holds what was built."""

    def __init__(self, message: str, partial: ConstructionOutput):
        super().__init__(message)
        self.partial = partial


# -- gap ghost ----------------------------------------------------------------


@dataclass
class GapGhost:
    operator: BandOperator
    approx: FilterApprox
    filter: SpectralFilter
    decay: GhostDecayReport
    ledger: list[dict]
    laplacian_norm: float
    eps: float

    @property
    def violations(self) -> list[dict]:
        return [r for r in self.ledger if r["applicable"] and not r["bound_2eps"]]


def _block_gap(lap: BandOperator, box: BoxSpace, k: int, radius: float) -> float:
    """Smallest ``lambda_min`` of ``Delta`` compressed to a radius ball of block ``k``.

    Balls are taken inside the block: the Laplacian never couples blocks when
    ``R`` is below the block separation, so the rest of a larger ball is inert.
    """
    off = box.starts[k]
    return min(lambda_min_compressed(lap, b + off) for _, b in unique_balls(box.blocks[k], radius))


def _top_eigenvalue(op: BandOperator, pts: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(op.matrix[pts][:, pts].toarray())[-1])


def build_gap_ghost(box: BoxSpace, R: float, kappa: float, eps: float) -> GapGhost:
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    lap = laplacian(box, R)
    m = op_norm(lap)
    f = SpectralFilter("low_bump", kappa, (0.0, m))
    approx = design_filter(f, eps=eps)
    ghost = apply_filter(approx, lap)
    decay = ghost_decay(ghost, box)
    s_check = approx.degree * R
    ledger = []
    for k in range(len(box)):
        gap = _block_gap(lap, box, k, s_check)
        applicable = gap >= kappa
        row = decay.rows[k]
        ledger.append(
            {
                "block": k + 1,
                "size": box.blocks[k].n,
                "S_n": s_check,
                "gap": gap,
                "g_n": row["g"],
                "e_n": row["e"],
                "top_eig": _top_eigenvalue(ghost, box.block_indices(k)),
                "bound_2eps": row["g"] <= 2 * eps,
                "applicable": applicable,
            }
        )
    if not any(r["applicable"] for r in ledger):
        log.info("gap test inapplicable on every block (ball radius %s)", s_check)
    return GapGhost(ghost, approx, f, decay, ledger, m, eps)


def r_components(box: BoxSpace, k: int, R: float) -> list[np.ndarray]:
    block = box.blocks[k]
    close = sp.csr_array(block.dist <= R)
    ncomp, labels = connected_components(close, directed=False)
    off = box.starts[k]
    return [np.flatnonzero(labels == c) + off for c in range(ncomp)]


def kernel_fixed_vectors(ghost: BandOperator, box: BoxSpace, R: float, eps: float) -> dict:
    """Check ``W v = v`` for the normalized indicator ``v`` of every
    R-connected component of every block."""
    rows = []
    for k in range(len(box)):
        for comp in r_components(box, k, R):
            v = np.zeros(ghost.n)
            v[comp] = 1 / math.sqrt(comp.size)
            residual = float(np.linalg.norm(ghost.matrix @ v - v))
            rows.append({"block": k + 1, "component_size": int(comp.size), "residual": residual,
                         "fixed": residual <= eps})
    return {"rows": rows, "count": sum(r["fixed"] for r in rows)}


# -- localized witnesses and the block construction ---------------------------


@dataclass
class LocalizedWitness:
    op: BandOperator
    R: float
    c: float
    S: float
    kappa_ball: float
    laplacian_norm: float
    blocks: tuple[int, ...]


def block_radius(box: BoxSpace, k: int) -> float:
    return float(box.blocks[k].dist.max(axis=1).min())


def localized_witness_provider(box: BoxSpace, R: float, S: float) -> LocalizedWitness:
    """``T = I - Delta_R / m`` on every block where no radius-``S`` ball is the
    whole block (zero elsewhere), with ``c = sqrt(1 - kappa_B / m)``.

    On such blocks ``0 <= T <= 1`` gives ``||T xi||^2 <= <T xi, xi> <= 1 - kappa_B/m``
    for unit ``xi`` supported in a radius-``S`` ball, and the block constants
    are fixed vectors, so ``||T|| = 1``.
    """
    lap = laplacian(box, R)
    m = op_norm(lap)
    chosen, gaps = [], []
    for k in range(len(box)):
        if S >= block_radius(box, k):
            continue
        gap = _block_gap(lap, box, k, S)
        if gap > GAP_TOL:
            chosen.append(k)
            gaps.append(gap)
    if not chosen:
        raise NoWitness(f"no block admits a localized witness at S={S}")
    idx = np.concatenate([box.block_indices(k) for k in chosen])
    mask = np.zeros(box.n)
    mask[idx] = 1.0
    proj = sp.diags_array(mask, format="csr")
    mat = proj @ (sp.identity(box.n, format="csr") - lap.matrix / m) @ proj
    kappa_b = min(gaps)
    op = BandOperator(box, mat)
    return LocalizedWitness(op, float(R), math.sqrt(1 - kappa_b / m), float(S), kappa_b, m,
                            tuple(k + 1 for k in chosen))


def check_witness(w: LocalizedWitness) -> dict:
    """Re-verify norm, propagation and localization independently."""
    norm = op_norm(w.op)
    loc = localization_profile(w.op, [w.S]).loc[0]
    return {
        "norm": norm,
        "loc": loc,
        "norm_ok": abs(norm - 1) <= NORM_TOL,
        "prop_ok": w.op.propagation <= w.R,
        "loc_ok": loc <= w.c + NORM_TOL,
    }


@dataclass
class ConstructionOutput:
    T: list[BandOperator] = field(default_factory=list)
    B: list[np.ndarray] = field(default_factory=list)
    S: list[float] = field(default_factory=list)
    kappa: float = 0.0
    c: float = 0.0
    R: float = 0.0
    part: str = ""
    groups: list[np.ndarray] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.T)


def _choose_part(box: BoxSpace, witness: LocalizedWitness) -> tuple[str, np.ndarray]:
    """Pick Y (even annuli) or Z (odd annuli) around the first point: the one
    on which the witness keeps the larger norm; Y on ties."""
    Y, Z = annular_decomposition(box.realized, 0)
    best = None
    for name, part in (("Y", Y), ("Z", Z)):
        if part.size == 0:
            continue
        n = op_norm(compress(witness.op, part))
        if best is None or n > best[0] + NORM_TOL:
            best = (n, name, part)
    return best[1], best[2]


def _restrict(op: BandOperator, part: np.ndarray) -> BandOperator:
    mask = np.zeros(op.n)
    mask[part] = 1.0
    proj = sp.diags_array(mask, format="csr")
    return BandOperator(op.space, proj @ op.matrix @ proj)


def onl_block_construction(
    provider: Callable[[float], LocalizedWitness],
    box: BoxSpace,
    count: int,
    c: float,
    R: float,
) -> ConstructionOutput:
    """Build ``(T_n, B_n, S_n)`` for ``n = 1..count`` and ``kappa = 2c/(1+c)``.

    ``provider(S)`` must return a positive norm-one operator of propagation at
    most ``R`` whose localization bound at ``S`` is at most ``c``.
    """
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    out = ConstructionOutput(kappa=2 * c / (1 + c), c=c, R=float(R))
    threshold = (1 + c) / 2
    first = provider(1.0)
    out.part, part = _choose_part(box, first)
    out.groups = r_separated_decomposition(box, R, part)
    M = -1  # groups 0..M cover every B chosen so far
    witness = first
    for N in range(1, count + 1):
        if N == 1:
            S_N = 1.0
        else:
            covered = np.concatenate(out.groups[: M + 1])
            floor = max(out.S[-1], set_diameter(box.realized, covered))
            S_N = float(max(N, math.floor(floor) + 1))
            try:
                witness = provider(S_N)
            except NoWitness as exc:
                raise ProviderExhausted(f"step {N}: {exc}", out) from exc
        if witness.c > c + NORM_TOL:
            raise ValueError(f"witness at S={S_N} only localizes to {witness.c:.6g} > c={c}")
        if witness.op.propagation > R:
            raise ValueError("witness propagation exceeds R")
        dec = block_decompose(_restrict(witness.op, part), out.groups)
        norms = dec.norms()
        pick = next((i for i, v in enumerate(norms) if v > threshold), None)
        out.steps.append({"N": N, "S": S_N, "witness_c": witness.c, "M": M, "norms": norms, "pick": pick})
        if pick is None:
            raise ProviderExhausted(f"step {N}: no group norm exceeds (1+c)/2={threshold:.6g}", out)
        if pick <= M:
            raise AssertionError(f"step {N} picked group {pick} <= M={M}")
        g = out.groups[pick]
        block = dec.blocks[pick]
        T_N = _embed(box, g, block.matrix / norms[pick])
        out.T.append(T_N)
        out.B.append(g)
        out.S.append(S_N)
        out.selected.append(pick + 1)
        M = pick
    return out


def _embed(box: BoxSpace, pts: np.ndarray, block: sp.csr_array) -> BandOperator:
    coo = sp.coo_array(block)
    m = sp.coo_array((coo.data, (pts[coo.row], pts[coo.col])), shape=(box.n, box.n))
    return BandOperator(box, m.tocsr())


def check_construction(co: ConstructionOutput) -> dict:
    """Machine check of the five output properties (a)-(e)."""
    S = co.S
    a = all(S[i] < S[i + 1] for i in range(len(S) - 1)) and all(s >= n for n, s in enumerate(S, 1))
    b_rows = []
    for T in co.T:
        lo, hi = spectral_bounds(T)
        b_rows.append({"lambda_min": lo, "norm": max(abs(lo), abs(hi))})
    b = all(r["lambda_min"] >= -NORM_TOL and abs(r["norm"] - 1) <= NORM_TOL for r in b_rows)
    seen: set[int] = set()
    c_ok = True
    for Bn in co.B:
        s = set(int(x) for x in Bn)
        c_ok &= not (s & seen)
        seen |= s
    d = True
    for T, Bn in zip(co.T, co.B):
        coo = T.matrix.tocoo()
        inside = np.zeros(T.n, dtype=bool)
        inside[Bn] = True
        d &= bool(inside[coo.row].all() and inside[coo.col].all())
    locs = [localization_profile(T, [s]).loc[0] for T, s in zip(co.T, S)]
    e = all(v <= co.kappa + NORM_TOL for v in locs)
    return {"a": a, "b": b, "c": c_ok, "d": d, "e": e, "norms": b_rows, "loc": locs, "kappa": co.kappa}


@dataclass
class BlockGhost:
    operator: BandOperator
    approx: FilterApprox
    filter: SpectralFilter
    decay: GhostDecayReport
    ledger: list[dict]
    groups: list[np.ndarray]
    eps: float

    @property
    def noncompact_count(self) -> int:
        return sum(r["top_eig"] >= 1 - TOP_EIG_TOL for r in self.ledger)

    @property
    def violations(self) -> list[dict]:
        return [r for r in self.ledger if r["applicable"] and not r["bound_2eps"]]


def direct_sum(co: ConstructionOutput) -> BandOperator:
    total = co.T[0].matrix
    for T in co.T[1:]:
        total = total + T.matrix
    return BandOperator(co.T[0].space, total)


def build_block_ghost(co: ConstructionOutput, eps: float) -> BlockGhost:
    """``f(T)`` for ``T = sum T_n`` and ``f`` a high bump at ``kappa``."""
    if not len(co):
        raise ValueError("construction output is empty")
    T = direct_sum(co)
    f = SpectralFilter("high_bump", co.kappa, (0.0, 1.0))
    approx = design_filter(f, eps=eps)
    ghost = apply_filter(approx, T)
    decay = ghost_decay(ghost, co.B)
    ledger = []
    for n, (Bn, Sn) in enumerate(zip(co.B, co.S), start=1):
        row = decay.rows[n - 1]
        ledger.append(
            {
                "block": n,
                "size": int(Bn.size),
                "S_n": Sn,
                "gap": float("nan"),
                "g_n": row["g"],
                "e_n": row["e"],
                "top_eig": _top_eigenvalue(ghost, Bn),
                "bound_2eps": row["g"] <= 2 * eps,
                "applicable": Sn > 2 * approx.degree * co.R,
            }
        )
    return BlockGhost(ghost, approx, f, decay, ledger, list(co.B), eps)


def block_select(ghost: BandOperator, groups: Sequence[Sequence[int]], indices) -> BandOperator:
    """Keep the blocks listed in ``indices`` (1-based), zero the rest."""
    keep = np.zeros(ghost.n)
    for i in indices:
        if not 1 <= i <= len(groups):
            raise IndexError(f"block index {i} out of range 1..{len(groups)}")
        keep[np.asarray(groups[i - 1])] = 1.0
    proj = sp.diags_array(keep, format="csr")
    return BandOperator(ghost.space, proj @ ghost.matrix @ proj)


def filter_log(f: SpectralFilter, approx: FilterApprox) -> dict:
    return {**f.to_dict(), **taper_log(f), "degree": approx.degree, "measured_eps": approx.eps}
