"""Symmetric finite-propagation operators on finite metric spaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .coarse_space import BoxSpace, MetricSpace

DENSE_CUTOFF = 1024
NORM_RTOL = 1e-8
SYMMETRY_RTOL = 1e-10


class NonConvergence(RuntimeError):
    """Iterative eigensolver gave up; ``bracket`` holds the best (lo, hi) known."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (bracket {bracket})")
        self.bracket = bracket


class CrossGroupEntry(ValueError):
    pass


def _as_space(space: MetricSpace | BoxSpace) -> MetricSpace:
    return space.realized if isinstance(space, BoxSpace) else space


@dataclass(frozen=True, eq=False)
class BandOperator:
    """Real symmetric matrix indexed by the points of ``space``.

    Entries are kept in CSR form without explicit zeros; an entry is nonzero
    iff its value is not exactly 0.
    """

    space: MetricSpace
    matrix: sp.csr_array
    propagation: float = field(init=False)

    def __post_init__(self):
        space = _as_space(self.space)
        object.__setattr__(self, "space", space)
        m = sp.csr_array(self.matrix, dtype=float)
        if m.shape != (space.n, space.n):
            raise ValueError(f"matrix shape {m.shape} does not match {space.n} points")
        m.eliminate_zeros()
        m.sort_indices()
        if m.nnz:
            scale = np.abs(m.data).max()
            asym = abs(m - m.T)
            if asym.nnz and asym.data.max() > SYMMETRY_RTOL * scale:
                raise ValueError("operator is not symmetric")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "propagation", _propagation(space, m))

    @property
    def n(self) -> int:
        return self.space.n

    @classmethod
    def from_dense(cls, space, dense: np.ndarray) -> BandOperator:
        return cls(space, sp.csr_array(np.asarray(dense, dtype=float)))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __add__(self, other: BandOperator) -> BandOperator:
        return BandOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: BandOperator) -> BandOperator:
        return BandOperator(self.space, self.matrix - other.matrix)

    def scale(self, a: float) -> BandOperator:
        return BandOperator(self.space, self.matrix * a)


def _propagation(space: MetricSpace, m: sp.csr_array) -> float:
    if m.nnz == 0:
        return 0.0
    coo = m.tocoo()
    return float(space.dist[coo.row, coo.col].max())


def power(op: BandOperator, k: int) -> BandOperator:
    if k < 0:
        raise ValueError("power must be nonnegative")
    m = sp.identity(op.n, format="csr")
    for _ in range(k):
        m = m @ op.matrix
    return BandOperator(op.space, (m + m.T) / 2)


def propagation(op: BandOperator) -> float:
    """Recomputed sup of d(x, y) over nonzero entries."""
    return _propagation(op.space, op.matrix)


def identity(space) -> BandOperator:
    space = _as_space(space)
    return BandOperator(space, sp.identity(space.n, format="csr"))


def laplacian(space, radius: float) -> BandOperator:
    """Laplacian at scale ``radius``: degree on the diagonal, -1 for every
    pair of distinct points at distance at most ``radius``."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    space = _as_space(space)
    adj = (space.dist <= radius) & ~np.eye(space.n, dtype=bool)
    a = sp.csr_array(adj.astype(float))
    deg = np.asarray(a.sum(axis=1)).ravel()
    return BandOperator(space, sp.diags_array(deg, format="csr") - a)


def truncate(op: BandOperator, radius: float) -> BandOperator:
    """Zero every entry whose points are more than ``radius`` apart."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    coo = op.matrix.tocoo()
    keep = op.space.dist[coo.row, coo.col] <= radius
    m = sp.coo_array((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape)
    return BandOperator(op.space, m.tocsr())


def compress(op: BandOperator, points: Sequence[int]) -> BandOperator:
    """``P T P`` as an operator on the subspace ``points`` (sorted)."""
    idx = np.asarray(sorted(set(int(p) for p in points)), dtype=int)
    if idx.size == 0:
        raise ValueError("cannot compress to an empty set")
    return BandOperator(op.space.subspace(idx), op.matrix[idx][:, idx])


def apply(op: BandOperator, vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    if v.shape[0] != op.n:
        raise ValueError(f"vector length {v.shape[0]} does not match {op.n} points")
    return op.matrix @ v


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    groups: tuple[np.ndarray, ...]
    blocks: tuple[BandOperator, ...]
    n: int

    def reassemble(self) -> sp.csr_array:
        rows, cols, vals = [], [], []
        for g, b in zip(self.groups, self.blocks):
            coo = b.matrix.tocoo()
            rows.append(g[coo.row])
            cols.append(g[coo.col])
            vals.append(coo.data)
        if not rows:
            return sp.csr_array((self.n, self.n))
        return sp.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
        ).tocsr()

    def norms(self) -> list[float]:
        return [op_norm(b) for b in self.blocks]


def block_decompose(op: BandOperator, groups: Sequence[Sequence[int]]) -> BlockDecomposition:
    """Split ``op`` into diagonal blocks over ``groups``. Points outside every
    group must carry no entries; a nonzero entry between groups is rejected."""
    groups = tuple(np.asarray(sorted(set(int(p) for p in g)), dtype=int) for g in groups)
    owner = np.full(op.n, -1)
    for k, g in enumerate(groups):
        if (owner[g] >= 0).any():
            raise ValueError("groups overlap")
        owner[g] = k
    coo = op.matrix.tocoo()
    bad = owner[coo.row] != owner[coo.col]
    bad |= owner[coo.row] < 0
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        x, y = int(coo.row[i]), int(coo.col[i])
        raise CrossGroupEntry(
            f"entry T[{x},{y}]={coo.data[i]} crosses groups {owner[x]} and {owner[y]}"
        )
    return BlockDecomposition(groups, tuple(compress(op, g) for g in groups), op.n)


def components(op: BandOperator) -> list[np.ndarray]:
    """Connected components of the sparsity graph (isolated zero rows included)."""
    ncomp, labels = connected_components(op.matrix, directed=False)
    order = np.argsort(labels, kind="stable")
    splits = np.cumsum(np.bincount(labels, minlength=ncomp))[:-1]
    comps = np.split(order, splits)
    return sorted(comps, key=lambda c: int(c[0]))


def start_vector(n: int) -> np.ndarray:
    """Normalized all-ones plus a small deterministic index-hashed perturbation."""
    idx = np.arange(n, dtype=np.uint64)
    h = (idx * np.uint64(0x9E3779B97F4A7C15)) >> np.uint64(40)
    v = 1.0 + 0.1 * (h.astype(float) / float(1 << 24) - 0.5)
    return v / np.linalg.norm(v)


def _extreme_eigs_iterative(m: sp.csr_array) -> tuple[float, float]:
    v0 = start_vector(m.shape[0])
    out = []
    for which in ("SA", "LA"):
        try:
            vals = eigsh(m, k=1, which=which, v0=v0, tol=1e-12, maxiter=20 * m.shape[0],
                         return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            part = np.asarray(exc.eigenvalues)
            ritz = float(part[0]) if part.size else float("nan")
            bound = float(abs(m).sum(axis=1).max())
            raise NonConvergence("Lanczos did not converge", (ritz, bound)) from exc
        out.append(float(vals[0]))
    return out[0], out[1]


def spectral_bounds(op: BandOperator) -> tuple[float, float]:
    """(smallest, largest) eigenvalue, computed per connected component."""
    lo, hi = np.inf, -np.inf
    if op.matrix.nnz == 0:
        return 0.0, 0.0
    for comp in components(op):
        sub = op.matrix[comp][:, comp]
        if comp.size <= DENSE_CUTOFF:
            ev = np.linalg.eigvalsh(sub.toarray())
            a, b = float(ev[0]), float(ev[-1])
        else:
            a, b = _extreme_eigs_iterative(sub)
        lo, hi = min(lo, a), max(hi, b)
    return lo, hi


def op_norm(op: BandOperator) -> float:
    """Spectral norm, block by block (the norm of a direct sum is the sup)."""
    lo, hi = spectral_bounds(op)
    return max(abs(lo), abs(hi))


# -- JSON operator files -----------------------------------------------------


def operator_to_json(op: BandOperator, space_ref: str | None = None) -> dict:
    upper = sp.triu(op.matrix).tocoo()
    order = np.lexsort((upper.col, upper.row))
    entries = [[int(upper.row[i]), int(upper.col[i]), float(upper.data[i])] for i in order]
    return {"space": space_ref, "n": op.n, "entries": entries}


def operator_from_json(payload: dict, space) -> BandOperator:
    space = _as_space(space)
    entries = payload.get("entries", [])
    if not entries:
        return BandOperator(space, sp.csr_array((space.n, space.n)))
    arr = np.asarray(entries, dtype=float)
    r, c, v = arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2]
    off = r != c
    rows = np.concatenate([r, c[off]])
    cols = np.concatenate([c, r[off]])
    vals = np.concatenate([v, v[off]])
    return BandOperator(space, sp.coo_array((vals, (rows, cols)), shape=(space.n, space.n)).tocsr())
