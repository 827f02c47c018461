"""Finite metric spaces, box spaces and the decompositions used by the
inductive block construction.

Distances live in a dense ``float64`` table. Points in different connected
pieces are at distance ``INF`` (``numpy.inf``), which no finite radius reaches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

INF = math.inf


class MetricError(ValueError):
    """Raised when a distance table is not a metric."""


@dataclass(frozen=True, eq=False)
class MetricSpace:
    dist: np.ndarray
    labels: tuple[str, ...] | None = None
    # source graph, when built from an edge list; used for serialization
    edges: tuple[tuple[int, int, float], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise MetricError(f"distance table must be square, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        if self.labels is not None and len(self.labels) != d.shape[0]:
            raise MetricError("labels must match the number of points")

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __len__(self) -> int:
        return self.n

    def diameter(self) -> float:
        """Largest finite distance (0 for a single point)."""
        finite = self.dist[np.isfinite(self.dist)]
        return float(finite.max()) if finite.size else 0.0

    def is_connected(self) -> bool:
        return bool(np.isfinite(self.dist).all())

    def subspace(self, points: Iterable[int]) -> MetricSpace:
        idx = np.asarray(sorted(set(int(p) for p in points)), dtype=int)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return MetricSpace(self.dist[np.ix_(idx, idx)], labels)

    def check_metric(self, atol: float = 1e-9) -> None:
        """Validate zero diagonal, symmetry, nonnegativity and the triangle
        inequality. Raises MetricError naming the first violating triple."""
        d = self.dist
        if np.isnan(d).any():
            raise MetricError("distance table contains NaN")
        if (d < 0).any():
            i, j = map(int, np.argwhere(d < 0)[0])
            raise MetricError(f"negative distance d({i},{j})={d[i, j]}")
        if (np.diag(d) != 0).any():
            i = int(np.flatnonzero(np.diag(d) != 0)[0])
            raise MetricError(f"d({i},{i})={d[i, i]} is not zero")
        if not np.array_equal(d, d.T):
            i, j = map(int, np.argwhere(d != d.T)[0])
            raise MetricError(f"asymmetric: d({i},{j})={d[i, j]} but d({j},{i})={d[j, i]}")
        for k in range(self.n):
            via = d[:, k][:, None] + d[k, :][None, :]
            bad = d > via + atol
            if bad.any():
                i, j = map(int, np.argwhere(bad)[0])
                raise MetricError(
                    f"triangle inequality fails for ({i},{k},{j}): "
                    f"d({i},{j})={d[i, j]} > d({i},{k})+d({k},{j})={via[i, j]}"
                )


def build_space(
    edges: Sequence[Sequence[float]] | None = None,
    n: int | None = None,
    *,
    distances: Sequence[Sequence[float]] | np.ndarray | None = None,
    labels: Sequence[str] | None = None,
) -> MetricSpace:
    """Build a metric space from a weighted edge list (shortest-path metric)
    or from a raw distance table (validated).

    Edges are ``(i, j)`` or ``(i, j, w)`` with ``w`` defaulting to 1.
    """
    labels = None if labels is None else tuple(labels)
    if distances is not None:
        space = MetricSpace(np.asarray(distances, dtype=float), labels)
        space.check_metric()
        return space
    if n is None:
        raise ValueError("n is required with an edge list")
    if n < 1:
        raise ValueError("a space needs at least one point")
    best: dict[tuple[int, int], float] = {}
    for e in edges or ():
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) out of range for n={n}")
        if w < 0:
            raise ValueError(f"negative weight on edge ({i},{j})")
        if i == j:
            continue
        if w == 0:
            raise MetricError(f"zero-weight edge ({i},{j}) would identify distinct points")
        key = (min(i, j), max(i, j))
        best[key] = min(w, best.get(key, INF))
    keys = sorted(best)
    rows = [i for i, _ in keys] + [j for _, j in keys]
    cols = [j for _, j in keys] + [i for i, _ in keys]
    weights = [best[k] for k in keys] * 2
    graph = coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    dist = shortest_path(graph, method="D", directed=False)
    return MetricSpace(dist, labels, tuple((i, j, best[(i, j)]) for i, j in keys))


def ball(space: MetricSpace, x: int, radius: float) -> np.ndarray:
    """Indices of points within ``radius`` of ``x`` (always contains ``x``)."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return np.flatnonzero(space.dist[x] <= radius)


@dataclass(frozen=True)
class GeometryProfile:
    radii: tuple[float, ...]
    counts: tuple[int, ...]

    def __getitem__(self, radius: float) -> int:
        return self.counts[self.radii.index(radius)]

    def as_rows(self) -> list[dict]:
        return [{"R": r, "N": n} for r, n in zip(self.radii, self.counts)]


def geometry_profile(space: MetricSpace, radii: Sequence[float]) -> GeometryProfile:
    radii = tuple(float(r) for r in radii)
    if list(radii) != sorted(radii):
        raise ValueError("radii must be sorted ascending")
    counts = tuple(int((space.dist <= r).sum(axis=1).max()) for r in radii)
    return GeometryProfile(radii, counts)


@dataclass(frozen=True, eq=False)
class BoxSpace:
    """Disjoint union of finite blocks. A point of block ``n`` (0-based here,
    1-based in ``offsets``) sits at distance ``offsets[n] + offsets[m]`` from
    every point of block ``m``."""

    blocks: tuple[MetricSpace, ...]
    offsets: tuple[float, ...]
    realized: MetricSpace = field(repr=False)
    starts: tuple[int, ...] = field(repr=False)

    @property
    def n(self) -> int:
        return self.realized.n

    def __len__(self) -> int:
        return len(self.blocks)

    def block_indices(self, k: int) -> np.ndarray:
        return np.arange(self.starts[k], self.starts[k] + self.blocks[k].n)

    def block_of(self) -> np.ndarray:
        """Block index of every global point."""
        return np.repeat(np.arange(len(self.blocks)), [b.n for b in self.blocks])

    def separation_holds(self) -> bool:
        diams = [b.diameter() for b in self.blocks]
        for a in range(len(self.blocks)):
            ia = self.block_indices(a)
            for b in range(a + 1, len(self.blocks)):
                ib = self.block_indices(b)
                gap = self.realized.dist[np.ix_(ia, ib)].min()
                if not gap > diams[a] + diams[b]:
                    return False
        return True


def make_box_space(blocks: Sequence[MetricSpace]) -> BoxSpace:
    """Realize the disjoint union with cross distance ``R_n + R_m`` where
    ``R_n = diam(X_n) + n`` (blocks numbered from 1)."""
    blocks = tuple(blocks)
    if not blocks:
        raise ValueError("a box space needs at least one block")
    for k, b in enumerate(blocks, start=1):
        if b.n == 0:
            raise ValueError(f"block {k} is empty")
        if not b.is_connected():
            raise ValueError(f"block {k} has infinite internal distances")
    offsets = tuple(b.diameter() + k for k, b in enumerate(blocks, start=1))
    sizes = [b.n for b in blocks]
    starts = tuple(int(s) for s in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    owner = np.repeat(np.arange(len(blocks)), sizes)
    off = np.asarray(offsets)[owner]
    dist = off[:, None] + off[None, :]
    for k, b in enumerate(blocks):
        sl = slice(starts[k], starts[k] + b.n)
        dist[sl, sl] = b.dist
    labels = None
    if all(b.labels is not None for b in blocks):
        labels = tuple(f"{k}:{lab}" for k, b in enumerate(blocks, 1) for lab in b.labels)
    return BoxSpace(blocks, offsets, MetricSpace(dist, labels), starts)


def annulus_index(distance: float) -> int:
    """``m`` with ``m**2 <= distance < (m+1)**2``."""
    if not math.isfinite(distance):
        raise ValueError("annuli need finite distances to the basepoint")
    m = math.isqrt(int(distance))
    while (m + 1) ** 2 <= distance:
        m += 1
    while m * m > distance:
        m -= 1
    return m


def annular_decomposition(space: MetricSpace, x0: int) -> tuple[np.ndarray, np.ndarray]:
    """Split into even annuli ``Y`` and odd annuli ``Z`` around ``x0``.

    Annuli are half-open so ``Y`` and ``Z`` partition the space. Only spaces
    with finite distances to ``x0`` are supported.
    """
    row = space.dist[x0]
    if not np.isfinite(row).all():
        raise ValueError("every point must be at finite distance from the basepoint")
    parity = np.array([annulus_index(float(d)) % 2 for d in row])
    return np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)


def r_separated_decomposition(
    box: BoxSpace, radius: float, points: Iterable[int] | None = None
) -> list[np.ndarray]:
    """Group the fragments ``points ∩ X_n`` into the finest partition whose
    groups are pairwise more than ``radius`` apart.

    Fragments closer than or at ``radius`` are merged (single linkage). Groups
    are ordered by their first block.
    """
    pts = np.arange(box.n) if points is None else np.asarray(sorted(set(int(p) for p in points)))
    if pts.size == 0:
        return []
    owner = box.block_of()[pts]
    fragments = [pts[owner == k] for k in np.unique(owner)]
    nf = len(fragments)
    d = box.realized.dist
    link = np.zeros((nf, nf), dtype=bool)
    for a in range(nf):
        for b in range(a + 1, nf):
            if d[np.ix_(fragments[a], fragments[b])].min() <= radius:
                link[a, b] = link[b, a] = True
    _, labels = connected_components(link, directed=False)
    groups: dict[int, list[np.ndarray]] = {}
    for f, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(fragments[f])
    ordered = sorted(groups.values(), key=lambda fs: int(fs[0][0]))
    return [np.sort(np.concatenate(fs)) for fs in ordered]


def set_distance(space: MetricSpace, a: Sequence[int], b: Sequence[int]) -> float:
    return float(space.dist[np.ix_(np.asarray(a), np.asarray(b))].min())


def set_diameter(space: MetricSpace, a: Sequence[int]) -> float:
    a = np.asarray(a)
    return float(space.dist[np.ix_(a, a)].max()) if a.size else 0.0


# -- JSON space files --------------------------------------------------------


def box_from_json(payload: dict) -> BoxSpace:
    """Read ``{"blocks": [{"n": int, "edges": [[i, j, w], ...]}, ...]}``."""
    if "blocks" not in payload:
        raise ValueError("space file needs a 'blocks' list")
    blocks = [build_space(b.get("edges", []), int(b["n"])) for b in payload["blocks"]]
    return make_box_space(blocks)


def box_to_json(box: BoxSpace) -> dict:
    out = []
    for b in box.blocks:
        if b.edges is None:
            raise ValueError("only graph-built blocks can be written as edge lists")
        out.append({"n": b.n, "edges": [[i, j] if w == 1 else [i, j, w] for i, j, w in b.edges]})
    return {"blocks": out}
