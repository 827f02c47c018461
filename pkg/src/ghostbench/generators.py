"""Deterministic graph families used as test spaces.

Randomized families draw from SplitMix64 so that a (family, sizes, seed)
triple always yields the same adjacency, independent of numpy's RNG.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .coarse_space import BoxSpace, MetricSpace, build_space, make_box_space

FAMILIES = ("cycle", "torus", "random_regular", "cayley_sl2", "complete")
MASK64 = (1 << 64) - 1
MAX_CONFIG_ATTEMPTS = 1000


class SplitMix64:
    """SplitMix64 (Steele, Lea, Flood 2014)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next()
            if r < limit:
                return r % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, swapping from the top down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_seed(seed: int, index: int) -> int:
    """Seed for the ``index``-th block of a sequence."""
    rng = SplitMix64(seed ^ ((index * 0xD1B54A32D192ED03) & MASK64))
    return rng.next()


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    n: int | None = None
    d: int | None = None
    p: int | None = None
    m: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


class GenerationError(RuntimeError):
    pass


def cycle_edges(n: int) -> list[tuple[int, int]]:
    if n < 3:
        raise ValueError("cycle needs n >= 3")
    return [(i, (i + 1) % n) for i in range(n)]


def torus_edges(n: int, m: int) -> list[tuple[int, int]]:
    if n < 3 or m < 3:
        raise ValueError("torus needs both sides >= 3")
    edges = []
    for i in range(n):
        for j in range(m):
            v = i * m + j
            edges.append((v, i * m + (j + 1) % m))
            edges.append((v, ((i + 1) % n) * m + j))
    return edges


def complete_edges(n: int) -> list[tuple[int, int]]:
    if n < 1:
        raise ValueError("complete graph needs n >= 1")
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def random_regular_edges(n: int, d: int, seed: int) -> list[tuple[int, int]]:
    """Configuration model: shuffle ``n*d`` stubs, pair them in order, and
    reject the whole pairing on any self-loop or repeated edge."""
    if d < 1 or d >= n:
        raise ValueError("random_regular needs 1 <= d < n")
    if (n * d) % 2:
        raise ValueError("random_regular needs n*d even")
    rng = SplitMix64(seed)
    for _ in range(MAX_CONFIG_ATTEMPTS):
        stubs = [v for v in range(n) for _ in range(d)]
        rng.shuffle(stubs)
        edges = set()
        for a, b in zip(stubs[::2], stubs[1::2]):
            e = (min(a, b), max(a, b))
            if a == b or e in edges:
                break
            edges.add(e)
        else:
            return sorted(edges)
    raise GenerationError(f"configuration model failed {MAX_CONFIG_ATTEMPTS} times for n={n}, d={d}")


def _is_odd_prime(p: int) -> bool:
    return p > 2 and all(p % q for q in range(2, int(p**0.5) + 1))


def sl2_elements(p: int) -> list[tuple[int, int, int, int]]:
    return [
        (a, b, c, d)
        for a in range(p)
        for b in range(p)
        for c in range(p)
        for d in range(p)
        if (a * d - b * c) % p == 1
    ]


def cayley_sl2_edges(p: int) -> tuple[int, list[tuple[int, int]]]:
    """Cayley graph of SL(2, Z/p) for the generators (1,±1;0,1), (1,0;±1,1),
    acting by right multiplication. Vertices are matrices in lexicographic order."""
    if not _is_odd_prime(p):
        raise ValueError("cayley_sl2 needs an odd prime p")
    elems = sl2_elements(p)
    index = {g: i for i, g in enumerate(elems)}
    gens = [(1, 1, 0, 1), (1, p - 1, 0, 1), (1, 0, 1, 1), (1, 0, p - 1, 1)]
    edges = set()
    for g in elems:
        a, b, c, d = g
        for e, f, h, k in gens:
            prod = ((a * e + b * h) % p, (a * f + b * k) % p, (c * e + d * h) % p, (c * f + d * k) % p)
            i, j = index[g], index[prod]
            edges.add((min(i, j), max(i, j)))
    return len(elems), sorted(edges)


def generate_edges(spec: GeneratorSpec) -> tuple[int, list[tuple[int, int]]]:
    f = spec.family
    if f == "cycle":
        return spec.n, cycle_edges(spec.n)
    if f == "torus":
        m = spec.m if spec.m is not None else spec.n
        return spec.n * m, torus_edges(spec.n, m)
    if f == "complete":
        return spec.n, complete_edges(spec.n)
    if f == "random_regular":
        d = 3 if spec.d is None else spec.d
        return spec.n, random_regular_edges(spec.n, d, spec.seed)
    return cayley_sl2_edges(spec.p)


def generate(spec: GeneratorSpec) -> MetricSpace:
    n, edges = generate_edges(spec)
    return build_space(edges, n)


def generate_sequence(
    family: str,
    sizes: Sequence[int],
    seed: int = 0,
    *,
    d: int | None = None,
    m: int | None = None,
) -> BoxSpace:
    """Box space of one block per size. ``sizes`` are ``n`` values, or primes
    ``p`` for ``cayley_sl2``. Block ``k`` of a randomized family uses
    ``derive_seed(seed, k)``."""
    if not sizes:
        raise ValueError("size list is empty")
    blocks = []
    for k, size in enumerate(sizes):
        if family == "cayley_sl2":
            spec = GeneratorSpec(family, p=int(size), seed=seed)
        else:
            spec = GeneratorSpec(family, n=int(size), d=d, m=m, seed=derive_seed(seed, k))
        blocks.append(generate(spec))
    return make_box_space(blocks)
