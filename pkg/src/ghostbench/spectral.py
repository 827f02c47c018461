"""Eigensolvers and the polynomial functional calculus.

Filters are interpolated at Chebyshev-Lobatto points, so the interpolant
matches ``f`` exactly at both ends of its domain. That keeps ``p(0) = f(0) = 1``
for low bumps and ``p(1) = f(1) = 1`` for high bumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import chebyshev as C
from scipy.fft import dct

from .bandop import BandOperator, components, compress, spectral_bounds

EIG_CAP = 2048
MAX_DEGREE = 4096
DOMAIN_RTOL = 1e-9
DEFAULT_TAPER = 0.5


class SizeCapExceeded(ValueError):
    pass


class DegreeCapReached(RuntimeError):
    pass


class SpectrumOutsideDomain(ValueError):
    pass


def eig_dense(op: BandOperator) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""
    if op.n > EIG_CAP:
        raise SizeCapExceeded(f"{op.n} points exceeds the dense cap of {EIG_CAP}")
    return np.linalg.eigh(op.toarray())


def lambda_min_compressed(op: BandOperator, points) -> float:
    """Smallest eigenvalue of ``P T P`` on ``l2(points)``."""
    sub = compress(op, points)
    return float(np.linalg.eigvalsh(sub.toarray())[0])


def _cosine_step(t: np.ndarray) -> np.ndarray:
    """0 for t <= 0, 1 for t >= 1, half-cosine in between."""
    t = np.clip(t, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * t)


@dataclass(frozen=True)
class SpectralFilter:
    """Cosine-tapered bump.

    ``low_bump``: 1 at 0, supported in ``[0, kappa/2]``.
    ``high_bump``: 1 at 1, supported in ``[(1+kappa)/2, 1]``.
    The taper occupies the middle ``taper`` fraction of the support; the
    function is flat on the remaining ends.
    """

    kind: str
    kappa: float
    domain: tuple[float, float]
    taper: float = DEFAULT_TAPER

    def __post_init__(self):
        if self.kind not in ("low_bump", "high_bump"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.kind == "high_bump" and not self.kappa < 1:
            raise ValueError("high_bump needs kappa < 1")
        if not 0 < self.taper <= 1:
            raise ValueError("taper fraction must be in (0, 1]")
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "low_bump":
            return 0.0, self.kappa / 2
        return (1 + self.kappa) / 2, 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.support
        width = b - a
        flat = (1 - self.taper) / 2 * width
        start, stop = a + flat, b - flat
        # extended by constants outside the domain so rounding at 0 or 1 is harmless
        step = _cosine_step((t - start) / (stop - start))
        return 1.0 - step if self.kind == "low_bump" else step

    def to_dict(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa, "domain": list(self.domain), "taper": self.taper}


@dataclass(frozen=True, eq=False)
class FilterApprox:
    """Chebyshev series of ``p`` in the variable mapped from ``domain`` to [-1, 1].

    ``eps`` is the measured sup error of ``p - f`` on ``grid(degree)``.
    """

    coefficients: np.ndarray
    domain: tuple[float, float]
    eps: float
    func: Callable = field(repr=False)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def _to_unit(self, t):
        lo, hi = self.domain
        return (2 * np.asarray(t, dtype=float) - (lo + hi)) / (hi - lo)

    def __call__(self, t):
        return C.chebval(self._to_unit(t), self.coefficients)

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "domain": list(self.domain),
            "eps": self.eps,
            "coefficients": [float(c) for c in self.coefficients],
        }


def grid(domain: tuple[float, float], degree: int) -> np.ndarray:
    """Uniform points plus Chebyshev-Lobatto points, each at least 10*degree+1
    strong, so both the flat parts and the endpoint clustering get sampled."""
    lo, hi = domain
    k = max(10 * degree, 1000)
    uniform = np.linspace(lo, hi, k + 1)
    lobatto = (lo + hi) / 2 + (hi - lo) / 2 * np.cos(np.pi * np.arange(k + 1) / k)
    return np.unique(np.concatenate([uniform, lobatto]))


def chebyshev_interpolate(func: Callable, domain: tuple[float, float], degree: int) -> np.ndarray:
    """Coefficients of the degree-``degree`` interpolant at Lobatto points."""
    lo, hi = domain
    if degree == 0:
        return np.array([float(func(np.array([(lo + hi) / 2]))[0])])
    nodes = np.cos(np.pi * np.arange(degree + 1) / degree)
    values = np.asarray(func((lo + hi) / 2 + (hi - lo) / 2 * nodes), dtype=float)
    coef = dct(values, type=1) / degree
    coef[0] /= 2
    coef[-1] /= 2
    return coef


def _measured_error(func, coef, domain, degree, refine: int = 16) -> float:
    """Sup of ``|p - f|`` on ``grid``, refined between the neighbours of the
    ``refine`` worst grid points (the peak usually sits between samples)."""
    g = grid(domain, degree)
    lo, hi = domain

    def err(t):
        return np.abs(C.chebval((2 * t - (lo + hi)) / (hi - lo), coef) - func(t))

    e = err(g)
    worst = float(e.max())
    for i in np.argsort(e)[-refine:]:
        fine = np.linspace(g[max(i - 1, 0)], g[min(i + 1, g.size - 1)], 201)
        worst = max(worst, float(err(fine).max()))
    return worst


def design_filter(
    func: SpectralFilter | Callable,
    *,
    degree: int | None = None,
    eps: float | None = None,
    domain: tuple[float, float] | None = None,
    max_degree: int = MAX_DEGREE,
) -> FilterApprox:
    """Chebyshev interpolant of ``func`` at a fixed degree, or the first
    degree in 0, 1, 2, 4, 8, ... whose measured grid error is at most ``eps``."""
    if domain is None:
        domain = func.domain
    domain = (float(domain[0]), float(domain[1]))
    if not domain[1] > domain[0]:
        raise ValueError("domain must have positive length")
    if (degree is None) == (eps is None):
        raise ValueError("give exactly one of degree or eps")
    if degree is not None:
        coef = chebyshev_interpolate(func, domain, degree)
        return FilterApprox(coef, domain, _measured_error(func, coef, domain, degree), func)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    d = 0
    while d <= max_degree:
        coef = chebyshev_interpolate(func, domain, d)
        err = _measured_error(func, coef, domain, d)
        if err <= eps:
            return FilterApprox(coef, domain, err, func)
        d = 1 if d == 0 else 2 * d
    raise DegreeCapReached(f"grid error still {err:.3g} > {eps} at degree cap {max_degree}")


def check_domain(op: BandOperator, domain: tuple[float, float]) -> tuple[float, float]:
    lo, hi = spectral_bounds(op)
    slack = DOMAIN_RTOL * max(1.0, abs(domain[0]), abs(domain[1]))
    if lo < domain[0] - slack or hi > domain[1] + slack:
        raise SpectrumOutsideDomain(f"spectrum [{lo:.6g}, {hi:.6g}] not inside {domain}")
    return lo, hi


def clenshaw_columns(matrix: sp.csr_array, coef: np.ndarray, domain, columns: np.ndarray) -> np.ndarray:
    """``p(T)`` applied to the basis vectors ``columns``, as an (n, k) array.

    Each column runs its own Clenshaw recurrence with sparse mat-vecs, so
    entries outside the ``degree``-step neighbourhood stay exactly zero.
    """
    n = matrix.shape[0]
    lo, hi = domain
    shifted = (2.0 / (hi - lo)) * matrix - ((hi + lo) / (hi - lo)) * sp.identity(n, format="csr")
    shifted = sp.csr_array(shifted)
    shifted.eliminate_zeros()
    x = np.zeros((n, len(columns)))
    x[columns, np.arange(len(columns))] = 1.0
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for c in coef[:0:-1]:
        b1, b2 = c * x + 2.0 * (shifted @ b1) - b2, b1
    return coef[0] * x + shifted @ b1 - b2


def apply_filter(approx: FilterApprox, op: BandOperator, check: bool = True) -> BandOperator:
    """``p(T)``, assembled column by column per connected component."""
    if check:
        check_domain(op, approx.domain)
    n = op.n
    rows, cols, vals = [], [], []
    for comp in components(op):
        sub = op.matrix[comp][:, comp]
        block = clenshaw_columns(sub, approx.coefficients, approx.domain, np.arange(comp.size))
        block = (block + block.T) / 2
        r, c = np.nonzero(block)
        rows.append(comp[r])
        cols.append(comp[c])
        vals.append(block[r, c])
    m = sp.coo_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return BandOperator(op.space, m.tocsr())


def exact_filter_small(func: Callable, op: BandOperator) -> BandOperator:
    """``f(T) = sum f(lambda) v v^T`` by dense eigendecomposition, per component."""
    n = op.n
    rows, cols, vals = [], [], []
    for comp in components(op):
        if comp.size > EIG_CAP:
            raise SizeCapExceeded(f"component of {comp.size} points exceeds {EIG_CAP}")
        lam, vec = np.linalg.eigh(op.matrix[comp][:, comp].toarray())
        block = (vec * np.asarray(func(lam), dtype=float)) @ vec.T
        block = (block + block.T) / 2
        r, c = np.nonzero(block)
        rows.append(comp[r])
        cols.append(comp[c])
        vals.append(block[r, c])
    m = sp.coo_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return BandOperator(op.space, m.tocsr())


def indicator_at(value: float, atol: float = 1e-9) -> Callable:
    """Characteristic function of a single spectral value (exact oracle only)."""

    def chi(t):
        return (np.abs(np.asarray(t, dtype=float) - value) <= atol).astype(float)

    return chi


def taper_log(f: SpectralFilter) -> dict:
    a, b = f.support
    flat = (1 - f.taper) / 2 * (b - a)
    return {"support": [a, b], "taper_interval": [a + flat, b - flat], "taper_fraction": f.taper}

