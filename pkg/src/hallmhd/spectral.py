"""Truncated Fourier lattice on the periodic box and the linear spectral toolkit.

Conventions
-----------
* The domain is the torus ``[0, L)^3`` sampled on an ``N^3`` grid.  Angular
  wavenumbers are ``k = 2*pi*m/L`` with integer wave indices ``m``.
* A lattice with cut-off radius ``n`` retains the modes ``|k| <= n``.  They are
  stored as a flat list in lexicographic order of ``(m1, m2, m3)``.
* Coefficients use the unitary DFT (``norm="ortho"``), so the physical sample
  at grid point ``x`` is ``N**-1.5 * sum_k c_k exp(i k.x)``.
* ``inner_product_H`` includes the Parseval weight ``(L/N)**3``, which makes it
  the L2 integral over the box rather than a grid sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

TOL_DIV = 1e-12
TOL_HERM = 1e-12
NORMALIZATION_TAG = "unitary-dft-v1"


class LatticeError(ValueError):
    """Invalid lattice parameters or mismatched lattices."""


@dataclass(frozen=True)
class ModeLattice:
    N: int
    L: float
    n: float

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 4 or self.N % 2:
            raise LatticeError(f"N must be an even integer >= 4, got {self.N!r}")
        if not self.L > 0:
            raise LatticeError(f"L must be positive, got {self.L!r}")
        if self.n < 0:
            raise LatticeError(f"cut-off radius must be non-negative, got {self.n!r}")
        bound = alias_bound(self.N, self.L)
        if self.n > bound * (1 + 1e-12):
            raise LatticeError(
                f"cut-off n={self.n} exceeds the alias bound pi(N-1)/L = {bound:.6g}"
            )

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.L

    @cached_property
    def indices(self) -> np.ndarray:
        """Integer wave indices of the retained modes, shape (n_modes, 3)."""
        mmax = int(np.floor(self.n / self.dk + 1e-12))
        r = np.arange(-mmax, mmax + 1)
        m = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        keep = (self.dk**2) * np.sum(m * m, axis=1) <= self.n**2 * (1 + 1e-12)
        m = m[keep]
        m.flags.writeable = False
        return m

    @property
    def mode_count(self) -> int:
        return len(self.indices)

    @property
    def index_bandwidth(self) -> int:
        """Largest |m_i| among the retained modes."""
        if self.mode_count == 0:
            return 0
        return int(np.abs(self.indices).max())

    @cached_property
    def k(self) -> np.ndarray:
        k = self.dk * self.indices.astype(float)
        k.flags.writeable = False
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = np.sum(self.k**2, axis=1)
        k2.flags.writeable = False
        return k2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def partner(self) -> np.ndarray:
        """Position of the mode -k for every retained mode k."""
        lookup = {tuple(m): i for i, m in enumerate(self.indices.tolist())}
        p = np.array([lookup[(-a, -b, -c)] for a, b, c in self.indices.tolist()], dtype=np.intp)
        p.flags.writeable = False
        return p

    @cached_property
    def zero_mode(self) -> int | None:
        hits = np.flatnonzero(np.all(self.indices == 0, axis=1))
        return int(hits[0]) if len(hits) else None

    @property
    def parseval_weight(self) -> float:
        return (self.L / self.N) ** 3

    def grid(self, M: int | None = None) -> np.ndarray:
        """Physical coordinates of an ``M^3`` grid (default ``N``), shape (3, M, M, M)."""
        M = self.N if M is None else M
        x = self.L * np.arange(M) / M
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def mask(self, n: float) -> np.ndarray:
        return self.k2 <= n * n * (1 + 1e-12)

    def positions_in(self, other: "ModeLattice") -> np.ndarray:
        """For each mode of ``self``, its position in ``other`` (-1 if absent)."""
        lookup = {tuple(m): i for i, m in enumerate(other.indices.tolist())}
        return np.array([lookup.get(tuple(m), -1) for m in self.indices.tolist()], dtype=np.intp)


def alias_bound(N: int, L: float) -> float:
    return np.pi * (N - 1) / L


def make_lattice(N: int, L: float, n: float) -> ModeLattice:
    return ModeLattice(int(N) if isinstance(N, (int, np.integer)) else N, float(L), float(n))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real 3-vector field stored as its retained Fourier coefficients."""

    lattice: ModeLattice
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (3, self.lattice.mode_count):
            raise LatticeError(
                f"coefficient array has shape {c.shape}, expected (3, {self.lattice.mode_count})"
            )
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self.lattice, other.lattice)
        return SpectralField(self.lattice, self.coeffs + other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self.lattice, other.lattice)
        return SpectralField(self.lattice, self.coeffs - other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.lattice, a * self.coeffs, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.lattice, -self.coeffs, self.divergence_free)

    @classmethod
    def zeros(cls, lattice: ModeLattice) -> "SpectralField":
        return cls(lattice, np.zeros((3, lattice.mode_count), complex), True)


@dataclass(frozen=True, eq=False)
class State:
    """Velocity/magnetic pair ``(u, B)``."""

    u: SpectralField
    B: SpectralField

    def __post_init__(self):
        _check_same(self.u.lattice, self.B.lattice)

    @property
    def lattice(self) -> ModeLattice:
        return self.u.lattice

    def as_array(self) -> np.ndarray:
        """Coefficients stacked as (2, 3, n_modes)."""
        return np.stack([self.u.coeffs, self.B.coeffs])

    @classmethod
    def from_array(cls, lattice: ModeLattice, arr: np.ndarray, divergence_free: bool = True) -> "State":
        return cls(SpectralField(lattice, arr[0], divergence_free),
                   SpectralField(lattice, arr[1], divergence_free))

    @classmethod
    def zeros(cls, lattice: ModeLattice) -> "State":
        return cls(SpectralField.zeros(lattice), SpectralField.zeros(lattice))

    def __add__(self, other: "State") -> "State":
        return State(self.u + other.u, self.B + other.B)

    def __sub__(self, other: "State") -> "State":
        return State(self.u - other.u, self.B - other.B)

    def __mul__(self, a: float) -> "State":
        return State(a * self.u, a * self.B)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SobolevIndex:
    s: float
    sign: int = 1

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("Sobolev order must be non-negative")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


def _check_same(a: ModeLattice, b: ModeLattice) -> None:
    if a != b:
        raise LatticeError(f"lattice mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# transforms on the lattice grid


def forward_transform(samples: np.ndarray, lattice: ModeLattice) -> SpectralField:
    """Unitary DFT of real samples (3, N, N, N), followed by the cut-off."""
    samples = np.asarray(samples, dtype=float)
    N = lattice.N
    if samples.shape != (3, N, N, N):
        raise LatticeError(f"samples have shape {samples.shape}, expected (3, {N}, {N}, {N})")
    F = sfft.fftn(samples, axes=(1, 2, 3), norm="ortho")
    m = lattice.indices % N
    return SpectralField(lattice, F[:, m[:, 0], m[:, 1], m[:, 2]])


def inverse_transform(field: SpectralField) -> np.ndarray:
    """Physical samples (3, N, N, N) of a Hermitian-symmetric field."""
    lat = field.lattice
    defect = hermitian_defect(field.coeffs, lat)
    if defect > TOL_HERM:
        raise ValueError(f"field breaks Hermitian symmetry (relative defect {defect:.3e})")
    N = lat.N
    F = np.zeros((3, N, N, N), complex)
    m = lat.indices % N
    F[:, m[:, 0], m[:, 1], m[:, 2]] = field.coeffs
    out = sfft.ifftn(F, axes=(1, 2, 3), norm="ortho")
    return out.real.copy()


def hermitian_defect(coeffs: np.ndarray, lattice: ModeLattice) -> float:
    scale = np.max(np.abs(coeffs), initial=0.0)
    if scale == 0:
        return 0.0
    d = coeffs - np.conj(coeffs[..., lattice.partner])
    return float(np.max(np.abs(d)) / scale)


def hermitian_symmetrize(coeffs: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[..., lattice.partner]))


def divergence_defect(field: SpectralField) -> float:
    """max_k |k.c_k| / |c_k| over nonzero modes with nonzero coefficients."""
    lat = field.lattice
    kc = np.abs(np.einsum("ki,ik->k", lat.k, field.coeffs))
    cn = np.linalg.norm(field.coeffs, axis=0) * np.where(lat.k2 > 0, lat.kmag, 0.0)
    ok = cn > 0
    if not ok.any():
        return 0.0
    return float(np.max(kc[ok] / cn[ok]))


# ---------------------------------------------------------------------------
# linear operators


def cutoff(field: SpectralField, n: float) -> SpectralField:
    """Zero every coefficient with |k| > n (the lattice is unchanged)."""
    keep = field.lattice.mask(n)
    return SpectralField(field.lattice, field.coeffs * keep, field.divergence_free)


def cutoff_state(X: State, n: float) -> State:
    return State(cutoff(X.u, n), cutoff(X.B, n))


def leray_array(c: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    """Project coefficient arrays (..., 3, n_modes) onto divergence-free fields."""
    k = lattice.k.T
    k2 = np.where(lattice.k2 > 0, lattice.k2, 1.0)
    kc = np.einsum("ik,...ik->...k", k, c)
    return c - k * (kc / k2)[..., None, :]


def leray_project(field: SpectralField) -> SpectralField:
    return SpectralField(field.lattice, leray_array(field.coeffs, field.lattice), True)


def curl_array(c: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    k = lattice.k.T
    out = np.empty_like(c)
    out[..., 0, :] = 1j * (k[1] * c[..., 2, :] - k[2] * c[..., 1, :])
    out[..., 1, :] = 1j * (k[2] * c[..., 0, :] - k[0] * c[..., 2, :])
    out[..., 2, :] = 1j * (k[0] * c[..., 1, :] - k[1] * c[..., 0, :])
    return out


def derivative(field: SpectralField, kind: str, component: int | None = None) -> SpectralField:
    """Spectral derivative: ``"curl"``, ``"laplacian"`` or ``"gradient"``.

    ``"gradient"`` needs ``component`` (axis i) and returns the field of partial
    derivatives d/dx_i of every vector component.
    """
    lat = field.lattice
    if kind == "curl":
        return SpectralField(lat, curl_array(field.coeffs, lat), True)
    if kind == "laplacian":
        return SpectralField(lat, -lat.k2 * field.coeffs, field.divergence_free)
    if kind == "gradient":
        if component not in (0, 1, 2):
            raise ValueError("gradient needs component in {0, 1, 2}")
        return SpectralField(lat, 1j * lat.k[:, component] * field.coeffs, field.divergence_free)
    raise ValueError(f"unknown derivative kind {kind!r}")


def sobolev_norm(field: SpectralField, index: SobolevIndex | float) -> float:
    if not isinstance(index, SobolevIndex):
        index = SobolevIndex(float(index))
    lat = field.lattice
    w = (1.0 + lat.k2) ** (index.sign * index.s)
    return float(np.sqrt(lat.parseval_weight * np.sum(w * np.abs(field.coeffs) ** 2)))


def inner(a: SpectralField, b: SpectralField) -> float:
    """L2 inner product of two vector fields."""
    _check_same(a.lattice, b.lattice)
    return float(a.lattice.parseval_weight * np.sum((a.coeffs * np.conj(b.coeffs)).real))


def inner_product_H(a: State, b: State) -> float:
    return inner(a.u, b.u) + inner(a.B, b.B)


def norm_H(a: State) -> float:
    return float(np.sqrt(inner_product_H(a, a)))


def inner_product_dirichlet(a: State, b: State, nu1: float, nu2: float) -> float:
    _check_same(a.lattice, b.lattice)
    lat = a.lattice
    k2 = lat.k2
    su = np.sum(k2 * (a.u.coeffs * np.conj(b.u.coeffs)).real)
    sb = np.sum(k2 * (a.B.coeffs * np.conj(b.B.coeffs)).real)
    return float(lat.parseval_weight * (nu1 * su + nu2 * sb))


def norm_V(a: State, nu1: float, nu2: float) -> float:
    return float(np.sqrt(inner_product_H(a, a) + inner_product_dirichlet(a, a, nu1, nu2)))


def to_lattice(field: SpectralField, lattice: ModeLattice) -> SpectralField:
    """Transfer coefficients to another lattice with the same N and L.

    Modes absent from the target are dropped (a cut-off); new modes are zero.
    """
    src = field.lattice
    if (src.N, src.L) != (lattice.N, lattice.L):
        raise LatticeError("to_lattice needs matching N and L")
    pos = lattice.positions_in(src)
    out = np.zeros((3, lattice.mode_count), complex)
    hit = pos >= 0
    out[:, hit] = field.coeffs[:, pos[hit]]
    return SpectralField(lattice, out, field.divergence_free)


def state_to_lattice(X: State, lattice: ModeLattice) -> State:
    return State(to_lattice(X.u, lattice), to_lattice(X.B, lattice))


def subbox_seminorm(field: SpectralField, lo, hi) -> float:
    """L2 norm of the field restricted to the axis-aligned box [lo, hi)."""
    lat = field.lattice
    samples = inverse_transform(field)
    x = lat.grid()
    inside = np.ones(x.shape[1:], bool)
    for i in range(3):
        inside &= (x[i] >= lo[i]) & (x[i] < hi[i])
    return float(np.sqrt(lat.parseval_weight * np.sum(samples[:, inside] ** 2)))


def random_field(lattice: ModeLattice, rng: np.random.Generator, *, decay: float = 0.0,
                 solenoidal: bool = True, n: float | None = None) -> SpectralField:
    """Random real field with coefficient spread (1+|k|^2)^(-decay/2)."""
    nm = lattice.mode_count
    c = rng.standard_normal((3, nm)) + 1j * rng.standard_normal((3, nm))
    c *= (1.0 + lattice.k2) ** (-decay / 2)
    if n is not None:
        c *= lattice.mask(n)
    c = hermitian_symmetrize(c, lattice)
    if solenoidal:
        c = leray_array(c, lattice)
    return SpectralField(lattice, c, solenoidal)


def random_state(lattice: ModeLattice, rng: np.random.Generator, **kw) -> State:
    return State(random_field(lattice, rng, **kw), random_field(lattice, rng, **kw))


# ---------------------------------------------------------------------------
# dealiased products


def product_grid_size(lattice: ModeLattice, extra_bandwidth: int = 0) -> int:
    """Smallest FFT-friendly grid resolving a quadratic product exactly.

    ``extra_bandwidth`` is the index bandwidth of a coefficient function that
    multiplies a lattice field (noise coefficients); quadratic lattice-lattice
    products need ``3*m + 1`` points per axis, lattice-coefficient products
    ``2*m + extra + 1``.
    """
    m = lattice.index_bandwidth
    need = max(3 * m + 1, 2 * m + extra_bandwidth + 1, 4)
    return sfft.next_fast_len(need, real=True)


@dataclass(frozen=True, eq=False)
class ProductGrid:
    """Zero-padded physical grid for pseudo-spectral products on a lattice."""

    lattice: ModeLattice
    M: int
    _scatter: np.ndarray = dc_field(init=False, repr=False)
    _sel: np.ndarray = dc_field(init=False, repr=False)
    _gather: np.ndarray = dc_field(init=False, repr=False)
    _neg: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        M = self.M
        h = M // 2 + 1
        if 2 * self.lattice.index_bandwidth >= M:
            raise LatticeError("product grid too small for the lattice")
        m = self.lattice.indices
        sel = np.flatnonzero(m[:, 2] >= 0)
        ms = m[sel]
        scatter = ((ms[:, 0] % M) * M + (ms[:, 1] % M)) * h + ms[:, 2]
        # modes with m3 < 0 live in the omitted half; read their conjugate partner
        neg = m[:, 2] < 0
        g = np.where(neg[:, None], -m, m)
        gather = ((g[:, 0] % M) * M + (g[:, 1] % M)) * h + g[:, 2]
        object.__setattr__(self, "_scatter", scatter)
        object.__setattr__(self, "_sel", sel)
        object.__setattr__(self, "_gather", gather)
        object.__setattr__(self, "_neg", neg)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.M, self.M, self.M)

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        """Coefficients (..., n_modes) -> real samples (..., M, M, M)."""
        M = self.M
        lead = c.shape[:-1]
        F = np.zeros(lead + (M * M * (M // 2 + 1),), complex)
        F[..., self._scatter] = c[..., self._sel]
        F = F.reshape(lead + (M, M, M // 2 + 1))
        f = sfft.irfftn(F, s=self.shape, axes=(-3, -2, -1), norm="forward", workers=1)
        f *= self.lattice.N ** -1.5
        return f

    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        """Real samples (..., M, M, M) -> coefficients of the retained modes."""
        F = sfft.rfftn(f, axes=(-3, -2, -1), norm="forward", workers=1)
        F = F.reshape(F.shape[:-3] + (-1,))
        c = F[..., self._gather]
        c[..., self._neg] = np.conj(c[..., self._neg])
        c *= self.lattice.N ** 1.5
        return c

    def points(self) -> np.ndarray:
        return self.lattice.grid(self.M)


@lru_cache(maxsize=64)
def product_grid(lattice: ModeLattice, extra_bandwidth: int = 0) -> ProductGrid:
    return ProductGrid(lattice, product_grid_size(lattice, extra_bandwidth))
