"""Multiplicative transport noise ``G_i(phi) h = sum_j [(b_j . grad) phi + c_j phi] h_j``.

Coefficients are finite real Fourier series on the box.  Constant coefficients
act as the spectral multiplier ``i b.k + c``; anything else is evaluated
pseudo-spectrally on a padded grid wide enough to keep the projected product
exact.  Every column is projected back onto the divergence-free truncated space.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy import optimize

from .spectral import (
    ModeLattice,
    State,
    leray_array,
    product_grid,
)


class NoiseAdmissibilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FourierSeries:
    """Real function ``sum_t cos_t cos(k_t.x) + sin_t sin(k_t.x)`` with ``k_t = 2 pi m_t / L``."""

    m: np.ndarray
    cos: np.ndarray
    sin: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "cos", np.asarray(self.cos, float).reshape(-1))
        object.__setattr__(self, "sin", np.asarray(self.sin, float).reshape(-1))
        if not (len(m) == len(self.cos) == len(self.sin)):
            raise ValueError("Fourier series term arrays differ in length")

    @classmethod
    def zero(cls) -> "FourierSeries":
        return cls(np.zeros((0, 3)), [], [])

    @classmethod
    def constant(cls, value: float) -> "FourierSeries":
        return cls([[0, 0, 0]], [value], [0.0])

    @classmethod
    def from_terms(cls, terms: list[dict]) -> "FourierSeries":
        if not terms:
            return cls.zero()
        return cls([t["m"] for t in terms],
                   [float(t.get("cos", 0.0)) for t in terms],
                   [float(t.get("sin", 0.0)) for t in terms])

    def to_terms(self) -> list[dict]:
        return [{"m": [int(a) for a in m], "cos": float(c), "sin": float(s)}
                for m, c, s in zip(self.m, self.cos, self.sin)]

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.m == 0))

    @property
    def constant_value(self) -> float:
        return float(np.sum(self.cos[np.all(self.m == 0, axis=1)]))

    @property
    def bandwidth(self) -> int:
        return int(np.abs(self.m).max()) if len(self.m) else 0

    def _phase(self, x: np.ndarray, L: float) -> np.ndarray:
        k = 2 * np.pi * self.m / L
        return np.tensordot(k, x, axes=(1, 0))

    def __call__(self, x: np.ndarray, L: float) -> np.ndarray:
        if not len(self.m):
            return np.zeros(x.shape[1:])
        ph = self._phase(x, L)
        return np.tensordot(self.cos, np.cos(ph), 1) + np.tensordot(self.sin, np.sin(ph), 1)

    def gradient(self, x: np.ndarray, L: float) -> np.ndarray:
        if not len(self.m):
            return np.zeros((3,) + x.shape[1:])
        k = 2 * np.pi * self.m / L
        ph = self._phase(x, L)
        d = -self.cos[:, None] * k
        e = self.sin[:, None] * k
        shape = (len(self.m),) + (1,) * (ph.ndim - 1)
        return np.stack([
            np.sum(d[:, i].reshape(shape) * np.sin(ph) + e[:, i].reshape(shape) * np.cos(ph), axis=0)
            for i in range(3)
        ])


@dataclass(frozen=True, eq=False)
class NoiseDirection:
    b: tuple[FourierSeries, FourierSeries, FourierSeries]
    c: FourierSeries

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f in self.b) and self.c.is_constant

    @property
    def bandwidth(self) -> int:
        return max([f.bandwidth for f in self.b] + [self.c.bandwidth])

    def b_values(self, x, L):
        return np.stack([f(x, L) for f in self.b])

    def div_b(self, x, L):
        return sum(self.b[i].gradient(x, L)[i] for i in range(3))

    @classmethod
    def constant(cls, b=(0.0, 0.0, 0.0), c: float = 0.0) -> "NoiseDirection":
        return cls(tuple(FourierSeries.constant(v) for v in b), FourierSeries.constant(c))

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseDirection":
        b = d.get("b", [[], [], []])
        if len(b) != 3:
            raise ValueError("noise coefficient b needs three component term lists")
        return cls(tuple(FourierSeries.from_terms(t) for t in b), FourierSeries.from_terms(d.get("c", [])))

    def to_dict(self) -> dict:
        return {"b": [f.to_terms() for f in self.b], "c": self.c.to_terms()}


@dataclass(frozen=True)
class Certificate:
    eta: float
    lam: float
    varrho: float = 0.0
    derived: bool = True

    @property
    def valid(self) -> bool:
        return 0 < self.eta <= 2 and self.lam >= 0 and self.varrho >= 0

    @property
    def gamma(self) -> float:
        return np.inf if self.eta >= 2 else self.eta / (2 - self.eta)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise directions for the velocity (field 1) and the magnetic field (field 2)."""

    L: float
    field1: tuple[NoiseDirection, ...] = ()
    field2: tuple[NoiseDirection, ...] = ()
    certificate: Certificate | None = None

    @property
    def J(self) -> int:
        return max(len(self.field1), len(self.field2), 1)

    def directions(self, i: int) -> tuple[NoiseDirection, ...]:
        return self.field1 if i == 0 else self.field2

    @property
    def is_constant(self) -> bool:
        return all(d.is_constant for d in self.field1 + self.field2)

    @property
    def is_zero(self) -> bool:
        return not (self.field1 or self.field2)

    @property
    def bandwidth(self) -> int:
        return max([d.bandwidth for d in self.field1 + self.field2], default=0)

    @classmethod
    def off(cls, L: float) -> "NoiseModel":
        return cls(L)

    @classmethod
    def from_config(cls, L: float, entries: list[dict], certificate: dict | None = None) -> "NoiseModel":
        fields: dict[int, dict[int, NoiseDirection]] = {1: {}, 2: {}}
        for e in entries:
            f = int(e["field"])
            if f not in (1, 2):
                raise ValueError("noise field must be 1 or 2")
            j = int(e.get("j", len(fields[f])))
            if j in fields[f]:
                raise ValueError(f"duplicate noise direction j={j} for field {f}")
            fields[f][j] = NoiseDirection.from_dict(e)
        zero = NoiseDirection.constant()
        packed = []
        for f in (1, 2):
            if fields[f]:
                top = max(fields[f]) + 1
                packed.append(tuple(fields[f].get(j, zero) for j in range(top)))
            else:
                packed.append(())
        cert = None
        if certificate is not None:
            cert = Certificate(float(certificate["eta"]), float(certificate["lambda"]),
                               float(certificate.get("varrho", 0.0)), derived=False)
        return cls(L, packed[0], packed[1], cert)

    def to_config(self) -> list[dict]:
        out = []
        for f, dirs in ((1, self.field1), (2, self.field2)):
            for j, d in enumerate(dirs):
                out.append({"field": f, "j": j, **d.to_dict()})
        return out


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    C: tuple[float, float]
    margin: tuple[float, float]
    a: tuple[float, float]
    gmax: tuple[float, float]
    lam: tuple[float, float]
    certificate: Certificate
    passed: bool

    def as_dict(self) -> dict:
        return {
            "C": list(self.C), "coercivity_margin": list(self.margin), "a": list(self.a),
            "gmax": list(self.gmax), "lambda_i": list(self.lam),
            "certificate": {"eta": self.certificate.eta, "lambda": self.certificate.lam,
                            "varrho": self.certificate.varrho, "derived": self.certificate.derived,
                            "valid": self.certificate.valid},
            "passed": self.passed,
        }


def _scan_points(L: float, bandwidth: int, M: int | None) -> np.ndarray:
    M = M or max(16, 8 * bandwidth + 8)
    x = L * np.arange(M) / M
    return np.stack(np.meshgrid(x, x, x, indexing="ij")).reshape(3, -1)


def _sup(fun, L: float, pts: np.ndarray, polish: bool) -> float:
    """Maximum of ``fun`` over scan points, refined by local searches from the best few."""
    vals = fun(pts)
    best = float(vals.max())
    if polish:
        for i in np.argsort(vals)[-4:]:
            res = optimize.minimize(lambda y: -float(fun(y.reshape(3, 1))[0]), pts[:, i],
                                    method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15})
            best = max(best, -float(res.fun))
    return best


def _field_quantities(dirs, L: float, pts: np.ndarray, polish: bool):
    if not dirs:
        return 0.0, 0.0, 0.0
    const = all(d.is_constant for d in dirs)
    if const:
        pts = pts[:, :1]
        polish = False

    def bb_max(x):
        S = np.zeros((x.shape[1], 3, 3))
        for d in dirs:
            b = d.b_values(x, L).T
            S += b[:, :, None] * b[:, None, :]
        return np.linalg.eigvalsh(S)[:, -1]

    def sup_abs(f):
        return max(_sup(f, L, pts, polish), _sup(lambda x: -f(x), L, pts, polish))

    C = 0.0
    for d in dirs:
        bnorm = _sup(lambda x, d=d: np.sum(d.b_values(x, L) ** 2, axis=0), L, pts, polish)
        dv = sup_abs(lambda x, d=d: d.div_b(x, L))
        cv = sup_abs(lambda x, d=d: d.c(x, L))
        C += bnorm + dv**2 + cv**2
    gmax = _sup(bb_max, L, pts, polish)

    def zeroth(x):
        tot = np.zeros(x.shape[1])
        for d in dirs:
            c = d.c(x, L)
            b = d.b_values(x, L)
            grad_c = d.c.gradient(x, L)
            tot += c * c - (np.sum(grad_c * b, axis=0) + c * d.div_b(x, L))
        return tot

    lam = max(0.0, _sup(zeroth, L, pts, polish))
    return C, gmax, lam


def validate_noise(model: NoiseModel, params, *, strict: bool = False, scan: int | None = None,
                   polish: bool = True) -> AdmissibilityReport:
    """Admissibility constants and a growth-bound certificate for the example noise.

    ``margin`` is the minimum over x of the smallest eigenvalue of
    ``2 I - sum_j b_j b_j^T``; ``a = min(margin, nu_i)``.  The certificate uses
    ``sum_j |(b_j.grad)phi + c_j phi|^2 <= gmax |grad phi|^2 + lam |phi|^2``
    after integrating the cross term by parts, which gives
    ``eta = min_i (2 - gmax_i / nu_i)``, ``lambda = max_i lam_i`` and ``varrho = 0``.
    """
    pts = _scan_points(model.L, model.bandwidth, scan)
    nus = (params.nu1, params.nu2)
    C, gmax, lam, margin, a = [], [], [], [], []
    for i in range(2):
        Ci, gi, li = _field_quantities(model.directions(i), model.L, pts, polish)
        C.append(Ci)
        gmax.append(gi)
        lam.append(li)
        margin.append(2.0 - gi)
        a.append(min(2.0 - gi, nus[i]))
    passed = all(mg > 0 for mg in margin)
    if strict and not passed:
        raise NoiseAdmissibilityError(
            f"noise coefficients violate coercivity: margins {margin[0]:.6g}, {margin[1]:.6g} "
            "(need 2 - lambda_max(sum_j b_j b_j^T) > 0 everywhere)")
    if model.certificate is not None:
        cert = model.certificate
    else:
        eta = min(2.0, min(2.0 - gmax[i] / nus[i] for i in range(2)))
        cert = Certificate(eta, max(lam), 0.0, derived=True)
    return AdmissibilityReport(tuple(C), tuple(margin), tuple(a), tuple(gmax), tuple(lam), cert, passed)


def lipschitz_constant(report: AdmissibilityReport, params) -> float:
    """``L`` with ``|G(phi) - G(psi)|_HS <= L ||phi - psi||_V``."""
    nu_min = min(params.nu1, params.nu2)
    return float(np.sqrt(2 * max(report.C) * (1 + 1 / nu_min)))


# ---------------------------------------------------------------------------
# action on a lattice


class NoiseOperator:
    """The noise model compiled for a lattice.

    ``columns(X)`` maps states of shape (..., 2, 3, n_modes) to (..., 2, J, 3, n_modes):
    entry ``[i, j]`` is the projected ``(b_ij . grad) X_i + c_ij X_i``.
    """

    def __init__(self, model: NoiseModel, lattice: ModeLattice):
        if not np.isclose(model.L, lattice.L):
            raise ValueError("noise model and lattice have different box sizes")
        self.model = model
        self.lattice = lattice
        self.J = model.J
        k = lattice.k
        mult = np.zeros((2, self.J, lattice.mode_count), complex)
        self._const = np.zeros((2, self.J), bool)
        self._active = np.zeros((2, self.J), bool)
        for i in range(2):
            for j, d in enumerate(model.directions(i)):
                self._active[i, j] = True
                if d.is_constant:
                    self._const[i, j] = True
                    b = np.array([f.constant_value for f in d.b])
                    mult[i, j] = 1j * (k @ b) + d.c.constant_value
        self._mult = mult
        self._variable = [(i, j) for i in range(2) for j in range(self.J)
                          if self._active[i, j] and not self._const[i, j]]

    @cached_property
    def _grid(self):
        return product_grid(self.lattice, self.model.bandwidth)

    @cached_property
    def _coeff_samples(self):
        x = self._grid.points()
        out = {}
        for i, j in self._variable:
            d = self.model.directions(i)[j]
            out[(i, j)] = (d.b_values(x, self.lattice.L), d.c(x, self.lattice.L))
        return out

    @property
    def is_zero(self) -> bool:
        return not self._active.any()

    def columns(self, X: np.ndarray) -> np.ndarray:
        lat = self.lattice
        lead = X.shape[:-3]
        cols = np.zeros(lead + (2, self.J, 3, lat.mode_count), complex)
        cols += self._mult[:, :, None, :] * X[..., :, None, :, :]
        if self._variable:
            grid = self._grid
            ik = 1j * lat.k.T
            for i in sorted({i for i, _ in self._variable}):
                src = np.concatenate([X[..., i, None, :, :], (ik[:, None, :] * X[..., i, None, :, :])],
                                     axis=-3)
                phys = grid.to_physical(src)
                phi, grad = phys[..., 0, :, :, :, :], phys[..., 1:, :, :, :, :]
                for ii, j in self._variable:
                    if ii != i:
                        continue
                    b, c = self._coeff_samples[(i, j)]
                    g = sum(b[l] * grad[..., l, :, :, :, :] for l in range(3)) + c * phi
                    cols[..., i, j, :, :] = grid.to_spectral(g)
        return leray_array(cols, lat)

    def increment(self, cols: np.ndarray, dW: np.ndarray) -> np.ndarray:
        """Sum of columns weighted by the draws dW of shape (..., 2, J)."""
        return np.einsum("...ijck,...ij->...ick", cols, dW)


# ---------------------------------------------------------------------------
# driving noise


@dataclass(frozen=True)
class WienerIncrement:
    dt: float
    draws: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        d = np.asarray(self.draws, float)
        if d.ndim != 2 or d.shape[0] != 2:
            raise ValueError("draws must have shape (2, J)")
        object.__setattr__(self, "draws", d)

    @property
    def J(self) -> int:
        return self.draws.shape[1]


@dataclass
class RngStream:
    """Per-path stream; the draws of step ``s`` depend only on (seed, path, s)."""

    seed: int
    path: int
    step: int = dc_field(default=0)

    def draws_at(self, step: int, dt: float, J: int) -> np.ndarray:
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, self.path, step])))
        return np.sqrt(dt) * gen.standard_normal((2, J))

    def next(self, dt: float, J: int) -> np.ndarray:
        d = self.draws_at(self.step, dt, J)
        self.step += 1
        return d


def sample_increment(dt: float, model: NoiseModel, stream: RngStream) -> WienerIncrement:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return WienerIncrement(dt, stream.next(dt, model.J))


def apply_G(t: float, phi: State, model: NoiseModel, increment: WienerIncrement) -> State:
    """Projected noise increment ``P_n G(phi) dW`` (the coefficients do not depend on t)."""
    if increment.J != model.J:
        raise ValueError(f"increment has {increment.J} directions, model has {model.J}")
    op = NoiseOperator(model, phi.lattice)
    cols = op.columns(phi.as_array())
    return State.from_array(phi.lattice, op.increment(cols, increment.draws))


def noise_columns(phi: State, model: NoiseModel) -> list[State]:
    """All 2J columns as states, field-1 directions first."""
    op = NoiseOperator(model, phi.lattice)
    cols = op.columns(phi.as_array())
    lat = phi.lattice
    out = []
    for i in range(2):
        for j in range(model.J):
            arr = np.zeros((2, 3, lat.mode_count), complex)
            arr[i] = cols[i, j]
            out.append(State.from_array(lat, arr))
    return out


def hs_norm_sq(t: float, phi: State, model: NoiseModel) -> float:
    op = NoiseOperator(model, phi.lattice)
    cols = op.columns(phi.as_array())
    return float(phi.lattice.parseval_weight * np.sum(np.abs(cols) ** 2))


def growth_bound(phi: State, cert: Certificate, params) -> float:
    """``(2 - eta) ||phi||^2 + lambda |phi|^2 + varrho`` with the viscosity-weighted Dirichlet form."""
    from .spectral import inner_product_dirichlet, inner_product_H

    return ((2 - cert.eta) * inner_product_dirichlet(phi, phi, params.nu1, params.nu2)
            + cert.lam * inner_product_H(phi, phi) + cert.varrho)


def scalar_field(lattice: ModeLattice, series: FourierSeries) -> np.ndarray:
    """Samples of a coefficient function on the lattice grid (for plotting)."""
    return series(lattice.grid(), lattice.L)
