"""Trilinear forms, their Riesz maps, the Stokes operator and the projected right-hand side.

Forms are evaluated by exact quadrature on a zero-padded grid: the integrand is
a trigonometric polynomial of bounded degree, so the trapezoidal sum on a grid
with more than three times the index bandwidth is exact up to round-off.

Maps return the Riesz representative in the divergence-free truncated space:
the pointwise product is transformed back, restricted to the retained modes and
Leray-projected.  With the L2 inner product this coefficient field pairs with
every truncated test field exactly as the form does.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .spectral import (
    LatticeError,
    ModeLattice,
    SpectralField,
    State,
    curl_array,
    cutoff,
    inner_product_H,
    leray_array,
    norm_H,
    norm_V,
    product_grid,
    sobolev_norm,
    SobolevIndex,
    _check_same,
)


@dataclass(frozen=True)
class PhysicsParams:
    nu1: float
    nu2: float
    s_hartmann: float = 1.0
    eps_hall: float = 1.0

    def __post_init__(self):
        if not self.nu1 > 0 or not self.nu2 > 0:
            raise ValueError("viscosity and resistivity must be positive")
        if self.eps_hall < 0:
            raise ValueError("Hall parameter must be non-negative")


@dataclass(frozen=True)
class DualPairing:
    value: float
    test_space_order: SobolevIndex


# ---------------------------------------------------------------------------
# physical-space helpers on the padded grid


def _physical(c: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    return product_grid(lattice).to_physical(c)


def _grad(c: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    """Samples of d_j w_i, shape (3 [j], 3 [i], M, M, M)."""
    ik = 1j * lattice.k.T[:, None, :]
    return _physical(ik * c[None], lattice)


def _quad(f: np.ndarray, lattice: ModeLattice) -> float:
    M = f.shape[-1]
    return float((lattice.L / M) ** 3 * np.sum(f))


def _to_lattice_coeffs(f: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    return product_grid(lattice).to_spectral(f)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _advect(u: SpectralField, w: SpectralField) -> np.ndarray:
    """Samples of (u.grad) w."""
    lat = u.lattice
    U = _physical(u.coeffs, lat)
    G = _grad(w.coeffs, lat)
    return np.einsum("j...,ji...->i...", U, G)


def _same(*fields: SpectralField) -> ModeLattice:
    lat = fields[0].lattice
    for f in fields[1:]:
        _check_same(lat, f.lattice)
    return lat


# ---------------------------------------------------------------------------
# convection


def form_b(u: SpectralField, w: SpectralField, v: SpectralField) -> float:
    """Integral of (u.grad w).v over the box."""
    lat = _same(u, w, v)
    return _quad(np.sum(_advect(u, w) * _physical(v.coeffs, lat), axis=0), lat)


def map_B(u: SpectralField, w: SpectralField) -> SpectralField:
    lat = _same(u, w)
    c = _to_lattice_coeffs(_advect(u, w), lat)
    return SpectralField(lat, leray_array(c, lat), True)


# ---------------------------------------------------------------------------
# Hall term


def form_hall(u: SpectralField, w: SpectralField, v: SpectralField) -> float:
    """Minus the integral of (u x curl w).curl v."""
    lat = _same(u, w, v)
    U = _physical(u.coeffs, lat)
    CW = _physical(curl_array(w.coeffs, lat), lat)
    CV = _physical(curl_array(v.coeffs, lat), lat)
    return -_quad(np.sum(_cross(U, CW) * CV, axis=0), lat)


def map_Hall(u: SpectralField, w: SpectralField) -> SpectralField:
    lat = _same(u, w)
    U = _physical(u.coeffs, lat)
    CW = _physical(curl_array(w.coeffs, lat), lat)
    E = _to_lattice_coeffs(_cross(U, CW), lat)
    return SpectralField(lat, leray_array(-curl_array(E, lat), lat), True)


# ---------------------------------------------------------------------------
# MHD pair operators


def form_mhd(p1: State, p2: State, p3: State) -> float:
    return (form_b(p1.u, p2.u, p3.u) - form_b(p1.B, p2.B, p3.u)
            + form_b(p1.u, p2.B, p3.B) - form_b(p1.B, p2.u, p3.B))


def map_MHD(phi: State, psi: State | None = None, s_hartmann: float = 1.0) -> State:
    """Riesz map of the MHD form; ``s_hartmann`` weights the Lorentz force."""
    psi = phi if psi is None else psi
    vel = map_B(phi.u, psi.u) - s_hartmann * map_B(phi.B, psi.B)
    mag = map_B(phi.u, psi.B) - map_B(phi.B, psi.u)
    return State(vel, mag)


def form_thall(p1: State, p2: State, p3: State) -> float:
    return form_hall(p1.B, p2.B, p3.B)


def map_tHall(phi: State, psi: State | None = None) -> State:
    psi = phi if psi is None else psi
    return State(SpectralField.zeros(phi.lattice), map_Hall(phi.B, psi.B))


def stokes_multiplier(lattice: ModeLattice, params: PhysicsParams) -> np.ndarray:
    """Diagonal of the Stokes operator, shape (2, 1, n_modes)."""
    return np.stack([params.nu1 * lattice.k2, params.nu2 * lattice.k2])[:, None, :]


def stokes_apply(phi: State, params: PhysicsParams) -> State:
    lat = phi.lattice
    return State.from_array(lat, stokes_multiplier(lat, params) * phi.as_array())


# ---------------------------------------------------------------------------
# batched kernel used by the time stepper


def nonlinear_kernel(X: np.ndarray, lattice: ModeLattice, s_hartmann: float = 1.0,
                     eps_hall: float = 1.0, convection: bool = True,
                     hall: bool = True) -> np.ndarray:
    """Projected ``B_n(X) + eps * H_n(X)`` for divergence-free states.

    ``X`` has shape (..., 2, 3, n_modes).  Relies on div u = div B = 0 so that
    convection terms can be written as divergences of tensor products, which
    needs nine inverse and nine forward transforms.
    """
    out = np.zeros_like(X)
    if not (convection or (hall and eps_hall != 0)):
        return out
    grid = product_grid(lattice)
    k = lattice.k.T
    lead = X.shape[:-3]
    use_hall = hall and eps_hall != 0
    src = [X[..., 0, :, :], X[..., 1, :, :]]
    if use_hall:
        src.append(curl_array(X[..., 1, :, :], lattice))
    phys = grid.to_physical(np.stack(src, axis=-3))
    U, Bf = phys[..., 0, :, :, :, :], phys[..., 1, :, :, :, :]
    U = np.moveaxis(U, -4, 0)
    Bf = np.moveaxis(Bf, -4, 0)
    prods = []
    if convection:
        pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
        for i, j in pairs:
            prods.append(U[i] * U[j] - s_hartmann * Bf[i] * Bf[j])
        E = _cross(U, Bf)
    else:
        E = np.zeros_like(Bf)
    if use_hall:
        Jf = np.moveaxis(phys[..., 2, :, :, :, :], -4, 0)
        E = E + eps_hall * _cross(Bf, Jf)
    prods.extend([E[0], E[1], E[2]])
    spec = grid.to_spectral(np.stack(prods, axis=len(lead)))
    if convection:
        T = {}
        for idx, (i, j) in enumerate([(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]):
            T[(i, j)] = T[(j, i)] = spec[..., idx, :]
        vel = np.stack([sum(1j * k[j] * T[(i, j)] for j in range(3)) for i in range(3)], axis=-2)
        out[..., 0, :, :] = leray_array(vel, lattice)
        Ec = spec[..., 6:9, :]
    else:
        Ec = spec[..., 0:3, :]
    out[..., 1, :, :] = -curl_array(Ec, lattice)
    return out


# ---------------------------------------------------------------------------
# projected right-hand side


def _check_support(phi: State, n: float) -> None:
    outside = ~phi.lattice.mask(n)
    if np.any(phi.u.coeffs[:, outside] != 0) or np.any(phi.B.coeffs[:, outside] != 0):
        raise LatticeError(f"state has modes outside the ball |k| <= {n}")


def project_rhs(n: float, phi: State, params: PhysicsParams, forcing: State | None = None) -> State:
    """``A_n + B_n + R_n - f_n`` evaluated at ``phi``."""
    _check_support(phi, n)
    lat = phi.lattice
    A = stokes_apply(phi, params)
    N = nonlinear_kernel(phi.as_array(), lat, params.s_hartmann, params.eps_hall)
    out = A.as_array() + N
    if forcing is not None:
        _check_same(lat, forcing.lattice)
        out = out - leray_array(forcing.as_array(), lat)
    out = out * lat.mask(n)
    return State.from_array(lat, out)


# ---------------------------------------------------------------------------
# dual norms and empirical constants


def dual_norm(field: SpectralField, m: float = 1.0) -> float:
    """Norm with weight (1+|k|^2)^(-m), the truncated H^{-m} norm."""
    return sobolev_norm(field, SobolevIndex(m, -1))


def dual_norm_state(phi: State, m: float = 1.0) -> float:
    return float(np.hypot(dual_norm(phi.u, m), dual_norm(phi.B, m)))


def pairing(F: State, psi: State, order: float = 1.0) -> DualPairing:
    return DualPairing(inner_product_H(F, psi), SobolevIndex(order))


def empirical_operator_norms(lattice: ModeLattice, params: PhysicsParams, rng: np.random.Generator,
                             samples: int = 32, m: float = 3.0,
                             extra_pairs: list[tuple[State, State]] | None = None) -> dict:
    """Largest observed ratios for the bilinear continuity bounds.

    ``mhd``: ||MHD(phi, psi)||_{V'} / (||phi||_V ||psi||_V)
    ``thall``: ||tHall(phi, psi)||_{V_m'} / (|phi|_H ||psi||_V)
    ``hall``: ||Hall(u, w)||_{V'} / (||u||_{H1} ||w||_{H1})
    """
    from .spectral import random_state

    pairs = [(random_state(lattice, rng), random_state(lattice, rng)) for _ in range(samples)]
    if extra_pairs:
        pairs.extend(extra_pairs)
    nu = (params.nu1, params.nu2)
    best = {"mhd": 0.0, "thall": 0.0, "hall": 0.0}
    for a, b in pairs:
        va, vb = norm_V(a, *nu), norm_V(b, *nu)
        if va == 0 or vb == 0:
            continue
        best["mhd"] = max(best["mhd"], dual_norm_state(map_MHD(a, b), 1.0) / (va * vb))
        ha = norm_H(a)
        if ha > 0:
            best["thall"] = max(best["thall"], dual_norm_state(map_tHall(a, b), m) / (ha * vb))
        h1a, h1b = sobolev_norm(a.B, 1.0), sobolev_norm(b.B, 1.0)
        if h1a > 0 and h1b > 0:
            best["hall"] = max(best["hall"], dual_norm(map_Hall(a.B, b.B), 1.0) / (h1a * h1b))
    return best


def constants_report(lattice: ModeLattice, params: PhysicsParams, norms: dict, m: float = 3.0) -> str:
    rows = []
    for name, value in norms.items():
        rows.append({
            "operator": name,
            "empirical_norm": value,
            "N": lattice.N,
            "L": lattice.L,
            "n": lattice.n,
            "dual_order": m if name == "thall" else 1.0,
            "nu1": params.nu1,
            "nu2": params.nu2,
        })
    return json.dumps(rows, indent=2)


def lipschitz_witness(phi: State, phi_t: State, params: PhysicsParams, op_norm: float,
                      operator: str = "mhd", m: float = 3.0) -> tuple[float, float]:
    """Return (observed difference, bound 2 r ||op|| ||phi - phi_t||_V)."""
    nu = (params.nu1, params.nu2)
    r = max(norm_V(phi, *nu), norm_V(phi_t, *nu))
    d = norm_V(phi - phi_t, *nu)
    if operator == "mhd":
        lhs = dual_norm_state(map_MHD(phi) - map_MHD(phi_t), 1.0)
    elif operator == "thall":
        lhs = dual_norm_state(map_tHall(phi) - map_tHall(phi_t), m)
    else:
        raise ValueError(f"unknown operator {operator!r}")
    return lhs, 2 * r * op_norm * d


def cutoff_state_to(phi: State, n: float) -> State:
    return State(cutoff(phi.u, n), cutoff(phi.B, n))
