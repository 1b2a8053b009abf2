"""Self-checks of the algebraic identities, the oracles and the cut-off estimates."""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from . import oracle
from .operators import (
    PhysicsParams,
    form_b,
    form_hall,
    form_mhd,
    form_thall,
    map_B,
    map_Hall,
    map_MHD,
    map_tHall,
    stokes_apply,
)
from .spectral import (
    SobolevIndex,
    SpectralField,
    cutoff,
    derivative,
    forward_transform,
    inner,
    inner_product_H,
    inner_product_dirichlet,
    make_lattice,
    product_grid,
    random_field,
    random_state,
    sobolev_norm,
)

TOL = 1e-10


def _h(f, s):
    return sobolev_norm(f, SobolevIndex(s))


def _sup(f) -> float:
    return float(np.abs(product_grid(f.lattice).to_physical(f.coeffs)).max())


def _l2(f) -> float:
    return _h(f, 0)


def _grad(f) -> float:
    lat = f.lattice
    return float(np.sqrt(lat.parseval_weight * np.sum(lat.k2 * np.abs(f.coeffs) ** 2)))


def identity_residuals(lattice, rng: np.random.Generator, params: PhysicsParams) -> dict[str, float]:
    """Residuals of the cancellation identities for one random draw.

    Each residual is divided by a Hoelder bound on the terms involved
    (sup norm times L2 norms), so 1e-10 means cancellation to 1e-10 of
    the size the terms could have.
    """
    u, v, w = (random_field(lattice, rng) for _ in range(3))
    X = random_state(lattice, rng)
    cv = derivative(v, "curl")
    su, sB = _sup(u), _sup(X.B)
    gu, gv, gw = _grad(u), _grad(v), _grad(w)
    hall_uuv = form_hall(u, u, v)
    b_uu_cv = form_b(u, u, cv)
    AX = inner_product_H(stokes_apply(X, params), X)
    D = inner_product_dirichlet(X, X, params.nu1, params.nu2)
    mhd_scale = ((_sup(X.u) + sB) * (_grad(X.u) + _grad(X.B)) * (_l2(X.u) + _l2(X.B)))
    thall_scale = sB * _grad(X.B) ** 2
    return {
        "b(u,v,v)": abs(form_b(u, v, v)) / (su * gv * _l2(v)),
        "hall(u,v,v)": abs(form_hall(u, v, v)) / (su * gv ** 2),
        # the identity as written with a minus sign
        "hall(u,u,v)+b(u,u,curl v)": abs(hall_uuv + b_uu_cv) / (2 * su * gu * gv),
        # the identity that follows from u x curl u = grad|u|^2/2 - (u.grad)u
        "hall(u,u,v)-b(u,u,curl v)": abs(hall_uuv - b_uu_cv) / (2 * su * gu * gv),
        "<MHD(X),X>": abs(inner_product_H(map_MHD(X), X)) / mhd_scale,
        "<tHall(X),X>": abs(inner_product_H(map_tHall(X), X)) / thall_scale,
        "<AX,X>-dirichlet": abs(AX - D) / max(abs(D), 1e-300),
        "b antisymmetry": abs(form_b(u, w, v) + form_b(u, v, w)) / (su * (gw * _l2(v) + gv * _l2(w))),
        "hall antisymmetry": abs(form_hall(u, w, v) + form_hall(u, v, w)) / (2 * su * gw * gv),
        "map_B pairing": abs(inner(map_B(u, w), v) - form_b(u, w, v)) / (su * gw * _l2(v)),
        "map_Hall pairing": abs(inner(map_Hall(u, w), v) - form_hall(u, w, v)) / (su * gw * gv),
        "mhd form/map": abs(inner_product_H(map_MHD(X), X) - form_mhd(X, X, X)) / mhd_scale,
        "thall form/map": abs(inner_product_H(map_tHall(X), X) - form_thall(X, X, X)) / thall_scale,
    }


def identity_suite(seeds: int = 100, N: int = 16, n: float = 5.0, L: float = 2 * np.pi) -> dict:
    lat = make_lattice(N, L, n)
    params = PhysicsParams(0.1, 0.07)
    worst: dict[str, float] = {}
    for s in range(seeds):
        for k, v in identity_residuals(lat, np.random.default_rng(s), params).items():
            worst[k] = max(worst.get(k, 0.0), v)
    return worst


def oracle_residuals(lattice, rng: np.random.Generator) -> dict[str, float]:
    u, v, w = (random_field(lattice, rng) for _ in range(3))
    samples = rng.standard_normal((3,) + (lattice.N,) * 3)
    full = sfft.fftn(samples, axes=(1, 2, 3), norm="ortho")
    direct = oracle.dft_direct(samples)
    fwd = forward_transform(samples, lattice)
    m = lattice.indices % lattice.N
    sel = direct[:, m[:, 0], m[:, 1], m[:, 2]]

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    return {
        "fft vs direct dft": float(np.abs(full - direct).max() / np.abs(direct).max()),
        "forward_transform vs direct": float(np.abs(fwd.coeffs - sel).max() / np.abs(sel).max()),
        "form_b": rel(form_b(u, w, v), oracle.form_b_direct(u, w, v)),
        "form_hall": rel(form_hall(u, w, v), oracle.form_hall_direct(u, w, v)),
        "map_Hall pairing": rel(inner(map_Hall(u, w), v), oracle.hall_pairing_direct(u, w, v)),
        "inner": rel(inner(u, v), oracle.inner_direct(u, v)),
    }


def oracle_suite(seeds: int = 100, N: int = 4, n: float = 1.0, L: float = 2 * np.pi) -> dict:
    lat = make_lattice(N, L, n)
    worst: dict[str, float] = {}
    for s in range(seeds):
        for k, v in oracle_residuals(lat, np.random.default_rng(s)).items():
            worst[k] = max(worst.get(k, 0.0), v)
    return worst


def power_law_field(lattice, exponent: float) -> SpectralField:
    """Real field with coefficient modulus (1+|k|^2)^(-exponent/2), k = 0 excluded."""
    c = np.zeros((3, lattice.mode_count), complex)
    amp = (1.0 + lattice.k2) ** (-exponent / 2)
    amp[lattice.k2 == 0] = 0.0
    c[0] = amp
    return SpectralField(lattice, c)


def cutoff_law(k0: float, s: float = 1.0, extra: float = 1.0, n_list=(2, 4, 8, 16), R: float = 64.0,
               L: float = 2 * np.pi) -> dict:
    """Tail norms ``||S_n u - u||^2_{H^s}`` for ``u`` with coefficients (1+|k|^2)^(-(s+k0)/2-extra).

    ``u`` lives on a lattice of radius ``R`` well beyond the largest cut-off.
    Returns the fitted slope against (1+n^2) and the bound ratios.
    """
    N = int(np.ceil(R * L / np.pi + 1))
    N += N % 2
    lat = make_lattice(N, L, R)
    u = power_law_field(lat, s + k0 + 2 * extra)
    total = sobolev_norm(u, SobolevIndex(s + k0)) ** 2
    tails, ratios = [], []
    for n in n_list:
        tail = sobolev_norm(u - cutoff(u, n), SobolevIndex(s)) ** 2
        tails.append(tail)
        ratios.append(tail / ((1 + n * n) ** (-k0) * total))
    slope = float(np.polyfit(np.log(1 + np.asarray(n_list, float) ** 2), np.log(tails), 1)[0])
    return {"k0": k0, "n": list(n_list), "tail_sq": tails, "bound_ratio": ratios, "slope": slope}


def sandwich_suite(seeds: int = 100, N: int = 16, n: float = 5.0, s_list=(0.5, 1.0, 2.0),
                   L: float = 2 * np.pi) -> dict:
    """Worst violations of ``|u| <= ||u||_{H^s} <= (1+n^2)^{s/2} |u|`` (positive means violated)."""
    lat = make_lattice(N, L, n)
    lower = upper = -np.inf
    for seed in range(seeds):
        u = random_field(lat, np.random.default_rng(seed), solenoidal=False)
        h0 = sobolev_norm(u, 0.0)
        for s in s_list:
            hs = sobolev_norm(u, s)
            lower = max(lower, (h0 - hs) / h0)
            upper = max(upper, (hs - (1 + n * n) ** (s / 2) * h0) / h0)
    return {"lower": float(lower), "upper": float(upper)}


def run_all(seeds: int = 20) -> dict:
    ids = identity_suite(seeds)
    orc = oracle_suite(seeds)
    laws = [cutoff_law(k0) for k0 in (1.0, 2.0)]
    sand = sandwich_suite(seeds)
    checks = {f"identity {k}": v <= TOL for k, v in ids.items() if k != "hall(u,u,v)+b(u,u,curl v)"}
    checks.update({f"oracle {k}": v <= TOL for k, v in orc.items()})
    for law in laws:
        checks[f"cutoff slope k0={law['k0']:g}"] = law["slope"] <= -law["k0"] + 0.05
        checks[f"cutoff bound k0={law['k0']:g}"] = max(law["bound_ratio"]) <= 1 + 1e-12
    checks["sandwich"] = sand["lower"] <= 1e-12 and sand["upper"] <= 1e-12
    return {
        "identities": ids,
        "oracles": orc,
        "cutoff_law": laws,
        "sandwich": sand,
        "checks": checks,
        "notes": {"hall(u,u,v)+b(u,u,curl v)": "minus-sign form of the Hall/convection identity; "
                  "reported, not checked (see README)"},
        "passed": all(checks.values()),
    }
