"""Brute-force references for small instances.

Nothing here calls the FFT-based code: transforms are explicit exponential
sums, derivatives are taken term by term before sampling, and integrals are
trapezoidal sums on an oversampled grid (exact for trigonometric polynomials
of the degrees involved).  Fields are read only as raw (indices, coefficients).
"""
from __future__ import annotations

import numpy as np

MAX_DFT_N = 8
MAX_WORK = 4e8


class CostGuardError(ValueError):
    pass


def _raw(field):
    lat = field.lattice
    return (np.asarray(lat.indices, float), np.asarray(field.coeffs), float(lat.L), int(lat.N))


def dft_direct(samples: np.ndarray) -> np.ndarray:
    """Unitary 3-D DFT by nested sums; accepts (N, N, N) or (c, N, N, N)."""
    x = np.asarray(samples, dtype=complex)
    scalar = x.ndim == 3
    if scalar:
        x = x[None]
    N = x.shape[-1]
    if N > MAX_DFT_N:
        raise CostGuardError(f"direct DFT limited to N <= {MAX_DFT_N}")
    out = np.zeros_like(x)
    for c in range(x.shape[0]):
        for a in range(N):
            for b in range(N):
                for d in range(N):
                    acc = 0j
                    for i in range(N):
                        for j in range(N):
                            for k in range(N):
                                acc += x[c, i, j, k] * np.exp(-2j * np.pi * (a * i + b * j + d * k) / N)
                    out[c, a, b, d] = acc
    out /= N ** 1.5
    return out[0] if scalar else out


def _points(L: float, M: int) -> np.ndarray:
    x = L * np.arange(M) / M
    return np.stack(np.meshgrid(x, x, x, indexing="ij")).reshape(3, -1)


def evaluate(field, points: np.ndarray, derivative: tuple[int, ...] = ()) -> np.ndarray:
    """Field (or a partial derivative) at arbitrary points by explicit summation.

    ``derivative`` lists the axes to differentiate along, e.g. ``(0, 2)``.
    Returns shape (3, n_points).
    """
    idx, coeffs, L, N = _raw(field)
    k = 2 * np.pi * idx / L
    if idx.shape[0] * points.shape[1] > MAX_WORK:
        raise CostGuardError("direct evaluation too large")
    mult = np.ones(len(k), complex)
    for ax in derivative:
        mult = mult * 1j * k[:, ax]
    phase = np.exp(1j * (k @ points))
    vals = (coeffs * mult) @ phase
    return (vals / N ** 1.5).real


def _curl(field, pts):
    d = [[evaluate(field, pts, (j,))[i] for i in range(3)] for j in range(3)]  # d[j][i] = d_j f_i
    return np.stack([d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]])


def _grid_size(*fields, factor: int = 4) -> int:
    return factor * max(f.lattice.N for f in fields)


def form_b_direct(u, w, v, factor: int = 4) -> float:
    """Integral of (u.grad w).v by trapezoidal quadrature on a grid ``factor`` times finer."""
    L = u.lattice.L
    M = _grid_size(u, w, v, factor=factor)
    pts = _points(L, M)
    U = evaluate(u, pts)
    V = evaluate(v, pts)
    integrand = np.zeros(pts.shape[1])
    for j in range(3):
        integrand += U[j] * np.sum(evaluate(w, pts, (j,)) * V, axis=0)
    return float((L / M) ** 3 * integrand.sum())


def form_hall_direct(u, w, v, factor: int = 4) -> float:
    """Minus the integral of (u x curl w).curl v."""
    L = u.lattice.L
    M = _grid_size(u, w, v, factor=factor)
    pts = _points(L, M)
    U = evaluate(u, pts)
    CW = _curl(w, pts)
    CV = _curl(v, pts)
    cross = np.stack([U[1] * CW[2] - U[2] * CW[1], U[2] * CW[0] - U[0] * CW[2], U[0] * CW[1] - U[1] * CW[0]])
    return float(-(L / M) ** 3 * np.sum(cross * CV))


def hall_pairing_direct(u, w, v, factor: int = 4) -> float:
    """Integral of -curl(u x curl w).v, expanding the curl of the cross product.

    With a = u and b = curl w (so div b = 0):
    curl(a x b) = -b div a + (b.grad) a - (a.grad) b.
    """
    L = u.lattice.L
    M = _grid_size(u, w, v, factor=factor)
    pts = _points(L, M)
    U = evaluate(u, pts)
    V = evaluate(v, pts)
    dU = [evaluate(u, pts, (j,)) for j in range(3)]
    divu = sum(dU[j][j] for j in range(3))
    # curl w and its derivatives from second derivatives of w
    d2 = {(a, b): evaluate(w, pts, (a, b)) for a in range(3) for b in range(3)}
    d1 = [evaluate(w, pts, (j,)) for j in range(3)]
    CW = np.stack([d1[1][2] - d1[2][1], d1[2][0] - d1[0][2], d1[0][1] - d1[1][0]])
    dCW = [np.stack([d2[(j, 1)][2] - d2[(j, 2)][1], d2[(j, 2)][0] - d2[(j, 0)][2],
                     d2[(j, 0)][1] - d2[(j, 1)][0]]) for j in range(3)]
    curl_cross = -CW * divu
    for j in range(3):
        curl_cross = curl_cross + CW[j] * dU[j] - U[j] * dCW[j]
    return float(-(L / M) ** 3 * np.sum(curl_cross * V))


def inner_direct(a, b, factor: int = 2) -> float:
    """L2 inner product by quadrature of the sampled fields."""
    L = a.lattice.L
    M = _grid_size(a, b, factor=factor)
    pts = _points(L, M)
    return float((L / M) ** 3 * np.sum(evaluate(a, pts) * evaluate(b, pts)))


def trig_series(terms: list[dict], L: float, pts: np.ndarray) -> np.ndarray:
    out = np.zeros(pts.shape[1])
    for t in terms:
        ph = (2 * np.pi / L) * np.asarray(t["m"], float) @ pts
        out += t.get("cos", 0.0) * np.cos(ph) + t.get("sin", 0.0) * np.sin(ph)
    return out


def coercivity_scan(b_terms: list[list[list[dict]]], L: float, M: int) -> float:
    """min over an M^3 grid of the smallest eigenvalue of 2 I - sum_j b_j b_j^T.

    ``b_terms[j][c]`` is the term list of component c of direction j.
    """
    pts = _points(L, M)
    best = np.inf
    vals = [[trig_series(b_terms[j][c], L, pts) for c in range(3)] for j in range(len(b_terms))]
    for p in range(pts.shape[1]):
        A = 2 * np.eye(3)
        for j in range(len(b_terms)):
            b = np.array([vals[j][c][p] for c in range(3)])
            A -= np.outer(b, b)
        best = min(best, float(np.linalg.eigvalsh(A)[0]))
    return best
