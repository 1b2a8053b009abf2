"""Monte Carlo estimators over ensembles.

Every estimator returns a value together with its standard error and the
number of paths.  Pass/fail decisions are left to the caller.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .integrator import EnsembleResult, SimConfig, TrajectoryRecord, run_ensemble, simulate_path
from .operators import map_MHD, map_tHall
from .spectral import (
    State,
    inner_product_H,
    make_lattice,
    norm_H,
    state_to_lattice,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n_paths: int
    ci: tuple[float, float] = (np.nan, np.nan)

    def overlaps(self, other: "Estimate") -> bool:
        return self.ci[0] <= other.ci[1] and other.ci[0] <= self.ci[1]

    def as_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "n_paths": self.n_paths, "ci95": list(self.ci)}


def bootstrap(samples: np.ndarray, stat: Callable[[np.ndarray], float] = np.mean, n_boot: int = 2000,
              seed: int = 0, level: float = 0.95) -> Estimate:
    """Point estimate, bootstrap standard error and percentile interval.

    Resampling is seeded so repeated calls on the same data agree exactly.
    """
    x = np.asarray(samples, float)
    n = len(x)
    value = float(stat(x))
    if n < 2:
        return Estimate(value, 0.0, n, (value, value))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n])))
    idx = rng.integers(0, n, size=(n_boot, n))
    reps = np.array([stat(x[i]) for i in idx])
    a = (1 - level) / 2
    lo, hi = np.quantile(reps, [a, 1 - a])
    return Estimate(value, float(reps.std(ddof=1)), n, (float(lo), float(hi)))


def mean_estimate(samples: np.ndarray) -> Estimate:
    """Sample mean with the CLT standard error and a normal 95% interval."""
    x = np.asarray(samples, float)
    n = len(x)
    m = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(m, se, n, (m - 1.96 * se, m + 1.96 * se))


def _left_integral(series: np.ndarray, dt: float) -> np.ndarray:
    """Left Riemann sums of (..., S+1) samples, returned at every grid time."""
    out = np.zeros(series.shape)
    out[..., 1:] = dt * np.cumsum(series[..., :-1], axis=-1)
    return out


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentConfig:
    p: float
    q_list: tuple[float, ...] = (2.0,)
    gamma: float = np.inf

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if not self.p < 2 + self.gamma:
            raise ValueError(f"p={self.p} violates p < 2 + gamma = {2 + self.gamma}")
        for q in self.q_list:
            if not 2 <= q <= self.p:
                raise ValueError(f"q={q} outside [2, p={self.p}]")

    @classmethod
    def from_eta(cls, eta: float, p: float, q_list=(2.0,)) -> "MomentConfig":
        gamma = np.inf if eta >= 2 else eta / (2 - eta)
        return cls(p, tuple(q_list), gamma)


@dataclass
class EstimateReport:
    n: float
    estimates: dict[str, Estimate]
    dt: float
    T: float
    n_paths: int
    schema_version: int = SCHEMA_VERSION

    def as_dict(self) -> dict:
        return {"schema_version": self.schema_version, "n": self.n, "dt": self.dt, "T": self.T,
                "n_paths": self.n_paths,
                "estimates": {k: v.as_dict() for k, v in self.estimates.items()}}


def path_functionals(ens: EnsembleResult, q: float) -> dict[str, np.ndarray]:
    dt = ens.config.dt
    H = ens.stack("energy_H")
    V = ens.stack("energy_V")
    absX = np.sqrt(H)
    return {
        f"sup_abs_pow_{q:g}": np.max(absX ** q, axis=1),
        "int_dirichlet": dt * np.sum(V[:, :-1], axis=1),
        "int_V_norm_sq": dt * np.sum(H[:, :-1] + V[:, :-1], axis=1),
        f"int_abs_pow_{q - 2:g}_dirichlet": dt * np.sum(absX[:, :-1] ** (q - 2) * V[:, :-1], axis=1),
    }


def moment_estimates(ens: EnsembleResult, cfg: MomentConfig, n_boot: int = 2000, seed: int = 0) -> EstimateReport:
    est: dict[str, Estimate] = {}
    for q in cfg.q_list:
        if not 2 <= q <= cfg.p:
            raise ValueError(f"q={q} outside [2, p]")
        for name, x in path_functionals(ens, q).items():
            if name not in est:
                est[name] = bootstrap(x, n_boot=n_boot, seed=seed)
    c = ens.config
    return EstimateReport(c.lattice.n, est, c.dt, c.T, ens.n_paths)


def consecutive_trend(reports: Sequence[EstimateReport], key: str) -> list[dict]:
    """For consecutive cut-offs: CI overlap and whether the larger-n estimate is smaller."""
    rows = []
    for a, b in zip(reports[:-1], reports[1:]):
        ea, eb = a.estimates[key], b.estimates[key]
        rows.append({"n_pair": [a.n, b.n], "values": [ea.value, eb.value],
                     "overlap": ea.overlaps(eb), "decreasing": eb.value <= ea.value})
    return rows


# ---------------------------------------------------------------------------
# energy balance


def energy_balance_residual(record: TrajectoryRecord, cfg: SimConfig) -> np.ndarray:
    """``|X(t)|^2 - |X0|^2 + 2 int ||X||^2 - 2 int <f,X> - int ||G||_HS^2 - 2 int <X, G dW>``."""
    dt = cfg.dt
    H = record.energy_H
    out = H - H[0]
    out = out + 2 * _left_integral(record.energy_V, dt)
    cum = np.zeros_like(H)
    cum[1:] = np.cumsum(-2 * dt * record.forcing_work - dt * record.hs - 2 * record.noise_work)
    return out + cum


def richardson_slope(dts: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    return float(np.polyfit(np.log(dts), np.log(np.abs(errors)), 1)[0])


def energy_balance_study(cfg: SimConfig, dts: Sequence[float], path: int = 0) -> dict:
    """Final-time residual for each ``dt`` and the fitted order."""
    res = []
    for dt in dts:
        c = cfg.replace(dt=dt)
        r = simulate_path(c, path)
        res.append(float(abs(energy_balance_residual(r, c)[-1])))
    return {"dts": list(dts), "residuals": res, "slope": richardson_slope(dts, res)}


def stochastic_integral_mean(ens: EnsembleResult) -> Estimate:
    """Mean over paths of the final value of ``int <X, G dW>`` (zero for a martingale)."""
    return mean_estimate(ens.stack("noise_work").sum(axis=1))


# ---------------------------------------------------------------------------
# Aldous-type increments


def _snap_index(record: TrajectoryRecord, t: float, dt: float) -> int:
    hits = np.flatnonzero(np.abs(record.snapshot_times - t) < 0.5 * dt)
    if not len(hits):
        raise ValueError(f"no snapshot at t={t}")
    return int(hits[0])


def increment_norms(ens: EnsembleResult, thetas: Sequence[float], base_times: Sequence[float],
                    m: float = 3.0) -> np.ndarray:
    """``||X(t + theta) - X(t)||_{H^-m}`` per path, theta and base time."""
    cfg = ens.config
    T, dt = cfg.T, cfg.dt
    lat = cfg.lattice
    w = lat.parseval_weight * (1 + lat.k2) ** (-m)
    out = np.zeros((ens.n_paths, len(thetas), len(base_times)))
    for ti, th in enumerate(thetas):
        for bi, t0 in enumerate(base_times):
            if t0 + th > T + 1e-12:
                raise ValueError(f"theta={th} from t={t0} exceeds T={T}")
    for p, r in enumerate(ens.records):
        for bi, t0 in enumerate(base_times):
            a = r.states[_snap_index(r, t0, dt)]
            for ti, th in enumerate(thetas):
                d = r.states[_snap_index(r, t0 + th, dt)] - a
                out[p, ti, bi] = np.sqrt(np.sum(w * np.abs(d) ** 2))
    return out


@dataclass
class AldousReport:
    thetas: list[float]
    mean_increment: list[Estimate]
    beta: Estimate
    C: Estimate
    n: float
    schema_version: int = SCHEMA_VERSION

    def as_dict(self) -> dict:
        return {"schema_version": self.schema_version, "n": self.n, "thetas": self.thetas,
                "mean_increment": [e.as_dict() for e in self.mean_increment],
                "beta": self.beta.as_dict(), "C": self.C.as_dict()}


def _fit_power(thetas: np.ndarray, means: np.ndarray) -> tuple[float, float]:
    slope, icpt = np.polyfit(np.log(thetas), np.log(means), 1)
    return float(slope), float(np.exp(icpt))


def aldous_increments(ens: EnsembleResult, thetas: Sequence[float], m: float = 3.0,
                      base_times: Sequence[float] = (0.0,), n_boot: int = 1000, seed: int = 0) -> AldousReport:
    """Fit ``E ||X(t+theta) - X(t)||_{H^-m} ~ C theta^beta``.

    The stopping times are the deterministic ``base_times``.  Confidence
    intervals come from resampling whole paths.
    """
    th = np.asarray(thetas, float)
    if np.any(th <= 0):
        raise ValueError("theta must be positive")
    inc = increment_norms(ens, th, base_times, m).mean(axis=2)  # (paths, thetas)
    means = inc.mean(axis=0)
    per_theta = [mean_estimate(inc[:, i]) for i in range(len(th))]
    if np.all(means == 0):
        zero = Estimate(0.0, 0.0, ens.n_paths, (0.0, 0.0))
        return AldousReport(list(th), per_theta, Estimate(np.nan, np.nan, ens.n_paths), zero, ens.config.lattice.n)
    beta, C = _fit_power(th, means)
    n = len(inc)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, 17])))
    reps = np.array([_fit_power(th, inc[rng.integers(0, n, n)].mean(axis=0)) for _ in range(n_boot)])
    q = [0.025, 0.975]
    b_ci = tuple(float(v) for v in np.quantile(reps[:, 0], q))
    c_ci = tuple(float(v) for v in np.quantile(reps[:, 1], q))
    return AldousReport(list(th), per_theta,
                        Estimate(beta, float(reps[:, 0].std(ddof=1)), n, b_ci),
                        Estimate(C, float(reps[:, 1].std(ddof=1)), n, c_ci),
                        ens.config.lattice.n)


# ---------------------------------------------------------------------------
# martingale structure


def _step_of(t: float, dt: float) -> int:
    return int(round(t / dt))


def h_family(cap: float = 1.0, psi_index: int = 0) -> dict[str, Callable[[TrajectoryRecord, int], float]]:
    """Bounded functionals of the path up to step ``s``.

    ``const``: 1.  ``energy``: min(|X(s)|^2, cap).  ``low_mode``: clamp of the
    running martingale coordinate along a test function (a functional of the
    path on [0, s]) to [-cap, cap].
    """
    return {
        "const": lambda r, s: 1.0,
        "energy": lambda r, s: float(min(r.energy_H[s], cap)),
        "low_mode": lambda r, s: float(np.clip(r.martingale[s, psi_index], -cap, cap)),
    }


def martingale_residual(ens: EnsembleResult, psi_index: int, s: float, t: float,
                        h: Callable[[TrajectoryRecord, int], float]) -> Estimate:
    """Mean of ``<M(t) - M(s), psi> * h(path up to s)`` with its standard error."""
    dt = ens.config.dt
    if s > t:
        raise ValueError("need s <= t")
    if psi_index >= len(ens.config.test_functions):
        raise ValueError("test function index out of range")
    i, j = _step_of(s, dt), _step_of(t, dt)
    vals = np.array([(r.martingale[j, psi_index] - r.martingale[i, psi_index]) * h(r, i) for r in ens.records])
    return mean_estimate(vals)


def martingale_residual_state(ens: EnsembleResult, psi: State, s: float, t: float,
                              h: Callable[[TrajectoryRecord, int], float]) -> Estimate:
    """As ``martingale_residual`` for a registered test state passed by value."""
    cfg = ens.config
    if psi.lattice != cfg.lattice:
        raise ValueError("test state lives on a different lattice")
    for idx, p in enumerate(cfg.test_functions):
        if np.array_equal(p.as_array(), psi.as_array()):
            return martingale_residual(ens, idx, s, t, h)
    raise ValueError("test state is not registered with the ensemble")


@dataclass
class QVReport:
    realized: Estimate
    predicted: Estimate
    relative_error: float
    difference: Estimate
    stride: int
    coarse: bool

    def as_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "realized": self.realized.as_dict(),
                "predicted": self.predicted.as_dict(), "relative_error": self.relative_error,
                "difference": self.difference.as_dict(), "stride": self.stride, "coarse": self.coarse}


def quadratic_variation_check(ens: EnsembleResult, psi_index: int, zeta_index: int, stride: int = 1,
                              max_stride_fraction: float = 0.02) -> QVReport:
    """Realized covariation of the martingale coordinates against the predicted compensator."""
    cfg = ens.config
    dt = cfg.dt
    Mp = ens.stack("martingale")[:, ::stride, psi_index]
    Mz = ens.stack("martingale")[:, ::stride, zeta_index]
    realized = np.sum(np.diff(Mp, axis=1) * np.diff(Mz, axis=1), axis=1)
    g = ens.stack("g_test")
    S = (g.shape[1] // stride) * stride
    pred = dt * np.sum(np.sum(g[:, :S, psi_index] * g[:, :S, zeta_index], axis=(-2, -1)), axis=1)
    r, p = mean_estimate(realized), mean_estimate(pred)
    rel = abs(r.value - p.value) / abs(p.value) if p.value != 0 else (0.0 if r.value == 0 else np.inf)
    coarse = stride * dt > max_stride_fraction * cfg.T
    return QVReport(r, p, float(rel), mean_estimate(realized - pred), stride, coarse)


# ---------------------------------------------------------------------------
# convergence in the cut-off


def _functionals(ens: EnsembleResult, phi: State) -> dict[str, np.ndarray]:
    """Time integrals of <MHD(X), phi> and <tHall(X), phi> from the snapshots (left sums)."""
    cfg = ens.config
    dt = cfg.dt
    lat = cfg.lattice
    phi_l = state_to_lattice(phi, lat)
    steps = np.round(ens.records[0].snapshot_times / dt).astype(int)
    widths = np.diff(steps) * dt
    out = {"int_mhd": [], "int_thall": []}
    for r in ens.records:
        a = b = 0.0
        for i, wdt in enumerate(widths):
            X = r.state(i)
            a += wdt * inner_product_H(map_MHD(X, s_hartmann=cfg.params.s_hartmann), phi_l)
            b += wdt * cfg.params.eps_hall * inner_product_H(map_tHall(X), phi_l)
        out["int_mhd"].append(a)
        out["int_thall"].append(b)
    return {k: np.array(v) for k, v in out.items()}


def convergence_in_n(template: SimConfig, n_list: Sequence[float], phi: State | None = None,
                     threads: int | None = None, ensembles: dict | None = None) -> dict:
    """Coupled runs across cut-offs with shared initial data and driving noise.

    ``template`` must live on the lattice of the largest cut-off; smaller
    cut-offs use the same N and L.  Pairwise differences are computed for
    consecutive cut-offs after embedding into the largest lattice.
    """
    n_list = sorted(float(n) for n in n_list)
    big = template.lattice
    if n_list[-1] > big.n + 1e-12:
        raise ValueError("largest cut-off exceeds the template lattice")
    if template.snapshot_stride <= 0:
        template = template.replace(snapshot_stride=max(1, template.n_steps // 20))
    S = template.n_steps
    if S not in set(template.snapshot_steps().tolist()):
        template = template.replace(snapshot_times=tuple(template.snapshot_times) + (template.T,))
    ensembles = {} if ensembles is None else ensembles
    for n in n_list:
        if n not in ensembles:
            lat = make_lattice(big.N, big.L, n)
            ensembles[n] = run_ensemble(template.on_lattice(lat), threads=threads)
    if phi is None:
        phi = template.test_functions[0] if template.test_functions else template.X0
    rows = []
    per_n = {}
    X0 = template.X0
    for n in n_list:
        ens = ensembles[n]
        f = _functionals(ens, phi)
        final = np.stack([state_to_lattice(r.state(-1), big).as_array() for r in ens.records])
        proj = norm_H(X0 - state_to_lattice(state_to_lattice(X0, ens.config.lattice), big))
        per_n[n] = {"functionals": f, "final": final, "energy": ens.stack("energy_H"),
                    "projection_error": proj}
    w = big.parseval_weight
    for a, b in zip(n_list[:-1], n_list[1:]):
        A, Bn = per_n[a], per_n[b]
        d_final = np.sqrt(w * np.sum(np.abs(A["final"] - Bn["final"]) ** 2, axis=(-3, -2, -1)))
        d_energy = np.max(np.abs(A["energy"] - Bn["energy"]), axis=1)
        rows.append({
            "n_pair": [a, b],
            "final_state_diff": mean_estimate(d_final).as_dict(),
            "energy_sup_diff": mean_estimate(d_energy).as_dict(),
            "int_mhd_diff": mean_estimate(np.abs(A["functionals"]["int_mhd"] - Bn["functionals"]["int_mhd"])).as_dict(),
            "int_thall_diff": mean_estimate(np.abs(A["functionals"]["int_thall"] - Bn["functionals"]["int_thall"])).as_dict(),
        })
    diffs = [r["final_state_diff"]["value"] for r in rows]
    return {
        "schema_version": SCHEMA_VERSION,
        "n_list": n_list,
        "pairs": rows,
        "projection_error": {str(n): per_n[n]["projection_error"] for n in n_list},
        "cauchy_trend": bool(all(x2 <= x1 for x1, x2 in zip(diffs[:-1], diffs[1:]))),
        "ensembles": ensembles,
    }
