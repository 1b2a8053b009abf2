"""Euler-Maruyama stepping of the truncated stochastic Hall-MHD system.

One step from ``X`` at time ``t``::

    X+ = exp(-dt Lambda) [X + dt (-N(X) + f(t)) + sum_j col_j(X) dW_j]

where ``Lambda`` is the diagonal viscous multiplier, ``N`` the projected
convection plus Hall term and ``col_j`` the projected noise columns.  The
result is Leray-projected and symmetrized so the physical field stays real.

Paths are processed in fixed-size chunks.  The chunk layout never depends on
the thread count, and the draws of a path depend only on (seed, path, step),
so ensembles are reproducible bit for bit under any scheduling.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .noise import NoiseModel, NoiseOperator, RngStream, WienerIncrement
from .operators import PhysicsParams, nonlinear_kernel, stokes_multiplier
from .spectral import (
    ModeLattice,
    SpectralField,
    State,
    hermitian_symmetrize,
    leray_array,
    make_lattice,
    norm_H,
    to_lattice,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# initial data, forcing and test functions


def _unit_perp(m: np.ndarray, pol) -> np.ndarray:
    if pol is not None:
        p = np.asarray(pol, float)
    else:
        m = np.asarray(m, float)
        trial = np.array([0.0, 0.0, 1.0]) if abs(m[2]) < max(abs(m[0]), abs(m[1]), 1e-300) else np.array([1.0, 0.0, 0.0])
        p = np.cross(m, trial) if np.any(m) else trial
    nrm = np.linalg.norm(p)
    if nrm == 0:
        raise ConfigError("polarization vector must be nonzero")
    return p / nrm


def single_mode_field(lattice: ModeLattice, m, amplitude: float, polarization=None,
                      phase: str = "cos") -> SpectralField:
    """Field ``amplitude * p * cos(k.x)`` (or ``sin``) for the mode with wave index ``m``."""
    m = np.asarray(m, dtype=np.int64)
    p = _unit_perp(m, polarization)
    lookup = {tuple(x): i for i, x in enumerate(lattice.indices.tolist())}
    key, neg = tuple(int(a) for a in m), tuple(int(-a) for a in m)
    if key not in lookup:
        raise ConfigError(f"mode {list(key)} is outside the retained ball")
    c = np.zeros((3, lattice.mode_count), complex)
    scale = lattice.N ** 1.5
    if key == neg:
        if phase != "cos":
            raise ConfigError("the zero mode has no sine profile")
        c[:, lookup[key]] = amplitude * p * scale
    else:
        z = 0.5 if phase == "cos" else -0.5j
        c[:, lookup[key]] = amplitude * p * scale * z
        c[:, lookup[neg]] = np.conj(amplitude * p * scale * z)
    return SpectralField(lattice, leray_array(c, lattice), True)


def random_solenoidal_field(lattice: ModeLattice, amplitude: float, seed: int, decay: float = 2.0,
                            n0: float | None = None, stream: int = 0) -> SpectralField:
    """Random divergence-free field with H-norm ``amplitude`` supported in ``|k| <= n0``.

    Drawn on the lattice with cut-off ``n0`` and then embedded, so fields for
    different cut-offs agree on their common modes.
    """
    n0 = lattice.n if n0 is None else float(n0)
    if n0 > lattice.n:
        raise ConfigError("initial-data support exceeds the lattice cut-off")
    base = make_lattice(lattice.N, lattice.L, n0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7919, stream])))
    nm = base.mode_count
    c = rng.standard_normal((3, nm)) + 1j * rng.standard_normal((3, nm))
    c *= (1.0 + base.k2) ** (-decay / 2)
    if base.zero_mode is not None:
        c[:, base.zero_mode] = 0
    c = leray_array(hermitian_symmetrize(c, base), base)
    f = SpectralField(base, c, True)
    h = np.sqrt(base.parseval_weight * np.sum(np.abs(c) ** 2))
    if h > 0:
        f = (amplitude / h) * f
    return to_lattice(f, lattice)


def field_from_spec(lattice: ModeLattice, spec: dict | None, stream: int = 0) -> SpectralField:
    if spec is None or spec.get("kind", "zero") == "zero":
        return SpectralField.zeros(lattice)
    kind = spec["kind"]
    if kind == "single_mode":
        return single_mode_field(lattice, spec["m"], float(spec.get("amplitude", 1.0)),
                                 spec.get("polarization"), spec.get("phase", "cos"))
    if kind == "random_solenoidal":
        return random_solenoidal_field(lattice, float(spec.get("amplitude", 1.0)), int(spec.get("seed", 0)),
                                       float(spec.get("decay", 2.0)), spec.get("n0"), stream)
    raise ConfigError(f"unknown field generator {kind!r}")


def state_from_spec(lattice: ModeLattice, spec: dict | None) -> State:
    """``spec`` is ``{"u": field spec, "B": field spec}`` or one field spec for both."""
    if spec is None:
        return State.zeros(lattice)
    if "u" in spec or "B" in spec:
        return State(field_from_spec(lattice, spec.get("u"), 0), field_from_spec(lattice, spec.get("B"), 1))
    return State(field_from_spec(lattice, spec, 0), field_from_spec(lattice, spec, 1))


@dataclass(frozen=True)
class Forcing:
    """``f(t) = profile * cos(omega t)`` with a fixed divergence-free profile."""

    profile: State | None = None
    omega: float = 0.0

    def at(self, t: float) -> np.ndarray | None:
        if self.profile is None:
            return None
        a = self.profile.as_array()
        return a if self.omega == 0 else np.cos(self.omega * t) * a

    @classmethod
    def from_spec(cls, lattice: ModeLattice, spec: dict | None) -> "Forcing":
        if spec is None or spec.get("kind", "none") == "none":
            return cls()
        if spec["kind"] != "steady_mode":
            raise ConfigError(f"unknown forcing {spec['kind']!r}")
        prof = state_from_spec(lattice, {k: v for k, v in spec.items() if k in ("u", "B")} or
                               {"u": {"kind": "single_mode", "m": spec["m"],
                                      "amplitude": spec.get("amplitude", 1.0),
                                      "polarization": spec.get("polarization")}})
        return cls(prof, float(spec.get("omega", 0.0)))


# ---------------------------------------------------------------------------
# configuration and records


@dataclass(frozen=True, eq=False)
class SimConfig:
    lattice: ModeLattice
    params: PhysicsParams
    T: float
    dt: float
    X0: State
    noise: NoiseModel | None = None
    forcing: Forcing = dc_field(default_factory=Forcing)
    R_guard: float | None = None
    seed: int = 0
    n_paths: int = 1
    convection: bool = True
    hall: bool = True
    scheme: str = "exponential"
    c_cfl: float = 1.0
    chunk_size: int = 16
    snapshot_stride: int = 0
    snapshot_times: tuple[float, ...] = ()
    test_functions: tuple[State, ...] = ()

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError("dt and T must be positive")
        if self.X0.lattice != self.lattice:
            raise ConfigError("initial state lives on a different lattice")
        if self.scheme not in ("exponential", "explicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "explicit":
            ceiling = self.c_cfl / (max(self.params.nu1, self.params.nu2) * max(self.lattice.n, 1e-300) ** 2)
            if self.dt > ceiling:
                raise ConfigError(f"dt={self.dt} exceeds the explicit-diffusion ceiling {ceiling:.6g}")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be at least 1")
        for ts in self.snapshot_times:
            if not 0 <= ts <= self.T + 1e-12:
                raise ConfigError(f"snapshot time {ts} outside [0, T]")
        for psi in self.test_functions:
            if psi.lattice != self.lattice:
                raise ConfigError("test function lives on a different lattice")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def guard_radius(self) -> float:
        if self.R_guard is not None:
            return float(self.R_guard)
        h = norm_H(self.X0)
        return 1e3 * h if h > 0 else np.inf

    @property
    def noise_active(self) -> bool:
        return self.noise is not None and not self.noise.is_zero

    def snapshot_steps(self) -> np.ndarray:
        steps = set()
        if self.snapshot_stride > 0:
            steps.update(range(0, self.n_steps + 1, self.snapshot_stride))
        for ts in self.snapshot_times:
            steps.add(int(round(ts / self.dt)))
        return np.array(sorted(steps), dtype=np.int64)

    def replace(self, **kw) -> "SimConfig":
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields.update(kw)
        return SimConfig(**fields)

    def on_lattice(self, lattice: ModeLattice) -> "SimConfig":
        """Same experiment on another lattice with the same N and L."""
        def move(X: State) -> State:
            return State(to_lattice(X.u, lattice), to_lattice(X.B, lattice))
        prof = self.forcing.profile
        return self.replace(
            lattice=lattice,
            X0=move(self.X0),
            forcing=Forcing(None if prof is None else move(prof), self.forcing.omega),
            test_functions=tuple(move(p) for p in self.test_functions),
        )


@dataclass(eq=False)
class TrajectoryRecord:
    """Per-path time series.  Step-indexed series refer to the left endpoint."""

    path: int
    times: np.ndarray
    energy_H: np.ndarray
    energy_V: np.ndarray
    hs: np.ndarray
    forcing_work: np.ndarray
    noise_work: np.ndarray
    martingale: np.ndarray
    g_test: np.ndarray
    snapshot_times: np.ndarray
    states: np.ndarray
    lattice: ModeLattice
    stopped_at: float | None = None
    aborted: str | None = None

    @property
    def martingale_series(self) -> np.ndarray:
        return self.martingale

    def state(self, i: int) -> State:
        return State.from_array(self.lattice, self.states[i])

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "times": self.times, "energy_H": self.energy_H, "energy_V": self.energy_V,
            "hs": self.hs, "forcing_work": self.forcing_work, "noise_work": self.noise_work,
            "martingale": self.martingale, "g_test": self.g_test,
            "snapshot_times": self.snapshot_times, "states": self.states,
        }


@dataclass(eq=False)
class EnsembleResult:
    config: SimConfig
    records: list[TrajectoryRecord]

    @property
    def n_paths(self) -> int:
        return len(self.records)

    def stack(self, name: str) -> np.ndarray:
        return np.stack([getattr(r, name) for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return self.records[0].times

    def pooled_mean(self, name: str) -> np.ndarray:
        return self.stack(name).mean(axis=0)

    @property
    def stopped(self) -> list[int]:
        return [r.path for r in self.records if r.stopped_at is not None]

    @property
    def aborted(self) -> list[int]:
        return [r.path for r in self.records if r.aborted is not None]


# ---------------------------------------------------------------------------
# stepping


class _Compiled:
    def __init__(self, cfg: SimConfig):
        lat = cfg.lattice
        self.cfg = cfg
        self.lat = lat
        self.w = lat.parseval_weight
        self.lam = stokes_multiplier(lat, cfg.params)
        self.E = np.exp(-cfg.dt * self.lam)
        self.noise = NoiseOperator(cfg.noise, lat) if cfg.noise_active else None
        self.J = cfg.noise.J if cfg.noise is not None else 1
        prof = cfg.forcing.profile
        self.forcing_profile = None if prof is None else leray_array(prof.as_array(), lat)
        self.psi = (np.stack([p.as_array() for p in cfg.test_functions])
                    if cfg.test_functions else np.zeros((0, 2, 3, lat.mode_count), complex))

    def forcing(self, t: float) -> np.ndarray | None:
        if self.forcing_profile is None:
            return None
        om = self.cfg.forcing.omega
        return self.forcing_profile if om == 0 else np.cos(om * t) * self.forcing_profile

    def nonlinear(self, X: np.ndarray) -> np.ndarray:
        p = self.cfg.params
        return nonlinear_kernel(X, self.lat, p.s_hartmann, p.eps_hall, self.cfg.convection, self.cfg.hall)

    def ip(self, a: np.ndarray, b: np.ndarray, axes=(-3, -2, -1)) -> np.ndarray:
        return self.w * np.sum((a * np.conj(b)).real, axis=axes)

    def finish(self, Y: np.ndarray) -> np.ndarray:
        if self.cfg.scheme == "exponential":
            Y = self.E * Y
        Y = leray_array(Y, self.lat)
        return hermitian_symmetrize(Y, self.lat)


def _advance(comp: _Compiled, X: np.ndarray, t: float, dW: np.ndarray | None,
             Nx: np.ndarray | None = None, cols: np.ndarray | None = None):
    """One step for a batch (B, 2, 3, nm). Returns (X+, N(X), noise increment)."""
    cfg = comp.cfg
    dt = cfg.dt
    if Nx is None:
        Nx = comp.nonlinear(X)
    Y = X - dt * Nx
    f = comp.forcing(t)
    if f is not None:
        Y = Y + dt * f
    if cfg.scheme == "explicit":
        Y = Y - dt * comp.lam * X
    dG = None
    if comp.noise is not None and dW is not None:
        if cols is None:
            cols = comp.noise.columns(X)
        dG = comp.noise.increment(cols, dW)
        Y = Y + dG
    return comp.finish(Y), Nx, dG


def step(X: State, t: float, dt: float, cfg: SimConfig, increment: WienerIncrement | None = None) -> State:
    """Advance one state by one step of size ``dt``."""
    if X.lattice != cfg.lattice:
        raise ConfigError("state lives on a different lattice")
    if dt != cfg.dt:
        cfg = cfg.replace(dt=dt)
    comp = _Compiled(cfg)
    dW = None if increment is None else increment.draws[None]
    Xn, _, _ = _advance(comp, X.as_array()[None], t, dW)
    if not np.all(np.isfinite(Xn)):
        raise FloatingPointError(f"non-finite state after step at t={t}")
    return State.from_array(cfg.lattice, Xn[0])


def _run_chunk(cfg: SimConfig, paths: Sequence[int]) -> list[TrajectoryRecord]:
    comp = _Compiled(cfg)
    lat = cfg.lattice
    B = len(paths)
    S = cfg.n_steps
    dt = cfg.dt
    J = comp.J
    npsi = len(comp.psi)
    snaps = cfg.snapshot_steps()
    snap_slot = {int(s): i for i, s in enumerate(snaps)}

    X = np.broadcast_to(cfg.X0.as_array(), (B, 2, 3, lat.mode_count)).copy()
    energy_H = np.zeros((B, S + 1))
    energy_V = np.zeros((B, S + 1))
    hs = np.zeros((B, S))
    fwork = np.zeros((B, S))
    nwork = np.zeros((B, S))
    mart = np.zeros((B, S + 1, npsi))
    gt = np.zeros((B, S, npsi, 2, J))
    states = np.zeros((B, len(snaps), 2, 3, lat.mode_count), complex)
    stopped = np.zeros(B, bool)
    stopped_at: list[float | None] = [None] * B
    aborted: list[str | None] = [None] * B
    streams = [RngStream(cfg.seed, p) for p in paths]
    R = cfg.guard_radius
    k2 = lat.k2
    nu = np.array([cfg.params.nu1, cfg.params.nu2])[:, None, None]

    def record(m: int, X: np.ndarray):
        eH = comp.ip(X, X)
        energy_H[:, m] = eH
        energy_V[:, m] = comp.w * np.sum(nu * k2 * np.abs(X) ** 2, axis=(-3, -2, -1))
        if m in snap_slot:
            states[:, snap_slot[m]] = X
        for b in range(B):
            if stopped[b]:
                continue
            if not np.isfinite(eH[b]):
                aborted[b] = f"energy overflow at step {m} (t={m * dt:.6g})"
                stopped[b] = True
            elif np.sqrt(eH[b]) >= R:
                stopped[b] = True
                stopped_at[b] = m * dt

    record(0, X)
    for m in range(S):
        t = m * dt
        active = ~stopped
        if not active.any():
            for mm in range(m + 1, S + 1):
                energy_H[:, mm] = energy_H[:, m]
                energy_V[:, mm] = energy_V[:, m]
                mart[:, mm] = mart[:, m]
                if mm in snap_slot:
                    states[:, snap_slot[mm]] = X
            break
        dW = None
        cols = None
        if comp.noise is not None:
            dW = np.stack([s.draws_at(m, dt, J) for s in streams])
            dW[stopped] = 0.0
            cols = comp.noise.columns(X)
            hs[:, m] = comp.w * np.sum(np.abs(cols) ** 2, axis=(-4, -3, -2, -1))
            if npsi:
                gt[:, m] = comp.w * np.einsum("bijck,pick->bpij", cols, np.conj(comp.psi)).real
        Xn, Nx, dG = _advance(comp, X, t, dW, cols=cols)
        f = comp.forcing(t)
        if f is not None:
            fwork[:, m] = comp.ip(f[None], X)
        if dG is not None:
            nwork[:, m] = comp.ip(X, dG)
        if npsi:
            drift = comp.lam * X + Nx - (f if f is not None else 0.0)
            dM = Xn - X + dt * drift
            mart[:, m + 1] = mart[:, m] + comp.w * np.einsum("bick,pick->bp", dM, np.conj(comp.psi)).real
        bad = ~np.all(np.isfinite(Xn), axis=(-3, -2, -1))
        for b in np.flatnonzero(bad & active):
            aborted[b] = f"non-finite state at step {m + 1} (t={(m + 1) * dt:.6g})"
            stopped[b] = True
        Xn[stopped] = X[stopped]
        if npsi:
            mart[stopped, m + 1] = mart[stopped, m]
        idle = ~active
        hs[idle, m] = fwork[idle, m] = nwork[idle, m] = 0.0
        gt[idle, m] = 0.0
        X = Xn
        record(m + 1, X)

    times = dt * np.arange(S + 1)
    snap_t = dt * snaps.astype(float)
    return [
        TrajectoryRecord(p, times, energy_H[b], energy_V[b], hs[b], fwork[b], nwork[b], mart[b], gt[b],
                         snap_t, states[b], lat, stopped_at[b], aborted[b])
        for b, p in enumerate(paths)
    ]


def simulate_path(cfg: SimConfig, path_index: int) -> TrajectoryRecord:
    return _run_chunk(cfg, [path_index])[0]


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("HALLMHD_THREADS", "1"))
    return max(1, int(threads))


def run_ensemble(cfg: SimConfig, threads: int | None = None, paths: Sequence[int] | None = None,
                 progress: Callable[[int], None] | None = None) -> EnsembleResult:
    """Simulate ``cfg.n_paths`` independent paths (or the given path indices)."""
    paths = list(range(cfg.n_paths)) if paths is None else list(paths)
    chunks = [paths[i:i + cfg.chunk_size] for i in range(0, len(paths), cfg.chunk_size)]
    threads = resolve_threads(threads)
    if threads == 1 or len(chunks) == 1:
        results = []
        for c in chunks:
            results.append(_run_chunk(cfg, c))
            if progress:
                progress(len(c))
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda c: _run_chunk(cfg, c), chunks))
    return EnsembleResult(cfg, [r for chunk in results for r in chunk])
