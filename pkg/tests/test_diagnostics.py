import numpy as np
import pytest

from hallmhd.diagnostics import (
    Estimate,
    MomentConfig,
    aldous_increments,
    bootstrap,
    consecutive_trend,
    convergence_in_n,
    energy_balance_residual,
    energy_balance_study,
    h_family,
    increment_norms,
    martingale_residual,
    martingale_residual_state,
    mean_estimate,
    moment_estimates,
    path_functionals,
    quadratic_variation_check,
    richardson_slope,
    stochastic_integral_mean,
)
from hallmhd.integrator import SimConfig, random_solenoidal_field, run_ensemble, single_mode_field
from hallmhd.noise import NoiseDirection, NoiseModel
from hallmhd.operators import PhysicsParams
from hallmhd.spectral import SpectralField, State, make_lattice, norm_H, sobolev_norm

TWO_PI = 2 * np.pi
LAT = make_lattice(8, TWO_PI, 3.0)


def gamma_noise(gamma, L=TWO_PI):
    d = (NoiseDirection.constant(c=gamma),)
    return NoiseModel(L, d, d)


def mode(lat, m, amp=1.0, pol=None):
    return single_mode_field(lat, m, amp, pol)


def random_X0(lat, amp=1.0, n0=None):
    return State(random_solenoidal_field(lat, amp, 1, n0=n0), random_solenoidal_field(lat, amp, 2, n0=n0))


def config(X0, **kw):
    base = dict(lattice=X0.lattice, params=PhysicsParams(0.1, 0.1), T=0.5, dt=0.01, X0=X0)
    base.update(kw)
    return SimConfig(**base)


# ---------------------------------------------------------------- estimators


def test_mean_estimate_and_overlap():
    e = mean_estimate(np.array([1.0, 2.0, 3.0, 4.0]))
    assert e.value == 2.5 and e.n_paths == 4
    assert e.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert e.overlaps(Estimate(3.0, 0.1, 4, (2.9, 3.1)))
    assert not e.overlaps(Estimate(9.0, 0.1, 4, (8.9, 9.1)))


def test_bootstrap_is_seeded():
    x = np.random.default_rng(0).exponential(size=200)
    a, b = bootstrap(x, seed=4), bootstrap(x, seed=4)
    assert a == b
    assert a.ci[0] < a.value < a.ci[1]
    assert a.se == pytest.approx(x.std(ddof=1) / np.sqrt(x.size), rel=0.15)
    assert bootstrap(np.array([2.0])).se == 0.0


def test_moment_config_validation():
    MomentConfig(4.0, (2.0, 3.0))
    with pytest.raises(ValueError):
        MomentConfig(1.5)
    with pytest.raises(ValueError):
        MomentConfig(3.0, (3.5,))
    with pytest.raises(ValueError, match="gamma"):
        MomentConfig.from_eta(1.0, 3.5)  # gamma = 1 so p must stay below 3
    assert MomentConfig.from_eta(2.0, 10.0).gamma == np.inf


# ---------------------------------------------------------------- moments


def test_noise_off_moments_are_deterministic():
    X0 = random_X0(LAT)
    ens = run_ensemble(config(X0, n_paths=6))
    rep = moment_estimates(ens, MomentConfig(4.0, (2.0, 4.0)), n_boot=200)
    sup2 = rep.estimates["sup_abs_pow_2"]
    assert sup2.value == pytest.approx(norm_H(X0) ** 2, rel=1e-14)
    assert sup2.se == pytest.approx(0.0, abs=1e-12)
    assert rep.estimates["int_dirichlet"].se == pytest.approx(0.0, abs=1e-12)
    assert rep.as_dict()["schema_version"] == 1


def test_linear_noise_dirichlet_integral_matches_recursion():
    gamma, nu = 0.7, 0.1
    X0 = State(mode(LAT, (1, 0, 0), 1.0, (0, 1, 0)), SpectralField.zeros(LAT))
    d = (NoiseDirection.constant(c=gamma),)
    cfg = config(X0, params=PhysicsParams(nu, nu), noise=NoiseModel(TWO_PI, d, ()), convection=False,
                 hall=False, n_paths=300, seed=5)
    ens = run_ensemble(cfg)
    rep = moment_estimates(ens, MomentConfig(2.0), n_boot=400)
    r = np.exp(-2 * nu * cfg.dt) * (1 + gamma**2 * cfg.dt)
    expected = cfg.dt * nu * norm_H(X0) ** 2 * sum(r**m for m in range(cfg.n_steps))
    est = rep.estimates["int_dirichlet"]
    assert abs(est.value - expected) <= 3 * est.se


def test_lower_moment_controlled_by_higher_moment():
    X0 = random_X0(LAT)
    ens = run_ensemble(config(X0, noise=gamma_noise(0.6), n_paths=50, seed=2))
    p = 4.0
    s2 = path_functionals(ens, 2.0)["sup_abs_pow_2"].mean()
    sp = path_functionals(ens, p)["sup_abs_pow_4"].mean()
    assert s2 <= sp ** (2 / p) * (1 + 1e-12)


def test_consecutive_trend_rows():
    X0 = random_X0(LAT)
    reps = [moment_estimates(run_ensemble(config(X0, noise=gamma_noise(0.3), n_paths=20, seed=s)),
                             MomentConfig(2.0), n_boot=100) for s in (1, 2)]
    rows = consecutive_trend(reps, "sup_abs_pow_2")
    assert len(rows) == 1 and set(rows[0]) == {"n_pair", "values", "overlap", "decreasing"}


# ---------------------------------------------------------------- energy balance


def test_zero_trajectory_has_zero_residual():
    cfg = config(State.zeros(LAT))
    ens = run_ensemble(cfg)
    assert not np.any(energy_balance_residual(ens.records[0], cfg))


def test_deterministic_energy_residual_is_first_order():
    X0 = random_X0(LAT, 1.0)
    study = energy_balance_study(config(X0, T=0.5), [1e-2, 5e-3, 2.5e-3])
    assert study["slope"] >= 0.9
    assert richardson_slope([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)


def test_stochastic_integral_has_zero_mean():
    X0 = random_X0(LAT, 1.0)
    ens = run_ensemble(config(X0, noise=gamma_noise(0.8), n_paths=256, seed=21, T=0.3))
    est = stochastic_integral_mean(ens)
    assert abs(est.value) <= 3 * est.se


def test_noisy_energy_residual_is_small():
    X0 = random_X0(LAT, 1.0)
    cfg = config(X0, noise=gamma_noise(0.5), n_paths=8, seed=3, T=0.3, dt=1e-3)
    ens = run_ensemble(cfg)
    res = np.array([energy_balance_residual(r, cfg)[-1] for r in ens.records])
    assert np.max(np.abs(res)) < 0.05 * norm_H(X0) ** 2


# ---------------------------------------------------------------- Aldous increments


def test_frozen_dynamics_have_zero_increments():
    c = np.zeros((3, LAT.mode_count), complex)
    c[:, LAT.zero_mode] = [1.0, -2.0, 0.5]
    X0 = State(SpectralField(LAT, c), SpectralField(LAT, c))
    ens = run_ensemble(config(X0, n_paths=3, snapshot_stride=1, T=0.2))
    assert not np.any(increment_norms(ens, [0.01, 0.05], [0.0, 0.1]))
    rep = aldous_increments(ens, [0.01, 0.05])
    assert rep.C.value == 0.0


def test_brownian_scaling_exponent_near_half():
    X0 = State(mode(LAT, (1, 0, 0), 1.0, (0, 1, 0)), SpectralField.zeros(LAT))
    d = (NoiseDirection.constant(c=1.0),)
    cfg = config(X0, params=PhysicsParams(1e-6, 1e-6), noise=NoiseModel(TWO_PI, d, ()), convection=False,
                 hall=False, n_paths=256, T=0.08, dt=0.001, snapshot_stride=1, seed=12)
    rep = aldous_increments(run_ensemble(cfg), [0.005, 0.01, 0.02, 0.04, 0.08], n_boot=200)
    assert 0.4 <= rep.beta.value <= 0.6
    assert rep.as_dict()["beta"]["n_paths"] == 256


def test_theta_beyond_horizon_is_rejected():
    ens = run_ensemble(config(random_X0(LAT), snapshot_stride=1, T=0.05))
    with pytest.raises(ValueError):
        aldous_increments(ens, [0.1])


# ---------------------------------------------------------------- martingale structure


def test_martingale_vanishes_without_noise():
    X0 = random_X0(LAT)
    psi = random_X0(LAT, 0.5)
    for dt in (1e-2, 5e-3):
        ens = run_ensemble(config(X0, test_functions=(psi,), dt=dt, T=0.3))
        est = martingale_residual(ens, 0, 0.1, 0.3, h_family()["const"])
        assert abs(est.value) <= 5 * dt * norm_H(X0) * norm_H(psi)
    assert quadratic_variation_check(ens, 0, 0).realized.value == pytest.approx(0.0, abs=1e-8)
    assert quadratic_variation_check(ens, 0, 0).predicted.value == 0.0


def test_martingale_increments_are_centered():
    X0 = random_X0(LAT)
    psi = State(mode(LAT, (1, 0, 0), 1.0, (0, 1, 0)), mode(LAT, (0, 1, 0), 1.0, (0, 0, 1)))
    cfg = config(X0, noise=gamma_noise(0.7), test_functions=(psi,), n_paths=256, seed=31, T=0.4)
    ens = run_ensemble(cfg)
    for name, h in h_family(cap=2.0).items():
        est = martingale_residual(ens, 0, 0.2, 0.4, h)
        assert abs(est.value) <= 3 * est.se, name
    assert martingale_residual_state(ens, psi, 0.2, 0.4, h_family()["const"]) == \
        martingale_residual(ens, 0, 0.2, 0.4, h_family()["const"])
    with pytest.raises(ValueError):
        martingale_residual(ens, 0, 0.4, 0.2, h_family()["const"])
    with pytest.raises(ValueError):
        martingale_residual(ens, 3, 0.1, 0.2, h_family()["const"])


def test_quadratic_variation_single_mode():
    gamma = 0.6
    e = mode(LAT, (1, 0, 0), 1.0, (0, 1, 0))
    X0 = State(e, SpectralField.zeros(LAT))
    psi = State(e, SpectralField.zeros(LAT))
    d = (NoiseDirection.constant(c=gamma),)
    cfg = config(X0, noise=NoiseModel(TWO_PI, d, ()), convection=False, hall=False, test_functions=(psi,),
                 n_paths=128, dt=1e-3, T=0.5, seed=4)
    rep = quadratic_variation_check(run_ensemble(cfg), 0, 0)
    assert rep.relative_error < 0.05
    assert not rep.coarse


def test_orthogonal_test_functions_have_zero_covariation():
    # velocity and magnetic directions are driven by independent Brownian motions
    X0 = random_X0(LAT)
    psi = State(mode(LAT, (1, 0, 0), 1.0, (0, 1, 0)), SpectralField.zeros(LAT))
    zeta = State(SpectralField.zeros(LAT), mode(LAT, (1, 0, 0), 1.0, (0, 1, 0)))
    cfg = config(X0, noise=gamma_noise(0.5), test_functions=(psi, zeta), n_paths=256, seed=8, T=0.3)
    rep = quadratic_variation_check(run_ensemble(cfg), 0, 1)
    assert abs(rep.realized.value) <= 3 * rep.realized.se
    assert rep.predicted.value == 0.0


# ---------------------------------------------------------------- convergence in the cut-off


LAT_PI = make_lattice(18, np.pi, 16.0)


def test_linear_flow_is_identical_across_cutoffs():
    X0 = random_X0(LAT_PI, 1.0, n0=4.0)
    cfg = SimConfig(LAT_PI, PhysicsParams(0.1, 0.1), 0.2, 0.01, X0, convection=False, hall=False)
    res = convergence_in_n(cfg, [4, 8, 16])
    for row in res["pairs"]:
        assert row["final_state_diff"]["value"] == 0.0
        # energies are summed over differently sized mode sets
        assert row["energy_sup_diff"]["value"] <= 1e-14 * norm_H(X0) ** 2


def test_nonlinear_differences_shrink_with_cutoff():
    X0 = random_X0(LAT_PI, 1.0, n0=4.0)
    cfg = SimConfig(LAT_PI, PhysicsParams(0.1, 0.1), 0.5, 0.005, X0)
    res = convergence_in_n(cfg, [4, 8, 16])
    d48, d816 = (row["final_state_diff"]["value"] for row in res["pairs"])
    assert d816 <= d48
    assert res["cauchy_trend"]


def test_projected_initial_data_error_decays():
    X0 = random_X0(LAT_PI, 1.0)  # full support, coefficients decaying like (1+|k|^2)^-1
    cfg = SimConfig(LAT_PI, PhysicsParams(0.1, 0.1), 0.01, 0.01, X0, convection=False, hall=False)
    ns = (2, 4, 8, 12)
    res = convergence_in_n(cfg, ns)
    errs = [res["projection_error"][str(float(n))] for n in ns]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    h1 = sobolev_norm(X0.u, 1.0) ** 2 + sobolev_norm(X0.B, 1.0) ** 2
    for n, e in zip(ns, errs):
        assert e**2 <= h1 / (1 + n * n)
