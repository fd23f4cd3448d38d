import numpy as np
import pytest

from cbfsim.evolution import (
    BlowUpError,
    StepperConfig,
    energy_ledger_check,
    higher_estimate_probe,
    simulate,
    step,
    yosida_continuation,
)
from cbfsim.operators import FluidParams
from cbfsim.potentials import EnstrophyIndicator, SignBall, project_enstrophy_ball
from cbfsim.sampling import default_rng, random_field, single_mode_field
from cbfsim.spectral import (
    TorusGrid,
    divergence_defect,
    enstrophy_norm,
    h_norm,
    zero_field,
)

GRID = TorusGrid(d=2, n=16)
P1 = FluidParams(mu=1.0, beta=1.0, r=1.0, d=2)
P3 = FluidParams(mu=1.0, beta=1.0, r=3.0, d=2)

DECAY_RATE = P1.mu * (2 * np.pi) ** 2 + P1.beta  # single shear mode, r = 1


def shear(amplitude=1.0):
    return amplitude * single_mode_field(GRID, (0, 1), component=0)


def test_config_invariants():
    with pytest.raises(ValueError):
        StepperConfig(dt=-1.0, t_end=1.0, lam=0.1)
    with pytest.raises(ValueError):
        StepperConfig(dt=1e-3, t_end=1.0, lam=0.1, scheme="leapfrog")
    with pytest.raises(ValueError):
        StepperConfig(dt=0.2, t_end=1.0, lam=0.1, scheme="imex-explicit-phi")
    StepperConfig(dt=0.05, t_end=1.0, lam=0.1, scheme="imex-explicit-phi")


def test_zero_stays_zero():
    cfg = StepperConfig(dt=1e-2, t_end=0.1, lam=0.1)
    traj = simulate(zero_field(GRID), None, P3, None, cfg)
    assert all(h_norm(s) == 0.0 for s in traj.states)
    assert traj.max_step_residual == 0.0


def test_single_step_local_error_second_order():
    cfg_coarse = StepperConfig(dt=1e-3, t_end=1.0, lam=0.1)
    cfg_fine = StepperConfig(dt=5e-4, t_end=1.0, lam=0.1)
    y = shear()
    errs = []
    for cfg in (cfg_coarse, cfg_fine):
        out = step(y, 0.0, None, P1, None, cfg)
        exact = np.exp(-DECAY_RATE * cfg.dt) * y
        errs.append(h_norm(out - exact))
    ratio = errs[0] / errs[1]
    assert 3.0 <= ratio <= 5.0  # halving dt cuts the one-step defect ~4x


def test_decay_terminal_accuracy():
    cfg = StepperConfig(dt=1e-4, t_end=0.1, lam=0.1, record_every=100)
    traj = simulate(shear(), None, P1, None, cfg)
    exact = h_norm(shear()) * np.exp(-DECAY_RATE * 0.1)
    assert traj.norm_series[-1].h_norm == pytest.approx(exact, rel=1e-3)


def test_global_order_at_least_first():
    y0 = random_field(GRID, default_rng(70), amplitude=0.5)
    dts = [4e-3, 2e-3, 1e-3]
    finals = []
    for dt in dts + [1.25e-4]:
        cfg = StepperConfig(dt=dt, t_end=0.04, lam=0.1, record_every=10**9)
        traj = simulate(y0, None, P3, None, cfg)
        finals.append(traj.states[-1])
    errs = [h_norm(f - finals[-1]) for f in finals[:-1]]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 0.9


def test_ledger_residual_first_order():
    # gentle amplitude: the rate defect scales with (decay rate)^2 * dt * ||y||^2
    resids = []
    for dt in (2e-4, 1e-4):
        cfg = StepperConfig(dt=dt, t_end=0.02, lam=0.1, record_every=10)
        traj = simulate(shear(1e-3), None, P1, None, cfg)
        resids.append(traj.max_step_residual)
        assert energy_ledger_check(traj).passed
    assert resids[1] <= 1e-6
    assert 0.3 <= resids[1] / resids[0] <= 0.7  # halves with dt


def test_energy_nonincreasing_without_forcing():
    rng = default_rng(71)
    y0 = random_field(GRID, rng)
    phi = EnstrophyIndicator(varpi=2.0 * enstrophy_norm(y0))
    cfg = StepperConfig(dt=1e-3, t_end=0.05, lam=1e-2, record_every=5)
    traj = simulate(y0, None, P3, phi, cfg)
    h = [rep.h_norm for rep in traj.norm_series]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))


def test_divergence_free_every_sample():
    rng = default_rng(72)
    y0 = random_field(GRID, rng)
    cfg = StepperConfig(dt=1e-3, t_end=0.02, lam=0.1, record_every=4)
    traj = simulate(y0, None, P3, None, cfg)
    assert all(divergence_defect(s) <= 1e-12 for s in traj.states)


def test_blow_up_detection():
    huge = 1e16 * shear()
    cfg = StepperConfig(dt=1e-3, t_end=0.01, lam=0.1)
    with pytest.raises(BlowUpError) as err:
        simulate(shear(), lambda t: huge, P1, None, cfg)
    assert err.value.t > 0.0


def test_initial_state_must_lie_in_constraint_set():
    rng = default_rng(73)
    y0 = random_field(GRID, rng)
    phi = EnstrophyIndicator(varpi=0.5 * enstrophy_norm(y0))
    cfg = StepperConfig(dt=1e-3, t_end=0.01, lam=0.1)
    with pytest.raises(ValueError):
        simulate(y0, None, P3, phi, cfg)


def test_potential_activates_under_forcing():
    rng = default_rng(74)
    y0 = random_field(GRID, rng)
    varpi = enstrophy_norm(y0)  # start on the boundary
    phi = EnstrophyIndicator(varpi=varpi)
    forcing = 200.0 * y0
    cfg = StepperConfig(dt=1e-3, t_end=0.05, lam=1e-3, record_every=1)
    traj = simulate(y0, lambda t: forcing, P3, phi, cfg)
    assert np.max(traj.control_series) > 0.0
    # the potential keeps the state essentially inside the ball
    worst = max(rep.enstrophy for rep in traj.norm_series)
    assert worst <= varpi * 1.1


def test_continuation_trivial_for_no_potential():
    y0 = shear()
    cfg = StepperConfig(dt=1e-3, t_end=0.02, lam=1.0, record_every=4)
    trajs, report = yosida_continuation(
        y0, None, P1, None, cfg, lam_schedule=[1e-1, 1e-2, 1e-3]
    )
    assert all(diff == 0.0 for diff in report["cauchy_differences"])


def test_continuation_cauchy_decreases_and_potential_bounded():
    # single forced shear mode pressed against the enstrophy ball: the
    # regularized runs settle onto the boundary and converge as lam -> 0
    base = single_mode_field(GRID, (0, 1), component=0)
    y0 = (1.0 / enstrophy_norm(base)) * base
    phi = EnstrophyIndicator(varpi=1.5)
    forcing = (30.0 / h_norm(base)) * base
    cfg = StepperConfig(dt=2e-4, t_end=0.2, lam=1.0, record_every=20)
    trajs, report = yosida_continuation(
        y0, lambda t: forcing, P3, phi, cfg, lam_schedule=[1e-1, 1e-2, 1e-3]
    )
    diffs = report["cauchy_differences"]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    ints = report["int_potential_sq"]
    # converging increments, no 1/lam divergence
    assert ints[-1] <= 2.0 * ints[-2]
    assert np.all(np.isfinite(ints))


def test_higher_estimates_decay_case():
    cfg = StepperConfig(dt=1e-4, t_end=0.1, lam=0.1, record_every=10)
    traj = simulate(shear(), None, P1, None, cfg)
    rep = higher_estimate_probe(traj, P1)
    assert rep.passed
    c = DECAY_RATE
    exact_int_grad = (2 * np.pi) ** 2 * 0.5 * (1 - np.exp(-2 * c * 0.1)) / (2 * c)
    measured = float(
        np.trapezoid([r.enstrophy**2 for r in traj.norm_series], traj.times)
    )
    assert measured == pytest.approx(exact_int_grad, rel=1e-3)


def test_higher_estimates_sup_invariant_under_longer_runs():
    cfg1 = StepperConfig(dt=1e-3, t_end=0.05, lam=0.1, record_every=5)
    cfg2 = StepperConfig(dt=1e-3, t_end=0.1, lam=0.1, record_every=5)
    t1 = simulate(shear(), None, P1, None, cfg1)
    t2 = simulate(shear(), None, P1, None, cfg2)
    r1 = higher_estimate_probe(t1, P1)
    r2 = higher_estimate_probe(t2, P1)
    assert r1.details["sup_grad_sq"] == pytest.approx(
        r2.details["sup_grad_sq"], rel=1e-12
    )


def test_resume_matches_straight_run():
    rng = default_rng(76)
    y0 = random_field(GRID, rng)
    cfg_full = StepperConfig(dt=1e-3, t_end=0.04, lam=0.1, record_every=5)
    full = simulate(y0, None, P3, None, cfg_full)

    cfg_half = StepperConfig(dt=1e-3, t_end=0.02, lam=0.1, record_every=5)
    first = simulate(y0, None, P3, None, cfg_half)
    second = simulate(
        first.states[-1], None, P3, None, cfg_full, t0=first.times[-1]
    )
    assert h_norm(second.states[-1] - full.states[-1]) <= 1e-12
