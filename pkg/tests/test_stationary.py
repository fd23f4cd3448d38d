import numpy as np
import pytest

from cbfsim.operators import FluidParams, QuantizationLevel, rho_threshold
from cbfsim.potentials import EnstrophyIndicator, SignBall
from cbfsim.sampling import default_rng, random_field, single_mode_field
from cbfsim.spectral import SpectralField, TorusGrid, h_norm, lp_norm, zero_field
from cbfsim.stationary import (
    AccretivityShift,
    ConvergenceError,
    apriori_bound_check,
    apply_shifted,
    coercivity_values,
    quantized_stationary_solve,
    sequential_continuity_gaps,
    shifted_monotonicity_gap,
    solve_stationary,
    stokes_control_estimate_probe,
    vartheta_exponent,
)

GRID = TorusGrid(d=2, n=16)
P5 = FluidParams(mu=1.0, beta=1.0, r=5.0, d=2)
SHIFT = AccretivityShift(kappa=1.0)  # above rho = 1/8


def test_shift_invariants():
    assert SHIFT.kappa_tilde == 2.0
    SHIFT.validate_for(P5)
    with pytest.raises(ValueError):
        AccretivityShift(kappa=0.01).validate_for(P5)
    with pytest.raises(ValueError):
        AccretivityShift(kappa=-1.0)


def test_zero_data_gives_zero_solution():
    phi = EnstrophyIndicator(varpi=1.0)
    rep = solve_stationary(zero_field(GRID), P5, phi, lam=0.1, shift=SHIFT)
    assert h_norm(rep.solution) == 0.0
    assert rep.final_residual == 0.0


def test_small_data_matches_linearized_solve():
    # r = 1: C(y) = y, so y ~ (mu A + (beta + kappa_tilde) I)^{-1} f + O(||f||^2)
    p1 = FluidParams(mu=1.0, beta=1.0, r=1.0, d=2)
    rng = default_rng(60)
    f = 1e-6 * random_field(GRID, rng)
    rep = solve_stationary(f, p1, None, lam=0.1, shift=SHIFT, tol=1e-16)
    inv = 1.0 / (SHIFT.kappa_tilde + 1.0 + GRID.stokes_multiplier)
    linear = SpectralField(GRID, inv * f.coeffs, True)
    assert h_norm(rep.solution - linear) <= 1e-4 * h_norm(linear)


def test_residual_and_uniqueness_gap():
    rng = default_rng(61)
    f = random_field(GRID, rng)
    tol = 1e-11
    rep = solve_stationary(f, P5, None, lam=0.1, shift=SHIFT, tol=tol)
    assert rep.final_residual <= tol
    assert rep.uniqueness_gap <= 10.0 * tol
    # geometric decay: the tail of the history contracts
    hist = rep.residual_history
    tail = [b / a for a, b in zip(hist[-6:-1], hist[-5:]) if a > 0]
    assert max(tail) < 1.0


def test_nonconvergence_raises_with_history():
    rng = default_rng(62)
    f = 1e4 * random_field(GRID, rng)
    with pytest.raises(ConvergenceError) as err:
        solve_stationary(f, P5, None, lam=0.1, shift=SHIFT, tol=1e-12, max_iter=5)
    assert len(err.value.history) >= 1


def test_apriori_ratio_bounded_under_rescaling():
    rng = default_rng(63)
    f = random_field(GRID, rng)
    phi = EnstrophyIndicator(varpi=5.0)
    ratios = []
    for scale in (1.0, 2.0, 4.0):
        rep = solve_stationary(scale * f, P5, phi, lam=0.1, shift=SHIFT)
        check = apriori_bound_check(rep, scale * f, P5, SHIFT)
        assert check.passed
        ratios.append(check.details["ratio"])
    assert np.all(np.isfinite(ratios))
    assert ratios[-1] <= 4.0 * ratios[0] + 1e-9


def test_vartheta_regimes():
    assert vartheta_exponent(2, 4.0) == 4.0
    assert vartheta_exponent(3, 4.0) == pytest.approx(7.0)
    assert vartheta_exponent(3, 5.0) == 1.0
    assert vartheta_exponent(3, 3.0, two_beta_mu_ge_one=True) == 3.0
    with pytest.raises(ValueError):
        vartheta_exponent(3, 3.0, two_beta_mu_ge_one=False)
    with pytest.raises(ValueError):
        vartheta_exponent(2, 2.0)


def test_stokes_control_probe_zero_and_stability():
    phi = EnstrophyIndicator(varpi=1.0)
    rep0 = stokes_control_estimate_probe(zero_field(GRID), P5, phi, 0.1, SHIFT)
    assert rep0.passed and rep0.details["implied_constant"] == 0.0

    p35 = FluidParams(mu=1.0, beta=1.0, r=5.0, d=3)
    grid3 = TorusGrid(d=3, n=12)
    rng = default_rng(64)
    maxima = []
    for _ in range(2):
        consts = [
            stokes_control_estimate_probe(
                random_field(grid3, rng), p35, EnstrophyIndicator(1.0), 0.1,
                AccretivityShift(kappa=rho_threshold(p35)),
            ).details["implied_constant"]
            for _ in range(25)
        ]
        maxima.append(max(consts))
    assert max(maxima) <= 2.0 * min(maxima)


def test_quantized_solve_certificate_and_match():
    p2 = FluidParams(mu=1.0, beta=1.0, r=2.0, d=2)
    rng = default_rng(65)
    f = 0.5 * random_field(GRID, rng)
    shift_n = AccretivityShift(kappa=3.0)
    rep = quantized_stationary_solve(
        f, p2, QuantizationLevel(50.0), None, lam=0.1, shift_n=shift_n
    )
    assert rep.details["dequantized"]
    assert rep.details["solution_l4"] <= 50.0

    plain = solve_stationary(f, p2, None, lam=0.1, shift=shift_n)
    assert h_norm(rep.solution - plain.solution) <= 20.0 * 1e-11

    with pytest.raises(ValueError):
        quantized_stationary_solve(
            f, P5, QuantizationLevel(1.0), None, lam=0.1, shift_n=shift_n
        )

    zero_rep = quantized_stationary_solve(
        zero_field(GRID), p2, QuantizationLevel(1.0), None, lam=0.1, shift_n=shift_n
    )
    assert h_norm(zero_rep.solution) == 0.0


def test_fitted_quantized_shift_and_sensitivity():
    from cbfsim.stationary import fitted_quantized_shift

    p2 = FluidParams(mu=1.0, beta=1.0, r=2.0, d=2)
    level = QuantizationLevel(200.0)
    shift_a = fitted_quantized_shift(GRID, p2, level, seed=1)
    shift_b = fitted_quantized_shift(GRID, p2, level, seed=2)
    assert shift_a.kappa > 1.0  # fitted constant plus the unit margin
    assert 0.5 <= (shift_a.kappa - 1.0) / (shift_b.kappa - 1.0) <= 2.0

    rng = default_rng(69)
    f = 0.3 * random_field(GRID, rng)
    rep = quantized_stationary_solve(f, p2, level, None, lam=0.1, shift_n=shift_a)
    assert rep.final_residual <= 1e-11


def test_shifted_monotonicity_and_r3_global():
    rng = default_rng(66)
    kappa = rho_threshold(P5) + 0.5
    for _ in range(40):
        y = random_field(GRID, rng)
        z = random_field(GRID, rng)
        gap = shifted_monotonicity_gap(y, z, P5, kappa)
        assert gap >= -1e-10 * max(1.0, h_norm(y - z) ** 2)

    from cbfsim.spectral import h_inner

    p3 = FluidParams(mu=1.0, beta=1.0, r=3.0, d=2)  # 2 beta mu = 2 >= 1
    for _ in range(40):
        y = random_field(GRID, rng)
        z = random_field(GRID, rng)
        direct = h_inner(
            apply_shifted(y, p3, 0.0) - apply_shifted(z, p3, 0.0), y - z
        )
        assert direct >= -1e-10 * max(1.0, h_norm(y - z) ** 2)


def test_coercivity_grows_along_rays():
    rng = default_rng(67)
    y = random_field(GRID, rng)
    vals = coercivity_values(y, P5, kappa=1.0, doublings=4)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_sequential_continuity_gaps_shrink():
    rng = default_rng(68)
    y = random_field(GRID, rng)
    pert = random_field(GRID, rng)
    duals = [random_field(GRID, rng) for _ in range(5)]
    gaps = sequential_continuity_gaps(y, pert, duals, P5, steps=5)
    # perturbation shrinks along the list: gaps decrease toward zero
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 1e-1 * gaps[0]
