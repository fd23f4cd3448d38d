import numpy as np
import pytest

from cbfsim.operators import (
    FluidParams,
    QuantizationLevel,
    convective,
    critical_identity_residual,
    damping_absorbs_convection_check,
    embedding_ratio,
    forchheimer,
    forchheimer_gateaux,
    forchheimer_pair_gap,
    mutation,
    quantized_convective,
    quantized_split_constant,
    rho_threshold,
    trilinear,
)
from cbfsim.sampling import default_rng, random_field, single_mode_field, taylor_green_field
from cbfsim.spectral import (
    PhysicalField,
    TorusGrid,
    forward_transform,
    h_inner,
    h_norm,
    lp_norm,
    norms,
    regrid,
    zero_field,
)

GRID = TorusGrid(d=2, n=16)
P5 = FluidParams(mu=1.0, beta=1.0, r=5.0, d=2)


def params(r, mu=1.0, beta=1.0, d=2):
    return FluidParams(mu=mu, beta=beta, r=r, d=d)


def fine_quadrature(fn, n=96, d=2):
    """Trapezoid quadrature of a closed-form integrand on an independent grid."""
    x = np.meshgrid(*([np.arange(n) / n] * d), indexing="ij")
    return float(np.mean(fn(*x)))


def test_convective_constant_field_is_zero():
    values = np.zeros((2,) + GRID.shape)
    values[0] = 0.7
    values[1] = -1.3
    c = forward_transform(PhysicalField(GRID, values))
    c.divergence_free = True
    assert h_norm(convective(c)) < 1e-14


def test_convective_orthogonality_random_fields():
    rng = default_rng(20)
    for _ in range(20):
        y = random_field(GRID, rng)
        scale = h_norm(convective(y)) * h_norm(y) + 1e-30
        assert abs(h_inner(convective(y), y)) <= 1e-10 * scale


def test_convective_taylor_green_is_pure_gradient():
    # (y.grad)y = pi (sin 4 pi x1, sin 4 pi x2) = grad phi, so B(y) = 0.
    y = taylor_green_field(GRID)
    assert h_norm(convective(y)) < 1e-12


def test_trilinear_against_direct_quadrature():
    # y = (sin 2 pi x2, 0), z = Taylor-Green, w = (0, sin 2 pi x1)
    y = single_mode_field(GRID, (0, 1), component=0)
    z = taylor_green_field(GRID)
    w = single_mode_field(GRID, (1, 0), component=1)

    def integrand(x1, x2):
        a, b = 2 * np.pi * x1, 2 * np.pi * x2
        y1 = np.sin(b)
        # z = (sin a cos b, -cos a sin b); w = (0, sin a)
        dz2_dx1 = 2 * np.pi * np.sin(a) * np.sin(b)
        return y1 * dz2_dx1 * np.sin(a)

    oracle = fine_quadrature(integrand)
    assert trilinear(y, z, w) == pytest.approx(oracle, abs=1e-12)


def test_trilinear_identities():
    rng = default_rng(21)
    y = random_field(GRID, rng)
    z = random_field(GRID, rng)
    w = random_field(GRID, rng)
    scale = h_norm(y) * h_norm(z) * h_norm(w) + 1e-30
    assert abs(trilinear(y, z, z)) <= 1e-10 * scale
    assert trilinear(y, z, w) == pytest.approx(-trilinear(y, w, z), abs=1e-10 * scale)


def test_trilinear_rejects_grid_mismatch():
    other = TorusGrid(d=2, n=32)
    with pytest.raises(ValueError):
        trilinear(zero_field(GRID), zero_field(other), zero_field(other))


def test_quantized_convective_scaling():
    rng = default_rng(22)
    y = random_field(GRID, rng)
    l4 = lp_norm(y, 4)

    inside = quantized_convective(y, QuantizationLevel(2.0 * l4))
    assert h_norm(inside - convective(y)) < 1e-14

    assert h_norm(quantized_convective(y, QuantizationLevel(0.0))) == 0.0

    half = quantized_convective(y, QuantizationLevel(0.5 * l4))
    assert h_norm(half - (1.0 / 16.0) * convective(y)) < 1e-13 * h_norm(convective(y))


def test_quantized_never_larger_and_equality_inside():
    rng = default_rng(23)
    for _ in range(10):
        y = random_field(GRID, rng)
        l4 = lp_norm(y, 4)
        for level in (0.3 * l4, 1.5 * l4):
            bn = quantized_convective(y, QuantizationLevel(level))
            assert h_norm(bn) <= h_norm(convective(y)) + 1e-14
            if level >= l4:
                assert h_norm(bn - convective(y)) < 1e-14


def test_forchheimer_r1_is_identity_on_divergence_free():
    rng = default_rng(24)
    y = random_field(GRID, rng)
    assert h_norm(forchheimer(y, params(1.0)) - y) < 1e-12


def test_forchheimer_energy_identity():
    fine = TorusGrid(d=2, n=32)
    rng = default_rng(25)
    for r in (2.0, 3.0, 4.5):
        y = random_field(fine, rng, decay=5.0, kmax=3, amplitude=0.5, mean_flow=2.0)
        lhs = h_inner(forchheimer(y, params(r)), y)
        rhs = norms(y, ps=[r + 1]).lp_norms[r + 1] ** (r + 1)
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_forchheimer_monotonicity_samples():
    rng = default_rng(26)
    for _ in range(100):
        y = random_field(GRID, rng)
        z = random_field(GRID, rng)
        gap, lower = forchheimer_pair_gap(y, z, P5)
        assert gap >= lower - 1e-10 * max(gap, 1.0)
        assert gap >= -1e-12


def test_forchheimer_rejects_small_r():
    with pytest.raises(ValueError):
        params(0.5)


def test_gateaux_r1_and_zero_state():
    rng = default_rng(27)
    y = random_field(GRID, rng)
    z = random_field(GRID, rng)
    assert h_norm(forchheimer_gateaux(y, z, params(1.0)) - z) < 1e-13
    assert h_norm(forchheimer_gateaux(zero_field(GRID), z, params(2.0))) == 0.0


@pytest.mark.parametrize("r,mean", [(2.0, 1.0), (4.0, 0.0)])
def test_gateaux_matches_finite_differences(r, mean):
    rng = default_rng(28)
    y = random_field(GRID, rng, decay=3.0, kmax=5, mean_flow=mean)
    z = random_field(GRID, rng, decay=3.0, kmax=5)
    p = params(r)
    deriv = forchheimer_gateaux(y, z, p)
    hs = np.logspace(-2, -6, 5)
    errs = [
        h_norm((1.0 / h) * (forchheimer(y + h * z, p) - forchheimer(y, p)) - deriv)
        for h in hs
    ]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 0.9


def test_identity_residual_r1_and_zero():
    rng = default_rng(29)
    y = random_field(GRID, rng, kmax=5)
    lhs, rhs, res = critical_identity_residual(y, params(1.0))
    assert res <= 1e-10
    assert lhs == pytest.approx(norms(y).enstrophy ** 2, rel=1e-10)

    lhs0, rhs0, res0 = critical_identity_residual(zero_field(GRID), params(3.0))
    assert (lhs0, rhs0, res0) == (0.0, 0.0, 0.0)


def test_identity_residual_refines():
    # same trigonometric polynomial on n=16 and n=32; fractional power r=2
    coarse = TorusGrid(d=2, n=16)
    fine = TorusGrid(d=2, n=32)
    rng = default_rng(30)
    y16 = random_field(coarse, rng, decay=2.0, kmax=7, mean_flow=2.5)
    y32 = regrid(y16, fine)
    _, _, res16 = critical_identity_residual(y16, params(2.0))
    _, _, res32 = critical_identity_residual(y32, params(2.0))
    assert res32 <= 1e-6
    assert res16 >= 4.0 * res32


def test_rho_threshold_values():
    assert rho_threshold(params(5.0)) == pytest.approx(1.0 / 8.0, rel=1e-14)
    assert rho_threshold(params(7.0)) == pytest.approx(3.0 ** -1.5, rel=1e-12)
    assert rho_threshold(params(3.0)) == 0.0
    with pytest.raises(ValueError):
        rho_threshold(params(3.0, mu=0.4, beta=1.0))
    with pytest.raises(ValueError):
        rho_threshold(params(2.0))


def test_damping_absorbs_convection():
    rng = default_rng(31)
    y = random_field(GRID, rng)

    rep = damping_absorbs_convection_check(y, zero_field(GRID), P5)
    assert rep.passed

    same = damping_absorbs_convection_check(y, y, P5)
    assert same.passed and same.margin == pytest.approx(0.0, abs=1e-12)

    for _ in range(50):
        a = random_field(GRID, rng)
        b = random_field(GRID, rng)
        assert damping_absorbs_convection_check(a, b, P5).passed

    with pytest.raises(ValueError):
        damping_absorbs_convection_check(y, y, params(3.0))


def test_embedding_ratio_cases():
    assert embedding_ratio(zero_field(GRID), params(3.0)) == 0.0

    values = np.zeros((2,) + GRID.shape)
    values[0] = 1.0
    const = forward_transform(PhysicalField(GRID, values))
    const.divergence_free = True
    assert embedding_ratio(const, params(3.0)) == float("inf")

    rng = default_rng(32)
    ratios = [embedding_ratio(random_field(GRID, rng), params(3.0)) for _ in range(20)]
    assert np.all(np.isfinite(ratios))


def test_quantized_split_stabilizes():
    # large-amplitude pairs so the viscous half of the split does not trivially
    # dominate; the fitted constant must agree across disjoint populations
    rng = default_rng(33)
    level = QuantizationLevel(200.0)
    pops = []
    for _ in range(2):
        consts = [
            quantized_split_constant(
                random_field(GRID, rng, amplitude=50.0, decay=3.0),
                random_field(GRID, rng, amplitude=50.0, decay=3.0),
                level,
                params(2.0),
            )
            for _ in range(100)
        ]
        pops.append(max(consts))
    assert pops[0] > 0.0
    assert max(pops) <= 2.0 * min(pops)


def test_mutation_hook_flips_monotonicity():
    rng = default_rng(34)
    y = random_field(GRID, rng)
    z = random_field(GRID, rng)
    gap, lower = forchheimer_pair_gap(y, z, P5)
    assert gap >= lower
    with mutation("c-sign"):
        bad_gap, bad_lower = forchheimer_pair_gap(y, z, P5)
    assert bad_gap < bad_lower
