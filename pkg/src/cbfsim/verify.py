"""Named property suites behind the ``verify`` CLI subcommand.

Each check draws its own generator seeded from the run seed and a stable
hash of the check name, so results are reproducible and independent of
execution order; reports are emitted sorted by check id through a single
writer.  A mutation name can be supplied to inject a known defect (sign
error in the absorption operator) and confirm the battery catches it.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable

import numpy as np

from .checks import CheckReport
from .control import (
    ControlParams,
    enstrophy_feedback,
    run_invariance,
    run_stabilization,
    run_time_optimal,
    solve_steady_state,
    steady_operator,
    time_optimal_admissibility,
)
from .evolution import StepperConfig, energy_ledger_check, simulate, yosida_continuation
from .operators import (
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
from .potentials import (
    EnstrophyIndicator,
    HypothesisConstants,
    SignBall,
    TikhonovIndicator,
    hypothesis_h3_probe,
    moreau,
    potential_value,
    project_enstrophy_ball,
    resolvent,
    yosida,
)
from .sampling import default_rng, random_field, single_mode_field
from .spectral import (
    SpectralField,
    TorusGrid,
    dealias,
    divergence_defect,
    enstrophy_norm,
    h_inner,
    h_norm,
    inverse_transform,
    laplacian,
    leray_project,
    lp_norm,
    regrid,
    stokes_apply,
    stokes_resolvent,
    zero_field,
)
from .stationary import (
    AccretivityShift,
    apply_shifted,
    apriori_bound_check,
    coercivity_values,
    quantized_stationary_solve,
    sequential_continuity_gaps,
    solve_stationary,
    stokes_control_estimate_probe,
)

GRID = TorusGrid(d=2, n=16)
P5 = FluidParams(mu=1.0, beta=1.0, r=5.0, d=2)
P3 = FluidParams(mu=1.0, beta=1.0, r=3.0, d=2)
P1 = FluidParams(mu=1.0, beta=1.0, r=1.0, d=2)

CheckFn = Callable[[np.random.Generator], CheckReport]
_REGISTRY: dict[str, list[tuple[str, CheckFn]]] = {}


def register(suite: str, check_id: str):
    def deco(fn: CheckFn) -> CheckFn:
        _REGISTRY.setdefault(suite, []).append((check_id, fn))
        return fn

    return deco


def suite_names() -> list[str]:
    return sorted(_REGISTRY)


def _report(check_id, margin, tol, samples, provenance, **details) -> CheckReport:
    return CheckReport.from_margin(
        check_id, margin=margin, tolerance=tol, samples=samples,
        provenance=provenance, **details,
    )


# ---------------------------------------------------------------------------
# spectral suite


@register("spectral", "parseval")
def _check_parseval(rng) -> CheckReport:
    worst = 0.0
    for _ in range(50):
        y = random_field(GRID, rng)
        phys = np.sum(inverse_transform(y).values ** 2) / GRID.n**2
        worst = max(worst, abs(phys - h_norm(y) ** 2) / h_norm(y) ** 2)
    return _report("parseval", 1e-12 - worst, 0.0, 50,
                   "physical L2 energy equals the coefficient sum")


@register("spectral", "leray-idempotent")
def _check_leray_idem(rng) -> CheckReport:
    worst = 0.0
    for _ in range(50):
        raw = SpectralField(GRID, random_field(GRID, rng).coeffs * (1 + 0.5j))
        once = leray_project(raw)
        twice = leray_project(once)
        worst = max(worst, float(np.max(np.abs(twice.coeffs - once.coeffs))))
    return _report("leray-idempotent", 1e-14 - worst, 0.0, 50,
                   "projecting twice equals projecting once")


@register("spectral", "stokes-self-adjoint")
def _check_selfadjoint(rng) -> CheckReport:
    worst = 0.0
    for _ in range(50):
        y, z = random_field(GRID, rng), random_field(GRID, rng)
        a, b = h_inner(stokes_apply(y), z), h_inner(y, stokes_apply(z))
        worst = max(worst, abs(a - b) / max(abs(a), 1e-30))
    return _report("stokes-self-adjoint", 1e-10 - worst, 0.0, 50,
                   "viscous pairing is symmetric")


@register("spectral", "laplacian-commutes")
def _check_commute(rng) -> CheckReport:
    worst = 0.0
    for _ in range(20):
        raw = SpectralField(GRID, random_field(GRID, rng).coeffs * (0.3 + 1j))
        lhs = leray_project(laplacian(raw))
        rhs = laplacian(leray_project(raw))
        worst = max(worst, float(np.max(np.abs(lhs.coeffs - rhs.coeffs))))
    return _report("laplacian-commutes", 1e-14 - worst, 0.0, 20,
                   "projection commutes with the Laplacian on the torus")


@register("spectral", "resolvent-contracts")
def _check_resolvent(rng) -> CheckReport:
    worst = -np.inf
    for _ in range(20):
        y = random_field(GRID, rng)
        for lam in (1e-3, 0.1, 1.0, 100.0):
            z = stokes_resolvent(y, lam)
            worst = max(
                worst,
                h_norm(z) - h_norm(y),
                enstrophy_norm(z) - enstrophy_norm(y),
            )
    return _report("resolvent-contracts", -worst, 1e-13, 80,
                   "the resolvent never increases H norm or enstrophy")


@register("spectral", "dealias-partition")
def _check_dealias(rng) -> CheckReport:
    worst = 0.0
    for _ in range(20):
        y = random_field(GRID, rng, kmax=GRID.n // 2 - 1)
        kept = dealias(y)
        inside = np.where(GRID.dealias_mask, y.coeffs, 0.0)
        worst = max(worst, float(np.max(np.abs(kept.coeffs - inside))))
    return _report("dealias-partition", 1e-15 - worst, 0.0, 20,
                   "dealiasing keeps exactly the retained band")


# ---------------------------------------------------------------------------
# operators suite


@register("operators", "convective-orthogonal")
def _check_b_orth(rng) -> CheckReport:
    worst = 0.0
    for _ in range(200):
        y = random_field(GRID, rng)
        scale = h_norm(y) ** 3 + 1e-30
        worst = max(worst, abs(h_inner(convective(y), y)) / scale)
    return _report("convective-orthogonal", 1e-10 - worst, 0.0, 200,
                   "the convective pairing with the state vanishes")


@register("operators", "trilinear-antisymmetric")
def _check_b_antisym(rng) -> CheckReport:
    worst = 0.0
    for _ in range(50):
        y, z, w = (random_field(GRID, rng) for _ in range(3))
        scale = h_norm(y) * h_norm(z) * h_norm(w) + 1e-30
        worst = max(worst, abs(trilinear(y, z, w) + trilinear(y, w, z)) / scale)
    return _report("trilinear-antisymmetric", 1e-10 - worst, 0.0, 50,
                   "swapping the last two arguments flips the sign")


@register("operators", "quantization-consistent")
def _check_quant(rng) -> CheckReport:
    worst = -np.inf
    eq_worst = 0.0
    for _ in range(50):
        y = random_field(GRID, rng)
        l4 = lp_norm(y, 4)
        for level in (0.5 * l4, 2.0 * l4):
            bn = quantized_convective(y, QuantizationLevel(level))
            worst = max(worst, h_norm(bn) - h_norm(convective(y)))
            if level >= l4:
                eq_worst = max(eq_worst, h_norm(bn - convective(y)))
    return _report("quantization-consistent", min(-worst, 1e-13 - eq_worst), 1e-13, 100,
                   "the rescaled convective term never exceeds the plain one")


@register("operators", "absorption-monotone")
def _check_c_monotone(rng) -> CheckReport:
    worst = np.inf
    for _ in range(200):
        y, z = random_field(GRID, rng), random_field(GRID, rng)
        gap, lower = forchheimer_pair_gap(y, z, P5)
        worst = min(worst, (gap - lower) / max(abs(gap), 1.0))
    return _report("absorption-monotone", worst, 1e-10, 200,
                   "absorption gap dominates the power-type lower bound")


@register("operators", "convective-absorbed")
def _check_2_30(rng) -> CheckReport:
    worst = np.inf
    for _ in range(100):
        y, z = random_field(GRID, rng), random_field(GRID, rng)
        rep = damping_absorbs_convection_check(y, z, P5)
        worst = min(worst, rep.margin)
    return _report("convective-absorbed", worst, 1e-10, 100,
                   "viscous+absorption split dominates the convective pairing")


@register("operators", "critical-global-monotone")
def _check_gm(rng) -> CheckReport:
    worst = np.inf
    for _ in range(100):
        y, z = random_field(GRID, rng), random_field(GRID, rng)
        val = h_inner(apply_shifted(y, P3, 0.0) - apply_shifted(z, P3, 0.0), y - z)
        worst = min(worst, val / max(h_norm(y - z) ** 2, 1e-30))
    return _report("critical-global-monotone", worst, 1e-10, 100,
                   "unshifted operator is monotone at the critical exponent")


@register("operators", "quantized-split")
def _check_lemma_split(rng) -> CheckReport:
    level = QuantizationLevel(200.0)
    p2 = FluidParams(mu=1.0, beta=1.0, r=2.0, d=2)

    def population(count):
        return [
            quantized_split_constant(
                random_field(GRID, rng, amplitude=50.0, decay=3.0),
                random_field(GRID, rng, amplitude=50.0, decay=3.0),
                level, p2,
            )
            for _ in range(count)
        ]

    fitted = max(population(200))
    fresh = population(200)
    violations = sum(1 for c in fresh if c > 2.0 * fitted)
    stability = max(fresh) / fitted
    ok = violations == 0 and 0.5 <= stability <= 2.0 and fitted > 0.0
    return _report("quantized-split", float(ok) - 1.0, 0.0, 400,
                   "viscous half plus a stable fitted zero-order term",
                   fitted_constant=fitted, stability=stability,
                   violations=violations)


@register("operators", "gateaux-first-order")
def _check_gateaux(rng) -> CheckReport:
    slopes = []
    for r, mean in ((2.0, 1.0), (4.0, 0.0)):
        p = FluidParams(mu=1.0, beta=1.0, r=r, d=2)
        y = random_field(GRID, rng, decay=3.0, kmax=5, mean_flow=mean)
        z = random_field(GRID, rng, decay=3.0, kmax=5)
        deriv = forchheimer_gateaux(y, z, p)
        hs = np.logspace(-2, -6, 5)
        errs = [
            h_norm((1.0 / h) * (forchheimer(y + h * z, p) - forchheimer(y, p)) - deriv)
            for h in hs
        ]
        slopes.append(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return _report("gateaux-first-order", min(slopes) - 0.9, 0.0, 2,
                   "difference quotients converge at first order",
                   slopes=slopes)


@register("operators", "torus-identity-refines")
def _check_identity(rng) -> CheckReport:
    coarse, fine = TorusGrid(d=2, n=16), TorusGrid(d=2, n=32)
    ratios, finals = [], []
    # fractional powers need |y| bounded away from zero (mean flow) for the
    # coarse-grid defect to be pure resolvable truncation error
    recipes = {2.0: (2.5, 2.0, 7), 3.0: (0.0, 1.5, 7), 5.0: (2.0, 2.0, 6)}
    for r in (2.0, 3.0, 5.0):
        p = FluidParams(mu=1.0, beta=1.0, r=r, d=2)
        mean, decay, kmax = recipes[r]
        y16 = random_field(coarse, rng, decay=decay, kmax=kmax, mean_flow=mean)
        y32 = regrid(y16, fine)
        _, _, res16 = critical_identity_residual(y16, p)
        _, _, res32 = critical_identity_residual(y32, p)
        finals.append(res32)
        ratios.append(res16 / max(res32, 1e-300))
    margin = min(min(ratios) - 4.0, min(1e-6 - f for f in finals))
    return _report("torus-identity-refines", margin, 0.0, 3,
                   "integration-by-parts defect shrinks at least 4x per refinement",
                   ratios=ratios, residuals_fine=finals)


@register("operators", "embedding-bounded")
def _check_embedding(rng) -> CheckReport:
    grid3 = TorusGrid(d=3, n=12)
    p = FluidParams(mu=1.0, beta=1.0, r=3.0, d=3)
    ratios = [embedding_ratio(random_field(grid3, rng), p) for _ in range(20)]
    ok = float(np.all(np.isfinite(ratios)))
    return _report("embedding-bounded", ok - 1.0, 0.0, 20,
                   "norm-to-weighted-gradient ratios stay finite",
                   max_ratio=float(np.max(ratios)))


# ---------------------------------------------------------------------------
# potentials suite


@register("potentials", "resolvent-nonexpansive")
def _check_nonexpansive(rng) -> CheckReport:
    phi = TikhonovIndicator(theta=0.5, inner=EnstrophyIndicator(0.8))
    worst = -np.inf
    for _ in range(100):
        y = random_field(GRID, rng, amplitude=1.5)
        z = random_field(GRID, rng, amplitude=1.5)
        worst = max(
            worst,
            h_norm(resolvent(phi, y, 0.25) - resolvent(phi, z, 0.25)) - h_norm(y - z),
        )
    return _report("resolvent-nonexpansive", -worst, 1e-12, 100,
                   "resolvents are 1-Lipschitz in H")


@register("potentials", "yosida-lipschitz")
def _check_yosida_lip(rng) -> CheckReport:
    phi = EnstrophyIndicator(1.0)
    lam = 0.2
    worst = -np.inf
    for _ in range(100):
        y = random_field(GRID, rng, amplitude=2.0)
        z = random_field(GRID, rng, amplitude=2.0)
        worst = max(
            worst,
            h_norm(yosida(phi, y, lam) - yosida(phi, z, lam))
            - h_norm(y - z) / lam,
        )
    return _report("yosida-lipschitz", -worst, 1e-12, 100,
                   "regularized operator is (1/lam)-Lipschitz")


@register("potentials", "yosida-monotone")
def _check_yosida_monotone(rng) -> CheckReport:
    specs = [
        EnstrophyIndicator(1.0),
        SignBall(kappa_c=1.0, target=zero_field(GRID)),
        TikhonovIndicator(theta=0.7, inner=EnstrophyIndicator(1.0)),
    ]
    worst = np.inf
    for phi in specs:
        for _ in range(67):
            y = random_field(GRID, rng, amplitude=2.0)
            z = random_field(GRID, rng, amplitude=2.0)
            val = h_inner(yosida(phi, y, 0.2) - yosida(phi, z, 0.2), y - z)
            worst = min(worst, val / max(h_norm(y - z) ** 2, 1e-30))
    return _report("yosida-monotone", worst, 1e-10, 201,
                   "regularized potentials are monotone")


@register("potentials", "resolvent-converges")
def _check_res_convergence(rng) -> CheckReport:
    phi = SignBall(kappa_c=1.0, target=zero_field(GRID))
    y = random_field(GRID, rng)
    dists = [h_norm(resolvent(phi, y, 2.0**-j) - y) for j in range(11)]
    monotone = all(a >= b - 1e-15 for a, b in zip(dists, dists[1:]))
    return _report("resolvent-converges", float(monotone) - 1.0, 0.0, 11,
                   "resolvents approach the identity as the parameter shrinks",
                   dists=dists)


@register("potentials", "projection-optimal")
def _check_projection_vi(rng) -> CheckReport:
    y = random_field(GRID, rng)
    varpi = 0.4 * enstrophy_norm(y)
    z = project_enstrophy_ball(y, varpi)
    worst = -np.inf
    for _ in range(50):
        w = project_enstrophy_ball(random_field(GRID, rng), varpi)
        scale = h_norm(y - z) * h_norm(w - z) + 1e-30
        worst = max(worst, h_inner(y - z, w - z) / scale)
    return _report("projection-optimal", -worst, 1e-10, 50,
                   "variational inequality of the metric projection")


@register("potentials", "projection-boundary")
def _check_projection_boundary(rng) -> CheckReport:
    worst = 0.0
    for _ in range(50):
        y = random_field(GRID, rng)
        varpi = 0.3 * enstrophy_norm(y)
        z = project_enstrophy_ball(y, varpi)
        worst = max(worst, abs(enstrophy_norm(z) - varpi) / varpi)
    return _report("projection-boundary", 1e-10 - worst, 0.0, 50,
                   "projections of outside points land on the sphere")


@register("potentials", "ball-resolvent-invariant")
def _check_ball_invariance(rng) -> CheckReport:
    worst = -np.inf
    for _ in range(50):
        y = random_field(GRID, rng)
        varpi = 0.8 * enstrophy_norm(y)
        z = project_enstrophy_ball(y, varpi)
        for lam in (1e-3, 1.0, 50.0):
            worst = max(worst, enstrophy_norm(stokes_resolvent(z, lam)) - varpi)
    return _report("ball-resolvent-invariant", -worst, 1e-12, 150,
                   "the viscous resolvent maps the enstrophy ball into itself")


@register("potentials", "stokes-compatibility")
def _check_h3(rng) -> CheckReport:
    consts = HypothesisConstants(gamma=0.0, varsigma=0.5)
    worst = np.inf
    for _ in range(60):
        y = random_field(GRID, rng)
        phi = EnstrophyIndicator(varpi=0.5 * enstrophy_norm(y))
        worst = min(worst, hypothesis_h3_probe(phi, y, 0.2, consts).margin)
        ball = SignBall(kappa_c=1.0, target=zero_field(GRID))
        worst = min(worst, hypothesis_h3_probe(ball, y, 0.2, consts).margin)
    return _report("stokes-compatibility", worst, 1e-10, 120,
                   "pairing of A y with the regularized potential is bounded below")


@register("potentials", "moreau-sandwich")
def _check_sandwich(rng) -> CheckReport:
    worst = -np.inf
    for _ in range(50):
        y = random_field(GRID, rng)
        phi = SignBall(kappa_c=2.0, target=zero_field(GRID))
        j = resolvent(phi, y, 0.2)
        env = moreau(phi, y, 0.2)
        worst = max(worst, potential_value(phi, j) - env,
                    env - potential_value(phi, y))
    return _report("moreau-sandwich", -worst, 1e-10, 50,
                   "envelope sits between the value at the resolvent and at the point")


# ---------------------------------------------------------------------------
# stationary suite


@register("stationary", "picard-contracts")
def _check_picard(rng) -> CheckReport:
    f = random_field(GRID, rng)
    rep = solve_stationary(f, P5, None, lam=0.1, shift=AccretivityShift(1.0), tol=1e-11)
    hist = rep.residual_history
    tail = [b / a for a, b in zip(hist[-6:-1], hist[-5:]) if a > 0]
    return _report("picard-contracts", 1.0 - max(tail), 0.0, len(hist),
                   "geometric residual decay of the damped iteration",
                   final_residual=rep.final_residual, ratio=max(tail))


@register("stationary", "uniqueness-gap")
def _check_unique(rng) -> CheckReport:
    f = random_field(GRID, rng)
    tol = 1e-11
    rep = solve_stationary(f, P5, EnstrophyIndicator(5.0), lam=0.1,
                           shift=AccretivityShift(1.0), tol=tol)
    return _report("uniqueness-gap", 10.0 * tol - rep.uniqueness_gap, 0.0, 2,
                   "two initial guesses reach the same solution",
                   gap=rep.uniqueness_gap)


@register("stationary", "shifted-monotone")
def _check_shifted(rng) -> CheckReport:
    from .stationary import shifted_monotonicity_gap

    kappa = rho_threshold(P5) + 0.5
    worst = np.inf
    for _ in range(100):
        y, z = random_field(GRID, rng), random_field(GRID, rng)
        gap = shifted_monotonicity_gap(y, z, P5, kappa)
        worst = min(worst, gap / max(h_norm(y - z) ** 2, 1e-30))
    return _report("shifted-monotone", worst, 1e-10, 100,
                   "shifted operator keeps half the viscous pairing")


@register("stationary", "coercive")
def _check_coercive(rng) -> CheckReport:
    y = random_field(GRID, rng)
    vals = coercivity_values(y, P5, kappa=1.0, doublings=4)
    growing = all(b > a for a, b in zip(vals, vals[1:]))
    return _report("coercive", float(growing) - 1.0, 0.0, len(vals),
                   "coercivity quotient grows along magnitude doublings")


@register("stationary", "apriori-sweep")
def _check_apriori(rng) -> CheckReport:
    f = random_field(GRID, rng)
    phi = EnstrophyIndicator(5.0)
    shift = AccretivityShift(1.0)
    ratios = []
    for scale in (1.0, 2.0, 4.0):
        rep = solve_stationary(scale * f, P5, phi, lam=0.1, shift=shift)
        ratios.append(apriori_bound_check(rep, scale * f, P5, shift).details["ratio"])
    margin = 4.0 * ratios[0] + 1e-9 - ratios[-1]
    return _report("apriori-sweep", margin, 0.0, 3,
                   "solution energy stays inside the linear data envelope",
                   ratios=ratios)


@register("stationary", "stokes-estimate-stable")
def _check_stokes_estimate(rng) -> CheckReport:
    grid3 = TorusGrid(d=3, n=12)
    p = FluidParams(mu=1.0, beta=1.0, r=5.0, d=3)
    shift = AccretivityShift(rho_threshold(p))
    maxima = []
    for _ in range(2):
        consts = [
            stokes_control_estimate_probe(
                random_field(grid3, rng), p, EnstrophyIndicator(1.0), 0.1, shift
            ).details["implied_constant"]
            for _ in range(25)
        ]
        maxima.append(max(consts))
    return _report("stokes-estimate-stable", 2.0 * min(maxima) - max(maxima), 0.0, 50,
                   "implied constants agree across disjoint populations",
                   maxima=maxima)


@register("stationary", "dequantization")
def _check_dequant(rng) -> CheckReport:
    p2 = FluidParams(mu=1.0, beta=1.0, r=2.0, d=2)
    f = 0.5 * random_field(GRID, rng)
    shift = AccretivityShift(3.0)
    rep = quantized_stationary_solve(f, p2, QuantizationLevel(50.0), None, 0.1, shift)
    plain = solve_stationary(f, p2, None, lam=0.1, shift=shift)
    gap = h_norm(rep.solution - plain.solution)
    certified = rep.details["dequantized"]
    return _report("dequantization", float(certified) - 1.0 + min(0.0, 1e-9 - gap),
                   0.0, 2,
                   "large radius reproduces the plain convective solve",
                   gap=gap, solution_l4=rep.details["solution_l4"])


@register("stationary", "sequentially-continuous")
def _check_seq(rng) -> CheckReport:
    y = random_field(GRID, rng)
    pert = random_field(GRID, rng)
    duals = [random_field(GRID, rng) for _ in range(5)]
    gaps = sequential_continuity_gaps(y, pert, duals, P5, steps=5)
    ok = all(b <= a for a, b in zip(gaps, gaps[1:])) and gaps[-1] <= 0.1 * gaps[0]
    return _report("sequentially-continuous", float(ok) - 1.0, 0.0, 5,
                   "operator pairings converge along strongly convergent states",
                   gaps=gaps)


# ---------------------------------------------------------------------------
# evolution suite


@register("evolution", "decay-accuracy")
def _check_decay(rng) -> CheckReport:
    shear = single_mode_field(GRID, (0, 1), component=0)
    cfg = StepperConfig(dt=1e-4, t_end=0.1, lam=0.1, record_every=100)
    traj = simulate(shear, None, P1, None, cfg)
    rate = P1.mu * (2 * np.pi) ** 2 + P1.beta
    exact = h_norm(shear) * np.exp(-rate * 0.1)
    err = abs(traj.norm_series[-1].h_norm - exact) / exact
    return _report("decay-accuracy", 1e-3 - err, 0.0, 1,
                   "terminal amplitude matches the closed-form decay",
                   relative_error=err)


@register("evolution", "ledger-first-order")
def _check_ledger(rng) -> CheckReport:
    shear = 1e-3 * single_mode_field(GRID, (0, 1), component=0)
    resids = []
    for dt in (2e-4, 1e-4):
        cfg = StepperConfig(dt=dt, t_end=0.02, lam=0.1, record_every=10)
        traj = simulate(shear, None, P1, None, cfg)
        resids.append(traj.max_step_residual)
        if not energy_ledger_check(traj).passed:
            return _report("ledger-first-order", -1.0, 0.0, 2,
                           "energy ledger out of scale")
    ratio = resids[1] / resids[0]
    ok = resids[1] <= 1e-6 and 0.3 <= ratio <= 0.7
    return _report("ledger-first-order", float(ok) - 1.0, 0.0, 2,
                   "per-step energy defect is first order in dt",
                   residuals=resids, ratio=ratio)


@register("evolution", "energy-monotone")
def _check_energy_monotone(rng) -> CheckReport:
    y0 = random_field(GRID, rng)
    phi = EnstrophyIndicator(varpi=2.0 * enstrophy_norm(y0))
    cfg = StepperConfig(dt=1e-3, t_end=0.05, lam=1e-2, record_every=5)
    traj = simulate(y0, None, P3, phi, cfg)
    h = [rep.h_norm for rep in traj.norm_series]
    worst = max(b - a for a, b in zip(h, h[1:]))
    return _report("energy-monotone", -worst, 1e-12, len(h),
                   "unforced kinetic energy never increases")


@register("evolution", "divergence-free")
def _check_divfree(rng) -> CheckReport:
    y0 = random_field(GRID, rng)
    cfg = StepperConfig(dt=1e-3, t_end=0.02, lam=0.1, record_every=4)
    traj = simulate(y0, None, P3, None, cfg)
    worst = max(divergence_defect(s) for s in traj.states)
    return _report("divergence-free", 1e-12 - worst, 0.0, len(traj.states),
                   "states remain divergence-free step by step")


@register("evolution", "step-order")
def _check_order(rng) -> CheckReport:
    y0 = random_field(GRID, rng, amplitude=0.5)
    dts = [4e-3, 2e-3, 1e-3]
    finals = []
    for dt in dts + [1.25e-4]:
        cfg = StepperConfig(dt=dt, t_end=0.04, lam=0.1, record_every=10**9)
        finals.append(simulate(y0, None, P3, None, cfg).states[-1])
    errs = [h_norm(f - finals[-1]) for f in finals[:-1]]
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return _report("step-order", slope - 0.9, 0.0, 3,
                   "global error decays at least at first order", slope=slope)


@register("evolution", "continuation")
def _check_continuation(rng) -> CheckReport:
    base = single_mode_field(GRID, (0, 1), component=0)
    y0 = (1.0 / enstrophy_norm(base)) * base
    phi = EnstrophyIndicator(varpi=1.5)
    forcing = (30.0 / h_norm(base)) * base
    cfg = StepperConfig(dt=2e-4, t_end=0.2, lam=1.0, record_every=20)
    _, report = yosida_continuation(
        y0, lambda t: forcing, P3, phi, cfg, lam_schedule=[1e-1, 1e-2, 1e-3]
    )
    diffs = report["cauchy_differences"]
    ints = report["int_potential_sq"]
    ok = all(b < a for a, b in zip(diffs, diffs[1:])) and ints[-1] <= 2.0 * ints[-2]
    return _report("continuation", float(ok) - 1.0, 0.0, 3,
                   "runs converge and potential integrals stay bounded",
                   cauchy=diffs, potential_integrals=ints)


@register("evolution", "potential-vanishes-inside")
def _check_phi_inside(rng) -> CheckReport:
    y0 = random_field(GRID, rng)
    phi = EnstrophyIndicator(varpi=2.0 * enstrophy_norm(y0))
    cfg = StepperConfig(dt=1e-3, t_end=0.02, lam=1e-2, record_every=2)
    traj = simulate(y0, None, P3, phi, cfg)
    worst = float(np.max(traj.control_series))
    return _report("potential-vanishes-inside", -worst, 1e-14, len(traj.states),
                   "the regularized potential is zero on interior states")


# ---------------------------------------------------------------------------
# control suite


@register("control", "feedback-interior-zero")
def _check_interior(rng) -> CheckReport:
    y = random_field(GRID, rng)
    ctrl = ControlParams(varpi=10.0 * enstrophy_norm(y))
    u = enstrophy_feedback(y, None, P5, ctrl)
    return _report("feedback-interior-zero", -h_norm(u), 0.0, 1,
                   "no control strictly inside the constraint set")


@register("control", "boundary-cancellation")
def _check_cancellation(rng) -> CheckReport:
    varpi = 2.0
    ctrl = ControlParams(varpi=varpi)
    worst = 0.0
    for _ in range(10):
        y = random_field(GRID, rng)
        y = (varpi / enstrophy_norm(y)) * y
        f = 1000.0 * y
        u = enstrophy_feedback(y, f, P5, ctrl)
        ay = stokes_apply(y)
        closed = f + u - P5.mu * ay - convective(y) - P5.beta * forchheimer(y, P5)
        worst = max(worst, abs(h_inner(closed, ay)) / (P5.mu * h_norm(ay) ** 2))
    return _report("boundary-cancellation", 1e-10 - worst, 0.0, 10,
                   "closed-loop pairing with A y cancels on the boundary")


@register("control", "invariance-forced")
def _check_invariance(rng) -> CheckReport:
    varpi = 2.0
    base = single_mode_field(GRID, (0, 1), component=0)
    y0 = (varpi / enstrophy_norm(base)) * base
    forcing = (40.0 / h_norm(base)) * base
    cfg = StepperConfig(dt=2e-4, t_end=0.1, lam=1e-3, record_every=20)
    rep = run_invariance(y0, lambda t: forcing, P5, ControlParams(varpi=varpi), cfg)
    ok = (
        rep.constraint_violation_max <= 1e-6
        and rep.details["active_steps"] > 0
        and rep.details["pairing_residual_max"] <= 1e-10
    )
    return _report("invariance-forced", float(ok) - 1.0, 0.0, 1,
                   "forced closed loop slides along the boundary",
                   violation=rep.constraint_violation_max,
                   active_steps=rep.details["active_steps"])


@register("control", "invariance-inactive-when-loose")
def _check_loose(rng) -> CheckReport:
    y0 = random_field(GRID, rng)
    base = single_mode_field(GRID, (0, 1), component=0)
    forcing = 2.0 * base
    cfg = StepperConfig(dt=1e-3, t_end=0.05, lam=1e-3, record_every=10)
    un = simulate(y0, lambda t: forcing, P5, None, cfg)
    peak = max(rep.enstrophy for rep in un.norm_series)
    rep = run_invariance(
        y0, lambda t: forcing, P5, ControlParams(varpi=10.0 * peak), cfg
    )
    sup_diff = max(h_norm(a - b) for a, b in zip(un.states, rep.trajectory.states))
    return _report("invariance-inactive-when-loose", 1e-12 - sup_diff, 0.0, 1,
                   "loose bound reproduces the uncontrolled run",
                   sup_diff=sup_diff)


@register("control", "time-optimal")
def _check_time_optimal(rng) -> CheckReport:
    ctrl = ControlParams(kappa_c=1.0)
    y0 = 0.5 * single_mode_field(GRID, (0, 1), component=0)
    cfg = StepperConfig(dt=1e-4, t_end=2.0, lam=1e-4, record_every=100)
    rep = run_time_optimal(y0, zero_field(GRID), P5, ctrl, cfg, tol_hit=1e-6)
    ok = (
        rep.hit_time <= rep.extinction_bound * 1.1
        and rep.details["control_max"] <= ctrl.kappa_c * (1.0 + 1e-12)
        and rep.details["comparison_margin_min"] >= -10.0 * cfg.dt
    )
    return _report("time-optimal", float(ok) - 1.0, 0.0, 1,
                   "bounded feedback reaches the target within the derived time",
                   hit_time=rep.hit_time, bound=rep.extinction_bound)


@register("control", "steady-state")
def _check_steady(rng) -> CheckReport:
    f_e = 0.1 * random_field(GRID, rng)
    y_e = solve_steady_state(f_e, P5, tol=1e-12)
    defect = h_norm(steady_operator(y_e, P5) - dealias(f_e))
    return _report("steady-state", 1e-11 - defect, 0.0, 1,
                   "computed equilibrium satisfies the steady balance",
                   defect=defect)


@register("control", "stabilization")
def _check_stabilization(rng) -> CheckReport:
    theta = 1.0
    z0 = 1e-3 * single_mode_field(GRID, (0, 1), component=0)
    cfg = StepperConfig(dt=1e-4, t_end=0.05, lam=1e-6, record_every=10)
    rep = run_stabilization(
        z0, zero_field(GRID), P1, ControlParams(theta=theta),
        EnstrophyIndicator(1.0), cfg,
    )
    oracle = P1.mu * (2 * np.pi) ** 2 + P1.beta + theta
    rate_ok = abs(rep.decay_rate - oracle) / oracle <= 0.1
    ok = rate_ok and rep.constraint_violation_max <= 1e-6
    return _report("stabilization", float(ok) - 1.0, 0.0, 1,
                   "deviation decays exponentially inside the ball",
                   decay_rate=rep.decay_rate, oracle=oracle)


@register("control", "admissibility")
def _check_admissibility(rng) -> CheckReport:
    ctrl = ControlParams(kappa_c=1.0)
    y0 = 0.1 * single_mode_field(GRID, (0, 1), component=0)
    rep = time_optimal_admissibility(y0, zero_field(GRID), P5, ctrl)
    good = rep.details["admissible"] and rep.details["eta"] == 1.0

    tight = time_optimal_admissibility(
        y0, 0.5 * single_mode_field(GRID, (0, 1), component=0), P5,
        ControlParams(kappa_c=1e-6),
    )
    good = good and not tight.details["admissible"]
    return _report("admissibility", float(good) - 1.0, 0.0, 2,
                   "budget and distance conditions classified correctly")


# ---------------------------------------------------------------------------
# runner


def run_suites(
    suites: Iterable[str],
    seed: int = 0,
    mutate: str | None = None,
    threads: int | None = None,
) -> list[CheckReport]:
    """Execute the selected suites; deterministic for a given seed."""
    wanted = list(suites)
    if "all" in wanted:
        wanted = suite_names()
    unknown = [s for s in wanted if s not in _REGISTRY]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    jobs = [(cid, fn) for s in wanted for cid, fn in _REGISTRY[s]]

    def run_one(item):
        cid, fn = item
        rng = default_rng(seed + zlib.crc32(cid.encode()))
        return fn(rng)

    if threads is None:
        threads = int(os.environ.get("CBF_THREADS", "1"))
    if mutate:
        with mutation(mutate):
            reports = [run_one(j) for j in jobs]  # mutations are process-global
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run_one, jobs))
    else:
        reports = [run_one(j) for j in jobs]
    return sorted(reports, key=lambda r: r.check_id)
