"""Feedback control applications built on the regularized evolution.

Three closed loops:

* enstrophy invariance -- a normal-cone feedback ``U = -lam0 A y`` active on
  the boundary of the ball ``||grad y|| <= varpi``, with ``lam0`` chosen so
  that the pairing of the closed-loop right side with ``A y`` cancels (the
  enstrophy growth rate vanishes);
* time-optimal steering -- the bounded feedback ``U = -kappa sgn(y - y1)``
  applied through its Lipschitz regularization, with the finite-extinction
  bound derived from the comparison inequality
  ``d||z||/dt + eta <= rho ||z||``;
* stabilization -- the Tikhonov-plus-normal-cone potential acting on the
  deviation from a steady state.

The boundary of a constraint set is measure-zero in the continuum; discretely
the feedback activates on a relative band, and a safety projection reins in
any overshoot so the invariance assertions hold step by step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .checks import CheckReport
from .evolution import (
    EnergyLedger,
    ForcingEvaluator,
    StepperConfig,
    Trajectory,
    _sample,
    _step_core,
    _stiff_factor,
)
from .operators import FluidParams, convective, forchheimer, rho_threshold
from .potentials import (
    BOUNDARY_BAND,
    EnstrophyIndicator,
    Recentered,
    SignBall,
    TikhonovIndicator,
    project_enstrophy_ball,
    yosida,
)
from .spectral import (
    SpectralField,
    dealias,
    ensure_divergence_free,
    enstrophy_norm,
    h_inner,
    h_norm,
    stokes_apply,
    zero_field,
)


class ControlFailure(RuntimeError):
    """A controlled run missed its objective; details carry diagnostics."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class ControlParams:
    """Gains and bounds of the three applications; unused fields stay None."""

    varpi: Optional[float] = None      # enstrophy bound (invariance, stabilization)
    kappa_c: Optional[float] = None    # control magnitude bound (time-optimal)
    theta: Optional[float] = None      # Tikhonov gain (stabilization)
    eta: Optional[float] = None        # extinction margin, derived by admissibility

    def __post_init__(self):
        for name in ("varpi", "kappa_c", "theta"):
            val = getattr(self, name)
            if val is not None and val <= 0.0:
                raise ValueError(f"{name} must be positive when set, got {val}")

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"control parameters missing: {', '.join(missing)}")


@dataclass
class ControlledRunReport:
    trajectory: Trajectory
    control_norm_series: np.ndarray
    constraint_violation_max: float = 0.0
    hit_time: Optional[float] = None
    extinction_bound: Optional[float] = None
    decay_rate: Optional[float] = None
    success: bool = True
    details: dict | None = None

    def __post_init__(self):
        if (
            self.success
            and self.hit_time is not None
            and self.extinction_bound is not None
            and self.hit_time > self.extinction_bound
        ):
            raise ValueError("successful run must hit within the extinction bound")


# ---------------------------------------------------------------------------
# enstrophy invariance


def enstrophy_feedback(
    y: SpectralField,
    f: Optional[SpectralField],
    params: FluidParams,
    ctrl: ControlParams,
    include_beta: bool = True,
    band: float = BOUNDARY_BAND,
) -> SpectralField:
    """Normal-cone feedback on the boundary of the enstrophy ball.

    Inside the ball the control vanishes.  On the boundary band the cone
    multiplier cancels the enstrophy growth rate; a nonpositive multiplier
    means the uncontrolled flow already points inward and no control is
    applied (the cone contains only outward multiples of ``A y``).

    ``include_beta`` keeps the absorption pairing weighted by ``beta`` as the
    dynamics requires for exact cancellation; disable it to reproduce the
    unweighted variant of the multiplier formula.
    """
    ctrl.require("varpi")
    ens = enstrophy_norm(y)
    varpi = ctrl.varpi
    if ens > varpi * (1.0 + band):
        raise ValueError(f"state outside the admissible band: {ens} > {varpi}")
    if ens < varpi * (1.0 - band):
        return zero_field(y.grid)
    ay = stokes_apply(y)
    ay_sq = h_norm(ay) ** 2
    if ay_sq == 0.0:
        raise ValueError("A y vanishes on the boundary; feedback undefined")
    drift = -params.mu * ay_sq - h_inner(convective(y), ay)
    weight = params.beta if include_beta else 1.0
    drift -= weight * h_inner(forchheimer(y, params), ay)
    if f is not None:
        drift += h_inner(f, ay)
    lam0 = drift / ay_sq
    if lam0 <= 0.0:
        return zero_field(y.grid)
    return (-lam0) * ay


def run_invariance(
    y0: SpectralField,
    f_at: ForcingEvaluator,
    params: FluidParams,
    ctrl: ControlParams,
    cfg: StepperConfig,
) -> ControlledRunReport:
    """Closed-loop run keeping the enstrophy inside the ball.

    Reports the worst relative overshoot observed before the safety
    projection and the cancellation defect of the closed-loop pairing with
    ``A y`` on the steps where the control is active.
    """
    ctrl.require("varpi")
    y = ensure_divergence_free(y0)
    varpi = ctrl.varpi
    if enstrophy_norm(y) > varpi * (1.0 + BOUNDARY_BAND):
        raise ValueError("initial state outside the constraint set")

    n_steps = int(round(cfg.t_end / cfg.dt))
    factor = _stiff_factor(y.grid, params.mu, cfg.dt)
    times = [0.0]
    states = [y]
    rep, _, anorm, mixed = _sample(y, params, None, cfg.lam)
    norm_series, stokes_series, mixed_series = [rep], [anorm], [mixed]
    controls = [0.0]
    ledgers = [EnergyLedger(0.5 * h_norm(y) ** 2, 0.0, 0.0, 0.0, 0.0, 0.0)]
    violation_max = 0.0
    overshoot_max = 0.0
    pairing_max = 0.0
    max_residual = 0.0
    active_steps = 0
    u_since_sample = 0.0

    for i in range(n_steps):
        t = i * cfg.dt
        f_now = dealias(ensure_divergence_free(f_at(t))) if f_at is not None else None
        u = enstrophy_feedback(y, f_now, params, ctrl)
        u_since_sample = max(u_since_sample, h_norm(u))
        if h_norm(u) > 0.0:
            active_steps += 1
            ay = stokes_apply(y)
            closed = u - params.mu * ay - convective(y) - params.beta * forchheimer(y, params)
            if f_now is not None:
                closed = closed + f_now
            scale = params.mu * h_norm(ay) ** 2 + h_norm(u) * h_norm(ay) + 1e-30
            pairing_max = max(pairing_max, abs(h_inner(closed, ay)) / scale)
        rhs_total = f_now + u if f_now is not None else u
        y, ledger = _step_core(y, t, lambda s: rhs_total, params, None, cfg, factor)
        max_residual = max(max_residual, ledger.step_residual)
        ens = enstrophy_norm(y)
        overshoot_max = max(overshoot_max, max(0.0, ens / varpi - 1.0))
        if ens > varpi:
            y = project_enstrophy_ball(y, varpi)  # the law's safety projection
            ens = enstrophy_norm(y)
        violation_max = max(violation_max, max(0.0, ens / varpi - 1.0))
        if (i + 1) % cfg.record_every == 0 or (i + 1) == n_steps:
            times.append((i + 1) * cfg.dt)
            states.append(y)
            rep, _, anorm, mixed = _sample(y, params, None, cfg.lam)
            norm_series.append(rep)
            stokes_series.append(anorm)
            mixed_series.append(mixed)
            controls.append(u_since_sample)  # peak control over the interval
            u_since_sample = 0.0
            ledgers.append(ledger)

    traj = Trajectory(
        times=np.array(times),
        states=states,
        norm_series=norm_series,
        control_series=np.array(controls),
        ledgers=ledgers,
        stokes_series=np.array(stokes_series),
        mixed_series=np.array(mixed_series),
        max_step_residual=max_residual,
        params=params,
        cfg=cfg,
    )
    return ControlledRunReport(
        trajectory=traj,
        control_norm_series=np.array(controls),
        constraint_violation_max=violation_max,
        details={
            "pairing_residual_max": pairing_max,
            "overshoot_max": overshoot_max,
            "active_steps": active_steps,
        },
    )


def _assemble_trajectory(times, states, controls, params, phi, cfg) -> Trajectory:
    samples = [_sample(s, params, phi, cfg.lam) for s in states]
    return Trajectory(
        times=np.array(times),
        states=states,
        norm_series=[s[0] for s in samples],
        control_series=np.array(controls),
        ledgers=[
            EnergyLedger(0.5 * h_norm(s) ** 2, 0.0, 0.0, 0.0, 0.0, 0.0)
            for s in states
        ],
        stokes_series=np.array([s[2] for s in samples]),
        mixed_series=np.array([s[3] for s in samples]),
        max_step_residual=0.0,
        params=params,
        cfg=cfg,
    )


# ---------------------------------------------------------------------------
# time-optimal steering


def steady_operator(y: SpectralField, params: FluidParams) -> SpectralField:
    """``mu A y + B(y) + beta C(y)`` as the discrete dynamics evaluates it
    (absorption dealiased, matching the time stepper)."""
    return (
        params.mu * stokes_apply(y)
        + convective(y)
        + params.beta * dealias(forchheimer(y, params))
    )


def extinction_bound(rho: float, eta: float, dist0: float) -> float:
    """Time for the comparison dynamics ``d rho/dt = rho * r - eta`` to
    reach zero from ``dist0``; infinite when the margin cannot win."""
    if eta <= 0.0:
        return float("inf")
    if rho == 0.0:
        return dist0 / eta
    if rho * dist0 >= eta:
        return float("inf")
    return float(np.log(eta / (eta - rho * dist0)) / rho)


def time_optimal_admissibility(
    y0: SpectralField,
    y1: SpectralField,
    params: FluidParams,
    ctrl: ControlParams,
) -> CheckReport:
    """Check the two admissibility conditions of the bounded feedback.

    The target's steady residual must stay strictly below the control budget
    (margin ``eta``), and the initial distance must not exceed ``eta / rho``.
    """
    ctrl.require("kappa_c")
    rho = rho_threshold(params)  # rejects regimes without a threshold
    load = h_norm(steady_operator(y1, params))
    eta = ctrl.kappa_c - load
    dist0 = h_norm(y0 - y1)
    radius = float("inf") if rho == 0.0 else eta / rho
    admissible = eta > 0.0 and dist0 <= radius
    margin = min(eta, radius - dist0 if np.isfinite(radius) else eta)
    return CheckReport.from_margin(
        "time-optimal-admissibility",
        margin=margin,
        tolerance=0.0,
        samples=1,
        provenance="control budget exceeds the target load within the reachable ball",
        eta=eta,
        rho=rho,
        distance=dist0,
        admissible_radius=radius,
        admissible=admissible,
    )


def run_time_optimal(
    y0: SpectralField,
    y1: SpectralField,
    params: FluidParams,
    ctrl: ControlParams,
    cfg: StepperConfig,
    tol_hit: float = 1e-6,
) -> ControlledRunReport:
    """Drive the state to the target with the regularized sign feedback.

    The free dynamics plus ``U = -Theta_lam(y - y1)`` runs until the
    H-distance to the target falls below ``tol_hit``; the report carries the
    comparison-inequality margins ``rho ||z|| - eta - d||z||/dt`` recorded
    while ``||z|| >= lam``.
    """
    ctrl.require("kappa_c")
    adm = time_optimal_admissibility(y0, y1, params, ctrl)
    if not adm.details["admissible"]:
        raise ControlFailure("inadmissible initial/target pair", report=adm)
    rho = adm.details["rho"]
    eta = adm.details["eta"]
    dist0 = h_norm(y0 - y1)
    bound = extinction_bound(rho, eta, dist0)

    phi = SignBall(kappa_c=ctrl.kappa_c, target=y1)
    y = ensure_divergence_free(y0)
    factor = _stiff_factor(y.grid, params.mu, cfg.dt)
    n_steps = int(round(cfg.t_end / cfg.dt))

    dists = [dist0]                      # every step
    controls = [h_norm(yosida(phi, y, cfg.lam))]
    sample_times, sample_states, sample_controls = [0.0], [y], [controls[0]]
    hit_time: Optional[float] = None
    if dist0 <= tol_hit:
        hit_time = 0.0
    i = 0
    while hit_time is None and i < n_steps:
        t = i * cfg.dt
        y, _ = _step_core(y, t, None, params, phi, cfg, factor)
        i += 1
        d = h_norm(y - y1)
        dists.append(d)
        controls.append(h_norm(yosida(phi, y, cfg.lam)))
        if d <= tol_hit:
            hit_time = i * cfg.dt
        if i % cfg.record_every == 0 or hit_time is not None or i == n_steps:
            sample_times.append(i * cfg.dt)
            sample_states.append(y)
            sample_controls.append(controls[-1])

    if hit_time is None:
        raise ControlFailure(
            f"target not reached before t = {cfg.t_end}",
            closest_approach=min(dists),
        )

    dists_arr = np.array(dists)
    rates = np.diff(dists_arr) / cfg.dt
    # the comparison inequality concerns the outer branch of the regularized
    # sign: restrict to steps whose endpoints both stay at distance >= lam
    valid = (dists_arr[:-1] >= cfg.lam) & (dists_arr[1:] >= cfg.lam)
    margins = rho * dists_arr[:-1] - eta - rates
    worst_margin = float(np.min(margins[valid])) if np.any(valid) else 0.0

    traj = _assemble_trajectory(
        sample_times, sample_states, sample_controls, params, phi, cfg
    )
    return ControlledRunReport(
        trajectory=traj,
        control_norm_series=np.array(controls),
        hit_time=hit_time,
        extinction_bound=bound,
        success=hit_time <= bound,
        details={
            "eta": eta,
            "rho": rho,
            "distance_series": dists_arr,
            "comparison_margin_min": worst_margin,
            "control_max": float(np.max(controls)),
        },
    )


# ---------------------------------------------------------------------------
# stabilization around a steady state


def solve_steady_state(
    f_e: SpectralField,
    params: FluidParams,
    tol: float = 1e-11,
    max_iter: int = 20000,
) -> SpectralField:
    """Solve ``mu A y + B(y) + beta C(y) = f_e`` by damped Picard iteration.

    An artificial shift ``sigma`` is added to both sides, so every stage
    solves the unmodified equation while the iteration map stays a
    contraction; the shift is reduced in stages (floored away from zero: the
    zero mode carries no viscosity) with warm starts.
    """
    f_e = dealias(ensure_divergence_free(f_e))
    grid = f_e.grid
    y = zero_field(grid)

    def residual(y):
        return h_norm(steady_operator(y, params) - f_e)

    res = residual(y)
    for sigma in (4.0, 1.0, 0.25, 1.0 / 16.0):
        inv = 1.0 / (sigma + params.mu * grid.stokes_multiplier)
        omega = 1.0
        for _ in range(max_iter // 4):
            if res <= tol:
                return y
            rhs = (
                f_e
                - convective(y)
                - params.beta * dealias(forchheimer(y, params))
                + sigma * y
            )
            target = SpectralField(grid, inv * rhs.coeffs, True)
            candidate = (1.0 - omega) * y + omega * target
            new_res = residual(candidate)
            if new_res >= res and omega > 1.0 / 64.0:
                omega *= 0.5
                continue
            y = candidate
            res = new_res
    if res > tol:
        raise ControlFailure(f"steady-state continuation stalled at residual {res:.3e}",
                             residual=res)
    return y


def fit_decay_rate(times: np.ndarray, values: np.ndarray) -> float:
    """Exponential rate from a log-linear fit; zero if the data degenerates."""
    mask = values > 1e-14
    if np.sum(mask) < 2:
        return 0.0
    slope = np.polyfit(times[mask], np.log(values[mask]), 1)[0]
    return float(-slope)


def run_stabilization(
    y0: SpectralField,
    y_e: SpectralField,
    params: FluidParams,
    ctrl: ControlParams,
    phi_inner: EnstrophyIndicator,
    cfg: StepperConfig,
) -> ControlledRunReport:
    """Drive the deviation from the steady state to zero inside the ball.

    The loop integrates the original dynamics forced by the steady load with
    the recentered Tikhonov-plus-indicator potential, which is equivalent to
    the shifted system for the deviation ``z = y - y_e``.  The steady load is
    assembled with the scheme's effective viscous multiplier
    ``(exp(mu (2 pi |k|)^2 dt) - 1) / dt`` so that ``y_e`` is an exact fixed
    point of the discrete step.  The report carries the worst relative
    violation of ``z`` against the ball and the fitted exponential decay
    rate of ``||z||_H``.
    """
    ctrl.require("theta")
    y = ensure_divergence_free(y0)
    y_e = ensure_divergence_free(y_e)
    z0 = y - y_e
    varpi = phi_inner.varpi
    if enstrophy_norm(z0) > varpi * (1.0 + BOUNDARY_BAND):
        raise ValueError("initial deviation outside the constraint set")

    phi = Recentered(
        inner=TikhonovIndicator(theta=ctrl.theta, inner=phi_inner), center=y_e
    )
    grid = y.grid
    viscous_eff = np.expm1(params.mu * grid.stokes_multiplier * cfg.dt) / cfg.dt
    f_e = SpectralField(grid, viscous_eff * y_e.coeffs, True)
    f_e = f_e + convective(y_e) + params.beta * dealias(forchheimer(y_e, params))
    factor = _stiff_factor(y.grid, params.mu, cfg.dt)
    n_steps = int(round(cfg.t_end / cfg.dt))

    times = [0.0]
    states = [y]
    zdist = [h_norm(z0)]
    controls = [h_norm(yosida(phi, y, cfg.lam))]
    violation_max = 0.0
    overshoot_max = 0.0
    for i in range(n_steps):
        t = i * cfg.dt
        y, _ = _step_core(y, t, lambda s: f_e, params, phi, cfg, factor)
        z = y - y_e
        ens = enstrophy_norm(z)
        overshoot_max = max(overshoot_max, max(0.0, ens / varpi - 1.0))
        if ens > varpi:
            y = y_e + project_enstrophy_ball(z, varpi)
            ens = enstrophy_norm(y - y_e)
        violation_max = max(violation_max, max(0.0, ens / varpi - 1.0))
        if (i + 1) % cfg.record_every == 0 or (i + 1) == n_steps:
            times.append((i + 1) * cfg.dt)
            states.append(y)
            zdist.append(h_norm(y - y_e))
            controls.append(h_norm(yosida(phi, y, cfg.lam)))

    times_arr = np.array(times)
    zdist_arr = np.array(zdist)
    rate = fit_decay_rate(times_arr, zdist_arr)
    traj = _assemble_trajectory(times, states, controls, params, phi, cfg)
    return ControlledRunReport(
        trajectory=traj,
        control_norm_series=np.array(controls),
        constraint_violation_max=violation_max,
        decay_rate=rate,
        details={"deviation_series": zdist_arr, "overshoot_max": overshoot_max},
    )
