"""Multi-valued monotone potentials: projections, resolvents, regularizations.

Three concrete potentials cover the feedback-control applications:

* ``EnstrophyIndicator`` -- normal cone of the ball ``||grad y||_H <= varpi``;
  its resolvent is the metric projection, independent of the parameter.
* ``SignBall`` -- ``kappa * sgn(y - target)`` in H, the subdifferential of
  ``kappa ||y - target||_H``; its resolvent is norm shrinkage.
* ``TikhonovIndicator`` -- ``theta * y + normal cone``, used for stabilization.

``Recentered`` shifts any potential to act on ``y - center``; ``None`` stands
for the trivial potential.  The single-valued regularization is always
``(I - resolvent)/lam`` divided by ``lam``; for the sign potential the bend
sits at ``||y - target|| = lam * kappa`` (shrinkage by ``lam * kappa``).  The
literal two-branch rule with threshold ``lam`` found in some derivations
agrees only for ``kappa = 1``; set ``paper_branching=True`` on ``SignBall``
to reproduce that rule verbatim in the regularized operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .checks import CheckReport
from .operators import FluidParams
from .spectral import (
    SpectralField,
    TorusGrid,
    enstrophy_norm,
    h_inner,
    h_norm,
    stokes_apply,
)

#: relative width of the discrete boundary band replacing "||grad y|| == varpi"
BOUNDARY_BAND = 1e-8

#: relative tolerance of the projection root-find
PROJECTION_TOL = 1e-12


@dataclass(frozen=True)
class EnstrophyIndicator:
    """Indicator of the closed convex enstrophy ball ``||grad y||_H <= varpi``."""

    varpi: float

    def __post_init__(self):
        if self.varpi <= 0.0:
            raise ValueError(f"enstrophy bound must be positive, got {self.varpi}")


@dataclass(frozen=True)
class SignBall:
    """Scaled sign potential ``kappa * sgn(y - target)`` in H."""

    kappa_c: float
    target: SpectralField
    paper_branching: bool = False

    def __post_init__(self):
        if self.kappa_c <= 0.0:
            raise ValueError(f"control bound must be positive, got {self.kappa_c}")


@dataclass(frozen=True)
class TikhonovIndicator:
    """``theta * y`` plus the normal cone of an enstrophy ball."""

    theta: float
    inner: EnstrophyIndicator

    def __post_init__(self):
        if self.theta <= 0.0:
            raise ValueError(f"Tikhonov gain must be positive, got {self.theta}")


@dataclass(frozen=True)
class Recentered:
    """A potential acting on ``y - center`` instead of ``y``."""

    inner: "PotentialSpec"
    center: SpectralField


PotentialSpec = Optional[Union[EnstrophyIndicator, SignBall, TikhonovIndicator, Recentered]]


@dataclass(frozen=True)
class HypothesisConstants:
    """Constants of the compatibility inequality between the Stokes operator
    and the regularized potential; admissible ranges depend on (d, r)."""

    gamma: float
    varsigma: float

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        if self.varsigma < 0.0:
            raise ValueError("varsigma must be nonnegative")

    def validate_for(self, params: FluidParams) -> None:
        bound = 1.0 / params.mu
        if params.d == 3 and params.r >= 5.0:
            if self.varsigma != 0.0:
                raise ValueError("varsigma must be 0 for d=3 with r >= 5")
        else:
            if not 0.0 < self.varsigma < bound:
                raise ValueError(
                    f"varsigma must lie in (0, 1/mu) = (0, {bound}), got {self.varsigma}"
                )


# ---------------------------------------------------------------------------
# enstrophy-ball projection


def project_enstrophy_ball(y: SpectralField, varpi: float) -> SpectralField:
    """H-closest field with ``||grad z||_H <= varpi``.

    The minimizer has the mode-wise form ``z_k = y_k / (1 + nu (2 pi |k|)^2)``
    with ``nu >= 0`` the Lagrange multiplier of the active constraint; ``nu``
    solves the scalar equation ``||grad z(nu)|| = varpi``, found by bracketed
    bisection with a Newton polish.
    """
    if varpi <= 0.0:
        raise ValueError(f"enstrophy bound must be positive, got {varpi}")
    ens = enstrophy_norm(y)
    if ens <= varpi:
        return y
    grid = y.grid
    sm = grid.stokes_multiplier
    weights = np.sum(np.abs(y.coeffs) ** 2, axis=0)  # per-mode energy

    def grad_norm_sq(nu: float) -> float:
        return float(np.sum(sm * weights / (1.0 + nu * sm) ** 2))

    target = varpi * varpi
    lo, hi = 0.0, (ens / varpi - 1.0) / (2.0 * np.pi) ** 2
    # bisection until the bracket is tight, then Newton for the last digits
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if grad_norm_sq(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-3 * max(hi, 1e-300):
            break
    nu = 0.5 * (lo + hi)
    for _ in range(60):
        g = grad_norm_sq(nu) - target
        dg = float(np.sum(-2.0 * sm**2 * weights / (1.0 + nu * sm) ** 3))
        if dg == 0.0:
            break
        step = g / dg
        nu = min(max(nu - step, lo), hi)
        if abs(g) <= (PROJECTION_TOL * target) * 0.5:
            break
    out = SpectralField(grid, y.coeffs / (1.0 + nu * sm), y.divergence_free)
    return out


# ---------------------------------------------------------------------------
# resolvent, regularized operator, envelope


def resolvent(phi: PotentialSpec, y: SpectralField, lam: float) -> SpectralField:
    """``(I + lam * Phi)^{-1} y`` for each potential variant."""
    if lam <= 0.0:
        raise ValueError(f"resolvent parameter must be positive, got {lam}")
    if phi is None:
        return y
    if isinstance(phi, EnstrophyIndicator):
        return project_enstrophy_ball(y, phi.varpi)
    if isinstance(phi, SignBall):
        diff = y - phi.target
        dist = h_norm(diff)
        factor = max(0.0, 1.0 - lam * phi.kappa_c / dist) if dist > 0.0 else 0.0
        return phi.target + factor * diff
    if isinstance(phi, TikhonovIndicator):
        return project_enstrophy_ball(y * (1.0 / (1.0 + lam * phi.theta)), phi.inner.varpi)
    if isinstance(phi, Recentered):
        return phi.center + resolvent(phi.inner, y - phi.center, lam)
    raise TypeError(f"unknown potential variant {type(phi)!r}")


def yosida(phi: PotentialSpec, y: SpectralField, lam: float) -> SpectralField:
    """Lipschitz regularization ``(y - resolvent(y)) / lam``."""
    if isinstance(phi, SignBall) and phi.paper_branching:
        diff = y - phi.target
        dist = h_norm(diff)
        if dist >= lam:
            return (phi.kappa_c / dist) * diff
        return (phi.kappa_c / lam) * diff
    return (1.0 / lam) * (y - resolvent(phi, y, lam))


def potential_value(phi: PotentialSpec, y: SpectralField) -> float:
    """Convex functional generating the potential; ``inf`` outside domains."""
    if phi is None:
        return 0.0
    if isinstance(phi, EnstrophyIndicator):
        return 0.0 if enstrophy_norm(y) <= phi.varpi * (1.0 + 1e-12) else float("inf")
    if isinstance(phi, SignBall):
        return phi.kappa_c * h_norm(y - phi.target)
    if isinstance(phi, TikhonovIndicator):
        inside = enstrophy_norm(y) <= phi.inner.varpi * (1.0 + 1e-12)
        return 0.5 * phi.theta * h_norm(y) ** 2 if inside else float("inf")
    if isinstance(phi, Recentered):
        return potential_value(phi.inner, y - phi.center)
    raise TypeError(f"unknown potential variant {type(phi)!r}")


def moreau(phi: PotentialSpec, y: SpectralField, lam: float) -> float:
    """Envelope ``inf_z ||y - z||^2 / (2 lam) + value(z)``, in closed form."""
    if lam <= 0.0:
        raise ValueError(f"envelope parameter must be positive, got {lam}")
    if phi is None:
        return 0.0
    if isinstance(phi, EnstrophyIndicator):
        dist = h_norm(y - project_enstrophy_ball(y, phi.varpi))
        return dist * dist / (2.0 * lam)
    if isinstance(phi, SignBall):
        dist = h_norm(y - phi.target)
        k = phi.kappa_c
        if dist >= lam * k:
            return k * dist - 0.5 * lam * k * k
        return dist * dist / (2.0 * lam)
    if isinstance(phi, TikhonovIndicator):
        j = resolvent(phi, y, lam)
        return h_norm(y - j) ** 2 / (2.0 * lam) + 0.5 * phi.theta * h_norm(j) ** 2
    if isinstance(phi, Recentered):
        return moreau(phi.inner, y - phi.center, lam)
    raise TypeError(f"unknown potential variant {type(phi)!r}")


def phi_zero_norm(phi: PotentialSpec, grid: TorusGrid) -> float:
    """``||Phi(0)||_H`` proxy used in energy-envelope constants.

    Exact for the three concrete variants; for recentered potentials the
    regularized operator at a small parameter stands in for the minimal
    selection.
    """
    from .spectral import zero_field

    zero = zero_field(grid)
    if phi is None:
        return 0.0
    if isinstance(phi, (EnstrophyIndicator, TikhonovIndicator)):
        return 0.0  # zero lies inside every enstrophy ball
    if isinstance(phi, SignBall):
        return phi.kappa_c if h_norm(phi.target) > 0.0 else 0.0
    return h_norm(yosida(phi, zero, 1e-6))


# ---------------------------------------------------------------------------
# normal cone selection and the compatibility probe


def normal_cone_select(y: SpectralField, varpi: float, lam0: float) -> SpectralField:
    """Element ``lam0 * A y`` of the normal cone on the boundary band.

    Zero strictly inside the ball; rejected strictly outside (the cone is
    empty there).  The continuum boundary is replaced by a relative band.
    """
    if lam0 < 0.0:
        raise ValueError("cone multiplier must be nonnegative")
    ens = enstrophy_norm(y)
    if ens > varpi * (1.0 + BOUNDARY_BAND):
        raise ValueError(f"state outside the ball: ||grad y|| = {ens} > {varpi}")
    if ens < varpi * (1.0 - BOUNDARY_BAND):
        from .spectral import zero_field

        return zero_field(y.grid)
    return lam0 * stokes_apply(y)


def hypothesis_h3_probe(
    phi: PotentialSpec,
    y: SpectralField,
    lam: float,
    consts: HypothesisConstants,
    tol: float = 1e-10,
) -> CheckReport:
    """Verify ``(A y, Phi_lam(y)) >= -gamma (1 + ||y||^2) - varsigma ||Phi_lam(y)||^2``.

    For indicator-type potentials the pairing is nonnegative outright (the
    Stokes resolvent maps the ball into itself), so the margin is measured
    against zero instead of the weaker affine bound.
    """
    ay = stokes_apply(y)
    fy = yosida(phi, y, lam)
    lhs = h_inner(ay, fy)
    indicator_like = isinstance(phi, (EnstrophyIndicator, TikhonovIndicator))
    scale = max(1.0, h_norm(ay) * h_norm(fy))
    if indicator_like:
        margin = lhs / scale
        rhs = 0.0
    else:
        rhs = -consts.gamma * (1.0 + h_norm(y) ** 2) - consts.varsigma * h_norm(fy) ** 2
        margin = (lhs - rhs) / scale
    return CheckReport.from_margin(
        "stokes-potential-compatibility",
        margin=margin,
        tolerance=tol,
        samples=1,
        provenance="pairing of A y with the regularized potential bounded below",
        lhs=lhs,
        rhs=rhs,
    )
