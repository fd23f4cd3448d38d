"""Convective and absorption operators of the damped Navier-Stokes system.

All pointwise products are evaluated on a zero-padded fine grid (>= 3n/2 per
axis), which dealiases the quadratic convective term exactly.  The absorption
term ``C(y) = P(|y|^{r-1} y)`` is not polynomial for general ``r``; the same
padded grid is used and the remaining aliasing error is controlled by grid
refinement (verified by the torus-identity refinement check).

A small mutation hook lets the verification CLI inject a sign error into the
absorption operator and confirm that the monotonicity battery catches it.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .checks import CheckReport
from .spectral import (
    SpectralField,
    dealias,
    leray_project,
    ensure_divergence_free,
    enstrophy_norm,
    h_inner,
    h_norm,
    laplacian,
    lp_norm,
    pad_physical,
    padded_mean,
    padded_velocity_and_gradient,
    unpad_spectral,
    zero_field,
)

_MUTATIONS: set[str] = set()


@contextmanager
def mutation(name: str):
    """Temporarily activate a named defect (CI self-test of the check suite)."""
    _MUTATIONS.add(name)
    try:
        yield
    finally:
        _MUTATIONS.discard(name)


@dataclass(frozen=True)
class FluidParams:
    """Viscosity, absorption strength and exponent; Darcy term fixed to zero."""

    mu: float
    beta: float
    r: float
    d: int
    alpha: float = 0.0

    def __post_init__(self):
        if self.mu <= 0.0 or self.beta <= 0.0:
            raise ValueError("mu and beta must be positive")
        if self.r < 1.0:
            raise ValueError(f"absorption exponent must be >= 1, got {self.r}")
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.alpha != 0.0:
            raise ValueError("the Darcy coefficient is fixed to zero in this suite")

    @property
    def regime(self) -> str:
        if self.r < 3.0:
            return "subcritical"
        if self.r == 3.0:
            return "critical"
        return "supercritical"


@dataclass(frozen=True)
class QuantizationLevel:
    """L4 radius beyond which the convective term is rescaled."""

    n_level: float

    def __post_init__(self):
        if self.n_level < 0.0:
            raise ValueError(f"quantization radius must be >= 0, got {self.n_level}")


# ---------------------------------------------------------------------------
# convective term


def convective(y: SpectralField) -> SpectralField:
    """``B(y) = P[(y.grad) y]``, dealiased and projected."""
    y = ensure_divergence_free(y)
    grid = y.grid
    u, du = padded_velocity_and_gradient(y)
    # (u . grad)u_i = sum_j u_j d_j u_i, assembled on the fine grid
    adv = np.zeros_like(u)
    for j in range(grid.d):
        adv += u[j] * du[j]
    coeffs = unpad_spectral(adv, grid)
    return dealias(leray_project(SpectralField(grid, coeffs)))


def trilinear(y: SpectralField, z: SpectralField, w: SpectralField) -> float:
    """``b(y, z, w) = integral (y.grad) z . w`` by padded quadrature."""
    if not (y.grid == z.grid == w.grid):
        raise ValueError("trilinear form requires all fields on one grid")
    y = ensure_divergence_free(y)
    grid = y.grid
    u = pad_physical(y.coeffs, grid)
    _, dz = padded_velocity_and_gradient(z)
    wv = pad_physical(w.coeffs, grid)
    total = np.zeros(u.shape[1:])
    for j in range(grid.d):
        for i in range(grid.d):
            total += u[j] * dz[j, i] * wv[i]
    return padded_mean(total)


def quantized_convective(y: SpectralField, level: QuantizationLevel) -> SpectralField:
    """Convective term rescaled by ``(N / ||y||_L4)^4`` outside the L4 ball."""
    l4 = lp_norm(y, 4)
    b = convective(y)
    if l4 <= level.n_level:
        return b
    return (level.n_level / l4) ** 4 * b


# ---------------------------------------------------------------------------
# absorption term and its derivative


def _speed(u: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(u**2, axis=0))


def forchheimer(y: SpectralField, params: FluidParams) -> SpectralField:
    """``C(y) = P(|y|^{r-1} y)`` on the padded grid."""
    if params.r < 1.0:
        raise ValueError("absorption exponent must be >= 1")
    grid = y.grid
    u = pad_physical(y.coeffs, grid)
    if params.r == 1.0:
        values = u
    else:
        values = _speed(u) ** (params.r - 1.0) * u
    if "c-sign" in _MUTATIONS:
        values = -values
    coeffs = unpad_spectral(values, grid)
    return leray_project(SpectralField(grid, coeffs))


def forchheimer_gateaux(
    y: SpectralField, z: SpectralField, params: FluidParams
) -> SpectralField:
    """Directional derivative of the absorption operator at ``y`` applied to ``z``.

    Branches on the exponent: identity for r=1; for 1<r<3 the pointwise limit
    at y=0 is zero; for r>=3 the formula is regular everywhere.
    """
    r = params.r
    grid = y.grid
    if r == 1.0:
        return ensure_divergence_free(z)
    u = pad_physical(y.coeffs, grid)
    v = pad_physical(z.coeffs, grid)
    speed = _speed(u)
    dot = np.sum(u * v, axis=0)
    if r < 3.0:
        safe = np.where(speed > 0.0, speed, 1.0)
        values = np.where(speed > 0.0, speed ** (r - 1.0), 0.0) * v
        values += (r - 1.0) * np.where(speed > 0.0, safe ** (r - 3.0), 0.0) * dot * u
    else:
        values = speed ** (r - 1.0) * v + (r - 1.0) * speed ** (r - 3.0) * dot * u
    coeffs = unpad_spectral(values, grid)
    return leray_project(SpectralField(grid, coeffs))


def forchheimer_pair_gap(
    y: SpectralField, z: SpectralField, params: FluidParams
) -> tuple[float, float]:
    """Monotonicity gap of the absorption term on a shared quadrature grid.

    Returns ``(<C(y)-C(z), y-z>, 2^{1-r} ||y-z||_{L^{r+1}}^{r+1})`` with both
    integrals evaluated on the same padded grid, so the known pointwise
    inequality between the integrands carries over to the computed values.
    """
    grid = y.grid
    r = params.r
    u = pad_physical(y.coeffs, grid)
    v = pad_physical(z.coeffs, grid)
    cu = _speed(u) ** (r - 1.0) * u if r > 1.0 else u
    cv = _speed(v) ** (r - 1.0) * v if r > 1.0 else v
    if "c-sign" in _MUTATIONS:
        cu, cv = -cu, -cv
    gap = padded_mean(np.sum((cu - cv) * (u - v), axis=0))
    lower = 2.0 ** (1.0 - r) * padded_mean(_speed(u - v) ** (r + 1.0))
    return gap, lower


# ---------------------------------------------------------------------------
# torus identity and thresholds


def critical_identity_residual(
    y: SpectralField, params: FluidParams
) -> tuple[float, float, float]:
    """Residual of the periodic integration-by-parts identity

        int (-Lap y).|y|^{r-1} y = int |grad y|^2 |y|^{r-1}
                                   + 4 (r-1)/(r+1)^2 int |grad |y|^{(r+1)/2}|^2.

    Returns ``(lhs, rhs, |lhs - rhs| / max(lhs, 1))``.  The gradient of the
    fractional power is taken spectrally from its fine-grid samples.
    """
    grid = y.grid
    r = params.r
    m = grid.padded_n
    u, du = padded_velocity_and_gradient(y, m)
    neg_lap = pad_physical(-laplacian(y).coeffs, grid, m)
    speed = _speed(u)
    weight = speed ** (r - 1.0) if r > 1.0 else np.ones_like(speed)
    lhs = padded_mean(np.sum(neg_lap * u, axis=0) * weight)

    grad_sq = np.sum(du**2, axis=(0, 1))
    term1 = padded_mean(grad_sq * weight)

    w = speed ** ((r + 1.0) / 2.0)
    w_hat = np.fft.fftn(w, norm="forward")
    freqs = np.rint(np.fft.fftfreq(m) * m).astype(np.int64)
    freqs = np.where(freqs == -m // 2, 0, freqs)
    grad_w_sq = np.zeros_like(w)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = m
        dw = np.fft.ifftn(
            (2.0 * np.pi * 1j) * freqs.reshape(shape) * w_hat, norm="forward"
        ).real
        grad_w_sq += dw**2
    term2 = 4.0 * (r - 1.0) / (r + 1.0) ** 2 * padded_mean(grad_w_sq)

    rhs = term1 + term2
    return lhs, rhs, abs(lhs - rhs) / max(lhs, 1.0)


def weighted_gradient_integral(y: SpectralField, params: FluidParams) -> float:
    """``int |grad y|^2 |y|^{r-1}`` by padded quadrature."""
    u, du = padded_velocity_and_gradient(y)
    speed = _speed(u)
    weight = speed ** (params.r - 1.0) if params.r > 1.0 else np.ones_like(speed)
    return padded_mean(np.sum(du**2, axis=(0, 1)) * weight)


def rho_threshold(params: FluidParams) -> float:
    """Shift making viscosity plus absorption dominate the convective term.

    Defined for r > 3, and for r = 3 when ``2*beta*mu >= 1`` (value 0).  For
    r < 3, or r = 3 with ``2*beta*mu < 1``, no global shift exists and the
    local-in-time regime applies; the call is rejected.
    """
    r, mu, beta = params.r, params.mu, params.beta
    if r > 3.0:
        return (r - 3.0) / (2.0 * mu * (r - 1.0)) * (
            2.0 / (beta * mu * (r - 1.0))
        ) ** (2.0 / (r - 3.0))
    if r == 3.0:
        if 2.0 * beta * mu >= 1.0:
            return 0.0
        raise ValueError("r = 3 requires 2*beta*mu >= 1 for a global threshold")
    raise ValueError(f"no global threshold for r = {r} < 3 (local regime)")


def damping_absorbs_convection_check(
    y: SpectralField, z: SpectralField, params: FluidParams, tol: float = 1e-10
) -> CheckReport:
    """Verify the convective bound

        |<B(y)-B(z), y-z>| <= mu/2 ||grad(y-z)||^2
                              + beta/2 ||  |z|^{(r-1)/2} (y-z) ||^2
                              + rho ||y-z||^2
    for r > 3 with the explicit threshold rho.
    """
    if params.r <= 3.0:
        raise ValueError("the convective bound is derived for r > 3 only")
    rho = rho_threshold(params)
    grid = y.grid
    w = y - z
    lhs = abs(h_inner(convective(y) - convective(z), w))
    vz = pad_physical(z.coeffs, grid)
    vw = pad_physical(w.coeffs, grid)
    weighted = padded_mean(_speed(vz) ** (params.r - 1.0) * _speed(vw) ** 2)
    rhs = (
        0.5 * params.mu * enstrophy_norm(w) ** 2
        + 0.5 * params.beta * weighted
        + rho * h_norm(w) ** 2
    )
    scale = max(lhs, rhs, 1.0)
    return CheckReport.from_margin(
        "damping-absorbs-convection",
        margin=(rhs - lhs) / scale,
        tolerance=tol,
        samples=1,
        provenance="convective pairing dominated by viscous+absorption split",
        lhs=lhs,
        rhs=rhs,
        rho=rho,
    )


def embedding_ratio(y: SpectralField, params: FluidParams, p: float = 3.0) -> float:
    """Diagnostic ratio ``||y||_{L^{p(r+1)}}^{r+1} / int |grad y|^2 |y|^{r-1}``.

    The embedding constant is not explicit; callers only monitor boundedness.
    Returns ``inf`` when the gradient integral vanishes but the norm does not.
    """
    grid = y.grid
    r = params.r
    u, du = padded_velocity_and_gradient(y)
    speed = _speed(u)
    weight = speed ** (r - 1.0) if r > 1.0 else np.ones_like(speed)
    rhs = padded_mean(np.sum(du**2, axis=(0, 1)) * weight)
    lhs = padded_mean(speed ** (p * (r + 1.0))) ** (1.0 / p)
    if rhs <= 0.0:
        return float("inf") if lhs > 0.0 else 0.0
    return lhs / rhs


def quantized_split_constant(
    y: SpectralField,
    z: SpectralField,
    level: QuantizationLevel,
    params: FluidParams,
) -> float:
    """Smallest ``C_N`` with ``|<B_N(y)-B_N(z), y-z>| <= mu/2 ||grad w||^2 + C_N ||w||^2``."""
    w = y - z
    lhs = abs(h_inner(quantized_convective(y, level) - quantized_convective(z, level), w))
    slack = lhs - 0.5 * params.mu * enstrophy_norm(w) ** 2
    wn = h_norm(w) ** 2
    if wn == 0.0:
        return 0.0
    return max(0.0, slack / wn)
