"""Reproducible random divergence-free fields.

The generator is a seeded ``numpy.random.Generator`` (PCG64).  One field
consumes exactly one ``standard_normal`` draw of shape ``(2, d, n, ..., n)``
(real and imaginary parts of every coefficient), so streams are stable across
platforms and across changes elsewhere in a test.

The spectrum is shaped by ``(1 + |k|^2)^(-decay/2)``, optionally cut at
``|k|_inf <= kmax``; coefficients are then conjugate-symmetrized, stripped of
Nyquist planes and Leray-projected.
"""

from __future__ import annotations

import numpy as np

from .spectral import (
    SpectralField,
    TorusGrid,
    h_norm,
    hermitianize,
    leray_project,
    zero_field,
)


def default_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_field(
    grid: TorusGrid,
    rng: np.random.Generator,
    decay: float = 2.0,
    kmax: float | None = None,
    amplitude: float = 1.0,
    mean_flow: float = 0.0,
    normalize: bool = True,
) -> SpectralField:
    """Gaussian coefficients with an algebraically decaying spectrum.

    ``mean_flow`` adds a constant velocity ``mean_flow * (1, 0[, 0])`` after
    normalization; useful when pointwise zeros of ``|y|`` must be avoided.

    By default the field is confined to the dealiased band of its grid, the
    region solver states live in; pass ``kmax`` explicitly to override.
    """
    draw = rng.standard_normal(size=(2, grid.d) + grid.shape)
    coeffs = draw[0] + 1j * draw[1]
    envelope = (1.0 + grid.k_squared) ** (-decay / 2.0)
    if kmax is None:
        kmax = grid.dealias_fraction * grid.n / 2.0
    envelope = np.where(
        np.max(np.abs(grid.wavevectors), axis=0) <= kmax + 1e-9, envelope, 0.0
    )
    coeffs = coeffs * envelope
    coeffs = np.where(grid.nyquist_mask, 0.0, coeffs)  # keep k -> -k pairing exact
    out = leray_project(hermitianize(SpectralField(grid, coeffs)))
    scale = h_norm(out)
    if normalize and scale > 0.0:
        out = out * (amplitude / scale)
    if mean_flow != 0.0:
        out = out.copy()
        out.coeffs[(0,) + (0,) * grid.d] += mean_flow
    return out


def single_mode_field(
    grid: TorusGrid,
    k: tuple[int, ...],
    component: int = 0,
    amplitude: float = 1.0,
) -> SpectralField:
    """``amplitude * sin(2*pi*k.x)`` in one velocity component.

    The wavevector must be orthogonal to the chosen component for the result
    to be divergence-free (shear modes such as ``k=(0,1)``, component 0).
    """
    if len(k) != grid.d:
        raise ValueError(f"wavevector length {len(k)} != d={grid.d}")
    out = zero_field(grid).copy()
    idx_pos = tuple(ki % grid.n for ki in k)
    idx_neg = tuple((-ki) % grid.n for ki in k)
    # sin(2*pi*k.x) = (e^{i..} - e^{-i..}) / 2i
    out.coeffs[(component,) + idx_pos] += amplitude / 2j
    out.coeffs[(component,) + idx_neg] -= amplitude / 2j
    if any(ki * (component == j) for j, ki in enumerate(k)):
        out = leray_project(out)
    out.divergence_free = True
    return out


def taylor_green_field(grid: TorusGrid, amplitude: float = 1.0) -> SpectralField:
    """Classical cellular vortex; divergence-free for d=2 and d=3 (z-invariant)."""
    x = grid.points
    a, b = 2.0 * np.pi * x[0], 2.0 * np.pi * x[1]
    values = np.zeros((grid.d,) + grid.shape)
    values[0] = amplitude * np.sin(a) * np.cos(b)
    values[1] = -amplitude * np.cos(a) * np.sin(b)
    from .spectral import forward_transform, PhysicalField

    out = forward_transform(PhysicalField(grid, values))
    out.divergence_free = True
    return out
