"""Fourier representation of periodic velocity fields on the unit torus.

Fields live on ``[0, 1)^d`` (``d`` = 2 or 3) and are expanded in the basis
``exp(2*pi*i*k.x)`` over integer wavevectors ``-n/2 <= k_i < n/2``.  With the
forward-normalized transform used throughout, Parseval reads

    ||y||_H^2     = sum_k |y_k|^2,
    ||grad y||^2  = sum_k (2*pi*|k|)^2 |y_k|^2,
    ||A y||_H^2   = sum_k (2*pi*|k|)^4 |y_k|^2,

where ``A = -P Lap`` is the Stokes operator and ``P`` the Leray projection,
both diagonal mode by mode.  The zero mode is retained: the absorption term
does not preserve a zero spatial average, so the mean of the field evolves.

Coefficients are stored over the full wavevector set (complex array of shape
``(d, n, ..., n)``).  Realness is a testable Hermitian-symmetry invariant
rather than a storage constraint; at desk-scale resolutions the extra memory
is irrelevant and every Parseval-type identity maps one-to-one onto the
stored data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

TWO_PI = 2.0 * np.pi

#: relative divergence defect accepted before operator entry points reproject
DIV_TOL = 1e-12

#: relative Hermitian-symmetry defect accepted by inverse_transform
HERMITIAN_TOL = 1e-10


class SymmetryError(ValueError):
    """Raised when coefficients are too far from conjugate symmetry."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform collocation grid of ``n`` points per axis on the unit torus."""

    d: int
    n: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"modes per axis must be even and >= 8, got {self.n}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError(
                f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        """Axes of the spatial dimensions in a ``(d, n, ..., n)`` array."""
        return tuple(range(1, self.d + 1))

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Integer wavevectors, shape ``(d, n, ..., n)``."""
        freqs = np.rint(np.fft.fftfreq(self.n) * self.n).astype(np.int64)
        mesh = np.meshgrid(*([freqs] * self.d), indexing="ij")
        return np.stack(mesh)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.wavevectors.astype(float) ** 2, axis=0)

    @cached_property
    def stokes_multiplier(self) -> np.ndarray:
        """Per-mode multiplier ``(2*pi*|k|)^2`` of the Stokes operator."""
        return (TWO_PI**2) * self.k_squared

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.dealias_fraction * self.n / 2.0
        return np.max(np.abs(self.wavevectors), axis=0) <= cut + 1e-9

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Modes with any component at the unpaired ``-n/2`` frequency."""
        return np.any(self.wavevectors == -self.n // 2, axis=0)

    @cached_property
    def points(self) -> np.ndarray:
        """Collocation coordinates, shape ``(d, n, ..., n)``."""
        x = np.arange(self.n) / self.n
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    @property
    def padded_n(self) -> int:
        """Fine-grid size used for pointwise products (>= 3n/2 rule)."""
        m = (3 * self.n) // 2
        return m + (m % 2)


@dataclass
class PhysicalField:
    """Real-valued velocity samples on the collocation grid."""

    grid: TorusGrid
    values: np.ndarray  # shape (d, n, ..., n)

    def __post_init__(self):
        expected = (self.grid.d,) + self.grid.shape
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")


@dataclass
class SpectralField:
    """Velocity field as Fourier coefficients over the full wavevector set."""

    grid: TorusGrid
    coeffs: np.ndarray  # complex, shape (d, n, ..., n)
    divergence_free: bool = False

    def __post_init__(self):
        expected = (self.grid.d,) + self.grid.shape
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != expected:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {expected}")

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.divergence_free)

    # Fields behave as vectors in H; flags survive linear combinations.
    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(
            self.grid,
            self.coeffs + other.coeffs,
            self.divergence_free and other.divergence_free,
        )

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(
            self.grid,
            self.coeffs - other.coeffs,
            self.divergence_free and other.divergence_free,
        )

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self * (-1.0)


@dataclass
class NormReport:
    """H, V, enstrophy and requested Lp norms of one field.

    ``enstrophy`` is the norm ``||grad y||_H`` (not its square), so that
    ``v_norm**2 == h_norm**2 + enstrophy**2`` up to round-off.
    """

    h_norm: float
    v_norm: float
    enstrophy: float
    lp_norms: Mapping[float, float] = field(default_factory=dict)


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def zero_field(grid: TorusGrid) -> SpectralField:
    return SpectralField(
        grid, np.zeros((grid.d,) + grid.shape, dtype=complex), divergence_free=True
    )


# ---------------------------------------------------------------------------
# transforms


def forward_transform(p: PhysicalField) -> SpectralField:
    """Discrete Fourier coefficients of real collocation samples."""
    coeffs = np.fft.fftn(p.values, axes=p.grid.spatial_axes, norm="forward")
    return SpectralField(p.grid, coeffs)


def inverse_transform(s: SpectralField) -> PhysicalField:
    """Collocation samples; rejects coefficients that are not conjugate-symmetric."""
    defect = hermitian_defect(s)
    if defect > HERMITIAN_TOL:
        raise SymmetryError(f"Hermitian symmetry defect {defect:.3e} > {HERMITIAN_TOL}")
    values = np.fft.ifftn(s.coeffs, axes=s.grid.spatial_axes, norm="forward").real
    return PhysicalField(s.grid, values)


def conjugate_reflection(s: SpectralField) -> np.ndarray:
    """``conj(coeff(-k))`` arranged on the same index layout as ``coeffs``."""
    ref = s.coeffs
    n = s.grid.n
    idx = (-np.arange(n)) % n
    for ax in s.grid.spatial_axes:
        ref = np.take(ref, idx, axis=ax)
    return np.conj(ref)


def hermitian_defect(s: SpectralField) -> float:
    scale = np.linalg.norm(s.coeffs)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(s.coeffs - conjugate_reflection(s)) / scale)


def hermitianize(s: SpectralField) -> SpectralField:
    """Project onto the conjugate-symmetric subspace (realness)."""
    sym = 0.5 * (s.coeffs + conjugate_reflection(s))
    return SpectralField(s.grid, sym, s.divergence_free)


# ---------------------------------------------------------------------------
# Leray projection and the Stokes operator


def leray_project(s: SpectralField) -> SpectralField:
    """Divergence-free part: ``y_k <- y_k - k (k.y_k)/|k|^2`` for ``k != 0``.

    On the unpaired ``-n/2`` planes the projector uses the stored negative
    sign of the wavevector; band-limited workflows keep those planes empty.
    """
    grid = s.grid
    k = grid.wavevectors.astype(float)
    dot = np.sum(k * s.coeffs, axis=0)
    k2 = grid.k_squared.copy()
    k2[k2 == 0.0] = 1.0  # zero mode untouched (dot is 0 there anyway)
    out = s.coeffs - k * (dot / k2)
    return SpectralField(grid, out, divergence_free=True)


def divergence_defect(s: SpectralField) -> float:
    """Relative size of ``k . y_k`` against the gradient content of ``y``."""
    k = s.grid.wavevectors.astype(float)
    num = np.linalg.norm(np.sum(k * s.coeffs, axis=0))
    den = np.sqrt(np.sum(s.grid.k_squared * np.sum(np.abs(s.coeffs) ** 2, axis=0)))
    if den == 0.0:
        return 0.0
    return float(num / den)


def ensure_divergence_free(s: SpectralField) -> SpectralField:
    """Pass through within DIV_TOL, otherwise reproject (never reject)."""
    if s.divergence_free:
        return s
    if divergence_defect(s) <= DIV_TOL:
        return SpectralField(s.grid, s.coeffs, divergence_free=True)
    return leray_project(s)


def stokes_apply(s: SpectralField) -> SpectralField:
    """``A y = -P Lap y``: projection followed by the ``(2*pi*|k|)^2`` multiplier."""
    y = ensure_divergence_free(s)
    return SpectralField(y.grid, y.grid.stokes_multiplier * y.coeffs, True)


def stokes_resolvent(s: SpectralField, lam: float) -> SpectralField:
    """``(I + lam A)^{-1} y``; contracts every mode, hence H and enstrophy."""
    if lam <= 0.0:
        raise ValueError(f"resolvent parameter must be positive, got {lam}")
    y = ensure_divergence_free(s)
    mult = 1.0 / (1.0 + lam * y.grid.stokes_multiplier)
    return SpectralField(y.grid, mult * y.coeffs, True)


def laplacian(s: SpectralField) -> SpectralField:
    return SpectralField(
        s.grid, -(s.grid.stokes_multiplier) * s.coeffs, s.divergence_free
    )


# ---------------------------------------------------------------------------
# norms and pairings


def h_inner(a: SpectralField, b: SpectralField) -> float:
    """L^2 inner product from coefficients (Parseval)."""
    _check_same_grid(a, b)
    return float(np.real(np.sum(np.conj(a.coeffs) * b.coeffs)))


def h_norm(s: SpectralField) -> float:
    return float(np.linalg.norm(s.coeffs))

def enstrophy_norm(s: SpectralField) -> float:
    """``||grad y||_H`` from the spectrum."""
    return float(
        np.sqrt(np.sum(s.grid.stokes_multiplier * np.sum(np.abs(s.coeffs) ** 2, 0)))
    )


def stokes_norm(s: SpectralField) -> float:
    """``||A y||_H`` from the spectrum."""
    return float(
        np.sqrt(np.sum(s.grid.stokes_multiplier**2 * np.sum(np.abs(s.coeffs) ** 2, 0)))
    )


def lp_norm(s: SpectralField, p: float) -> float:
    """``L^p`` norm of the pointwise speed by collocation quadrature."""
    if p < 1.0:
        raise ValueError(f"Lp norms need p >= 1, got {p}")
    values = inverse_transform(s).values
    speed = np.sqrt(np.sum(values**2, axis=0))
    return float(np.mean(speed**p) ** (1.0 / p))


def norms(s: SpectralField, ps: Iterable[float] = ()) -> NormReport:
    """H and enstrophy norms spectrally, Lp norms by collocation quadrature."""
    h = h_norm(s)
    ens = enstrophy_norm(s)
    v = float(np.sqrt(h * h + ens * ens))
    lp = {float(p): lp_norm(s, p) for p in ps}
    return NormReport(h_norm=h, v_norm=v, enstrophy=ens, lp_norms=lp)


# ---------------------------------------------------------------------------
# dealiasing and padded pointwise products


def dealias(s: SpectralField) -> SpectralField:
    """Zero every mode with ``max_i |k_i| > dealias_fraction * n/2``."""
    return SpectralField(
        s.grid, np.where(s.grid.dealias_mask, s.coeffs, 0.0), s.divergence_free
    )


def _embed_slots(n: int, m: int) -> np.ndarray:
    """Index of each n-grid frequency slot inside the m-grid layout."""
    freqs = np.rint(np.fft.fftfreq(n) * n).astype(np.int64)
    return freqs % m


def _strip_nyquist(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Zero the unpaired ``-n/2`` planes; padded workflows assume they are empty."""
    return np.where(grid.nyquist_mask, 0.0, coeffs)


def pad_physical(coeffs: np.ndarray, grid: TorusGrid, m: int | None = None) -> np.ndarray:
    """Samples of a spectral array on the fine ``m^d`` product grid.

    Accepts either a component stack ``(d, n, ..)`` or a scalar array
    ``(n, ..)``; Nyquist planes are dropped before embedding.
    """
    m = m or grid.padded_n
    scalar = coeffs.ndim == grid.d
    stack = coeffs[None] if scalar else coeffs
    stack = _strip_nyquist(grid, stack)
    slots = _embed_slots(grid.n, m)
    fine = np.zeros((stack.shape[0],) + (m,) * grid.d, dtype=complex)
    fine[(slice(None),) + np.ix_(*([slots] * grid.d))] = stack
    values = np.fft.ifftn(fine, axes=tuple(range(1, grid.d + 1)), norm="forward").real
    return values[0] if scalar else values


def unpad_spectral(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Transform fine-grid samples and keep the n-grid frequency slots."""
    scalar = values.ndim == grid.d
    stack = values[None] if scalar else values
    m = stack.shape[-1]
    fine = np.fft.fftn(stack, axes=tuple(range(1, grid.d + 1)), norm="forward")
    slots = _embed_slots(grid.n, m)
    coarse = fine[(slice(None),) + np.ix_(*([slots] * grid.d))]
    coarse = _strip_nyquist(grid, coarse)
    return coarse[0] if scalar else coarse


def padded_mean(values: np.ndarray) -> float:
    """Integral over the unit torus of fine-grid samples (trapezoid = mean)."""
    return float(np.mean(values))


def regrid(s: SpectralField, grid: TorusGrid) -> SpectralField:
    """Represent the same trigonometric polynomial on another resolution.

    Shared wavevector slots are copied; modes absent from the target grid are
    dropped, Nyquist planes of the source are discarded.
    """
    if grid.d != s.grid.d:
        raise ValueError("regrid cannot change the spatial dimension")
    src = _strip_nyquist(s.grid, s.coeffs)
    kmax_common = min(s.grid.n, grid.n) // 2 - 1
    out = np.zeros((grid.d,) + grid.shape, dtype=complex)
    src_slots = np.rint(np.fft.fftfreq(s.grid.n) * s.grid.n).astype(np.int64)
    keep = np.abs(src_slots) <= kmax_common
    src_idx = np.arange(s.grid.n)[keep]
    dst_idx = src_slots[keep] % grid.n
    out[(slice(None),) + np.ix_(*([dst_idx] * grid.d))] = src[
        (slice(None),) + np.ix_(*([src_idx] * grid.d))
    ]
    return SpectralField(grid, out, s.divergence_free)


def gradient_coeffs(s: SpectralField) -> np.ndarray:
    """Spectral partial derivatives ``d_j y_i``, shape ``(d, d, n, ..)``.

    First index is the derivative direction.  The unpaired Nyquist frequency
    carries no usable sign, so it is zeroed to keep derivatives real.
    """
    grid = s.grid
    k = np.where(grid.wavevectors == -grid.n // 2, 0, grid.wavevectors)
    out = np.empty((grid.d,) + s.coeffs.shape, dtype=complex)
    for j in range(grid.d):
        out[j] = (TWO_PI * 1j) * k[j] * s.coeffs
    return out


def padded_velocity_and_gradient(
    s: SpectralField, m: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Fine-grid samples of ``y`` and of all ``d_j y_i`` in one shot."""
    grid = s.grid
    m = m or grid.padded_n
    u = pad_physical(s.coeffs, grid, m)
    grads = gradient_coeffs(s)
    du = np.stack([pad_physical(grads[j], grid, m) for j in range(grid.d)])
    return u, du
