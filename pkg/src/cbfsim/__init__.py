"""Pseudo-spectral solver and verification suite for damped Navier-Stokes
flows with maximal monotone potentials and feedback control applications."""

from .spectral import (
    NormReport,
    PhysicalField,
    SpectralField,
    TorusGrid,
    dealias,
    forward_transform,
    h_inner,
    h_norm,
    inverse_transform,
    leray_project,
    norms,
    stokes_apply,
    stokes_resolvent,
    zero_field,
)

__all__ = [
    "NormReport",
    "PhysicalField",
    "SpectralField",
    "TorusGrid",
    "dealias",
    "forward_transform",
    "h_inner",
    "h_norm",
    "inverse_transform",
    "leray_project",
    "norms",
    "stokes_apply",
    "stokes_resolvent",
    "zero_field",
]
