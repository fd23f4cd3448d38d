"""Experiment configuration: one JSON document with nested sections.

All physical constants are dimensionless (unit torus, unit density).  The
loader validates every section, collecting field-level diagnostics before
raising, and cross-checks regime requirements (a time-optimal run needs the
convective threshold to exist, the explicit potential scheme bounds the time
step by half the regularization parameter).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .control import ControlParams
from .evolution import StepperConfig
from .operators import FluidParams, rho_threshold
from .potentials import (
    EnstrophyIndicator,
    PotentialSpec,
    SignBall,
    TikhonovIndicator,
)
from .sampling import default_rng, random_field, single_mode_field, taylor_green_field
from .spectral import SpectralField, TorusGrid, dealias, leray_project, zero_field
from .storage import read_checkpoint


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists field-level diagnostics."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ExperimentConfig:
    grid: TorusGrid
    params: FluidParams
    stepper: StepperConfig
    potential_spec: dict
    forcing_spec: dict
    initial_spec: dict
    control: ControlParams
    control_app: Optional[str]
    seed: int
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    def potential(self) -> PotentialSpec:
        return build_potential(self.potential_spec, self.grid)

    def forcing(self) -> Optional[Callable[[float], SpectralField]]:
        return build_forcing(self.forcing_spec, self.grid)

    def initial_state(self) -> SpectralField:
        return build_initial(self.initial_spec, self.grid, self.seed)


def _field(errors, data, path, key, kind, default=None, required=False):
    if key not in data:
        if required:
            errors.append(f"{path}.{key}: missing")
        return default
    val = data[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        errors.append(f"{path}.{key}: expected {kind.__name__}, got {type(val).__name__}")
        return default
    return val


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from exc
    errors: list[str] = []

    g = data.get("grid", {})
    d = _field(errors, g, "grid", "d", int, default=2)
    n = _field(errors, g, "grid", "n", int, default=16)
    frac = _field(errors, g, "grid", "dealias_fraction", float, default=2.0 / 3.0)

    p = data.get("params", {})
    mu = _field(errors, p, "params", "mu", float, default=1.0)
    beta = _field(errors, p, "params", "beta", float, default=1.0)
    r = _field(errors, p, "params", "r", float, default=3.0)

    s = data.get("stepper", {})
    dt = _field(errors, s, "stepper", "dt", float, default=1e-3)
    t_end = _field(errors, s, "stepper", "t_end", float, default=0.1)
    lam = _field(errors, s, "stepper", "lam", float, default=1e-3)
    scheme = _field(errors, s, "stepper", "scheme", str, default="imex-semi-implicit-phi")
    record_every = _field(errors, s, "stepper", "record_every", int, default=1)

    c = data.get("control", {})
    app = _field(errors, c, "control", "app", str, default=None)
    varpi = _field(errors, c, "control", "varpi", float, default=None)
    kappa_c = _field(errors, c, "control", "kappa_c", float, default=None)
    theta = _field(errors, c, "control", "theta", float, default=None)

    grid = params = stepper = ctrl = None
    try:
        grid = TorusGrid(d=d, n=n, dealias_fraction=frac)
    except ValueError as exc:
        errors.append(f"grid: {exc}")
    try:
        params = FluidParams(mu=mu, beta=beta, r=r, d=d)
    except ValueError as exc:
        errors.append(f"params: {exc}")
    try:
        stepper = StepperConfig(
            dt=dt, t_end=t_end, lam=lam, scheme=scheme, record_every=record_every
        )
    except ValueError as exc:
        errors.append(f"stepper: {exc}")
    try:
        ctrl = ControlParams(varpi=varpi, kappa_c=kappa_c, theta=theta)
    except ValueError as exc:
        errors.append(f"control: {exc}")

    pot = data.get("potential", {"variant": "none"})
    if pot.get("variant") not in (
        "none",
        "enstrophy_indicator",
        "sign_ball",
        "tikhonov_indicator",
    ):
        errors.append(f"potential.variant: unknown {pot.get('variant')!r}")

    forcing = data.get("forcing", {"kind": "none"})
    if forcing.get("kind") not in ("none", "constant", "ramped"):
        errors.append(f"forcing.kind: unknown {forcing.get('kind')!r}")

    initial = data.get("initial", {"kind": "zero"})
    if initial.get("kind") not in ("zero", "random", "single_mode", "taylor_green", "file"):
        errors.append(f"initial.kind: unknown {initial.get('kind')!r}")

    seed = _field(errors, data, "config", "seed", int, default=0)
    output_dir = _field(errors, data, "config", "output_dir", str, default="out")

    # cross-field regime requirements
    if params is not None and app == "time-optimal":
        try:
            rho_threshold(params)
        except ValueError as exc:
            errors.append(f"control.app: time-optimal needs a defined threshold ({exc})")
    if app == "time-optimal" and kappa_c is None:
        errors.append("control.kappa_c: required for time-optimal")
    if app == "invariance" and varpi is None:
        errors.append("control.varpi: required for invariance")
    if app == "stabilize" and (theta is None or varpi is None):
        errors.append("control: stabilize needs theta and varpi")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        grid=grid,
        params=params,
        stepper=stepper,
        potential_spec=pot,
        forcing_spec=forcing,
        initial_spec=initial,
        control=ctrl,
        control_app=app,
        seed=seed,
        output_dir=output_dir,
        raw=data,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parsing then serializing is idempotent."""
    data = {
        "grid": {
            "d": cfg.grid.d,
            "n": cfg.grid.n,
            "dealias_fraction": cfg.grid.dealias_fraction,
        },
        "params": {"mu": cfg.params.mu, "beta": cfg.params.beta, "r": cfg.params.r},
        "stepper": {
            "dt": cfg.stepper.dt,
            "t_end": cfg.stepper.t_end,
            "lam": cfg.stepper.lam,
            "scheme": cfg.stepper.scheme,
            "record_every": cfg.stepper.record_every,
        },
        "potential": cfg.potential_spec,
        "forcing": cfg.forcing_spec,
        "initial": cfg.initial_spec,
        "control": {
            k: v
            for k, v in {
                "app": cfg.control_app,
                "varpi": cfg.control.varpi,
                "kappa_c": cfg.control.kappa_c,
                "theta": cfg.control.theta,
            }.items()
            if v is not None
        },
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
    }
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# section builders


def _target_field(spec: dict, grid: TorusGrid) -> SpectralField:
    ref = spec.get("target", "zero")
    if ref == "zero":
        return zero_field(grid)
    if isinstance(ref, str) and ref.startswith("file:"):
        fld, _ = read_checkpoint(ref[5:], dealias_fraction=grid.dealias_fraction)
        if fld.grid != grid:
            raise ConfigError(["potential.target: checkpoint grid mismatch"])
        return fld
    raise ConfigError([f"potential.target: unknown reference {ref!r}"])


def build_potential(spec: dict, grid: TorusGrid) -> PotentialSpec:
    variant = spec.get("variant", "none")
    if variant == "none":
        return None
    if variant == "enstrophy_indicator":
        return EnstrophyIndicator(varpi=float(spec["varpi"]))
    if variant == "sign_ball":
        return SignBall(
            kappa_c=float(spec["kappa_c"]),
            target=_target_field(spec, grid),
            paper_branching=bool(spec.get("paper_branching", False)),
        )
    if variant == "tikhonov_indicator":
        return TikhonovIndicator(
            theta=float(spec["theta"]),
            inner=EnstrophyIndicator(varpi=float(spec["varpi"])),
        )
    raise ConfigError([f"potential.variant: unknown {variant!r}"])


def _mode_field(spec: dict, grid: TorusGrid) -> SpectralField:
    mode = spec.get("mode", {})
    k = tuple(int(v) for v in mode.get("k", (0, 1) if grid.d == 2 else (0, 1, 0)))
    component = int(mode.get("component", 0))
    amplitude = float(mode.get("amplitude", 1.0))
    return single_mode_field(grid, k, component=component, amplitude=amplitude)


def build_forcing(
    spec: dict, grid: TorusGrid
) -> Optional[Callable[[float], SpectralField]]:
    kind = spec.get("kind", "none")
    if kind == "none":
        return None
    if "file" in spec:
        base, _ = read_checkpoint(spec["file"], dealias_fraction=grid.dealias_fraction)
        base = dealias(leray_project(base))
    else:
        base = _mode_field(spec, grid)
    if kind == "constant":
        return lambda t: base
    t_ramp = float(spec.get("t_ramp", 0.01))
    return lambda t: min(1.0, t / t_ramp) * base


def build_initial(spec: dict, grid: TorusGrid, seed: int) -> SpectralField:
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return zero_field(grid)
    if kind == "random":
        rng = default_rng(seed)
        return random_field(
            grid,
            rng,
            decay=float(spec.get("decay", 2.0)),
            amplitude=float(spec.get("amplitude", 1.0)),
        )
    if kind == "single_mode":
        return _mode_field(spec, grid)
    if kind == "taylor_green":
        return taylor_green_field(grid, amplitude=float(spec.get("amplitude", 1.0)))
    if kind == "file":
        fld, _ = read_checkpoint(spec["file"], dealias_fraction=grid.dealias_fraction)
        return fld
    raise ConfigError([f"initial.kind: unknown {kind!r}"])
