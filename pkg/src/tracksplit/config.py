"""Run configuration: JSON schema, validation, and shipped presets.

A config is a flat JSON object; see docs/config_schema.md for every field
and the symbol it carries in the method formulas.  All step-length checks
are re-validated at load time; a bad field is rejected with its name.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .operators import SymOperator, pdps_step_check
from .problems import BilevelInstance, make_parametric_poisson, make_quadratic_bilevel

__all__ = ["ConfigError", "SolverConfig", "load_config", "build_instance", "PRESETS", "preset_config"]


class ConfigError(ValueError):
    """Malformed configuration; carries the offending field name."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"config field '{fieldname}': {message}")
        self.fieldname = fieldname


@dataclass
class SolverConfig:
    """Everything a run needs, resolved and validated.

    Symbols: outer_tau/outer_sigma are the outer step lengths tau, sigma;
    lam is the forward-step weight lambda of the primal-dual step condition;
    p is the quasi-contraction weight; gamma_tilde (gt) scales ledger error
    terms; beta/zeta/eta are the free parameters of the growth conditions.
    """

    name: str = "run"
    instance_kind: Optional[str] = None  # quadratic_bilevel | parametric_poisson | None
    instance_params: dict = field(default_factory=dict)
    inner_method: Optional[str] = None  # fb | jacobi | gauss_seidel | exact | None
    inner_tau: float = 1.0
    inner_steps: int = 1
    adjoint_variant: str = "reduced"  # reduced | basic
    adjoint_scheme: str = "jacobi"  # jacobi | gauss_seidel
    adjoint_steps: int = 1
    outer_method: str = "fb"  # fb | pdps
    outer_tau: float = 0.1
    outer_sigma: float = 1.0
    lam: float = 0.0
    prox: Optional[dict] = None  # outer prox term (G for fb, g for pdps)
    h_star: Optional[dict] = None
    K: Optional[list] = None
    K_adj_mismatched: Optional[list] = None
    constants_mode: str = "analytic"  # analytic | empirical
    p: float = 1.0
    gamma_tilde: Optional[float] = None
    gamma_tilde_mono: Optional[float] = None
    beta: Optional[float] = None
    zeta: Optional[float] = None
    eta: Optional[float] = None
    elip_variant: str = "lambda"
    budget: int = 500
    tolerance: float = 1e-8
    warm_start: str = "zero"  # zero | presolve
    x0: Optional[list] = None
    xbar: Optional[list] = None
    seed: int = 0
    checks: Optional[list] = None
    out_dir: Optional[str] = None

    # Prox objects materialized at validation time (not serialized).
    G: object = field(default=None, repr=False, compare=False)
    h_star_obj: object = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("G", None)
        d.pop("h_star_obj", None)
        return d

    @staticmethod
    def from_dict(raw: dict) -> "SolverConfig":
        known = set(SolverConfig.__dataclass_fields__) - {"G", "h_star_obj"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        return SolverConfig(**{k: v for k, v in raw.items() if k in known})


def _build_prox(spec: Optional[dict], fieldname: str):
    from .outer import ProxFunction

    if spec is None:
        return ProxFunction("zero")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(fieldname, "expected an object with a 'kind'")
    try:
        return ProxFunction(
            kind=spec["kind"],
            gamma=float(spec.get("gamma", 0.0)),
            center=spec.get("center"),
            weight=float(spec.get("weight", 0.0)),
            lo=spec.get("lo"),
            hi=spec.get("hi"),
        )
    except ValueError as exc:
        raise ConfigError(fieldname, str(exc)) from exc


def build_instance(cfg: SolverConfig) -> Optional[BilevelInstance]:
    if cfg.instance_kind in (None, "none"):
        return None
    params = cfg.instance_params
    if cfg.instance_kind == "quadratic_bilevel":
        return make_quadratic_bilevel(
            gamma=float(params.get("gamma", 1.0)),
            target=params.get("target", [1.0]),
        )
    if cfg.instance_kind == "parametric_poisson":
        return make_parametric_poisson(
            n=int(params.get("n", 16)),
            coeff_box=params.get("coeff_box", [[-0.25, 0.25], [0.25, 1.0]]),
        )
    raise ConfigError("instance_kind", f"unknown kind {cfg.instance_kind!r}")


def validate_config(cfg: SolverConfig) -> BilevelInstance | None:
    """Re-run all load-time step checks; returns the built instance."""
    if cfg.budget < 1:
        raise ConfigError("budget", "must be at least 1")
    if cfg.tolerance < 0:
        raise ConfigError("tolerance", "must be nonnegative")
    if cfg.inner_steps < 1:
        raise ConfigError("inner_steps", "must be at least 1")
    if cfg.adjoint_steps < 1:
        raise ConfigError("adjoint_steps", "must be at least 1")
    if cfg.warm_start not in ("zero", "presolve"):
        raise ConfigError("warm_start", "must be 'zero' or 'presolve'")
    if cfg.adjoint_variant not in ("reduced", "basic"):
        raise ConfigError("adjoint_variant", "must be 'reduced' or 'basic'")
    if cfg.constants_mode not in ("analytic", "empirical"):
        raise ConfigError("constants_mode", "must be 'analytic' or 'empirical'")
    if cfg.p < 1.0:
        raise ConfigError("p", "must be at least 1")

    instance = build_instance(cfg)
    cfg.G = _build_prox(cfg.prox, "prox")

    if cfg.outer_method == "fb":
        if instance is None:
            raise ConfigError("instance_kind", "forward-backward runs need an instance")
        if cfg.outer_tau <= 0:
            raise ConfigError("outer_tau", "must be positive")
        from .outer import estimate_outer_smoothness

        L, _ = estimate_outer_smoothness(instance, seed=cfg.seed)
        if cfg.outer_tau * L >= 2.0:
            raise ConfigError(
                "outer_tau", f"violates the step condition tau*L < 2 (tau*L = {cfg.outer_tau * L:.6g})"
            )
        if cfg.inner_method == "fb" and instance.fb is not None:
            if cfg.inner_tau * instance.fb.L_f > 1.0:
                raise ConfigError("inner_tau", "violates the inner step condition tau*L_f <= 1")
        if cfg.inner_method in ("jacobi", "gauss_seidel") and instance.linear_system is None:
            raise ConfigError("inner_method", "instance has no linear system to split")
        if cfg.x0 is None:
            raise ConfigError("x0", "required")
        if len(cfg.x0) != instance.dim_x:
            raise ConfigError("x0", f"wrong length (expected {instance.dim_x})")
    elif cfg.outer_method == "pdps":
        if cfg.K is None:
            raise ConfigError("K", "required for the primal-dual outer method")
        K = np.atleast_2d(np.asarray(cfg.K, dtype=float))
        if cfg.outer_tau <= 0 or cfg.outer_sigma <= 0:
            raise ConfigError("outer_tau", "primal and dual steps must be positive")
        ok = pdps_step_check(
            cfg.outer_tau,
            cfg.outer_sigma,
            cfg.lam,
            SymOperator.identity(K.shape[1]),
            SymOperator.identity(K.shape[0]),
            K,
            np.eye(K.shape[0]),
        )
        if not ok:
            raise ConfigError("outer_tau", "violates the primal-dual step length condition")
        cfg.h_star_obj = _build_prox(cfg.h_star, "h_star")
        if cfg.K_adj_mismatched is not None:
            if cfg.G.gamma_G <= 0.0:
                raise ConfigError("prox", "adjoint mismatch needs a strongly convex primal prox")
            if not np.isfinite(cfg.h_star_obj.domain_diameter()):
                raise ConfigError("h_star", "adjoint mismatch needs a bounded dual domain")
        if cfg.x0 is None or len(cfg.x0) != K.shape[0] + K.shape[1]:
            raise ConfigError("x0", f"wrong length (expected {K.shape[0] + K.shape[1]})")
        y0 = np.asarray(cfg.x0, dtype=float)[K.shape[1]:]
        if cfg.h_star_obj.kind in ("box", "box_quadratic"):
            if np.any(y0 < cfg.h_star_obj.lo) or np.any(y0 > cfg.h_star_obj.hi):
                raise ConfigError("x0", "initial dual iterate outside the dual domain")
    else:
        raise ConfigError("outer_method", f"unknown method {cfg.outer_method!r}")
    return instance


def load_config(path) -> SolverConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    cfg = SolverConfig.from_dict(raw)
    validate_config(cfg)
    return cfg


PRESETS: dict[str, dict] = {
    "bq1_single_loop": {
        "name": "bq1_single_loop",
        "instance_kind": "quadratic_bilevel",
        "instance_params": {"gamma": 1.0, "target": [1.0]},
        "inner_method": "fb",
        "inner_tau": 0.5,
        "inner_steps": 1,
        "adjoint_variant": "reduced",
        "adjoint_scheme": "jacobi",
        "adjoint_steps": 1,
        "outer_method": "fb",
        "outer_tau": 0.2,
        "constants_mode": "analytic",
        "p": 1.0,
        "budget": 500,
        "tolerance": 1e-8,
        "warm_start": "zero",
        "x0": [0.0],
        "seed": 0,
    },
    "bq1_certified": {
        "name": "bq1_certified",
        "instance_kind": "quadratic_bilevel",
        "instance_params": {"gamma": 1.0, "target": [1.0]},
        "inner_method": "fb",
        "inner_tau": 0.5,
        "inner_steps": 16,
        "adjoint_variant": "reduced",
        "adjoint_scheme": "jacobi",
        "adjoint_steps": 16,
        "outer_method": "fb",
        "outer_tau": 0.2,
        "constants_mode": "analytic",
        "p": 1.0,
        "budget": 500,
        "tolerance": 1e-10,
        "warm_start": "zero",
        "x0": [0.0],
        "seed": 0,
    },
    "bq1_baseline": {
        "name": "bq1_baseline",
        "instance_kind": "quadratic_bilevel",
        "instance_params": {"gamma": 1.0, "target": [1.0]},
        "inner_method": "exact",
        "adjoint_variant": "reduced",
        "outer_method": "fb",
        "outer_tau": 0.2,
        "budget": 500,
        "tolerance": 1e-8,
        "x0": [0.0],
        "seed": 0,
    },
    "poisson_single_loop": {
        "name": "poisson_single_loop",
        "instance_kind": "parametric_poisson",
        "instance_params": {"n": 16, "coeff_box": [[-0.25, 0.5], [0.5, 1.5]]},
        "inner_method": "jacobi",
        "inner_steps": 1,
        "adjoint_variant": "reduced",
        "adjoint_scheme": "jacobi",
        "adjoint_steps": 1,
        "outer_method": "fb",
        "outer_tau": 0.15,
        "constants_mode": "empirical",
        "p": 1.0,
        "budget": 15000,
        "tolerance": 1e-6,
        "warm_start": "presolve",
        "x0": [0.3, 1.2],
        "seed": 0,
    },
    "poisson_baseline": {
        "name": "poisson_baseline",
        "instance_kind": "parametric_poisson",
        "instance_params": {"n": 16, "coeff_box": [[-0.25, 0.5], [0.5, 1.5]]},
        "inner_method": "exact",
        "adjoint_variant": "reduced",
        "outer_method": "fb",
        "outer_tau": 0.15,
        "budget": 15000,
        "tolerance": 1e-6,
        "x0": [0.3, 1.2],
        "seed": 0,
    },
    "pdps_saddle_1d": {
        "name": "pdps_saddle_1d",
        "outer_method": "pdps",
        "outer_tau": 1.0,
        "outer_sigma": 1.0,
        "lam": 0.0,
        "prox": {"kind": "quadratic", "gamma": 1.0, "center": [1.0]},
        "h_star": {"kind": "box_quadratic", "gamma": 1.0, "center": [0.0], "lo": [-2.0], "hi": [2.0]},
        "K": [[1.0]],
        "budget": 1000,
        "tolerance": 0.0,
        "x0": [0.0, 0.0],
        "xbar": [0.5, 0.5],
        "seed": 0,
    },
    "pdps_mismatch_small": {
        "name": "pdps_mismatch_small",
        "outer_method": "pdps",
        "outer_tau": 0.5,
        "outer_sigma": 0.5,
        "lam": 0.0,
        "prox": {"kind": "quadratic", "gamma": 1.0, "center": [1.0]},
        "h_star": {"kind": "box_quadratic", "gamma": 1.0, "center": [0.0], "lo": [-1.0], "hi": [1.0]},
        "K": [[1.0]],
        "K_adj_mismatched": [[1.01]],
        "p": 1.25,
        "budget": 400,
        "tolerance": 0.0,
        "x0": [0.0, 0.0],
        "xbar": [0.5, 0.5],
        "seed": 0,
    },
}


def preset_config(name: str) -> SolverConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; see list-presets")
    cfg = SolverConfig.from_dict(dict(PRESETS[name]))
    validate_config(cfg)
    return cfg
