"""Scenario configuration: schema, validation and named presets.

Configs are JSON files.  Validation is strict (unknown keys are errors, not
warnings) and exhaustive: every violation found is reported, not just the
first.  Step sizes are checked against the integrator stability budget
whenever the requested outputs actually integrate a stochastic equation;
closed-form series outputs only use dt as a grid spacing.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .gaussian import HBAR_SI, MechanicalParams, width_rate_scale
from .tolerances import TOL

MODELS = ("spin", "free_particle", "harmonic")
OUTPUT_KINDS = ("trajectory", "ensemble_mean", "sigma", "var", "record",
                "riccati", "collapse_stats", "bell")
_OUTPUTS_BY_MODEL = {
    "spin": ("trajectory", "ensemble_mean", "record", "collapse_stats", "bell"),
    "free_particle": ("trajectory", "ensemble_mean", "sigma", "var", "record", "riccati"),
    "harmonic": ("trajectory", "ensemble_mean", "sigma", "var", "record", "riccati"),
}
# outputs that integrate an SDE and therefore face the stability budget
_SDE_OUTPUTS = ("trajectory", "ensemble_mean", "record", "collapse_stats", "bell")

_TOP_KEYS = {"name", "model", "unraveling", "params", "dt", "t_final",
             "n_trajectories", "base_seed", "outputs"}
_SPIN_KEYS = {"nu", "lam", "hbar", "psi0"}
_MECH_KEYS = {"mass", "omega", "lam", "hbar", "a0", "x0", "k0"}


class ConfigError(ValueError):
    """Carries every validation violation found in a config."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" +
                         "\n".join(f"  - {v}" for v in self.violations))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model: str
    xi_r: float
    xi_i: float
    params: dict
    dt: float
    t_final: float
    n_trajectories: int
    base_seed: int
    outputs: tuple

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def psi0(self) -> np.ndarray:
        pairs = self.params["psi0"]
        v = np.array([complex(re, im) for re, im in pairs])
        return v / np.linalg.norm(v)

    def mechanical(self) -> MechanicalParams:
        p = self.params
        omega = p.get("omega", 0.0) if self.model == "harmonic" else 0.0
        return MechanicalParams(mass=p["mass"], omega=omega, lam=p["lam"],
                                hbar=p.get("hbar", HBAR_SI))

    def a0(self) -> complex:
        re, im = self.params["a0"]
        return complex(re, im)

    def echo(self) -> dict:
        return {
            "name": self.name, "model": self.model,
            "unraveling": {"xi": [self.xi_r, self.xi_i]},
            "params": self.params, "dt": self.dt, "t_final": self.t_final,
            "n_trajectories": self.n_trajectories, "base_seed": self.base_seed,
            "outputs": list(self.outputs),
        }


def _as_positive(raw, key, errs, allow_zero=False):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        errs.append(f"{key}: expected a number, got {raw!r}")
        return None
    if not math.isfinite(v) or v < 0.0 or (v == 0.0 and not allow_zero):
        errs.append(f"{key}: must be {'>= 0' if allow_zero else '> 0'}, got {v}")
        return None
    return v


def validate_config(raw: dict) -> ScenarioConfig:
    """Validate a raw config dict, raising ConfigError with all violations."""
    errs = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        errs.append(f"unknown top-level keys: {sorted(unknown)}")

    model = raw.get("model")
    if model not in MODELS:
        errs.append(f"model: must be one of {MODELS}, got {model!r}")
        raise ConfigError(errs)

    # unraveling -> (xi_r, xi_i)
    unr = raw.get("unraveling", "nonlinear")
    xi_r = xi_i = None
    if unr == "nonlinear":
        xi_r, xi_i = 1.0, 0.0
    elif unr == "linear":
        xi_r, xi_i = 0.0, -1.0
    elif isinstance(unr, dict) and set(unr) == {"xi"} and len(unr.get("xi", ())) == 2:
        xi_r, xi_i = float(unr["xi"][0]), float(unr["xi"][1])
        mod2 = xi_r ** 2 + xi_i ** 2
        if abs(mod2 - 1.0) > TOL.unit_modulus:
            errs.append(f"unraveling.xi: |xi|^2 = {mod2} must equal 1")
        if xi_r < 0.0:
            errs.append(f"unraveling.xi: xi_r must be >= 0, got {xi_r}")
        if model != "spin":
            errs.append("unraveling: mechanical models support only the named "
                        "'nonlinear' / 'linear' members")
    else:
        errs.append(f"unraveling: must be 'nonlinear', 'linear' or {{'xi': [r, i]}}, got {unr!r}")

    dt = _as_positive(raw.get("dt"), "dt", errs)
    t_final = _as_positive(raw.get("t_final"), "t_final", errs)
    n_traj = raw.get("n_trajectories", 1)
    if not isinstance(n_traj, int) or n_traj < 1:
        errs.append(f"n_trajectories: must be a positive integer, got {n_traj!r}")
    base_seed = raw.get("base_seed", 0)
    if not isinstance(base_seed, int):
        errs.append(f"base_seed: must be an integer, got {base_seed!r}")

    outputs = raw.get("outputs", [])
    if not isinstance(outputs, (list, tuple)) or not outputs:
        errs.append("outputs: must be a non-empty list")
        outputs = []
    allowed = _OUTPUTS_BY_MODEL[model]
    for o in outputs:
        if o not in OUTPUT_KINDS:
            errs.append(f"outputs: unknown kind {o!r}")
        elif o not in allowed:
            errs.append(f"outputs: {o!r} is not available for model {model!r}")
    if "record" in outputs and xi_r == 0.0:
        errs.append("outputs: 'record' requires xi_r > 0 (a measurement reading)")

    params = raw.get("params", {})
    if not isinstance(params, dict):
        errs.append("params: must be an object")
        params = {}
    if model == "spin":
        unknown = set(params) - _SPIN_KEYS
        if unknown:
            errs.append(f"params: unknown spin keys {sorted(unknown)}")
        for key in ("nu", "lam"):
            if key not in params:
                errs.append(f"params.{key}: required for spin")
            else:
                _as_positive(params[key], f"params.{key}", errs, allow_zero=True)
        psi0 = params.get("psi0")
        if (not isinstance(psi0, list) or len(psi0) != 2
                or any(not isinstance(c, list) or len(c) != 2 for c in psi0)):
            errs.append("params.psi0: expected [[re_up, im_up], [re_down, im_down]]")
        else:
            nrm = sum(r * r + i * i for r, i in psi0)
            if abs(nrm - 1.0) > 1e-6:
                errs.append(f"params.psi0: squared norm {nrm} must be 1 within 1e-6")
    else:
        unknown = set(params) - _MECH_KEYS
        if unknown:
            errs.append(f"params: unknown mechanical keys {sorted(unknown)}")
        for key in ("mass", "lam"):
            if key not in params:
                errs.append(f"params.{key}: required for {model}")
            else:
                _as_positive(params[key], f"params.{key}", errs, allow_zero=(key == "lam"))
        if model == "harmonic":
            if "omega" not in params:
                errs.append("params.omega: required for harmonic")
            else:
                _as_positive(params["omega"], "params.omega", errs)
        elif "omega" in params and params["omega"] not in (0, 0.0):
            errs.append("params.omega: must be absent or 0 for free_particle")
        a0 = params.get("a0")
        if not isinstance(a0, list) or len(a0) != 2:
            errs.append("params.a0: expected [re, im] in 1/m^2")
        elif float(a0[0]) <= 0.0:
            errs.append(f"params.a0: real part must be > 0, got {a0[0]}")

    if errs:
        raise ConfigError(errs)

    cfg = ScenarioConfig(
        name=str(raw.get("name", model)), model=model, xi_r=xi_r, xi_i=xi_i,
        params=params, dt=dt, t_final=t_final, n_trajectories=n_traj,
        base_seed=base_seed, outputs=tuple(outputs))

    # stability budget only gates outputs that integrate an SDE
    if any(o in _SDE_OUTPUTS for o in cfg.outputs):
        if model == "spin":
            lam = float(params["lam"])
            cap = TOL.stability_budget / lam if lam > 0 else math.inf
        else:
            rate = width_rate_scale(cfg.mechanical(), cfg.a0(),
                                    "nonlinear" if cfg.xi_r > 0 else "linear")
            cap = TOL.stability_budget / rate if rate > 0 else math.inf
        if dt > cap:
            raise ConfigError([f"dt: {dt} violates the stability budget for these "
                               f"parameters; use dt <= {cap:.3e}"])
    return cfg


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from None
    return validate_config(raw)


_SQRT3_2 = math.sqrt(3.0) / 2.0
_INV_SQRT2 = 1.0 / math.sqrt(2.0)

PRESETS = {
    # free particle, SI units: collapse spread vs phase-noise spread vs variance
    "fig1": {
        "name": "fig1", "model": "free_particle", "unraveling": "nonlinear",
        "params": {"mass": 1e-15, "lam": 1e23, "hbar": HBAR_SI,
                   "a0": [0.25e9, 0.0], "x0": 0.0, "k0": 0.0},
        "dt": 5e-5, "t_final": 0.05, "n_trajectories": 1, "base_seed": 11,
        "outputs": ["sigma", "var", "riccati"],
    },
    # spin collapse, natural units: ten trajectories reaching +/-1
    "fig2": {
        "name": "fig2", "model": "spin", "unraveling": "nonlinear",
        "params": {"nu": 1.0, "lam": 1.0, "hbar": 1.0,
                   "psi0": [[0.5, 0.0], [_SQRT3_2, 0.0]]},
        "dt": 1e-3, "t_final": 10.0, "n_trajectories": 10, "base_seed": 7,
        "outputs": ["trajectory", "ensemble_mean", "collapse_stats"],
    },
    # trapped particle, SI units (closed-form series only; the parameter set
    # has extreme scale separation between trap and collapse rates)
    "fig3": {
        "name": "fig3", "model": "harmonic", "unraveling": "nonlinear",
        "params": {"mass": 1e-15, "omega": 1e4, "lam": 1e23, "hbar": HBAR_SI,
                   "a0": [1e-3, 0.0], "x0": 0.0, "k0": 0.0},
        "dt": 1.2566370614359173e-3 / 800.0, "t_final": 1.2566370614359173e-3,
        "n_trajectories": 1, "base_seed": 13,
        "outputs": ["sigma", "var"],
    },
    # two-observer ensembles plus the dynamical analogue on one qubit
    "bell": {
        "name": "bell", "model": "spin", "unraveling": "nonlinear",
        "params": {"nu": 1.0, "lam": 1.0, "hbar": 1.0,
                   "psi0": [[_INV_SQRT2, 0.0], [_INV_SQRT2, 0.0]]},
        "dt": 1e-3, "t_final": 1.5, "n_trajectories": 5000, "base_seed": 2024,
        "outputs": ["bell"],
    },
    # natural-unit parameter sets used by the covariance-flow residual study
    "riccati_free": {
        "name": "riccati_free", "model": "free_particle", "unraveling": "nonlinear",
        "params": {"mass": 1.0, "lam": 1.0, "hbar": 1.0,
                   "a0": [0.3, 0.1], "x0": 0.0, "k0": 0.0},
        "dt": 0.01, "t_final": 4.0, "n_trajectories": 1, "base_seed": 5,
        "outputs": ["sigma", "var", "riccati"],
    },
    "riccati_harmonic": {
        "name": "riccati_harmonic", "model": "harmonic", "unraveling": "nonlinear",
        "params": {"mass": 1.0, "omega": 0.5, "lam": 1.0, "hbar": 1.0,
                   "a0": [0.3, 0.1], "x0": 0.0, "k0": 0.0},
        "dt": 0.01, "t_final": 4.0, "n_trajectories": 1, "base_seed": 5,
        "outputs": ["sigma", "var", "riccati"],
    },
}


def preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; available: {sorted(PRESETS)}"])
    return validate_config(PRESETS[name])
