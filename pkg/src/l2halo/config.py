"""TOML configuration files for scenario runs.

Recognised tables are ``[constants]``, ``[orbit]``, ``[gains]``, ``[mpc]``
and ``[scenario]``. Unknown keys are rejected so typos surface as errors.

Example::

    [orbit]
    k_amp = 0.05

    [gains]
    poles = [-30, -36, -42, -48, -54, -60]

    [mpc]
    mode = "rti"
    r_weight = [1e-3, 1e-3, 1e-3]

    [scenario]
    initial_state = [1.16, 0.0, 0.03, 0.0, 0.05, 0.0]
    sat_limit = 0.55
"""

import dataclasses
import sys

from l2halo.dynamics import PhysicalConstants
from l2halo.exosystem import OrbitParams
from l2halo.scenarios import SATURATED_K_AMP, ConfigError, ControlSettings, ScenarioConfig, preset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_GAIN_KEYS = {"poles", "contraction", "fl_wn", "fl_zeta"}
_MPC_KEYS = {"n_hat_p", "q_weight", "r_weight", "mode", "max_iter", "tol", "substeps", "envelope", "planner_refine"}
_SCENARIO_KEYS = {"initial_state", "srp_on", "ecc_on", "sat_limit", "delta_bar_hours", "duration_hours", "divergence"}
_TABLES = {"constants", "orbit", "gains", "mpc", "scenario"}


def load_config(path):
    """Parse ``path`` into a nested dict, raising :class:`ConfigError` on any problem."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    extra = set(data) - _TABLES
    if extra:
        raise ConfigError(f"unknown config tables: {sorted(extra)}")
    return data


def _check(table, allowed, name):
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")


def _tuple(v):
    return tuple(float(x) for x in v) if isinstance(v, (list, tuple)) else v


def _canonical(scenario):
    s = str(scenario).upper()
    return s if s.startswith("S") else "S" + s


def build_config(scenario, controller, data=None, **cli):
    """Scenario configuration from a preset (or ``custom``), file values and CLI overrides.

    ``cli`` overrides win over file values; ``None`` entries are ignored.
    """
    data = data or {}
    try:
        consts = data.get("constants", {})
        _check(consts, {f.name for f in dataclasses.fields(PhysicalConstants)}, "constants")
        c = PhysicalConstants(**consts)
        orbit_tab = data.get("orbit", {})
        _check(orbit_tab, {f.name for f in dataclasses.fields(OrbitParams)}, "orbit")
        gains = data.get("gains", {})
        _check(gains, _GAIN_KEYS, "gains")
        mpc = data.get("mpc", {})
        _check(mpc, _MPC_KEYS, "mpc")
        scen = dict(data.get("scenario", {}))
        _check(scen, _SCENARIO_KEYS, "scenario")
        settings_kw = {k: _tuple(v) for k, v in {**gains, **mpc}.items()}
        if "divergence" in scen:
            settings_kw["divergence"] = float(scen.pop("divergence"))
        mode = cli.pop("mode", None)
        if mode is not None:
            settings_kw["mode"] = mode
        settings = ControlSettings(**settings_kw)
        fields = {k: _tuple(v) for k, v in scen.items()}
        fields.update({k: v for k, v in cli.items() if v is not None})
        fields["settings"] = settings
        fields["constants"] = c
        if scenario == "custom":
            orbit = OrbitParams(**orbit_tab)
            if "initial_state" not in fields:
                raise ConfigError("custom scenario needs [scenario] initial_state")
            return ScenarioConfig(id="custom", controller=controller, orbit=orbit, **fields)
        if orbit_tab:
            if _canonical(scenario) in ("S2", "S3"):
                orbit_tab = {"k_amp": SATURATED_K_AMP, **orbit_tab}
            fields["orbit"] = OrbitParams(**orbit_tab)
        return preset(scenario, controller, **fields)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
