"""
Closed-loop scenario runner, KPIs and result files.

A run advances the ground-truth plant one ``delta_bar`` hold at a time. The
controller sees only the measured state and the exosystem; it never sees
the radiation pressure or the exact eccentricity series. For ``mrmpc`` the
planner is re-run every other sample (every ``delta``) and the MPC is solved
at every sample against the matching window of the plan.
"""

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from l2halo.dynamics import EARTH_MOON_KM, PhysicalConstants, SingularityError, l2_equilibrium
from l2halo.exosystem import OrbitParams, build_matrices, exo_at, reference_nu, steady_state_pi
from l2halo.nmpc import DEFAULT_Q, DEFAULT_R, ErtbpPrediction, MpcProblem, NonFiniteCostError, shift_warm_start, solve_full, solve_rti
from l2halo.planner import PlannerModel, PlanningError, plan_horizon
from l2halo.regulation import DEFAULT_POLES, ct_regulation_feedback, design_gains, feedback_linearization
from l2halo.sampled import SamplingConfig, plant_step

log = logging.getLogger(__name__)

CONTROLLERS = ("fl", "regulation", "mrmpc", "nmpc_baseline")
CONTROLLER_ALIASES = {"reg": "regulation", "nmpc": "nmpc_baseline", "polympc": "nmpc_baseline"}
SCENARIOS = ("S1", "S2", "S3", "S4")

# (scenario, controller) pairs whose failure matches the reference study
EXPECTED_FAILURES = frozenset({
    ("S2", "fl"),
    ("S3", "fl"), ("S3", "nmpc_baseline"),
    ("S4", "fl"), ("S4", "regulation"), ("S4", "nmpc_baseline"),
})

INJECTION_KM = 300.0
# amplitude whose on-orbit feedforward fits inside the 0.55 thrust box
SATURATED_K_AMP = 0.03
S4_INITIAL_STATE = (1.022, 0.0, 0.12, 0.0, 0.1, 0.0)

CSV_COLUMNS = (
    "t_nd", "t_hours", "x", "y", "z", "vx", "vy", "vz", "u1", "u2", "u3",
    "ref_x", "ref_y", "ref_z", "plan_x", "plan_y", "plan_z", "err_norm", "e_rms", "ee_cum",
)


class ConfigError(ValueError):
    """Invalid scenario or controller configuration."""


def canonical_controller(name):
    name = CONTROLLER_ALIASES.get(name, name)
    if name not in CONTROLLERS:
        raise ConfigError(f"unknown controller {name!r}")
    return name


@dataclass(frozen=True)
class ControlSettings:
    """Tunables shared by every controller.

    ``poles`` are the closed-loop eigenvalues for ``K``. The FL comparator
    uses ``kp = fl_wn**2 I`` and ``kd = 2 fl_zeta fl_wn I``.
    """

    poles: tuple = DEFAULT_POLES
    contraction: float = 0.5
    fl_wn: float = 120.0
    fl_zeta: float = 1.0
    n_hat_p: int = 15
    q_weight: tuple = tuple(np.diag(DEFAULT_Q))
    r_weight: tuple = tuple(np.diag(DEFAULT_R))
    mode: str = "full"
    max_iter: int = 50
    tol: float = 1e-8
    substeps: int = 16
    envelope: float = 0.5
    planner_refine: bool = True
    divergence: float = 0.5

    def __post_init__(self):
        if self.mode not in ("full", "rti"):
            raise ConfigError(f"mode must be 'full' or 'rti', got {self.mode!r}")
        if self.n_hat_p < 1:
            raise ConfigError("n_hat_p must be at least 1")
        if self.divergence <= 0.0:
            raise ConfigError("divergence bound must be positive")
        if not 0.0 <= self.contraction < 1.0:
            raise ConfigError("contraction must lie in [0, 1)")


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    initial_state: tuple
    controller: str
    srp_on: bool = False
    ecc_on: bool = True
    sat_limit: tuple = None
    delta_bar_hours: float = 0.65
    duration_hours: float = 65.0
    orbit: OrbitParams = field(default_factory=OrbitParams)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    settings: ControlSettings = field(default_factory=ControlSettings)

    def __post_init__(self):
        object.__setattr__(self, "controller", canonical_controller(self.controller))
        if self.duration_hours <= 0.0:
            raise ConfigError("duration must be positive")
        if self.delta_bar_hours <= 0.0:
            raise ConfigError("sampling period must be positive")
        if len(self.initial_state) != 6 or not all(math.isfinite(v) for v in self.initial_state):
            raise ConfigError("initial_state must be 6 finite numbers")
        if self.sat_limit is not None:
            sat = tuple(float(s) for s in np.broadcast_to(self.sat_limit, (3,)))
            if min(sat) <= 0.0:
                raise ConfigError("sat_limit must be positive")
            object.__setattr__(self, "sat_limit", sat)
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))

    @property
    def delta_bar(self):
        return self.constants.hours_to_nd(self.delta_bar_hours)

    @property
    def n_steps(self):
        return math.ceil(self.duration_hours / self.delta_bar_hours - 1e-9)

    @property
    def expect_failure(self):
        return (self.id, self.controller) in EXPECTED_FAILURES


def injection_offset(km=INJECTION_KM):
    """Equal offset on every position axis with Euclidean length ``km``."""
    return np.full(3, km / EARTH_MOON_KM / math.sqrt(3.0))


def preset(scenario, controller, **overrides):
    """Configuration of one of the four comparison scenarios.

    Keyword overrides replace any :class:`ScenarioConfig` field.
    """
    scenario = scenario.upper()
    if not scenario.startswith("S"):
        scenario = "S" + scenario
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    c = overrides.get("constants", PhysicalConstants())
    orbit = overrides.get("orbit", OrbitParams(k_amp=SATURATED_K_AMP) if scenario in ("S2", "S3") else OrbitParams())
    base = dict(id=scenario, controller=controller, constants=c, orbit=orbit)
    l2 = tuple(l2_equilibrium(c))
    if scenario == "S1":
        base.update(initial_state=l2)
    elif scenario == "S2":
        base.update(initial_state=l2, srp_on=True, sat_limit=(0.55,) * 3)
    elif scenario == "S3":
        m = build_matrices(orbit, c)
        q0 = steady_state_pi(exo_at(0.0, orbit, m), m)
        q0[:3] += injection_offset()
        base.update(initial_state=tuple(q0), srp_on=True, sat_limit=(0.55,) * 3)
    else:
        base.update(initial_state=S4_INITIAL_STATE, srp_on=True, delta_bar_hours=1.2)
    base.update(overrides)
    return ScenarioConfig(**base)


@dataclass
class ScenarioResult:
    """Sampled closed-loop trajectory.

    Row ``k`` holds the state at ``t[k]``, the control computed there and the
    controller's reference. The last row's control is computed but never
    applied.
    """

    config: ScenarioConfig
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    refs: np.ndarray
    plans: np.ndarray
    failed: bool
    reason: str = ""
    wall_time_ms: float = 0.0
    qp_times_us: tuple = ()

    @property
    def steps(self):
        return len(self.t)


@dataclass(frozen=True)
class KpiRecord:
    e_rms_final: float
    e_rms_series: np.ndarray
    ee_total: float
    u_norm_series: np.ndarray
    failed: bool


def compute_kpis(traj, cfg=None, strict_si=False):
    """Tracking-error and energy KPIs.

    The default forms follow the reference tables: ``sqrt(||e|| / 3)`` and
    ``delta_bar * sqrt(sum ||u_k||^2)`` over the applied controls. With
    ``strict_si`` the dimensionally consistent ``||e|| / sqrt(3)`` and
    ``sqrt(delta_bar * sum ||u_k||^2)`` are returned instead.
    """
    cfg = traj.config if cfg is None else cfg
    db = cfg.delta_bar
    err = np.linalg.norm(traj.refs - traj.states[:, :3], axis=1)
    e_rms = err / math.sqrt(3.0) if strict_si else np.sqrt(err / 3.0)
    u_norm = np.linalg.norm(traj.controls, axis=1)
    applied = u_norm[:-1] if len(u_norm) else u_norm
    energy = float(np.sum(applied**2))
    ee = math.sqrt(db * energy) if strict_si else db * math.sqrt(energy)
    return KpiRecord(
        e_rms_final=float(e_rms[-1]) if len(e_rms) else 0.0,
        e_rms_series=e_rms, ee_total=ee, u_norm_series=u_norm, failed=bool(traj.failed),
    )


class _Controller:
    """Stateful per-run controller wrapper."""

    def __init__(self, cfg, m):
        self.cfg, self.m = cfg, m
        st, c = cfg.settings, cfg.constants
        self.db = cfg.delta_bar
        self.gains = design_gains(c, self.db, st.poles, st.contraction)
        self.kp = st.fl_wn**2 * np.eye(3)
        self.kd = 2.0 * st.fl_zeta * st.fl_wn * np.eye(3)
        self.n_p = 2 * st.n_hat_p
        self.model = ErtbpPrediction(c.mu, self.db, st.substeps)
        self.pm = PlannerModel(
            m=m, c=c, delta=2.0 * self.db, substeps=st.substeps, envelope=st.envelope, refine=st.planner_refine,
        )
        sat = cfg.sat_limit
        self.lb = -np.asarray(sat) if sat else np.full(3, -np.inf)
        self.ub = np.asarray(sat) if sat else np.full(3, np.inf)
        self.warm = np.zeros((self.n_p, 3))
        self.plan = None
        self.qp_us = []

    def __call__(self, k, q, t):
        """Return ``(u, planned_position)`` at sample ``k``."""
        cfg, m, c = self.cfg, self.m, self.cfg.constants
        w = exo_at(t, cfg.orbit, m)
        name = cfg.controller
        if name == "fl":
            return feedback_linearization(q, w, self.kp, self.kd, m, c), reference_nu(w, m)
        if name == "regulation":
            return ct_regulation_feedback(q, w, self.gains, m, c), reference_nu(w, m)
        if name == "mrmpc":
            phase = k % 2
            if phase == 0:
                self.plan = plan_horizon(q, w, self.cfg.settings.n_hat_p + 1, self.pm.delta, self.pm, self.gains, t0=t)
                here = q[:3].copy()
            else:
                here = self.plan.positions[0]
            ref = self.plan.states[phase:phase + self.n_p]
        else:
            ref = np.array([steady_state_pi(exo_at(t + j * self.db, cfg.orbit, m), m) for j in range(1, self.n_p + 1)])
            here = reference_nu(w, m)
        return self._solve(q, ref), here

    def _solve(self, q, ref):
        st = self.cfg.settings
        prob = MpcProblem(
            self.n_p, ref, q, self.model, self.lb, self.ub,
            q_weight=np.diag(st.q_weight), r_weight=np.diag(st.r_weight),
        )
        if st.mode == "rti":
            sol = solve_rti(prob, self.warm)
        else:
            sol = solve_full(prob, self.warm, tol=st.tol, max_iter=st.max_iter)
        self.qp_us.append(sol.qp_time_us)
        self.warm = shift_warm_start(sol.u_seq)
        return sol.u_seq[0].copy()


def run_scenario(cfg):
    """Simulate ``cfg`` and return a :class:`ScenarioResult`.

    Divergence (distance to the reference above the configured bound), a
    near-collision or a solver failure ends the run early with
    ``failed=True``.
    """
    c = cfg.constants
    m = build_matrices(cfg.orbit, c)
    db = cfg.delta_bar
    plant_cfg = SamplingConfig(2.0 * db, cfg.settings.substeps)
    ctrl = _Controller(cfg, m)
    sat = np.asarray(cfg.sat_limit) if cfg.sat_limit else None
    q = np.array(cfg.initial_state, dtype=float)
    rows_t, rows_q, rows_u, rows_ref, rows_plan = [], [], [], [], []
    failed, reason = False, ""
    start = time.perf_counter()
    for k in range(cfg.n_steps + 1):
        t = k * db
        nu = reference_nu(exo_at(t, cfg.orbit, m), m)
        try:
            u, plan_pos = ctrl(k, q, t)
        except (PlanningError, NonFiniteCostError, SingularityError, np.linalg.LinAlgError) as exc:
            failed, reason = True, f"controller error at step {k}: {exc}"
            break
        if sat is not None:
            u = np.clip(u, -sat, sat)
        rows_t.append(t)
        rows_q.append(q.copy())
        rows_u.append(u)
        rows_ref.append(nu)
        rows_plan.append(plan_pos)
        gap = float(np.linalg.norm(q[:3] - nu))
        if not math.isfinite(gap) or gap > cfg.settings.divergence:
            failed, reason = True, f"tracking error {gap:.3g} exceeded {cfg.settings.divergence} at step {k}"
            break
        if k == cfg.n_steps:
            break
        try:
            q = plant_step(q, t, u, db, plant_cfg, c, cfg.ecc_on, cfg.srp_on)
        except SingularityError as exc:
            failed, reason = True, f"plant singularity at step {k}: {exc}"
            break
    wall = (time.perf_counter() - start) * 1e3
    if failed:
        log.info("%s/%s failed: %s", cfg.id, cfg.controller, reason)
    return ScenarioResult(
        config=cfg, t=np.array(rows_t), states=np.array(rows_q).reshape(-1, 6),
        controls=np.array(rows_u).reshape(-1, 3), refs=np.array(rows_ref).reshape(-1, 3),
        plans=np.array(rows_plan).reshape(-1, 3), failed=failed, reason=reason,
        wall_time_ms=wall, qp_times_us=tuple(ctrl.qp_us),
    )


def _fmt(x):
    return f"{x:.12g}"


def emit_csv(result, path, strict_si=False):
    """Write the per-step CSV and a ``.json`` KPI sidecar next to it.

    Returns the sidecar path.
    """
    path = Path(path)
    kpi = compute_kpis(result, strict_si=strict_si)
    hours = result.config.constants.nd_to_hours
    ee_cum = result.config.delta_bar * np.sqrt(np.concatenate([[0.0], np.cumsum(kpi.u_norm_series[:-1] ** 2)]))
    if strict_si:
        ee_cum = np.sqrt(result.config.delta_bar) * ee_cum / result.config.delta_bar
    err = np.linalg.norm(result.refs - result.states[:, :3], axis=1) if result.steps else np.zeros(0)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for k in range(result.steps):
                row = [result.t[k], hours(result.t[k]), *result.states[k], *result.controls[k],
                       *result.refs[k], *result.plans[k], err[k], kpi.e_rms_series[k], ee_cum[k]]
                writer.writerow([_fmt(v) for v in row])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(summary(result, kpi), indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return sidecar


def summary(result, kpi=None):
    kpi = compute_kpis(result) if kpi is None else kpi
    qp = np.asarray([v for v in result.qp_times_us if v > 0.0])
    return {
        "scenario": result.config.id,
        "controller": result.config.controller,
        "e_rms_final": kpi.e_rms_final,
        "ee_total": kpi.ee_total,
        "failed": kpi.failed,
        "steps": result.steps,
        "wall_time_ms": result.wall_time_ms,
        "qp_time_us_mean": float(qp.mean()) if qp.size else None,
        "qp_time_us_p95": float(np.percentile(qp, 95)) if qp.size else None,
    }


def read_csv_kpis(path, delta_bar=None, strict_si=False):
    """Recompute KPIs from an emitted CSV.

    ``delta_bar`` defaults to the spacing of the ``t_nd`` column.
    """
    path = Path(path)
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    data = np.atleast_1d(data)
    if data.size == 0:
        return {"steps": 0, "e_rms_final": None, "ee_total": 0.0}
    t = data["t_nd"]
    db = float(t[1] - t[0]) if delta_bar is None and t.size > 1 else float(delta_bar or 0.0)
    err = data["err_norm"]
    u = np.sqrt(data["u1"] ** 2 + data["u2"] ** 2 + data["u3"] ** 2)[:-1]
    if strict_si:
        e_fin, ee = err[-1] / math.sqrt(3.0), math.sqrt(db * float(np.sum(u**2)))
    else:
        e_fin, ee = math.sqrt(err[-1] / 3.0), db * math.sqrt(float(np.sum(u**2)))
    return {"steps": int(t.size), "e_rms_final": float(e_fin), "ee_total": float(ee), "delta_bar": db}


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    controller: str
    e_rms_final: float
    ee_total: float
    failed: bool
    expected_failure: bool


def _run_row(cfg):
    res = run_scenario(cfg)
    return res, compute_kpis(res)


def compare(cfgs, jobs=1):
    """Run every configuration and return ``[(result, kpi), ...]`` in input order."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("compare needs at least one configuration")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_row, cfgs))
    return [_run_row(cfg) for cfg in cfgs]


def comparison_table(rows):
    out = []
    for res, kpi in rows:
        cfg = res.config
        out.append(ComparisonRow(cfg.id, cfg.controller, kpi.e_rms_final, kpi.ee_total, kpi.failed, cfg.expect_failure))
    return out


def format_table(table):
    lines = [f"{'scenario':<9}{'controller':<15}{'e_RMS(T)':>12}{'EE_T':>12}  status"]
    for r in table:
        if r.failed:
            e, ee = "N/A", "N/A"
        else:
            e, ee = f"{r.e_rms_final:.4g}", f"{r.ee_total:.4g}"
        status = "failed" if r.failed else "ok"
        if r.failed != r.expected_failure:
            status += " (unexpected)"
        lines.append(f"{r.scenario:<9}{r.controller:<15}{e:>12}{ee:>12}  {status}")
    return "\n".join(lines)


def replace(cfg, **changes):
    """``dataclasses.replace`` that also accepts ``ControlSettings`` field names."""
    names = {f.name for f in dataclasses.fields(ControlSettings)}
    inner = {k: changes.pop(k) for k in list(changes) if k in names}
    if inner:
        changes["settings"] = dataclasses.replace(cfg.settings, **inner)
    return dataclasses.replace(cfg, **changes)
