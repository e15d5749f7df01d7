"""Scenario configuration, closed-loop experiment runner, metrics, and CSV I/O.

Config files are plain text, one `key = value` per line with dotted section
prefixes and `#` comments. Unknown keys are errors, and every invalid entry
is reported at once. An empty file yields the default scenario: sinusoid
tracking with the adaptive controller's knobs at their tuned defaults and a
+20% gravity-coefficient model mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dense_linalg import solve_lyapunov
from .plant import CoeffSet, DisturbanceSpec, PlantParams, derive_coefficients
from . import fuzzy as fz
from .mpc import (
    AdaptationLoop,
    AdaptiveFuzzyPredictor,
    ClosedLoop,
    MpcConfig,
    NominalPredictor,
    TrajectoryLog,
    run_receding_horizon,
)

__all__ = [
    "ConfigError",
    "ReferenceSpec",
    "MismatchFactors",
    "ScenarioConfig",
    "RunMetrics",
    "default_config",
    "load_config",
    "dump_config",
    "reference_trajectory",
    "state_reference",
    "build_closed_loop",
    "run_scenario",
    "compute_metrics",
    "export_csv",
    "load_csv",
    "compare_report",
    "run_comparison",
    "CSV_HEADER",
]

CSV_HEADER = "t,x1,x2,x3,x4,u,y_ref,e,V,w_diag,cost,status,solve_ms"

_STEP_SMOOTH_WINDOW = 0.5  # seconds of quintic ramp after the step time


class ConfigError(ValueError):
    """Invalid scenario configuration; message lists every problem found."""


@dataclass(frozen=True)
class ReferenceSpec:
    kind: str = "sinusoid"  # zero | step | sinusoid
    amplitude: float = 0.3  # rad
    frequency: float = 0.8  # Hz, sinusoid only
    step_time: float = 1.0  # seconds, step only
    consistent_arm: bool = True


@dataclass(frozen=True)
class MismatchFactors:
    """Multiplicative factors applied to the controller's model coefficients."""

    a1: float = 1.0
    a2: float = 1.0
    a3: float = 1.2
    a4: float = 1.0
    b1: float = 1.0
    b2: float = 1.0

    def apply(self, c: CoeffSet) -> CoeffSet:
        return CoeffSet(
            a1=c.a1 * self.a1,
            a2=c.a2 * self.a2,
            a3=c.a3 * self.a3,
            a4=c.a4 * self.a4,
            b1=c.b1 * self.b1,
            b2=c.b2 * self.b2,
        )


# corrected error-system matrix: Hurwitz, block-diagonal so the solved P
# de-weights the unregulated arm channels in the adaptation drive
_DEFAULT_LYAPUNOV_A = (
    -1.0, 0.0, 0.0, 0.0,
    0.0, -1.0, 0.0, 0.0,
    0.0, 0.0, 0.0, 1.0,
    0.0, 0.0, -9.0, -4.8,
)


@dataclass
class ScenarioConfig:
    plant: PlantParams
    controller: str
    mpc: MpcConfig
    fuzzy_counts: tuple
    fuzzy_ranges: tuple
    fuzzy_g_floor: float
    fuzzy_theta_bound: float
    fuzzy_init: str  # zero | nominal_fit
    fuzzy_init_samples: int
    adapt_gain: float
    lyapunov_a: np.ndarray
    lyapunov_q_diag: float
    reference: ReferenceSpec
    disturbance: DisturbanceSpec
    mismatch: MismatchFactors
    alpha0: float
    duration: float
    plant_dt: float
    seed: int


@dataclass(frozen=True)
class RunMetrics:
    rmse: float
    iae: float
    steady_state_error: float
    mean_solve_time: float
    max_solve_time: float


# registry of every legal config key: (type tag, default-value string)
def _fmt_float(v: float) -> str:
    return repr(float(v))


_KEYS: dict[str, tuple] = {
    "plant.m1": ("float", "0.0861"),
    "plant.k1": ("float", "0.0019"),
    "plant.a_p": ("float", "33.04"),
    "plant.j1": ("float", "0.001"),
    "plant.g": ("float", "9.8066"),
    "plant.l1": ("float", "0.113"),
    "plant.c1": ("float", "0.0029"),
    "plant.k_p": ("float", "74.89"),
    "controller": (("choice", ("classical", "afmpc")), "classical"),
    "mpc.kp": ("int", "5"),
    "mpc.kc": ("int", "3"),
    "mpc.q_diag": (("floats", 4), "0.1 0.1 0.1 0.1"),
    "mpc.r": ("float", "0.3"),
    "mpc.u_max": ("float", "5.0"),
    "mpc.dt": ("float", "0.05"),
    "fuzzy.counts": (("ints", 4), "3 3 3 3"),
    "fuzzy.range_x1": (("floats", 2), f"{-math.pi!r} {math.pi!r}"),
    "fuzzy.range_x2": (("floats", 2), "-8.0 8.0"),
    "fuzzy.range_x3": (("floats", 2), f"{-math.pi / 2!r} {math.pi / 2!r}"),
    "fuzzy.range_x4": (("floats", 2), "-8.0 8.0"),
    "fuzzy.g_floor": ("float", "1.0"),
    "fuzzy.theta_bound": ("float", "1000000.0"),
    "fuzzy.init": (("choice", ("zero", "nominal_fit")), "nominal_fit"),
    "fuzzy.init_samples": ("int", "4000"),
    "adapt.gain": ("float", "32.0"),
    "adapt.lyapunov_a": (("floats", 16), " ".join(_fmt_float(v) for v in _DEFAULT_LYAPUNOV_A)),
    "adapt.lyapunov_q_diag": ("float", "500.0"),
    "reference.kind": (("choice", ("zero", "step", "sinusoid")), "sinusoid"),
    "reference.amplitude": ("float", "0.2"),
    "reference.frequency": ("float", "0.65"),
    "reference.step_time": ("float", "1.0"),
    "reference.consistent_arm": ("bool", "true"),
    "disturbance.kind": (
        ("choice", ("none", "constant", "sinusoid", "band_limited_noise")),
        "none",
    ),
    "disturbance.amplitude": ("float", "0.0"),
    "disturbance.frequency": ("float", "1.0"),
    "disturbance.seed": ("int", "0"),
    "mismatch.a1": ("float", "1.0"),
    "mismatch.a2": ("float", "1.0"),
    "mismatch.a3": ("float", "1.2"),
    "mismatch.a4": ("float", "1.0"),
    "mismatch.b1": ("float", "1.0"),
    "mismatch.b2": ("float", "1.0"),
    "scenario.alpha0": ("float", "0.0"),
    "run.duration": ("float", "10.0"),
    "run.dt": ("float", "0.001"),
    "run.seed": ("int", "0"),
}


def _parse_value(key: str, kind, raw: str):
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ValueError("expected true or false")
    tag, arg = kind
    if tag == "choice":
        if raw not in arg:
            raise ValueError(f"expected one of {', '.join(arg)}")
        return raw
    if tag == "floats":
        vals = [float(v) for v in raw.split()]
        if len(vals) != arg:
            raise ValueError(f"expected {arg} values, got {len(vals)}")
        return tuple(vals)
    if tag == "ints":
        vals = [int(v) for v in raw.split()]
        if len(vals) != arg:
            raise ValueError(f"expected {arg} values, got {len(vals)}")
        return tuple(vals)
    raise AssertionError(f"unhandled kind for {key}")


def _default_flat() -> dict:
    return {key: _parse_value(key, kind, default) for key, (kind, default) in _KEYS.items()}


def _build_config(flat: dict) -> ScenarioConfig:
    errors: list[str] = []

    def attempt(label, fn):
        try:
            return fn()
        except ValueError as exc:
            errors.append(f"{label}: {exc}")
            return None

    plant = attempt(
        "plant",
        lambda: PlantParams(
            m1=flat["plant.m1"],
            k1=flat["plant.k1"],
            a_p=flat["plant.a_p"],
            J1=flat["plant.j1"],
            g=flat["plant.g"],
            l1=flat["plant.l1"],
            c1=flat["plant.c1"],
            k_p=flat["plant.k_p"],
        ),
    )
    if flat["mpc.kc"] > flat["mpc.kp"]:
        errors.append("mpc.kc: K_c <= K_p violated")
    mpc_cfg = attempt(
        "mpc",
        lambda: MpcConfig(
            prediction_horizon=flat["mpc.kp"],
            control_horizon=flat["mpc.kc"],
            state_weight=np.diag(flat["mpc.q_diag"]),
            input_weight=flat["mpc.r"],
            input_bound=flat["mpc.u_max"],
            dt=flat["mpc.dt"],
        ),
    )
    ranges = []
    for i in (1, 2, 3, 4):
        lo, hi = flat[f"fuzzy.range_x{i}"]
        if not hi > lo:
            errors.append(f"fuzzy.range_x{i}: range ({lo}, {hi}) is not increasing")
        ranges.append((lo, hi))
    if any(c < 1 for c in flat["fuzzy.counts"]):
        errors.append("fuzzy.counts: every count must be >= 1")
    if flat["fuzzy.g_floor"] <= 0.0:
        errors.append("fuzzy.g_floor: must be positive")
    if flat["fuzzy.theta_bound"] <= 0.0:
        errors.append("fuzzy.theta_bound: must be positive")
    if flat["fuzzy.init_samples"] < 1:
        errors.append("fuzzy.init_samples: must be >= 1")
    if flat["adapt.gain"] < 0.0:
        errors.append("adapt.gain: must be non-negative")
    if flat["adapt.lyapunov_q_diag"] <= 0.0:
        errors.append("adapt.lyapunov_q_diag: must be positive")
    ref = attempt(
        "reference",
        lambda: ReferenceSpec(
            kind=flat["reference.kind"],
            amplitude=flat["reference.amplitude"],
            frequency=flat["reference.frequency"],
            step_time=flat["reference.step_time"],
            consistent_arm=flat["reference.consistent_arm"],
        ),
    )
    if flat["reference.kind"] == "sinusoid" and flat["reference.frequency"] <= 0.0:
        errors.append("reference.frequency: must be positive for a sinusoid reference")
    if flat["reference.step_time"] < 0.0:
        errors.append("reference.step_time: must be non-negative")
    dist = attempt(
        "disturbance",
        lambda: DisturbanceSpec(
            kind=flat["disturbance.kind"],
            amplitude=flat["disturbance.amplitude"],
            frequency=flat["disturbance.frequency"],
            seed=flat["disturbance.seed"],
        ),
    )
    for name in ("a1", "a2", "a3", "a4", "b1", "b2"):
        if flat[f"mismatch.{name}"] <= 0.0:
            errors.append(f"mismatch.{name}: factor must be positive")
    if flat["run.duration"] <= 0.0:
        errors.append("run.duration: must be positive")
    if flat["run.dt"] <= 0.0:
        errors.append("run.dt: must be positive")
    elif mpc_cfg is not None:
        ratio = mpc_cfg.dt / flat["run.dt"]
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            errors.append("mpc.dt: must be a positive integer multiple of run.dt")
        if flat["run.duration"] < mpc_cfg.dt:
            errors.append("run.duration: shorter than one control period")
    if errors:
        raise ConfigError("\n".join(errors))
    return ScenarioConfig(
        plant=plant,
        controller=flat["controller"],
        mpc=mpc_cfg,
        fuzzy_counts=tuple(flat["fuzzy.counts"]),
        fuzzy_ranges=tuple(ranges),
        fuzzy_g_floor=flat["fuzzy.g_floor"],
        fuzzy_theta_bound=flat["fuzzy.theta_bound"],
        fuzzy_init=flat["fuzzy.init"],
        fuzzy_init_samples=flat["fuzzy.init_samples"],
        adapt_gain=flat["adapt.gain"],
        lyapunov_a=np.array(flat["adapt.lyapunov_a"]).reshape(4, 4),
        lyapunov_q_diag=flat["adapt.lyapunov_q_diag"],
        reference=ref,
        disturbance=dist,
        mismatch=MismatchFactors(
            a1=flat["mismatch.a1"],
            a2=flat["mismatch.a2"],
            a3=flat["mismatch.a3"],
            a4=flat["mismatch.a4"],
            b1=flat["mismatch.b1"],
            b2=flat["mismatch.b2"],
        ),
        alpha0=flat["scenario.alpha0"],
        duration=flat["run.duration"],
        plant_dt=flat["run.dt"],
        seed=flat["run.seed"],
    )


def default_config() -> ScenarioConfig:
    return _build_config(_default_flat())


def _parse_lines(text: str, source: str) -> dict:
    """Parse key = value lines onto the defaults; all errors at once."""
    flat = _default_flat()
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KEYS:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        kind, _ = _KEYS[key]
        try:
            flat[key] = _parse_value(key, kind, raw)
        except ValueError as exc:
            errors.append(f"{source}:{lineno}: {key}: {exc}")
    if errors:
        raise ConfigError("\n".join(errors))
    return flat


def load_config(path: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Read, merge onto defaults, and validate a scenario config file.

    `overrides` maps config keys to raw value strings applied after the
    file (used by the CLI for --controller/--seed).
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    flat = _parse_lines(text, path)
    if overrides:
        errors = []
        for key, raw in overrides.items():
            if key not in _KEYS:
                errors.append(f"override: unknown key {key!r}")
                continue
            try:
                flat[key] = _parse_value(key, _KEYS[key][0], raw)
            except ValueError as exc:
                errors.append(f"override: {key}: {exc}")
        if errors:
            raise ConfigError("\n".join(errors))
    return _build_config(flat)


def _format_value(kind, value) -> str:
    if kind == "float":
        return _fmt_float(value)
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    tag = kind[0]
    if tag == "choice":
        return str(value)
    if tag == "floats":
        return " ".join(_fmt_float(v) for v in value)
    if tag == "ints":
        return " ".join(str(int(v)) for v in value)
    raise AssertionError


def dump_config(flat: Optional[dict] = None) -> str:
    """Render a flat key dict (defaults when omitted) as a config file."""
    if flat is None:
        flat = _default_flat()
    lines = [f"{key} = {_format_value(_KEYS[key][0], flat[key])}" for key in _KEYS]
    return "\n".join(lines) + "\n"


def reference_trajectory(spec: ReferenceSpec, t: float):
    """Reference output and its first three time derivatives at time t."""
    if spec.kind == "zero":
        return (0.0, 0.0, 0.0, 0.0)
    if spec.kind == "sinusoid":
        w = 2.0 * math.pi * spec.frequency
        a = spec.amplitude
        return (
            a * math.sin(w * t),
            a * w * math.cos(w * t),
            -a * w * w * math.sin(w * t),
            -a * w * w * w * math.cos(w * t),
        )
    # step: quintic ramp over a fixed smoothing window, then flat
    if t < spec.step_time:
        return (0.0, 0.0, 0.0, 0.0)
    tau = (t - spec.step_time) / _STEP_SMOOTH_WINDOW
    if tau >= 1.0:
        return (spec.amplitude, 0.0, 0.0, 0.0)
    a = spec.amplitude
    win = _STEP_SMOOTH_WINDOW
    s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    s1 = 30.0 * tau * tau - 60.0 * tau ** 3 + 30.0 * tau ** 4
    s2 = 60.0 * tau - 180.0 * tau * tau + 120.0 * tau ** 3
    s3 = 60.0 - 360.0 * tau + 360.0 * tau * tau
    return (a * s, a * s1 / win, a * s2 / (win * win), a * s3 / (win ** 3))


def state_reference(spec: ReferenceSpec, coeffs: CoeffSet, t: float) -> np.ndarray:
    """Four-state reference for the tracking error.

    The pendulum channels follow the reference output and its derivative.
    For a sinusoid with consistent_arm, the arm channels carry the
    closed-form periodic arm motion that makes the output trajectory
    dynamically realizable (linearized about upright); otherwise the arm
    reference is zero and only the output channels are meaningful.
    """
    y, yd, _, _ = reference_trajectory(spec, t)
    if (
        spec.consistent_arm
        and spec.kind == "sinusoid"
        and spec.frequency > 0.0
        and spec.amplitude != 0.0
    ):
        w = 2.0 * math.pi * spec.frequency
        a = spec.amplitude
        ratio = coeffs.b1 / coeffs.b2
        x2r = ratio * (a * (w * w + coeffs.a3) / w * math.cos(w * t) - coeffs.a4 * a * math.sin(w * t))
        x1r = ratio * (
            a * (w * w + coeffs.a3) / (w * w) * math.sin(w * t)
            + coeffs.a4 * a / w * math.cos(w * t)
        )
        return np.array([x1r, x2r, y, yd])
    return np.array([0.0, 0.0, y, yd])


def build_closed_loop(config: ScenarioConfig):
    """Assemble the simulation pieces for one scenario.

    Returns (loop, x0, steps). The plant always integrates the true
    coefficients; the controller's prediction model sees the mismatched
    ones.
    """
    true_coeffs = derive_coefficients(config.plant)
    nominal = config.mismatch.apply(true_coeffs)
    p_mat = solve_lyapunov(config.lyapunov_a, config.lyapunov_q_diag * np.eye(4))

    def x_ref_fn(t: float) -> np.ndarray:
        return state_reference(config.reference, true_coeffs, t)

    adaptation = None
    if config.controller == "afmpc":
        model_fz = fz.build_rule_grid(
            config.fuzzy_counts, config.fuzzy_ranges, config.fuzzy_g_floor
        )
        if config.fuzzy_init == "nominal_fit":
            # fair prior: fit the consequents to the same mismatched model
            # the classical controller uses, nothing more
            def target(batch: np.ndarray) -> np.ndarray:
                return (
                    nominal.a2 * batch[:, 1]
                    + nominal.a3 * np.sin(batch[:, 2])
                    + nominal.a4 * batch[:, 3]
                )

            model_fz = fz.fit_consequents_lsq(
                model_fz,
                target,
                g_value=nominal.b2,
                n_samples=config.fuzzy_init_samples,
                seed=config.seed,
            )
        predictor = AdaptiveFuzzyPredictor(model_fz, nominal, config.mpc.dt)
        adaptation = AdaptationLoop(
            fuzzy=model_fz,
            P=p_mat,
            b=np.array([0.0, 0.0, 0.0, 1.0]),
            gain=config.adapt_gain,
            theta_bound=config.fuzzy_theta_bound,
        )
    elif config.controller == "classical":
        predictor = NominalPredictor(nominal, config.mpc.dt)
    else:
        raise ConfigError(f"unknown controller {config.controller!r}")

    loop = ClosedLoop(
        model=predictor,
        config=config.mpc,
        true_coeffs=true_coeffs,
        x_ref_fn=x_ref_fn,
        lyapunov_p=p_mat,
        disturbance=None if config.disturbance.kind == "none" else config.disturbance,
        plant_dt=config.plant_dt,
        adaptation=adaptation,
    )
    x0 = x_ref_fn(0.0) + np.array([0.0, 0.0, config.alpha0, 0.0])
    steps = int(round(config.duration / config.mpc.dt))
    return loop, x0, steps


def run_scenario(config: ScenarioConfig):
    """Run one closed loop; returns (TrajectoryLog, RunMetrics)."""
    loop, x0, steps = build_closed_loop(config)
    log = run_receding_horizon(x0, loop, steps)
    return log, compute_metrics(log, config.mpc.dt)


def compute_metrics(log: TrajectoryLog, dt: float) -> RunMetrics:
    """Error and solver-effort summary of a run."""
    n = len(log)
    if n == 0:
        raise ValueError("cannot compute metrics of an empty log")
    abs_e = np.abs(log.e)
    tail = abs_e[int(math.floor(0.8 * n)):]
    return RunMetrics(
        rmse=float(np.sqrt(np.mean(log.e ** 2))),
        iae=float(np.sum(abs_e) * dt),
        steady_state_error=float(np.mean(tail)),
        mean_solve_time=float(np.mean(log.solve_time)),
        max_solve_time=float(np.max(log.solve_time)),
    )


def export_csv(log: TrajectoryLog, path: str) -> None:
    """Write the log as CSV; floats use shortest round-trip formatting."""
    lines = [CSV_HEADER]
    for i in range(len(log)):
        lines.append(
            ",".join(
                [
                    repr(float(log.t[i])),
                    repr(float(log.states[i, 0])),
                    repr(float(log.states[i, 1])),
                    repr(float(log.states[i, 2])),
                    repr(float(log.states[i, 3])),
                    repr(float(log.u[i])),
                    repr(float(log.y_ref[i])),
                    repr(float(log.e[i])),
                    repr(float(log.V[i])),
                    repr(float(log.w_diag[i])),
                    repr(float(log.predicted_cost[i])),
                    log.solver_status[i],
                    repr(float(log.solve_time[i] * 1e3)),
                ]
            )
        )
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        raise OSError(f"failed writing CSV to {path}: {exc}") from exc


def load_csv(path: str) -> dict:
    """Parse a CSV written by export_csv into named column arrays."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise OSError(f"failed reading CSV from {path}: {exc}") from exc
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header")
    names = CSV_HEADER.split(",")
    columns: dict[str, list] = {name: [] for name in names}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(names):
            raise ValueError(f"{path}: malformed row {line!r}")
        for name, part in zip(names, parts):
            columns[name].append(part if name == "status" else float(part))
    return {
        name: (vals if name == "status" else np.array(vals)) for name, vals in columns.items()
    }


def _metrics_line(name: str, m: RunMetrics) -> str:
    return (
        f"{name:<10} rmse={m.rmse:.6f} rad  iae={m.iae:.6f} rad*s  "
        f"steady_state={m.steady_state_error:.6f} rad  "
        f"solve mean={m.mean_solve_time * 1e3:.3f} ms max={m.max_solve_time * 1e3:.3f} ms"
    )


def compare_report(metrics_classical: RunMetrics, metrics_afmpc: RunMetrics) -> str:
    """Plain-text summary of a paired run, including the steady-state ratio."""
    c = metrics_classical.steady_state_error
    a = metrics_afmpc.steady_state_error
    if c > 0.0:
        ratio = a / c
    else:
        ratio = 1.0 if a == c else float("inf")
    return (
        "\n".join(
            [
                "controller comparison on the shared scenario",
                _metrics_line("classical", metrics_classical),
                _metrics_line("afmpc", metrics_afmpc),
                f"steady-state error ratio (afmpc / classical): {ratio:.6f}",
            ]
        )
        + "\n"
    )


def run_comparison(config: ScenarioConfig):
    """Run both controllers on one scenario.

    Returns (log_classical, metrics_classical, log_afmpc, metrics_afmpc,
    report_text).
    """
    log_c, met_c = run_scenario(replace(config, controller="classical"))
    log_a, met_a = run_scenario(replace(config, controller="afmpc"))
    return log_c, met_c, log_a, met_a, compare_report(met_c, met_a)
