"""Named experiment scenarios, flat configuration, and batch sweeps.

Two protocols are implemented:

- adiabatic: every oscillator is pumped from its initial state for
  ``pump_time`` (two-photon drive + two-photon loss, plus any linear loss),
  then the neighbor coupling is switched on for exactly π/g_c with the pump
  and losses kept on. The pump stage factorizes over modes and is evolved on
  a single-mode space, exactly.
- cyclic: the continuous pump is replaced by discrete windows of a two-mode
  nonlinear interaction against a freshly prepared pump mode (amplitude from
  ``pump_amplitude``, calibrated when "auto"). ``pump_cycles`` windows build
  the amplitude; each of the ``interaction_cycles`` then applies one more
  pump window followed by a lossless coupling segment of phase π divided
  evenly across the cycles. Pump windows act on one oscillator⊗pump pair at
  a time, which reproduces the simultaneous model exactly because the pair
  generators are disjoint.

Configuration is a flat key=value mapping (see SCHEMA). ``axis.<key>``
entries declare sweep axes (comma-separated values); the grid is the
Cartesian product in declaration order. Records per grid point: the
entanglement witness W with its per-site stabilizer expectations, purity,
fidelity to the ideal cluster state, the pump-stage-end fidelity, the
reduced spin-chain fidelity, per-mode photon numbers, and the wall time.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dopo import (
    DopoParams,
    cat_plus_state,
    chain_pairs,
    coherent_ising_h,
    default_timestep,
    fresh_pump_state,
    nonlinear_window_timestep,
    ideal_cluster_state,
    nonlinear_pump_h,
    pump_calibration,
    single_photon_loss,
    steady_amplitude,
    two_photon_loss,
    two_photon_pump_h,
)
from .errors import ConfigError, CostLimitError
from .fock import (
    DensityMatrix,
    ModeLayout,
    expectation,
    fidelity_to_pure,
    number_operator,
    purity,
    tensor,
    vacuum_state,
)
from .lindblad import (
    IntegratorConfig,
    LindbladModel,
    Trajectory,
    cycle_channel,
    evolve,
    stable_timestep,
)
from .modular import (
    ModularCell,
    cluster_witness,
    effective_spin_state,
    modular_pauli,
    optimal_cell_length,
    spin_fidelity,
)

__all__ = [
    "SCHEMA",
    "SCENARIOS",
    "ScenarioConfig",
    "SweepResult",
    "parse_config_text",
    "serialize_config",
    "config_hash",
    "resolve_config",
    "run_protocol",
    "run_sweep",
    "estimate_cost",
]

AUTO = "auto"

# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

# key -> (kind, constraint) with kinds:
#   float / int / bool / str / choice (tuple of valid strings)
#   float_or_auto / int_or_auto accept the literal "auto"
# constraint: predicate name used in _check_value
SCHEMA = {
    "scenario": ("choice", None),  # filled in below once SCENARIOS exists
    "protocol": ("choice", ("adiabatic", "cyclic")),
    "pump_strength": ("float", "nonzero"),
    "two_photon_rate": ("float", "positive"),
    "single_photon_rate": ("float", "nonnegative"),
    "gc_ratio": ("float", "positive"),
    "ising_coupling": ("float_or_auto", "positive"),
    "pump_time": ("float", "nonnegative"),
    "n_modes": ("int", "ge2"),
    "cutoff": ("int", "ge2"),
    "pump_cutoff": ("int", "ge2"),
    "nonlinear_coupling": ("float", "positive"),
    "cycle_time": ("float_or_auto", "positive"),
    "pump_cycles": ("int", "nonnegative"),
    "interaction_cycles": ("int", "ge1"),
    "pump_amplitude": ("float_or_auto", "nonnegative"),
    "cell_length": ("float_or_auto", "positive"),
    "initial_state": ("choice", ("vacuum", "cat-product")),
    "trajectory": ("bool", None),
    "integrator.dt": ("float_or_auto", "positive"),
    "integrator.method": ("choice", ("fixed", "adaptive")),
    "integrator.rel_tol": ("float", "positive"),
    "integrator.abs_tol": ("float", "positive"),
    "integrator.record_every": ("int_or_auto", "ge1"),
    "workers": ("int", "ge1"),
    "out": ("str", None),
}

# keys that may appear as sweep axes (axis.<key> = v1,v2,...)
SWEEPABLE = {
    "pump_strength",
    "two_photon_rate",
    "single_photon_rate",
    "gc_ratio",
    "ising_coupling",
    "pump_time",
    "cutoff",
    "pump_cutoff",
    "nonlinear_coupling",
    "cycle_time",
    "pump_cycles",
    "interaction_cycles",
    "pump_amplitude",
    "cell_length",
    "n_modes",
}

_BASE = {
    "scenario": "custom",
    "protocol": "adiabatic",
    "pump_strength": -1.0,
    "two_photon_rate": 1.0,
    "single_photon_rate": 0.0,
    "gc_ratio": 1.0,
    "ising_coupling": AUTO,
    "pump_time": 3.0,
    "n_modes": 2,
    "cutoff": 20,
    "pump_cutoff": 8,
    "nonlinear_coupling": 15.0,
    "cycle_time": AUTO,
    "pump_cycles": 9,
    "interaction_cycles": 1,
    "pump_amplitude": AUTO,
    "cell_length": AUTO,
    "initial_state": "vacuum",
    "trajectory": False,
    "integrator.dt": AUTO,
    "integrator.method": "fixed",
    "integrator.rel_tol": 1e-8,
    "integrator.abs_tol": 1e-10,
    "integrator.record_every": AUTO,
    "workers": 1,
    "out": "runs",
}


def _lin(a: float, b: float, k: int) -> list:
    return [float(v) for v in np.linspace(a, b, k)]


SCENARIOS = {
    "fig3": {
        "description": "single protocol run with time-resolved fidelity and witness",
        "values": {"gc_ratio": 3.0, "trajectory": True},
    },
    "fig4": {
        "description": "witness and purity against the loss-to-coupling ratio",
        "values": {"axis.gc_ratio": [0.1, 0.5, 1.0, 2.0, 5.0]},
    },
    "fig5": {
        "description": "coupling stage alone from a cat product, swept pump strength",
        "values": {
            "pump_time": 0.0,
            "initial_state": "cat-product",
            "gc_ratio": 1.5,
            "axis.pump_strength": [-0.5, -1.0, -2.0],
        },
    },
    "fig6": {
        "description": "witness map over pump duration and coupling ratio",
        "values": {
            "single_photon_rate": 0.01,
            "cutoff": 14,
            "axis.pump_time": _lin(0.5, 4.0, 15),
            "axis.gc_ratio": _lin(0.25, 5.0, 15),
        },
    },
    "fig7": {
        "description": "witness map over coupling ratio and linear loss",
        "values": {
            "pump_time": 1.6,
            "cutoff": 14,
            "axis.gc_ratio": _lin(0.25, 5.0, 15),
            "axis.single_photon_rate": _lin(0.0, 0.056, 15),
        },
    },
    "fig8": {
        "description": "witness map over linear loss and pump strength",
        "values": {
            "pump_time": 1.5,
            "gc_ratio": 1.5,
            "axis.single_photon_rate": _lin(0.0, 0.056, 9),
            "axis.pump_strength": _lin(-2.0, -0.25, 9),
        },
    },
    "fig9a": {
        "description": "discrete-pump witness against linear loss and coupling cycles",
        "values": {
            "protocol": "cyclic",
            "cutoff": 14,
            "axis.single_photon_rate": [0.0, 0.04, 0.08, 0.12, 0.16, 0.2],
            "axis.interaction_cycles": [1, 2, 3],
        },
    },
    "fig9b": {
        "description": "discrete-pump witness against linear loss and pump cycles",
        "values": {
            "protocol": "cyclic",
            "cutoff": 14,
            "interaction_cycles": 1,
            "axis.single_photon_rate": [0.0, 0.04, 0.08, 0.12, 0.16, 0.2],
            "axis.pump_cycles": [5, 7, 9, 11],
        },
    },
    "custom": {
        "description": "base parameter set; configure everything explicitly",
        "values": {},
    },
}

SCHEMA["scenario"] = ("choice", tuple(SCENARIOS))


# ---------------------------------------------------------------------------
# value parsing / formatting
# ---------------------------------------------------------------------------


def _axis_base(key: str) -> str:
    return key[len("axis.") :]


def _schema_entry(key: str):
    if key.startswith("axis."):
        base = _axis_base(key)
        if base not in SWEEPABLE:
            raise ConfigError(f"'{base}' cannot be swept (axis.{base})")
        kind, constraint = SCHEMA[base]
        return kind, constraint
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    return SCHEMA[key]


def _check_value(key: str, kind: str, constraint, value):
    if kind in ("float_or_auto", "int_or_auto") and value == AUTO:
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
        return value
    if kind == "choice":
        if value not in constraint:
            raise ConfigError(
                f"{key} must be one of {', '.join(constraint)}; got {value!r}"
            )
        return value
    if kind == "str":
        if not isinstance(value, str) or not value:
            raise ConfigError(f"{key} expects a nonempty string")
        return value
    if kind in ("int", "int_or_auto"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        number = value
    else:  # float kinds
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        number = float(value)
        if not math.isfinite(number):
            raise ConfigError(f"{key} must be finite, got {value!r}")
    checks = {
        "positive": lambda v: v > 0,
        "nonnegative": lambda v: v >= 0,
        "nonzero": lambda v: v != 0,
        "ge1": lambda v: v >= 1,
        "ge2": lambda v: v >= 2,
        None: lambda v: True,
    }
    if not checks[constraint](number):
        raise ConfigError(f"{key} = {value!r} violates the constraint '{constraint}'")
    return number


def _parse_scalar(key: str, kind: str, constraint, text: str):
    text = text.strip()
    if kind in ("float_or_auto", "int_or_auto") and text == AUTO:
        return AUTO
    if kind == "bool":
        if text not in ("true", "false"):
            raise ConfigError(f"{key} expects true/false, got {text!r}")
        return text == "true"
    if kind in ("choice", "str"):
        return _check_value(key, kind, constraint, text)
    try:
        value = int(text) if kind in ("int", "int_or_auto") else float(text)
    except ValueError:
        raise ConfigError(f"{key} expects a {kind.split('_')[0]}, got {text!r}") from None
    return _check_value(key, kind, constraint, value)


def parse_value(key: str, text: str):
    """Parse one raw config value for the given (possibly axis.) key."""
    kind, constraint = _schema_entry(key)
    if key.startswith("axis."):
        text = text.strip()
        if text == "":
            return []
        scalar_kind = kind.replace("_or_auto", "")
        return [
            _parse_scalar(key, scalar_kind, constraint, part)
            for part in text.split(",")
        ]
    return _parse_scalar(key, kind, constraint, text)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines (# comments and blank lines ignored).
    Axis keys keep their file order; duplicates are rejected."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, val)
    return values


def serialize_config(values: dict) -> str:
    """Canonical flat serialization: plain keys sorted, axis keys in their
    declaration order (the order defines the sweep grid)."""
    plain = sorted(k for k in values if not k.startswith("axis."))
    axes = [k for k in values if k.startswith("axis.")]
    lines = [f"{k} = {format_value(values[k])}" for k in plain + axes]
    return "\n".join(lines) + "\n"


def config_hash(values: dict) -> str:
    """Stable 16-hex-digit digest of the physics configuration (output path
    and worker count excluded)."""
    hashed = {k: v for k, v in values.items() if k not in ("out", "workers")}
    return hashlib.sha256(serialize_config(hashed).encode("utf-8")).hexdigest()[:16]


@dataclass
class ScenarioConfig:
    """A fully resolved flat configuration for one scenario."""

    name: str
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def hash(self) -> str:
        return config_hash(self.values)

    def axes(self) -> dict:
        """Sweep axes in declaration order: {key: [values...]}."""
        return {
            _axis_base(k): list(v)
            for k, v in self.values.items()
            if k.startswith("axis.")
        }

    def point_values(self, overrides: dict | None = None) -> dict:
        vals = {k: v for k, v in self.values.items() if not k.startswith("axis.")}
        if overrides:
            vals.update(overrides)
        return vals


def resolve_config(
    scenario: str | None = None,
    file_values: dict | None = None,
    overrides: dict | None = None,
) -> ScenarioConfig:
    """Merge base defaults ← scenario defaults ← config-file values ← explicit
    overrides. The scenario may come from the argument or the file; if both
    are present they must agree."""
    file_values = dict(file_values or {})
    overrides = dict(overrides or {})
    file_scenario = file_values.get("scenario")
    if "scenario" in overrides:
        raise ConfigError("set the scenario positionally or in the config file")
    if scenario is not None and file_scenario is not None and scenario != file_scenario:
        raise ConfigError(
            f"scenario mismatch: {scenario!r} on the command line vs "
            f"{file_scenario!r} in the config file"
        )
    name = scenario or file_scenario or "custom"
    if name not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}"
        )
    values = dict(_BASE)
    values["scenario"] = name
    values.update(SCENARIOS[name]["values"])
    file_values.pop("scenario", None)
    values.update(file_values)
    values.update(overrides)
    for key, value in values.items():
        kind, constraint = _schema_entry(key)
        if key.startswith("axis."):
            if not isinstance(value, list):
                raise ConfigError(f"{key} expects a list of values")
            scalar_kind = kind.replace("_or_auto", "")
            values[key] = [
                _check_value(key, scalar_kind, constraint, v) for v in value
            ]
        else:
            values[key] = _check_value(key, kind, constraint, value)
    return ScenarioConfig(name, values)


# ---------------------------------------------------------------------------
# shared resolution helpers
# ---------------------------------------------------------------------------


def _resolved_coupling(values: dict) -> float:
    if values["ising_coupling"] != AUTO:
        return float(values["ising_coupling"])
    return float(values["two_photon_rate"]) / float(values["gc_ratio"])


def _resolved_cycle_time(values: dict) -> float:
    if values["cycle_time"] != AUTO:
        return float(values["cycle_time"])
    return 0.5 / float(values["nonlinear_coupling"])


def _target_amplitude(values: dict) -> float:
    return abs(steady_amplitude(values["pump_strength"], values["two_photon_rate"]))


def _resolved_cell(values: dict) -> ModularCell:
    if values["cell_length"] != AUTO:
        return ModularCell(float(values["cell_length"]))
    return ModularCell(optimal_cell_length(_target_amplitude(values)))


def _user_dt(values: dict) -> float | None:
    return None if values["integrator.dt"] == AUTO else float(values["integrator.dt"])


_IDEAL_SPIN_CACHE: dict = {}
_CALIBRATION_CACHE: dict = {}
_BIG_PAIR_CACHE: dict = {}


def _ideal_spin(n_modes: int, cutoff: int, amplitude: float, cell: ModularCell):
    key = (n_modes, cutoff, round(amplitude, 12), round(cell.length, 12))
    hit = _IDEAL_SPIN_CACHE.get(key)
    if hit is None:
        layout = ModeLayout.of(*([cutoff] * n_modes))
        ideal = ideal_cluster_state(layout, amplitude)
        hit = effective_spin_state(ideal.density(), cell)
        _IDEAL_SPIN_CACHE[key] = hit
    return hit


def _calibrated_pump(values: dict) -> float:
    """Pump magnitude for the cyclic protocol: explicit value or the cached
    lossless calibration at the target amplitude."""
    if values["pump_amplitude"] != AUTO:
        return float(values["pump_amplitude"])
    target = _target_amplitude(values)
    g_nl = float(values["nonlinear_coupling"])
    t_nl = _resolved_cycle_time(values)
    key = (round(target, 12), g_nl, round(t_nl, 15))
    hit = _CALIBRATION_CACHE.get(key)
    if hit is None:
        amp, _ = pump_calibration(target, g_nl, 0.0, t_nl)
        hit = abs(amp)
        _CALIBRATION_CACHE[key] = hit
    return hit


def _final_records(
    final: DensityMatrix,
    ideal,
    cell: ModularCell,
    ideal_spin,
) -> dict:
    w, sites = cluster_witness(final, cell)
    spin = effective_spin_state(final, cell)
    rec = {"W": w}
    for i, value in enumerate(sites):
        rec[f"site_{i}"] = value
    rec["purity"] = purity(final)
    rec["fidelity_to_ideal"] = fidelity_to_pure(final, ideal)
    rec["reduced_fidelity"] = spin_fidelity(spin, ideal_spin)
    for m in range(final.layout.n_modes):
        rec[f"n_mode_{m}"] = expectation(
            final, number_operator(final.layout, m)
        ).real
    return rec


# ---------------------------------------------------------------------------
# adiabatic protocol
# ---------------------------------------------------------------------------


def _site_word_operators(layout: ModeLayout, cell: ModularCell):
    """Mode-space stabilizer word operators z_{n−1} x_n z_{n+1} per site."""
    n = layout.n_modes
    ops = []
    for site in range(n):
        word = modular_pauli(layout, site, "x", cell)
        if site - 1 >= 0:
            word = word @ modular_pauli(layout, site - 1, "z", cell)
        if site + 1 < n:
            word = word @ modular_pauli(layout, site + 1, "z", cell)
        ops.append(word)
    return ops


def _run_adiabatic(values: dict) -> dict:
    start = time.perf_counter()
    n = int(values["n_modes"])
    cutoff = int(values["cutoff"])
    s = float(values["pump_strength"])
    gd = float(values["two_photon_rate"])
    gs = float(values["single_photon_rate"])
    g_c = _resolved_coupling(values)
    pump_time = float(values["pump_time"])
    amplitude = _target_amplitude(values)
    cell = _resolved_cell(values)
    want_trajectory = bool(values["trajectory"])
    dt_user = _user_dt(values)

    single = ModeLayout.of(cutoff)
    joint = ModeLayout.of(*([cutoff] * n))
    ideal = ideal_cluster_state(joint, amplitude)
    ideal_spin = _ideal_spin(n, cutoff, amplitude, cell)
    params = DopoParams(
        pump_strength=s,
        two_photon_rate=gd,
        single_photon_rate=gs,
        ising_coupling=g_c,
        n_modes=n,
    )
    rule_dt = default_timestep(params)
    adaptive = values["integrator.method"] == "adaptive"

    def _config(dt: float, record_every: int) -> IntegratorConfig:
        return IntegratorConfig(
            dt=dt,
            method="adaptive" if adaptive else "fixed",
            rel_tol=float(values["integrator.rel_tol"]),
            abs_tol=float(values["integrator.abs_tol"]),
            record_every=record_every,
        )

    # --- stage 1: independent oscillators (exact product evolution)
    if values["initial_state"] == "cat-product":
        mode_state = cat_plus_state(single, 0, amplitude).density()
    else:
        mode_state = vacuum_state(single).density()

    model_1 = LindbladModel(
        single,
        two_photon_pump_h(single, s),
        two_photon_loss(single, gd) + single_photon_loss(single, gs),
    )
    dt_1 = dt_user if dt_user is not None else stable_timestep(model_1, rule_dt)

    traj_times: list = []
    traj_records: dict = {}

    def _traj_init(names):
        for name in names:
            traj_records[name] = []

    psi = ideal.amplitudes
    word_ops = _site_word_operators(joint, cell) if want_trajectory else None
    n_single = number_operator(single, 0)

    def _record_product(t: float, rho_mode: DensityMatrix) -> None:
        mat = rho_mode.matrix
        joint_mat = mat
        for _ in range(n - 1):
            joint_mat = np.kron(joint_mat, mat)
        traj_times.append(t)
        traj_records["fidelity_to_ideal"].append(
            float(np.vdot(psi, joint_mat @ psi).real)
        )
        sites = [
            float(np.einsum("ij,ji->", joint_mat, op.matrix).real) for op in word_ops
        ]
        for i, val in enumerate(sites):
            traj_records[f"site_{i}"].append(val)
        traj_records["W"].append(float(sum(v * v for v in sites)))
        n_val = expectation(rho_mode, n_single).real
        for m in range(n):
            traj_records[f"n_mode_{m}"].append(n_val)

    if want_trajectory:
        names = (
            ["fidelity_to_ideal", "W"]
            + [f"site_{i}" for i in range(n)]
            + [f"n_mode_{m}" for m in range(n)]
        )
        _traj_init(names)

    if pump_time > 0:
        if want_trajectory:
            segments = 80
            seg = pump_time / segments
            _record_product(0.0, mode_state)
            for k in range(segments):
                mode_state = evolve(
                    model_1, mode_state, seg, _config(dt_1, 10**9)
                ).final_state
                _record_product((k + 1) * seg, mode_state)
        else:
            mode_state = evolve(
                model_1, mode_state, pump_time, _config(dt_1, 10**9)
            ).final_state
    elif want_trajectory:
        _record_product(0.0, mode_state)

    joint_rho = tensor([mode_state] * n)
    fidelity_pump_end = fidelity_to_pure(joint_rho, ideal)

    # --- stage 2: coupled chain for exactly π/g_c, pump and losses kept on
    h_2 = two_photon_pump_h(joint, s) + coherent_ising_h(joint, amplitude, g_c)
    model_2 = LindbladModel(
        joint,
        h_2,
        two_photon_loss(joint, gd) + single_photon_loss(joint, gs),
    )
    dt_2 = dt_user if dt_user is not None else stable_timestep(model_2, rule_dt)
    duration = math.pi / g_c

    trajectory = None
    if want_trajectory:
        steps = max(1, int(math.ceil(duration / dt_2)))
        record_every = values["integrator.record_every"]
        if record_every == AUTO:
            record_every = max(1, round(steps / 160))
        observables = {"fidelity_to_ideal": _projector_operator(joint, psi)}
        for i, op in enumerate(word_ops):
            observables[f"site_{i}"] = op
        for m in range(n):
            observables[f"n_mode_{m}"] = number_operator(joint, m)
        stage = evolve(
            model_2,
            joint_rho,
            duration,
            _config(dt_2, int(record_every)),
            observables=observables,
        )
        final = stage.final_state
        for idx in range(1, stage.times.size):
            traj_times.append(pump_time + float(stage.times[idx]))
            sites = []
            for i in range(n):
                val = float(np.real(stage.records[f"site_{i}"][idx]))
                traj_records[f"site_{i}"].append(val)
                sites.append(val)
            traj_records["W"].append(float(sum(v * v for v in sites)))
            traj_records["fidelity_to_ideal"].append(
                float(np.real(stage.records["fidelity_to_ideal"][idx]))
            )
            for m in range(n):
                traj_records[f"n_mode_{m}"].append(
                    float(np.real(stage.records[f"n_mode_{m}"][idx]))
                )
        trajectory = Trajectory(
            np.asarray(traj_times, dtype=float),
            {k: np.asarray(v, dtype=float) for k, v in traj_records.items()},
            final,
        )
    else:
        record_every = values["integrator.record_every"]
        if record_every == AUTO:
            record_every = 10**9
        final = evolve(
            model_2, joint_rho, duration, _config(dt_2, int(record_every))
        ).final_state

    point = _final_records(final, ideal, cell, ideal_spin)
    point["fidelity_pump_end"] = fidelity_pump_end
    point["wall_time"] = time.perf_counter() - start
    if trajectory is not None:
        point["trajectory"] = trajectory
    return point


def _projector_operator(layout: ModeLayout, psi: np.ndarray):
    from .fock import QOperator

    return QOperator(layout, np.outer(psi, psi.conj()))


# ---------------------------------------------------------------------------
# cyclic protocol
# ---------------------------------------------------------------------------


def _big_pair_model(
    n: int, cutoff: int, pump_cutoff: int, mode: int, g_nl: float, gs: float
):
    """Pump-window model on (all oscillators) ⊗ pump for one oscillator's
    window, with its dt; cached (these live at the largest dimension)."""
    key = (n, cutoff, pump_cutoff, mode, g_nl, gs)
    hit = _BIG_PAIR_CACHE.get(key)
    if hit is None:
        layout = ModeLayout.of(*([cutoff] * n + [pump_cutoff]))
        h = nonlinear_pump_h(layout, g_nl, signal_mode=mode, pump_mode=n)
        dissipators = single_photon_loss(layout, gs, modes=(mode, n))
        model = LindbladModel(layout, h, dissipators)
        dt = nonlinear_window_timestep(model, g_nl)
        hit = (model, dt)
        _BIG_PAIR_CACHE[key] = hit
    return hit


def _run_cyclic(values: dict) -> dict:
    start = time.perf_counter()
    n = int(values["n_modes"])
    cutoff = int(values["cutoff"])
    pump_cutoff = int(values["pump_cutoff"])
    gs = float(values["single_photon_rate"])
    g_nl = float(values["nonlinear_coupling"])
    t_nl = _resolved_cycle_time(values)
    n_pump = int(values["pump_cycles"])
    n_int = int(values["interaction_cycles"])
    amplitude = _target_amplitude(values)
    cell = _resolved_cell(values)
    pump_mag = _calibrated_pump(values)
    dt_user = _user_dt(values)

    single = ModeLayout.of(cutoff)
    pair = ModeLayout.of(cutoff, pump_cutoff)
    joint = ModeLayout.of(*([cutoff] * n))
    ideal = ideal_cluster_state(joint, amplitude)
    ideal_spin = _ideal_spin(n, cutoff, amplitude, cell)

    h_pair = nonlinear_pump_h(pair, g_nl, 0, 1)
    model_pair = LindbladModel(pair, h_pair, single_photon_loss(pair, gs))
    dt_pair = dt_user if dt_user is not None else nonlinear_window_timestep(model_pair, g_nl)
    cfg_pair = IntegratorConfig(dt=dt_pair, record_every=10**9)
    fresh = fresh_pump_state(pump_cutoff, 1j * pump_mag)

    h_unit = coherent_ising_h(joint, amplitude, 1.0)
    model_phase = LindbladModel(joint, h_unit, ())
    dt_phase = dt_user if dt_user is not None else stable_timestep(model_phase, 5e-2)
    cfg_phase = IntegratorConfig(dt=dt_phase, record_every=10**9)
    segment = math.pi / n_int

    # pump stage: the register stays an identical product, evolve one factor
    mode_state = vacuum_state(single).density()
    for _ in range(n_pump):
        mode_state = cycle_channel(
            mode_state, fresh, model_pair, t_nl, keep=(0,), config=cfg_pair
        )
    fidelity_pump_end = fidelity_to_pure(tensor([mode_state] * n), ideal)

    register = None  # None while still product
    for cycle in range(n_int):
        if register is None:
            mode_state = cycle_channel(
                mode_state, fresh, model_pair, t_nl, keep=(0,), config=cfg_pair
            )
            register = tensor([mode_state] * n)
        else:
            for mode in range(n):
                model_big, dt_big = _big_pair_model(
                    n, cutoff, pump_cutoff, mode, g_nl, gs
                )
                register = cycle_channel(
                    register,
                    fresh,
                    model_big,
                    t_nl,
                    keep=tuple(range(n)),
                    config=IntegratorConfig(
                        dt=dt_user if dt_user is not None else dt_big,
                        record_every=10**9,
                    ),
                )
        register = evolve(model_phase, register, segment, cfg_phase).final_state

    point = _final_records(register, ideal, cell, ideal_spin)
    point["fidelity_pump_end"] = fidelity_pump_end
    point["wall_time"] = time.perf_counter() - start
    return point


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def run_protocol(config) -> dict:
    """Run one protocol point. Accepts a ScenarioConfig or a plain values
    dict (axis entries are rejected — sweep via run_sweep). The returned
    record dict carries the configuration hash."""
    if isinstance(config, ScenarioConfig):
        values = config.point_values()
        if config.axes():
            raise ConfigError("run_protocol takes a single point; use run_sweep")
        digest = config.hash
    else:
        values = dict(_BASE)
        values.update(config)
        if any(k.startswith("axis.") for k in values):
            raise ConfigError("run_protocol takes a single point; use run_sweep")
        for key, value in values.items():
            kind, constraint = _schema_entry(key)
            values[key] = _check_value(key, kind, constraint, value)
        digest = config_hash(values)
    if values["protocol"] == "cyclic":
        point = _run_cyclic(values)
    else:
        point = _run_adiabatic(values)
    point["config_hash"] = digest
    return point


def _pool_point(args) -> dict:
    values, digest = args
    if values["protocol"] == "cyclic":
        point = _run_cyclic(values)
    else:
        point = _run_adiabatic(values)
    point["config_hash"] = digest
    return point


@dataclass
class SweepResult:
    """All grid points of one sweep, in Cartesian-product order."""

    scenario: str
    axis_names: list
    axis_values: list  # one tuple per point, aligned with points
    points: list
    config: ScenarioConfig
    config_hash: str
    wall_time: float
    trajectory: Trajectory | None = None
    resolved_notes: dict = field(default_factory=dict)


def estimate_cost(config: ScenarioConfig) -> tuple[int, float]:
    """(grid points, estimated cost) with cost = Σ over points and stages of
    dim³ × planned steps, using the accuracy-rule timestep (the stability
    cap can only shrink dt, so this is a lower bound)."""
    axes = config.axes()
    grids = _grid(axes)
    total = 0.0
    for overrides in grids:
        values = config.point_values(overrides)
        n = int(values["n_modes"])
        cutoff = int(values["cutoff"])
        if values["protocol"] == "cyclic":
            pump_cutoff = int(values["pump_cutoff"])
            g_nl = float(values["nonlinear_coupling"])
            t_nl = _resolved_cycle_time(values)
            steps_cycle = math.ceil(t_nl / (5e-2 / g_nl / 8.0))
            n_pump = int(values["pump_cycles"]) + 1
            n_int = int(values["interaction_cycles"])
            small = (cutoff * pump_cutoff) ** 3
            big = (cutoff**n * pump_cutoff) ** 3
            phase_steps = math.ceil((math.pi / n_int) / 5e-2)
            total += n_pump * steps_cycle * small
            total += max(0, n_int - 1) * n * steps_cycle * big
            total += n_int * phase_steps * (cutoff**n) ** 3
        else:
            params = DopoParams(
                pump_strength=float(values["pump_strength"]),
                two_photon_rate=float(values["two_photon_rate"]),
                single_photon_rate=float(values["single_photon_rate"]),
                ising_coupling=_resolved_coupling(values),
                n_modes=n,
            )
            dt = (
                _user_dt(values)
                if _user_dt(values) is not None
                else default_timestep(params)
            )
            pump_steps = math.ceil(float(values["pump_time"]) / dt) * cutoff**3
            g_c = _resolved_coupling(values)
            int_steps = math.ceil((math.pi / g_c) / dt) * (cutoff**n) ** 3
            total += pump_steps + int_steps
    return len(grids), total


def _grid(axes: dict) -> list:
    from itertools import product as iter_product

    names = list(axes)
    combos = []
    for combo in iter_product(*(axes[name] for name in names)):
        combos.append({name: value for name, value in zip(names, combo)})
    return combos


def run_sweep(config, max_cost: float | None = None, quiet: bool = False) -> SweepResult:
    """Run every grid point of the configured sweep.

    Prints the cost estimate (points × dim³ × steps) before running; aborts
    with a cost-limit error when max_cost is exceeded. Results are gathered
    in Cartesian-product order regardless of the worker count.
    """
    if not isinstance(config, ScenarioConfig):
        config = resolve_config(overrides=config)
    start = time.perf_counter()
    axes = config.axes()
    names = list(axes)
    grids = _grid(axes)
    n_points, cost = estimate_cost(config)
    if not quiet:
        print(
            f"[{config.name}] {n_points} grid point(s), "
            f"estimated cost {cost:.3e} (dim^3 x steps)"
        )
    if max_cost is not None and cost > max_cost:
        raise CostLimitError(
            f"estimated cost {cost:.3e} exceeds the --max-cost limit {max_cost:.3e}"
        )

    digest = config.hash
    notes: dict = {}
    base_extra: dict = {}
    if config["protocol"] == "cyclic" and config.values.get("pump_amplitude") == AUTO:
        calibration_static = not any(
            name
            in ("nonlinear_coupling", "cycle_time", "pump_strength", "two_photon_rate")
            for name in names
        )
        if calibration_static:
            mag = _calibrated_pump(config.point_values())
            base_extra["pump_amplitude"] = mag
            notes["pump_amplitude"] = mag

    tasks = []
    for overrides in grids:
        values = config.point_values({**base_extra, **overrides})
        tasks.append((values, digest))

    workers = int(config["workers"])
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_pool_point, tasks))
    else:
        points = [_pool_point(task) for task in tasks]

    trajectory = None
    if points and "trajectory" in points[0]:
        trajectory = points[0].pop("trajectory") if len(points) == 1 else None
        for point in points:
            point.pop("trajectory", None)

    return SweepResult(
        scenario=config.name,
        axis_names=names,
        axis_values=[tuple(g[name] for name in names) for g in grids],
        points=points,
        config=config,
        config_hash=digest,
        wall_time=time.perf_counter() - start,
        trajectory=trajectory,
        resolved_notes=notes,
    )
