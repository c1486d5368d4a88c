"""TOML experiment configuration: strict parsing, defaults and serialization.

Schema (``*`` marks required keys)::

    [problem]
    generator = "markowitz"            # * or "constrained_qp"
    probs = [0.5, 0.5]                 # * one positive weight per atom, sum 1
    # markowitz
    atoms = [[1.0, 0.0], [0.0, 2.0]]   # * return vectors
    c = 0.75                           # * target expected return
    # constrained_qp
    Q = [...]                          # * one d x d PSD matrix per atom
    b = [...]                          # * one d-vector per atom
    L = [...]                          # * one k x d matrix (or d-row) per atom
    c = [...]                          # * one k-vector (or scalar) per atom
    [problem.primal_set]               # * prox descriptor, e.g. kind = "box"
    kind = "box"
    lo = [-1.0, -1.0, -1.0]
    hi = [1.0, 1.0, 1.0]

    [schedule]                         # gamma_n = gamma0 * (n + offset)^(-exponent)
    gamma0 = 0.5
    exponent = 0.75
    offset = 0

    [run]
    n_iters = 200000                   # *
    seeds = [0, 1, 2]                  # *
    record_every = 1000
    output = "runs/markowitz"
    initial_x = [0.5, 0.5]             # optional, default: feasible projection of 0
    initial_lambda = [0.0]             # optional, default: 0

    [oracle]
    enabled = true                     # grid-search saddle point for dist_to_oracle
    grid_resolution = 0.001
    dual_box = [-10.0, 10.0]
    primal_box = [-10.0, 10.0]
    gamma_ref = 1.0
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .core import PrimalDualPoint, StepSchedule, validate_schedule
from .problem import PROB_TOL, ProblemError, problem_from_spec
from .prox import from_dict

GENERATORS = ("markowitz", "constrained_qp")

_PROBLEM_KEYS = {
    "markowitz": ({"generator", "atoms", "probs", "c"}, set()),
    "constrained_qp": ({"generator", "Q", "b", "L", "c", "probs", "primal_set"}, set()),
}
_SECTIONS = {"problem", "schedule", "run", "oracle"}
_SCHEDULE_KEYS = {"gamma0", "exponent", "offset"}
_RUN_REQUIRED = {"n_iters", "seeds"}
_RUN_KEYS = _RUN_REQUIRED | {"record_every", "output", "initial_x", "initial_lambda"}
_ORACLE_KEYS = {"enabled", "grid_resolution", "dual_box", "primal_box", "gamma_ref"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key and line."""


@dataclass(frozen=True)
class OracleOptions:
    enabled: bool = True
    grid_resolution: float = 1e-3
    dual_box: tuple[float, float] = (-10.0, 10.0)
    primal_box: tuple[float, float] = (-10.0, 10.0)
    gamma_ref: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    schedule: StepSchedule
    n_iters: int
    seeds: tuple[int, ...]
    record_every: int = 1000
    output: Path = Path("runs")
    initial_x: tuple[float, ...] | None = None
    initial_lambda: tuple[float, ...] | None = None
    oracle: OracleOptions = field(default_factory=OracleOptions)

    def build_problem(self):
        return problem_from_spec(self.problem)

    def initial_point(self, d: int, k: int) -> PrimalDualPoint | None:
        if self.initial_x is None and self.initial_lambda is None:
            return None
        if self.initial_x is None:
            raise ConfigError("run.initial_lambda given without run.initial_x")
        lam = np.zeros(k) if self.initial_lambda is None else self.initial_lambda
        return PrimalDualPoint(self.initial_x, lam)


def _line_of(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
    match = pattern.search(text)
    return None if match is None else text.count("\n", 0, match.start()) + 1


def _fail(text, section, key, message):
    line = _line_of(text, key) if key else None
    where = f"[{section}] {key}" if key else f"[{section}]"
    at = f" (line {line})" if line else ""
    raise ConfigError(f"{where}{at}: {message}")


def _check_keys(text, section, table, allowed, required):
    for key in table:
        if key not in allowed:
            _fail(text, section, key, f"unknown key {key!r}")
    for key in sorted(required - set(table)):
        _fail(text, section, None, f"missing required key {key!r}")


def _number(text, section, key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(text, section, key, f"expected a number, got {value!r}")
    if kind is int and int(value) != value:
        _fail(text, section, key, f"expected an integer, got {value!r}")
    return kind(value)


def _pair(text, section, key, value):
    if not isinstance(value, list) or len(value) != 2:
        _fail(text, section, key, "expected a two-element list [lo, hi]")
    lo, hi = (_number(text, section, key, v) for v in value)
    if not lo < hi:
        _fail(text, section, key, "expected lo < hi")
    return (lo, hi)


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse TOML text into an :class:`ExperimentConfig`.

    Parsing is strict: unknown sections or keys, missing required keys, and
    invalid values raise :class:`ConfigError`. A relative ``run.output`` is
    resolved against ``base_dir`` when given.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None

    for section in data:
        if section not in _SECTIONS:
            _fail(text, section, None, f"unknown section {section!r}")
    for section in ("problem", "run"):
        if section not in data:
            raise ConfigError(f"missing required section [{section}]")

    problem = dict(data["problem"])
    generator = problem.get("generator")
    if generator not in GENERATORS:
        _fail(text, "problem", "generator", f"generator must be one of {', '.join(GENERATORS)}, got {generator!r}")
    required, optional = _PROBLEM_KEYS[generator]
    _check_keys(text, "problem", problem, required | optional, required)

    probs = problem["probs"]
    if not isinstance(probs, list) or not probs:
        _fail(text, "problem", "probs", "expected a non-empty list")
    probs = [_number(text, "problem", "probs", p) for p in probs]
    if any(p <= 0 for p in probs):
        _fail(text, "problem", "probs", "probabilities must be positive")
    if abs(sum(probs) - 1.0) > PROB_TOL:
        _fail(text, "problem", "probs", "probabilities must sum to 1")

    if generator == "constrained_qp" and not isinstance(problem["primal_set"], dict):
        _fail(text, "problem", "primal_set", "expected a table with a 'kind' key")
    try:
        if generator == "constrained_qp":
            problem["primal_set"] = from_dict(problem["primal_set"]).to_dict()
        problem_from_spec(problem)
    except (ProblemError, ValueError, KeyError, TypeError) as exc:
        _fail(text, "problem", None, str(exc))

    sched_table = data.get("schedule", {})
    _check_keys(text, "schedule", sched_table, _SCHEDULE_KEYS, set())
    defaults = StepSchedule()
    schedule = StepSchedule(
        gamma0=_number(text, "schedule", "gamma0", sched_table.get("gamma0", defaults.gamma0)),
        exponent=_number(text, "schedule", "exponent", sched_table.get("exponent", defaults.exponent)),
        offset=_number(text, "schedule", "offset", sched_table.get("offset", defaults.offset), int),
    )
    violation = validate_schedule(schedule)
    if violation:
        _fail(text, "schedule", None, violation)

    run = data["run"]
    _check_keys(text, "run", run, _RUN_KEYS, _RUN_REQUIRED)
    n_iters = _number(text, "run", "n_iters", run["n_iters"], int)
    if n_iters < 1:
        _fail(text, "run", "n_iters", "must be >= 1")
    seeds = run["seeds"]
    if not isinstance(seeds, list) or not seeds:
        _fail(text, "run", "seeds", "expected a non-empty list of integers")
    seeds = tuple(_number(text, "run", "seeds", s, int) for s in seeds)
    if len(set(seeds)) != len(seeds):
        _fail(text, "run", "seeds", "seeds must be distinct")
    if any(not 0 <= s < 2**64 for s in seeds):
        _fail(text, "run", "seeds", "seeds must be 64-bit unsigned integers")
    record_every = _number(text, "run", "record_every", run.get("record_every", min(1000, n_iters)), int)
    if not 1 <= record_every <= n_iters:
        _fail(text, "run", "record_every", "must satisfy 1 <= record_every <= n_iters")
    output = Path(run.get("output", "runs"))
    if base_dir is not None and not output.is_absolute():
        output = Path(base_dir) / output
    initial_x = run.get("initial_x")
    initial_lambda = run.get("initial_lambda")
    if initial_x is not None:
        initial_x = tuple(_number(text, "run", "initial_x", v) for v in initial_x)
    if initial_lambda is not None:
        initial_lambda = tuple(_number(text, "run", "initial_lambda", v) for v in initial_lambda)

    oracle_table = data.get("oracle", {})
    _check_keys(text, "oracle", oracle_table, _ORACLE_KEYS, set())
    base = OracleOptions()
    enabled = oracle_table.get("enabled", base.enabled)
    if not isinstance(enabled, bool):
        _fail(text, "oracle", "enabled", "expected true or false")
    oracle = OracleOptions(
        enabled=enabled,
        grid_resolution=_number(text, "oracle", "grid_resolution",
                                oracle_table.get("grid_resolution", base.grid_resolution)),
        dual_box=_pair(text, "oracle", "dual_box", list(oracle_table.get("dual_box", base.dual_box))),
        primal_box=_pair(text, "oracle", "primal_box", list(oracle_table.get("primal_box", base.primal_box))),
        gamma_ref=_number(text, "oracle", "gamma_ref", oracle_table.get("gamma_ref", base.gamma_ref)),
    )
    if not oracle.grid_resolution > 0:
        _fail(text, "oracle", "grid_resolution", "must be positive")
    if not oracle.gamma_ref > 0:
        _fail(text, "oracle", "gamma_ref", "must be positive")

    problem["probs"] = probs
    config = ExperimentConfig(
        problem=problem,
        schedule=schedule,
        n_iters=n_iters,
        seeds=seeds,
        record_every=record_every,
        output=output,
        initial_x=initial_x,
        initial_lambda=initial_lambda,
        oracle=oracle,
    )
    stoch, _ = config.build_problem()
    try:
        start = config.initial_point(stoch.d, stoch.k)
    except ValueError as exc:
        _fail(text, "run", "initial_x", str(exc))
    if start is not None and (start.d != stoch.d or start.k != stoch.k):
        _fail(text, "run", "initial_x", f"initial point must have dimensions ({stoch.d}, {stoch.k})")
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"))


def dump_config(config: ExperimentConfig) -> str:
    """Serialize a config back to TOML; ``parse_config`` round-trips it."""
    run = {
        "n_iters": config.n_iters,
        "seeds": list(config.seeds),
        "record_every": config.record_every,
        "output": config.output.as_posix(),
    }
    if config.initial_x is not None:
        run["initial_x"] = list(config.initial_x)
    if config.initial_lambda is not None:
        run["initial_lambda"] = list(config.initial_lambda)
    doc = {
        "problem": problem_to_table(config.problem),
        "schedule": {
            "gamma0": config.schedule.gamma0,
            "exponent": config.schedule.exponent,
            "offset": config.schedule.offset,
        },
        "run": run,
        "oracle": {
            "enabled": config.oracle.enabled,
            "grid_resolution": config.oracle.grid_resolution,
            "dual_box": list(config.oracle.dual_box),
            "primal_box": list(config.oracle.primal_box),
            "gamma_ref": config.oracle.gamma_ref,
        },
    }
    return tomli_w.dumps(doc)


def problem_to_table(spec: dict) -> dict:
    """TOML-ready copy of a generator spec (``None`` entries dropped)."""
    table = {}
    for key, value in spec.items():
        if isinstance(value, dict):
            value = {k: v for k, v in value.items() if v is not None}
        table[key] = value
    return table


def problem_to_toml(spec: dict) -> str:
    return tomli_w.dumps({"problem": problem_to_table(spec)})


def problem_from_toml(text: str):
    """Inverse of :func:`problem_to_toml`: returns ``(stochastic, deterministic)``."""
    data = tomllib.loads(text)
    spec = dict(data["problem"])
    return problem_from_spec(spec)
