"""Command-line batch runner.

Configs are flat ``key = value`` documents (``#`` starts a comment). Unknown
keys are rejected. Frequencies are in units of the effective coupling ``g``
unless ``units = GHz``, in which case every frequency key is read in GHz
(divided by 2 pi) and converted with ``g_ghz`` (default 0.15).

Output is CSV preceded by a metadata block. Lines beginning with ``# `` hold
the fully resolved config in the same ``key = value`` syntax, so the block
can be fed back to :func:`parse_config`; lines beginning with ``## `` are
informational.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .model import SystemParams
from .protocols import max_entangled_target, mdes_target, noon_target
from .scenarios import SCENARIOS, ResultTable
from .synthesis import TargetState

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "format_config", "run_scenario",
           "write_table", "read_metadata", "main"]

log = logging.getLogger("nvesynth")

FREQUENCY_KEYS = ("g_c", "g_m", "Omega", "Delta", "omega_b1", "omega_b2", "g1", "g2", "Omega_s",
                  "delta1", "delta2", "lam", "kappa", "gamma")
PARAM_KEYS = tuple(f.name for f in fields(SystemParams) if f.name not in ("Delta_T", "Delta_m", "Delta_d", "relax_detunings"))
DEFAULT_G_GHZ = 0.15

# per-scenario defaults for keys the user did not set
SCENARIO_PARAM_DEFAULTS = {
    "ecs": {"g1": 1.0, "g2": 1.0, "delta1": 10.0, "delta2": 10.0, "Omega_s": 100.0},
}
SCENARIO_OPTION_DEFAULTS = {
    "fig2": {"t_max": 3 * math.pi, "points": 301},
    # smallest cavity truncation at which the benchmark fidelity is converged to 1e-6
    "fig4a": {"cavity_dim": 4},
    "fig4b": {"cavity_dim": 4},
    "fig5": {"cavity_dim": 4},
    "ecs": {"points": 101},
}


class ConfigError(ValueError):
    """Invalid configuration document or flag."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved run description.

    Attributes
    ----------
    scenario : str
    params : SystemParams
    sweep : (name, min, max, count) or None
        None selects the scenario's default sweep, unless ``fixed`` is set, in
        which case a single point at ``params`` is evaluated.
    target : str or None
        ``vacuum``, ``uniform N1 N2``, ``random N1 N2``, ``noon N``, ``mdes N``,
        ``max N`` or explicit ``n1 n2 re im; ...`` (normalized on use).
    output_path : str
    seed : int
    """

    scenario: str
    params: SystemParams = field(default_factory=SystemParams)
    sweep: tuple | None = None
    target: str | None = None
    output_path: str = ""
    seed: int = 0
    cavity_dim: int = 3
    mode_dim: int = 3
    bench_n1: int = 3
    bench_n2: int = 3
    grid_max: float = 0.05
    grid_points: int = 5
    n_max: int = 3
    t_max: float | None = None
    points: int = 101
    truncation: int = 8
    fixed: bool = False

    def resolve_target(self) -> TargetState:
        return parse_target(self.target or "vacuum", self.seed)


_OPTION_TYPES = {
    "seed": int, "cavity_dim": int, "mode_dim": int, "bench_n1": int, "bench_n2": int,
    "grid_max": float, "grid_points": int, "n_max": int, "t_max": float, "points": int, "truncation": int,
}
_OTHER_KEYS = ("scenario", "output", "sweep", "target", "units", "g_ghz")
KNOWN_KEYS = frozenset(PARAM_KEYS) | frozenset(_OPTION_TYPES) | frozenset(_OTHER_KEYS)


def parse_target(spec: str, seed: int = 0) -> TargetState:
    """Target grid from its config description."""
    words = spec.replace(",", " ").split()
    if not words:
        raise ConfigError("target: empty description")
    kind = words[0].lower()
    try:
        if kind == "vacuum":
            return TargetState(np.ones((1, 1), dtype=complex))
        if kind in ("uniform", "random"):
            n1, n2 = int(words[1]), int(words[2])
            rng = np.random.default_rng(seed)
            return (TargetState.uniform_random_phases if kind == "uniform" else TargetState.random)(n1, n2, rng)
        if kind in ("noon", "mdes", "max"):
            n = int(words[1])
            return {"noon": noon_target, "mdes": mdes_target, "max": max_entangled_target}[kind](n)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"target: cannot read {spec!r} ({exc})") from None
    amps = {}
    for term in spec.split(";"):
        parts = term.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ConfigError(f"target: term {term.strip()!r} needs 'n1 n2 re im'")
        try:
            amps[(int(parts[0]), int(parts[1]))] = complex(float(parts[2]), float(parts[3]))
        except ValueError:
            raise ConfigError(f"target: term {term.strip()!r} is not numeric") from None
    if any(k[0] < 0 or k[1] < 0 for k in amps):
        raise ConfigError("target: occupation numbers must be >= 0")
    norm = math.sqrt(sum(abs(v) ** 2 for v in amps.values()))
    if norm == 0:
        raise ConfigError("target: all amplitudes are zero")
    return TargetState.from_dict({k: v / norm for k, v in amps.items()})


def _number(key: str, text: str, kind=float):
    try:
        if kind is int:
            v = float(text)
            if not v.is_integer():
                raise ValueError
            return int(v)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {'an integer' if kind is int else 'a number'}, got {text!r}") from None


def _split_lines(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    """Resolve a config document (plus optional flag overrides) into a :class:`ScenarioConfig`.

    Raises
    ------
    ConfigError
        On unknown keys, malformed values, a missing scenario, or invalid sweeps.
    """
    kv = _split_lines(text)
    for k, v in (overrides or {}).items():
        if k not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {k!r}")
        kv[k] = v
    scenario = kv.get("scenario")
    if not scenario:
        raise ConfigError("scenario missing")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown scenario {scenario!r} (choose from {', '.join(SCENARIOS)})")

    units = kv.get("units", "g")
    if units not in ("g", "GHz"):
        raise ConfigError(f"units: expected 'g' or 'GHz', got {units!r}")
    g_ghz = _number("g_ghz", kv["g_ghz"]) if "g_ghz" in kv else DEFAULT_G_GHZ
    if g_ghz <= 0:
        raise ConfigError("g_ghz: must be positive")
    scale = 1.0 / g_ghz if units == "GHz" else 1.0

    pvals: dict[str, float] = dict(SCENARIO_PARAM_DEFAULTS.get(scenario, {}))
    for key in PARAM_KEYS:
        if key in kv:
            v = _number(key, kv[key])
            pvals[key] = v * scale if key in FREQUENCY_KEYS else v
    try:
        params = SystemParams(**pvals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from None

    opts: dict = dict(SCENARIO_OPTION_DEFAULTS.get(scenario, {}))
    for key, kind in _OPTION_TYPES.items():
        if key in kv:
            opts[key] = _number(key, kv[key], kind)
    if "t_max" in kv and units == "GHz":
        log.debug("t_max is read in units of 1/g regardless of the units setting")

    sweep = None
    fixed = "sweep" in kv and kv["sweep"].lower() in ("", "none")
    if "sweep" in kv and not fixed:
        parts = kv["sweep"].split()
        if len(parts) != 4:
            raise ConfigError("sweep: expected 'name min max count'")
        name = parts[0]
        if name not in PARAM_KEYS:
            raise ConfigError(f"sweep: {name!r} is not a physical parameter")
        lo, hi = _number("sweep", parts[1]), _number("sweep", parts[2])
        count = _number("sweep", parts[3], int)
        if count < 2:
            raise ConfigError("sweep: count must be >= 2")
        if name in FREQUENCY_KEYS:
            lo, hi = lo * scale, hi * scale
        sweep = (name, lo, hi, count)

    cfg = ScenarioConfig(
        scenario=scenario,
        params=params,
        sweep=sweep,
        target=kv.get("target"),
        output_path=kv.get("output", f"{scenario}.csv"),
        fixed=fixed,
        **opts,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig) -> None:
    for key in ("cavity_dim", "mode_dim", "points", "grid_points"):
        if getattr(cfg, key) < 2:
            raise ConfigError(f"{key}: must be >= 2")
    for key in ("bench_n1", "bench_n2"):
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key}: must be >= 0")
    if cfg.n_max < 1:
        raise ConfigError("n_max: must be >= 1")
    if cfg.grid_max < 0:
        raise ConfigError("grid_max: must be >= 0")
    if cfg.t_max is not None and cfg.t_max <= 0:
        raise ConfigError("t_max: must be positive")
    if cfg.target is not None:
        parse_target(cfg.target, cfg.seed)


def format_config(cfg: ScenarioConfig) -> str:
    """Config document that parses back to ``cfg`` (frequencies in units of g)."""
    lines = [f"scenario = {cfg.scenario}", f"output = {cfg.output_path}", "units = g"]
    for key in PARAM_KEYS:
        lines.append(f"{key} = {getattr(cfg.params, key)!r}")
    if cfg.sweep is not None:
        name, lo, hi, n = cfg.sweep
        lines.append(f"sweep = {name} {lo!r} {hi!r} {n}")
    elif cfg.fixed:
        lines.append("sweep = none")
    if cfg.target is not None:
        lines.append(f"target = {cfg.target}")
    for key in _OPTION_TYPES:
        v = getattr(cfg, key)
        if v is not None:
            lines.append(f"{key} = {v!r}")
    return "\n".join(lines) + "\n"


def write_table(table: ResultTable, cfg: ScenarioConfig, path: str | Path) -> None:
    path = Path(path)
    out = [f"# {line}" for line in format_config(cfg).splitlines()]
    out += [f"## {k} = {v}" for k, v in table.metadata.items()]
    out.append(",".join(table.columns))
    starts = {b[1]: b[0] for b in table.blocks}
    for i, row in enumerate(table.rows):
        if i in starts:
            out.append(f"## block {starts[i]}")
        out.append(",".join(repr(float(x)) for x in row))
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise ConfigError(f"output: cannot write {str(path)!r} ({exc.strerror})") from None


def read_metadata(path: str | Path) -> ScenarioConfig:
    """Re-parse the config block of an emitted file."""
    lines = Path(path).read_text().splitlines()
    doc = [ln[2:] for ln in lines if ln.startswith("# ")]
    return parse_config("\n".join(doc))


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> ResultTable:
    """Run ``cfg`` and, when ``write`` is set, emit its CSV file."""
    if write:
        parent = Path(cfg.output_path).resolve().parent
        if not parent.is_dir():
            raise ConfigError(f"output: directory {str(parent)!r} does not exist")
    table = SCENARIOS[cfg.scenario](cfg)
    if write:
        write_table(table, cfg, cfg.output_path)
    return table


# axis each scenario sweeps when no sweep is configured
DEFAULT_SWEEP_AXIS = {"fig2": "Delta", "fig4a": "Omega", "fig4b": "Delta"}


def _pin_flags(cfg: ScenarioConfig, pinned: list[str]) -> ScenarioConfig:
    """A parameter flag replaces any sweep over the same parameter with a single point."""
    axis = cfg.sweep[0] if cfg.sweep is not None else DEFAULT_SWEEP_AXIS.get(cfg.scenario)
    if axis in pinned:
        return replace(cfg, sweep=None, fixed=True)
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="run", description="Run a named simulation scenario and write CSV.")
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--out", help="output CSV path")
    ap.add_argument("--delta-over-g", type=float, help="cavity detuning in units of g (replaces a detuning sweep)")
    ap.add_argument("--omega-over-g", type=float, help="drive amplitude in units of g (replaces a drive sweep)")
    ap.add_argument("--seed", type=int, help="seed for random targets and benchmark phases")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s",
                        stream=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("always", UserWarning)
        warnings.showwarning = lambda message, category, *_a, **_k: log.warning("%s", message)
        return _run(args)


def _run(args: argparse.Namespace) -> int:
    try:
        text = Path(args.config).read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config {args.config!r}: {exc.strerror}", file=sys.stderr)
        return 2
    overrides: dict[str, str] = {}
    if args.scenario:
        overrides["scenario"] = args.scenario
    if args.out:
        overrides["output"] = args.out
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.delta_over_g is not None:
        overrides["Delta"] = repr(args.delta_over_g)
    if args.omega_over_g is not None:
        overrides["Omega"] = repr(args.omega_over_g)
    try:
        cfg = parse_config(text, overrides)
        cfg = _pin_flags(cfg, [k for k in ("Delta", "Omega") if k in overrides])
        table = run_scenario(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %d rows to %s", len(table.rows), cfg.output_path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
