"""Command-line front end: ``simulate``, ``criteria``, ``verify`` and ``properties``.

Runs are driven by an INI file with the sections ``[system]``, ``[history]``,
``[simulate]``, ``[criteria]`` and ``[output]``.  Expressions may be quoted;
numeric entries accept constant expressions such as ``10 + 40*pi``.

Exit codes: 0 success, 1 verification mismatch or failed property suite,
2 configuration error, 3 solver error, 4 inconclusive verdict under ``--strict``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .criteria import (
    KERNEL_PRESETS, CriterionReport, KernelError, KernelSpec, Verdict, check_A4, check_lemma33,
    check_thm31, check_thm32, check_thm33, check_thm34, check_thm35, reports_to_json,
)
from .dde import History, SolverError, SpecError, SystemSpec, Trajectory, classify, solve
from .expr import ExprError, parse
from .fraccalc import check_properties
from .scenarios import SCENARIO_IDS, UnknownScenarioError, verify

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_SOLVER, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4

# section -> allowed keys (required ones are checked where they are used)
SCHEMA = {
    "system": {"alpha", "p", "q", "r", "f", "g", "h", "sigma", "tau", "k", "l", "l_prime", "m_prime",
               "t0", "T", "name", "clamp_f", "clamp_g", "clamp_h"},
    "history": {"u0", "v0", "w0", "T1"},
    "simulate": {"t_end", "dt", "window", "min_crossings", "max_sweeps", "sweep_tol"},
    "criteria": {"thm", "rho", "kernel", "horizons", "beta_min", "T", "rtol", "kernel_grid",
                 "thm35_variant", "riccati_window"},
    "output": {"trajectory", "oscillation", "report"},
}
SYSTEM_EXPRS = ("p", "q", "r", "f", "g", "h", "sigma", "tau")
CRITERIA = ("A4", "3.1", "3.2", "3.3", "L3.3", "3.4", "3.5")
DEFAULT_CRITERIA = ("A4", "3.1")


class ConfigError(ValueError):
    pass


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _number(text: str, key: str) -> float:
    try:
        return float(parse(_unquote(text), ())(0.0))
    except ExprError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _numbers(text: str, key: str) -> list[float]:
    return [_number(part, key) for part in _unquote(text).split(",") if part.strip()]


@dataclass
class RunConfig:
    """Validated contents of a configuration file."""

    spec: SystemSpec
    history: History | None = None
    simulate: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # keep T and t0 apart
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}]")
            unknown = set(cp[sec]) - SCHEMA[sec]
            if unknown:
                raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
        if not cp.has_section("system"):
            raise ConfigError("missing [system] section")
        spec = _read_system(cp["system"])
        hist = None
        if cp.has_section("history"):
            h = cp["history"]
            missing = {"u0", "v0", "w0"} - set(h)
            if missing:
                raise ConfigError(f"[history] needs {', '.join(sorted(missing))}")
            T1 = _number(h["T1"], "T1") if "T1" in h else None
            try:
                hist = History.for_spec(spec, *(_unquote(h[k]) for k in ("u0", "v0", "w0")), T1=T1)
            except ExprError as exc:
                raise ConfigError(f"[history]: {exc}") from None
        sim = _read_simulate(cp["simulate"], spec) if cp.has_section("simulate") else {}
        crit = _read_criteria(cp["criteria"]) if cp.has_section("criteria") else {}
        out = {k: _unquote(v) for k, v in cp["output"].items()} if cp.has_section("output") else {}
        return cls(spec, hist, sim, crit, out)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_text(text)

    def output_path(self, key: str, default: str) -> Path | None:
        name = self.output.get(key, default)
        return None if name == "-" else Path(name)


def _read_system(sec) -> SystemSpec:
    missing = {"alpha", *SYSTEM_EXPRS} - set(sec)
    if missing:
        raise ConfigError(f"[system] needs {', '.join(sorted(missing))}")
    kw = {}
    for key in ("k", "l", "l_prime", "m_prime", "t0", "T"):
        if key in sec:
            kw[key] = _number(sec[key], key)
    clamp = {}
    for name in ("f", "g", "h"):
        if f"clamp_{name}" in sec:
            lo_hi = _numbers(sec[f"clamp_{name}"], f"clamp_{name}")
            if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
                raise ConfigError(f"clamp_{name} must be 'lo, hi' with lo < hi")
            clamp[name] = tuple(lo_hi)
    try:
        spec = SystemSpec.from_strings(
            alpha=_number(sec["alpha"], "alpha"),
            **{k: _unquote(sec[k]) for k in SYSTEM_EXPRS},
            clamp=clamp, name=_unquote(sec.get("name", "")), **kw,
        )
        return spec.validate()
    except (ExprError, SpecError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _read_simulate(sec, spec: SystemSpec) -> dict:
    if "t_end" not in sec or "dt" not in sec:
        raise ConfigError("[simulate] needs t_end and dt")
    out = {"t_end": _number(sec["t_end"], "t_end"), "dt": _number(sec["dt"], "dt")}
    if out["t_end"] < spec.t0:
        raise ConfigError("t_end must not precede t0")
    if not out["dt"] > 0:
        raise ConfigError("dt must be positive")
    window = _numbers(sec["window"], "window") if "window" in sec else [spec.t0, out["t_end"]]
    if len(window) != 2 or not spec.t0 <= window[0] <= window[1] <= out["t_end"]:
        raise ConfigError("window must be 'a, b' with t0 <= a <= b <= t_end")
    out["window"] = tuple(window)
    out["min_crossings"] = int(_number(sec.get("min_crossings", "10"), "min_crossings"))
    out["max_sweeps"] = int(_number(sec.get("max_sweeps", "5"), "max_sweeps"))
    out["sweep_tol"] = _number(sec.get("sweep_tol", "1e-12"), "sweep_tol")
    return out


def _read_criteria(sec) -> dict:
    out: dict = {}
    if "thm" in sec:
        out["thm"] = parse_selection(_unquote(sec["thm"]))
    try:
        if "rho" in sec:
            out["rho"] = parse(_unquote(sec["rho"]), ("t",))
        if "kernel" in sec:
            name = _unquote(sec["kernel"])
            out["kernel"] = KernelSpec.preset(name) if name in KERNEL_PRESETS else KernelSpec.from_strings(name)
    except (ExprError, KernelError, ValueError) as exc:
        raise ConfigError(f"[criteria]: {exc}") from None
    for key in ("horizons", "kernel_grid", "riccati_window"):
        if key in sec:
            vals = _numbers(sec[key], key)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(f"{key} must be increasing")
            out[key] = vals
    for key in ("beta_min", "T", "rtol"):
        if key in sec:
            out[key] = _number(sec[key], key)
    variant = _unquote(sec.get("thm35_variant", "delay"))
    if variant not in ("delay", "state"):
        raise ConfigError("thm35_variant must be 'delay' or 'state'")
    out["thm35_variant"] = variant
    return out


def parse_selection(text: str) -> list[str]:
    """Normalize a comma list such as ``"A4, Thm3.1, 3.2"``; an empty string selects nothing."""
    picked = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key = item[3:] if item.lower().startswith("thm") else item
        key = {"a4": "A4", "l3.3": "L3.3", "lem3.3": "L3.3", "lemma3.3": "L3.3"}.get(key.lower(), key)
        if key not in CRITERIA:
            raise ConfigError(f"unknown criterion {item!r}; choose from {', '.join(CRITERIA)}")
        if key not in picked:
            picked.append(key)
    return picked


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _simulate(cfg: RunConfig) -> Trajectory:
    if cfg.history is None or not cfg.simulate:
        raise ConfigError("simulation needs [history] and [simulate] sections")
    s = cfg.simulate
    return solve(cfg.spec, cfg.history, s["t_end"], s["dt"], s["max_sweeps"], s["sweep_tol"])


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_simulate(cfg: RunConfig) -> int:
    try:
        traj = _simulate(cfg)
        a, b = cfg.simulate["window"]
        if b > a:
            osc = classify(traj, (a, b), cfg.simulate["min_crossings"]).to_dict()
        else:
            osc = {"window": [a, b], "system": "undetermined", "flags": ["empty window"]}
    except (SolverError, ExprError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    block = {"oscillation": osc, "truncated": traj.truncated, "flags": list(traj.flags)}
    _write(cfg.output_path("trajectory", "trajectory.csv"), traj.to_csv())
    _write(cfg.output_path("oscillation", "oscillation.json"), json.dumps(block, indent=2) + "\n")
    print(f"{len(traj.t)} nodes on [{traj.t[0]:g}, {traj.t[-1]:g}]; system {osc['system']}", file=sys.stderr)
    return EXIT_OK


def run_criteria(cfg: RunConfig, selection: Sequence[str]) -> list[CriterionReport]:
    """Evaluate the selected criteria concurrently; reports keep the selection order."""
    c = cfg.criteria
    spec, T, hz, beta = cfg.spec, c.get("T"), c.get("horizons"), c.get("beta_min", 0.05)
    rho = c.get("rho", "1")
    traj = None
    if "3.4" in selection or ("3.5" in selection and c.get("thm35_variant") == "state"):
        traj = _simulate(cfg)

    def one(key: str) -> CriterionReport:
        if key == "A4":
            return check_A4(spec, hz, beta)
        if key == "3.1":
            return check_thm31(spec, rho, T, hz, beta)
        if key == "3.2":
            return check_thm32(spec, rho, c.get("kernel"), T, c.get("kernel_grid"), c.get("rtol", 1e-3))
        if key == "3.3":
            return check_thm33(spec, rho, c.get("kernel"), T, c.get("kernel_grid"))
        if key == "L3.3":
            return check_lemma33(spec, hz, T, beta)
        if key == "3.4":
            return check_thm34(traj, spec, c.get("riccati_window") or cfg.simulate["window"])
        return check_thm35(spec, traj, T, c.get("kernel_grid"), c.get("thm35_variant", "delay"))

    if not selection:
        return []
    with ThreadPoolExecutor(max_workers=len(selection)) as pool:
        return list(pool.map(one, selection))


def cmd_criteria(cfg: RunConfig, selection: Sequence[str] | None = None, strict: bool = False) -> int:
    if selection is None:
        selection = cfg.criteria.get("thm", list(DEFAULT_CRITERIA))
    try:
        reports = run_criteria(cfg, selection)
    except KernelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ExprError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write(cfg.output_path("report", "report.json"), reports_to_json(reports) + "\n")
    for r in reports:
        print(f"{r.id:<14} {r.verdict.value:<13} {r.conclusion}", file=sys.stderr)
    if strict and any(r.verdict is Verdict.INCONCLUSIVE for r in reports):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_verify(sid: str, dt: float | None = None) -> int:
    try:
        rep = verify(sid, dt)
    except UnknownScenarioError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_CONFIG
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_MISMATCH


def cmd_properties(alpha: float, n_cases: int = 200, seed: int = 0, tol: float = 1e-6) -> int:
    try:
        rep = check_properties(alpha, np.linspace(0.5, 50.0, 100), n_cases, seed)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key, err in rep.max_rel_error.items():
        print(f"{key}  max rel error {err:.3g}  {'PASS' if err <= tol else 'FAIL'}")
    return EXIT_OK if rep.passed(tol) else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracdde", description="Fractional delay systems: simulation and oscillation criteria")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="integrate a system and classify oscillation")
    p.add_argument("--config", required=True)
    p = sub.add_parser("criteria", help="evaluate oscillation criteria")
    p.add_argument("--config", required=True)
    p.add_argument("--thm", default=None, help=f"comma list from {','.join(CRITERIA)}; '' selects none")
    p.add_argument("--strict", action="store_true", help="exit 4 if any verdict is Inconclusive")
    p = sub.add_parser("verify", help="check a built-in scenario against its expectations")
    p.add_argument("scenario", help=f"one of {', '.join(SCENARIO_IDS)}")
    p.add_argument("--dt", type=float, default=None)
    p = sub.add_parser("properties", help="randomized checks of the derivative rules")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return cmd_verify(args.scenario, args.dt)
    if args.command == "properties":
        return cmd_properties(args.alpha, args.cases, args.seed)
    try:
        cfg = RunConfig.load(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        selection = None if args.thm is None else parse_selection(args.thm)
        return cmd_criteria(cfg, selection, args.strict)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
