"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .expr import ExprDomainError, ExprSyntaxError, parse, to_text
from .integrate import IntegrationError, IntegratorConfig, Trajectory, simulate
from .layer import (
    Crossing, Degenerate, LayerError, Sliding, decide_passage, filippov_root,
    find_sliding_roots, sliding_field,
)
from .model import Combined, ModelError, Split, SwitchedSystem, decompose
from .regularize import (
    NoiseConfig, Sigmoid, r_scale, smooth_simulate, stochastic_simulate, transits, washout_curve,
)
from .scenarios import get as get_scenario, names as scenario_names, catalog

__all__ = ["main", "run", "ConfigError", "parse_config", "parse_config_text", "serialize_config",
           "write_csv", "write_events", "trajectory_json", "RunConfig"]

# sweep --steps: first time the runs differ by more than this in sup-norm
DIVERGENCE_THRESHOLD = 0.5


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    """Config file problem, located by 1-based line and column."""

    def __init__(self, line: int, col: int, reason: str, path: str = "<config>"):
        self.line, self.col, self.reason = line, col, reason
        super().__init__(f"{path}:{line}:{col}: {reason}")


# -- config files --------------------------------------------------------------

_KEYS = ("name", "n", "h", "f", "fplus", "fminus", "g", "x0", "t_span")
_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*")


def _split_vector(text: str, col0: int, line: int, path: str) -> list[tuple[str, int]]:
    """Items of ``[a, b, ...]`` with their 1-based columns; commas inside parentheses are kept."""
    s = text.rstrip()
    if not (s.startswith("[") and s.endswith("]")):
        raise ConfigError(line, col0, "expected a bracketed list", path)
    items: list[tuple[str, int]] = []
    depth = 0
    start = 1
    for i in range(1, len(s) - 1):
        c = s[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == "," and depth == 0:
            items.append((s[start:i], col0 + start))
            start = i + 1
    last = s[start:len(s) - 1]
    if last.strip() or items:
        items.append((last, col0 + start))
    out = []
    for raw, col in items:
        stripped = raw.strip()
        if not stripped:
            raise ConfigError(line, col, "empty list item", path)
        out.append((stripped, col + (len(raw) - len(raw.lstrip()))))
    return out


@dataclass
class _Entry:
    value: str
    line: int
    col: int


def _parse_number(text: str, line: int, col: int, path: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(line, col, f"not a number: {text!r}", path) from None
    if not math.isfinite(v):
        raise ConfigError(line, col, f"non-finite number {text!r}", path)
    return v


def parse_config_text(text: str, path: str = "<config>") -> tuple[SwitchedSystem, tuple[float, ...], tuple[float, float]]:
    """Parse the ``key = value`` config format.

    Raises:
        ConfigError: with the line and column of the offending entry.
    """
    entries: dict[str, _Entry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        m = _LINE.match(body)
        if not m:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError(lineno, col, "expected 'key = value'", path)
        key = m.group(1)
        if key not in _KEYS:
            raise ConfigError(lineno, m.start(1) + 1, f"unknown key {key!r}", path)
        if key in entries:
            raise ConfigError(lineno, m.start(1) + 1, f"duplicate key {key!r}", path)
        entries[key] = _Entry(body[m.end():].rstrip(), lineno, m.end() + 1)

    def need(key: str) -> _Entry:
        if key not in entries:
            raise ConfigError(1, 1, f"missing required key {key!r}", path)
        return entries[key]

    e = need("n")
    try:
        n = int(e.value)
    except ValueError:
        raise ConfigError(e.line, e.col, f"n must be an integer, got {e.value!r}", path) from None
    if n < 1:
        raise ConfigError(e.line, e.col, "n must be positive", path)

    def expr(text: str, line: int, col: int):
        try:
            return parse(text, n)
        except ExprSyntaxError as exc:
            reason = str(exc.args[0]).rsplit(" at position", 1)[0]
            raise ConfigError(line, col + max(exc.pos, 0), reason, path) from None

    def exprs(key: str):
        ent = entries[key]
        return tuple(expr(t, ent.line, c) for t, c in _split_vector(ent.value, ent.col, ent.line, path))

    def numbers(key: str) -> tuple[float, ...]:
        ent = need(key)
        return tuple(_parse_number(t, ent.line, c, path)
                     for t, c in _split_vector(ent.value, ent.col, ent.line, path))

    he = need("h")
    h = expr(he.value.strip(), he.line, he.col)
    has_split = [k for k in ("fplus", "fminus", "g") if k in entries]
    if "f" in entries and has_split:
        ent = entries[has_split[0]]
        raise ConfigError(ent.line, 1, "give either f or fplus/fminus/g, not both", path)
    if "f" in entries:
        form = Combined(exprs("f"))
        anchor = entries["f"]
    else:
        for k in ("fplus", "fminus"):
            if k not in entries:
                ent = entries[has_split[0]] if has_split else entries["h"]
                raise ConfigError(ent.line, 1, f"Split form needs {k!r} (or give f)", path)
        g = exprs("g") if "g" in entries else tuple(parse("0", n) for _ in range(n))
        form = Split(exprs("fplus"), exprs("fminus"), g)
        anchor = entries["fplus"]
    name = entries["name"].value.strip() if "name" in entries else Path(path).stem
    try:
        system = SwitchedSystem(n, h, form, name=name)
    except ModelError as exc:
        msg = str(exc)
        ent = he if msg.startswith("h ") else entries.get(msg.split(" ", 1)[0], anchor)
        raise ConfigError(ent.line, ent.col, msg, path) from None
    x0 = numbers("x0")
    if len(x0) != n:
        ent = entries["x0"]
        raise ConfigError(ent.line, ent.col, f"x0 has {len(x0)} components, expected {n}", path)
    span = numbers("t_span")
    if len(span) != 2 or not span[1] > span[0]:
        ent = entries["t_span"]
        raise ConfigError(ent.line, ent.col, "t_span must be [t0, t1] with t1 > t0", path)
    return system, x0, (span[0], span[1])


def parse_config(path: str | Path) -> tuple[SwitchedSystem, tuple[float, ...], tuple[float, float]]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(0, 0, f"cannot read: {exc.strerror}", str(p)) from None
    return parse_config_text(text, str(p))


def _g17(v: float) -> str:
    return "%.17g" % v


def serialize_config(system: SwitchedSystem, x0: Sequence[float], t_span: Sequence[float]) -> str:
    lines = []
    if system.name:
        lines.append(f"name = {system.name}")
    lines += [f"n = {system.n}", f"h = {to_text(system.h)}"]

    def vec(es) -> str:
        return "[" + ", ".join(to_text(e) for e in es) + "]"

    if isinstance(system.form, Combined):
        lines.append(f"f = {vec(system.form.f)}")
    else:
        lines += [f"fplus = {vec(system.form.fplus)}", f"fminus = {vec(system.form.fminus)}",
                  f"g = {vec(system.form.g)}"]
    lines.append("x0 = [" + ", ".join(_g17(v) for v in x0) + "]")
    lines.append("t_span = [" + ", ".join(_g17(v) for v in t_span) + "]")
    return "\n".join(lines) + "\n"


# -- output ----------------------------------------------------------------------

def write_csv(traj: Trajectory, out) -> None:
    n = traj.n
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", *[f"x{i + 1}" for i in range(n)], "lambda", "mode"])
    x = traj.x
    for t, row, lam, m in zip(traj.t, x, traj.lam, traj.mode):
        w.writerow([_g17(t), *[_g17(v) for v in row], _g17(lam), m.value])


def write_events(traj: Trajectory, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "kind"])
    for e in traj.events:
        w.writerow([_g17(e.t), e.kind.value])


def trajectory_json(traj: Trajectory, meta: dict) -> dict:
    cols = {"t": traj.t.tolist()}
    x = traj.x
    for i in range(traj.n):
        cols[f"x{i + 1}"] = x[:, i].tolist()
    cols["lambda"] = traj.lam.tolist()
    cols["mode"] = [m.value for m in traj.mode]
    return {
        "meta": {**meta, "status": traj.status, "version": __version__},
        "samples": cols,
        "events": [{"t": e.t, "kind": e.kind.value, "detail": e.detail} for e in traj.events],
    }


def _emit_text(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------

@dataclass
class RunConfig:
    system: SwitchedSystem
    x0: tuple[float, ...]
    t_span: tuple[float, float]
    engine: str = "pws"
    eps: Optional[float] = None
    step: Optional[float] = None
    seed: int = 0
    kappa: float = 0.0
    sigmoid: str = "tanh"
    stride: Optional[int] = None
    out: Optional[str] = None
    fmt: str = "csv"
    meta: dict = field(default_factory=dict)


def _float_list(text: str, flag: str) -> list[float]:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise UsageError(f"{flag} needs at least one value")
    try:
        vals = [float(s) for s in items]
    except ValueError:
        raise UsageError(f"{flag}: not a list of numbers: {text!r}") from None
    return vals


def _load(args) -> RunConfig:
    if bool(args.scenario) == bool(args.config):
        raise UsageError("give exactly one of --scenario or --config")
    if args.scenario:
        try:
            sc = get_scenario(args.scenario)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        system, x0, span = sc.system, sc.x0, sc.t_span
    else:
        system, x0, span = parse_config(args.config)
    t0, t1 = span
    if getattr(args, "t_end", None) is not None:
        if not args.t_end > t0:
            raise UsageError("--t-end must exceed the start time")
        t1 = args.t_end
    rc = RunConfig(system, tuple(x0), (t0, t1))
    for k in ("engine", "eps", "step", "seed", "kappa", "sigmoid", "stride", "out"):
        v = getattr(args, k, None)
        if v is not None:
            setattr(rc, k, v)
    rc.fmt = getattr(args, "format", None) or "csv"
    if rc.engine in ("smooth", "stochastic"):
        # a --steps sweep supplies its own steps
        step_given = rc.step is not None or getattr(args, "steps", None) is not None
        if rc.eps is None or not step_given:
            raise UsageError(f"engine {rc.engine} requires --eps and --step")
        if not rc.eps > 0 or (rc.step is not None and not rc.step > 0):
            raise UsageError("--eps and --step must be positive")
    if rc.stride is not None and rc.stride < 1:
        raise UsageError("--stride must be at least 1")
    return rc


def _sigmoid(rc: RunConfig) -> Sigmoid:
    name = {"alg": "algebraic_sqrt"}.get(rc.sigmoid, rc.sigmoid)
    return Sigmoid.parse(name, rc.eps)


def _simulate(rc: RunConfig) -> tuple[Trajectory, dict]:
    meta = {"engine": rc.engine, "system": rc.system.name, "t_span": list(rc.t_span), "x0": list(rc.x0)}
    if rc.engine == "pws":
        cfg = IntegratorConfig() if rc.step is None else IntegratorConfig(step=rc.step)
        meta.update(method=cfg.method, step=cfg.step, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                    event_tol=cfg.event_tol)
        return simulate(rc.system, rc.x0, rc.t_span, cfg), meta
    s = _sigmoid(rc)
    meta.update(eps=rc.eps, step=rc.step, sigmoid=s.kind.name.lower())
    if rc.engine == "smooth":
        return smooth_simulate(rc.system, rc.x0, rc.t_span, s, rc.step, rc.stride), meta
    meta.update(kappa=rc.kappa, seed=rc.seed)
    noise = NoiseConfig(rc.kappa, rc.seed, rc.step)
    return stochastic_simulate(rc.system, rc.x0, rc.t_span, s, noise, rc.stride), meta


def cmd_simulate(args) -> int:
    rc = _load(args)
    traj, meta = _simulate(rc)
    if rc.fmt == "json":
        _emit_text(json.dumps(trajectory_json(traj, meta)) + "\n", rc.out)
        return 0
    buf = io.StringIO()
    write_csv(traj, buf)
    _emit_text(buf.getvalue(), rc.out)
    if rc.out:
        ev = io.StringIO()
        write_events(traj, ev)
        p = Path(rc.out)
        p.with_name(p.stem + ".events.csv").write_text(ev.getvalue())
    return 0


def _decision_json(d) -> dict:
    if isinstance(d, Crossing):
        return {"kind": "crossing", "exit_side": d.exit_side}
    if isinstance(d, Sliding):
        return {"kind": "sliding", "lam_star": d.root.lam_star, "stability": d.root.stability.value}
    return {"kind": "degenerate", "lam": d.lam, "reason": d.reason}


def cmd_analyze(args) -> int:
    rc = _load(args)
    system = rc.system
    try:
        x = [float(v) for v in args.x.split(",")]
    except ValueError:
        raise UsageError(f"--x: not a list of numbers: {args.x!r}") from None
    if len(x) != system.n:
        raise UsageError(f"--x needs {system.n} components")
    t = args.t
    hv = system.hval(x)
    report = {
        "system": system.name, "x": x, "t": t, "h": hv,
        "f1_plus": system.f1(x, t, 1.0), "f1_minus": system.f1(x, t, -1.0),
        "roots": [], "filippov_root": None, "passage": {},
    }
    for r in find_sliding_roots(system, x, t):
        entry = {"lam_star": r.lam_star, "stability": r.stability.value, "df1_dlam": r.df1_dlam}
        try:
            entry["sliding_field"] = sliding_field(system, x, t, r).tolist()
        except LayerError:
            entry["sliding_field"] = None
        report["roots"].append(entry)
    fr = filippov_root(system, x, t)
    if fr is not None:
        report["filippov_root"] = {"lam_star": fr.lam_star, "stability": fr.stability.value}
    for side, key in ((1, "from_plus"), (-1, "from_minus")):
        try:
            report["passage"][key] = _decision_json(decide_passage(system, x, t, side))
        except LayerError as exc:
            report["passage"][key] = {"kind": "not_incident", "reason": str(exc)}
    _emit_text(json.dumps(report, indent=2) + "\n", rc.out)
    return 0


def cmd_sweep(args) -> int:
    if (args.kappas is None) == (args.steps is None):
        raise UsageError("sweep needs exactly one of --kappas or --steps")
    rc = _load(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.kappas is not None:
        if rc.engine != "stochastic":
            raise UsageError("--kappas sweeps need --engine stochastic")
        kappas = _float_list(args.kappas, "--kappas")
        if any(k < 0 for k in kappas):
            raise UsageError("--kappas must be non-negative")
        runs = args.runs if args.runs is not None else 200
        if runs < 1:
            raise UsageError("--runs must be positive")
        curve = washout_curve(rc.system, rc.x0, _sigmoid(rc), kappas, runs, rc.t_span[1] - rc.t_span[0],
                              rc.step, rc.seed)
        w.writerow(["kappa", "stick_fraction", "runs", "ci_low", "ci_high", "r_eps"])
        r = r_scale(rc.eps) if 0 < rc.eps < 1 else float("nan")
        for p in curve:
            w.writerow([_g17(p.kappa), _g17(p.stick_fraction), p.runs, _g17(p.ci_low), _g17(p.ci_high), _g17(r)])
    else:
        if rc.engine != "smooth":
            raise UsageError("--steps sweeps need --engine smooth")
        steps = _float_list(args.steps, "--steps")
        if any(s <= 0 for s in steps):
            raise UsageError("--steps must be positive")
        s = _sigmoid(rc)
        dt_out = max(max(steps), 1e-2)
        results = []
        for st in steps:
            stride = max(1, round(dt_out / st))
            results.append(smooth_simulate(rc.system, rc.x0, rc.t_span, s, st, stride))
        ref = results[0]
        w.writerow(["step", "samples", "transits", "mean_transit", "divergence_time", "sup_diff"])
        for st, tr in zip(steps, results):
            m = min(len(ref), len(tr))
            diff = np.max(np.abs(tr.x[:m] - ref.x[:m]), axis=1)
            over = np.nonzero(diff > DIVERGENCE_THRESHOLD)[0]
            tdiv = float(tr.t[over[0]]) if len(over) else float("nan")
            spans = transits(tr)
            tt = [tr.t[j] - tr.t[i - 1] for i, j in spans]
            w.writerow([_g17(st), len(tr), len(spans), _g17(float(np.mean(tt)) if tt else float("nan")),
                        _g17(tdiv), _g17(float(diff.max()))])
    _emit_text(buf.getvalue(), rc.out)
    return 0


def cmd_list(args) -> int:
    for sc in catalog():
        print(f"{sc.name}\tn={sc.system.n}\tx0={list(sc.x0)}\tt_span={list(sc.t_span)}\t{sc.description}")
    return 0


def cmd_decompose(args) -> int:
    rc = _load(args)
    form = rc.system.form
    if isinstance(form, Split):
        fp, fm, g = form.fplus, form.fminus, form.g
    else:
        fp, fm, g = decompose(form.f)
    for label, es in (("fplus", fp), ("fminus", fm), ("g", g)):
        print(f"{label} = [" + ", ".join(to_text(e) for e in es) + "]")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="switchlayer", description="Hidden dynamics at switching surfaces.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def source(sp):
        g = sp.add_argument_group("source")
        g.add_argument("--scenario")
        g.add_argument("--config")

    def engine(sp):
        sp.add_argument("--engine", choices=("pws", "smooth", "stochastic"))
        sp.add_argument("--eps", type=float)
        sp.add_argument("--step", type=float)
        sp.add_argument("--t-end", dest="t_end", type=float)
        sp.add_argument("--sigmoid", choices=("tanh", "arctan", "hill", "alg", "bump"))
        sp.add_argument("--kappa", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--stride", type=int)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "json"))

    s = sub.add_parser("simulate", help="integrate one trajectory")
    source(s)
    engine(s)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze-layer", help="sliding roots and passage decision at a surface point")
    source(a)
    a.add_argument("--x", required=True)
    a.add_argument("--t", type=float, default=0.0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="noise washout or step-size sweep")
    source(w)
    engine(w)
    w.add_argument("--kappas")
    w.add_argument("--steps")
    w.add_argument("--runs", type=int)
    w.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("list-scenarios", help="list built-in scenarios")
    ls.set_defaults(func=cmd_list)

    d = sub.add_parser("decompose", help="print fplus, fminus, g")
    source(d)
    d.set_defaults(func=cmd_decompose)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("missing command (simulate, analyze-layer, sweep, list-scenarios, decompose)")
        return args.func(args)
    except (UsageError, ConfigError, ModelError, ExprSyntaxError) as exc:
        print(f"switchlayer: error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, LayerError, ArithmeticError) as exc:
        print(f"switchlayer: numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = 0
    sys.exit(code)
