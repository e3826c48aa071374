"""Command-line front end.

Configuration is plain text, one ``key = value`` per line, ``#`` starts a
comment. Values given on the command line (``--set key=value`` or the
dedicated flags) override the file.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .combine import plan
from .grid import Domain, GridField, LevelIndex, grid_from_level
from .model import KIND_EXPONENTS, ModelKind, ModelParams, OptionSpec, parse_kind
from .operators import CORNER_MODES, assemble_compact_x, assemble_compact_y
from .stepper import AdiParams

log = logging.getLogger("sgadi")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _levels(text: str) -> tuple:
    """'3-7' or '3,4,6' -> tuple of ints."""
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = (int(t) for t in text.split("-", 1))
        return tuple(range(lo, hi + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


# key -> (parser, default, range check or None, accepted-range text)
_KEYS = {
    "model": (str, "custom", None, "heston|garch|3/2|sqrn|varn|3/2n|custom|zero"),
    "kappa": (float, 2.0, lambda v: v >= 0, ">= 0"),
    "theta": (float, 0.1, lambda v: v >= 0, ">= 0"),
    "v": (float, 0.1, lambda v: v > 0, "> 0"),
    "rho": (float, -0.5, lambda v: -1 <= v <= 1, "[-1, 1]"),
    "r": (float, 0.05, lambda v: v >= 0, ">= 0"),
    "alpha": (float, None, lambda v: v >= 0, ">= 0"),
    "beta": (float, None, lambda v: v >= 0, ">= 0"),
    "lambda0": (float, 0.0, None, "any real"),
    "strike": (float, 100.0, lambda v: v > 0, "> 0"),
    "maturity": (float, 1.0, lambda v: v > 0, "> 0"),
    "L1": (float, -5.0, None, "L1 < K1"),
    "K1": (float, 1.5, None, "K1 > L1"),
    "L2": (float, 0.05, lambda v: v > 0, "> 0"),
    "K2": (float, 2.5, None, "K2 > L2"),
    "method": (str, "full", lambda v: v in ("full", "sparse"), "full|sparse"),
    "n": (int, None, lambda v: 0 <= v <= 20, "0..20"),
    "phi": (float, 0.5, lambda v: 0 < v <= 1, "(0, 1]"),
    "psi": (float, 0.5, lambda v: 0 < v <= 1, "(0, 1]"),
    "c": (float, 5.0, lambda v: v > 0, "> 0"),
    "smoothing": (_bool, True, None, "true|false"),
    "corner": (str, "edge", lambda v: v in CORNER_MODES, "|".join(CORNER_MODES)),
    "exclusion_min": (int, 3, lambda v: v >= 0, ">= 0"),
    "eval_level": (int, None, lambda v: 3 <= v <= 12, "3..12"),
    "reference_level": (int, 8, lambda v: 4 <= v <= 12, "4..12"),
    "cache_dir": (str, None, None, "a directory"),
    "spot": (float, None, lambda v: v > 0, "> 0"),
    "sigma": (float, None, lambda v: v > 0, "> 0"),
    "full_levels": (_levels, (3, 4, 5, 6, 7), lambda v: len(v) > 0, "e.g. 3-7"),
    "sparse_levels": (_levels, (6, 7, 8, 9, 10), lambda v: len(v) > 0, "e.g. 6-10"),
    "sigma_window": (str, "0.05,1", None, "lo,hi"),
    "output": (str, ".", None, "a directory"),
}


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    spec: OptionSpec
    domain: Domain
    adi: AdiParams
    values: dict = field(repr=False)
    zero_model: bool = False

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def settings(self):
        from .harness import SolveSettings
        return SolveSettings(self.params, self.domain, self.adi, self.c, self.smoothing,
                             self.corner, self.zero_model)

    def region(self):
        from .harness import ErrorRegion
        lo, hi = (float(t) for t in self.sigma_window.split(","))
        return ErrorRegion(sigma=(lo, hi))


def read_config_file(path) -> dict:
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        raw[key.strip()] = value.strip()
    return raw


def parse_config(path=None, overrides: dict | None = None, required=()) -> RunConfig:
    """Merge file values and overrides, parse, validate and build the model objects."""
    raw = read_config_file(path) if path else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown configuration key {unknown[0]!r}")
    values = {}
    for key, (conv, default, ok, accepted) in _KEYS.items():
        if key in raw:
            text = raw[key]
            try:
                val = conv(text) if isinstance(text, str) else text
            except (TypeError, ValueError):
                raise ConfigError(f"{key}={text!r} is not valid; accepted: {accepted}") from None
            if ok is not None and not ok(val):
                raise ConfigError(f"{key}={val!r} out of range; accepted: {accepted}")
            values[key] = val
        else:
            values[key] = default
    for key in required:
        if values.get(key) is None:
            raise ConfigError(f"missing required key {key!r} ({_KEYS[key][3]})")

    kind_name = values["model"].strip().lower()
    zero = kind_name == "zero"
    try:
        kind = ModelKind.CUSTOM if zero else parse_kind(kind_name)
    except ValueError:
        raise ConfigError(f"model={values['model']!r} unknown; accepted: {_KEYS['model'][3]}") from None
    if kind is ModelKind.CUSTOM:
        values["alpha"] = 0.5 if values["alpha"] is None else values["alpha"]
        values["beta"] = 0.5 if values["beta"] is None else values["beta"]
    else:
        a, b = KIND_EXPONENTS[kind]
        for key, fixed in (("alpha", a), ("beta", b)):
            if values[key] is not None and values[key] != fixed:
                raise ConfigError(f"{key}={values[key]!r} conflicts with model {kind_name}; "
                                  f"accepted: {fixed}")
    try:
        params = ModelParams.from_kind(
            kind, kappa=values["kappa"], theta=values["theta"], v=values["v"], rho=values["rho"],
            r=values["r"], lambda0=values["lambda0"], alpha=values["alpha"], beta=values["beta"])
        spec = OptionSpec(values["strike"], values["maturity"])
        domain = Domain(values["L1"], values["K1"], values["L2"], values["K2"], values["maturity"])
        adi = AdiParams(values["phi"], values["psi"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        lo, hi = (float(t) for t in values["sigma_window"].split(","))
    except ValueError:
        raise ConfigError(f"sigma_window={values['sigma_window']!r} is not valid; accepted: lo,hi") from None
    if not 0 < lo <= hi:
        raise ConfigError(f"sigma_window={values['sigma_window']!r} out of range; accepted: 0 < lo <= hi")
    if values["method"] == "sparse" and values["n"] is not None:
        try:
            plan(values["n"], values["exclusion_min"])
        except ValueError as exc:
            raise ConfigError(f"n={values['n']}: {exc}") from None
    return RunConfig(params, spec, domain, adi, values, zero)


# ---------------------------------------------------------------- commands

def _write_csv_surface(u: GridField, out: Path, name: str):
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    u.to_csv(path)
    return path


def _report_price(cfg: RunConfig, u: GridField):
    from .harness import price_at
    spot = cfg.spot if cfg.spot is not None else cfg.spec.strike
    sigma = cfg.sigma if cfg.sigma is not None else cfg.params.theta
    price = price_at(u, spot, sigma, cfg.spec, cfg.params)
    if not math.isfinite(price):
        raise FloatingPointError("non-finite price")
    print(f"price S={spot:g} sigma={sigma:g}: {price:.10g}")
    return price


def cmd_solve(cfg: RunConfig, args) -> int:
    from .harness import solve_level, timed
    level = LevelIndex(cfg.n, cfg.n)
    out = Path(cfg.output)
    if args.dump_triples:
        g = grid_from_level(cfg.domain, level)
        model = cfg.settings().coefficients(g)
        out.mkdir(parents=True, exist_ok=True)
        assemble_compact_x(g, model).to_csv(out / "triples_x.csv")
        assemble_compact_y(g, model).to_csv(out / "triples_y.csv")
    u, sec = timed(solve_level, level, cfg.settings(), args.trace)
    log.info("full grid n=%d solved in %.3f s", cfg.n, sec)
    print(f"wrote {_write_csv_surface(u, out, 'surface.csv')}")
    if args.binary:
        u.save(out / "surface.vgf")
    _report_price(cfg, u)
    return 0


def cmd_sparse(cfg: RunConfig, args) -> int:
    from .harness import solve_sparse, timed
    out = Path(cfg.output)
    p = plan(cfg.n, cfg.exclusion_min)
    if args.dump_plan:
        out.mkdir(parents=True, exist_ok=True)
        p.to_csv(out / "plan.csv", cfg.domain, cfg.c)
        print(f"wrote {out / 'plan.csv'}")
    u, sec = timed(solve_sparse, cfg.n, cfg.settings(), cfg.eval_level, cfg.exclusion_min,
                   args.threads)
    log.info("sparse grid n=%d (%d sub-grids) solved in %.3f s", cfg.n, len(p.levels), sec)
    print(f"wrote {_write_csv_surface(u, out, 'surface.csv')}")
    if args.binary:
        u.save(out / "surface.vgf")
    _report_price(cfg, u)
    return 0


def cmd_reference(cfg: RunConfig, args) -> int:
    from .harness import cache_dir, get_reference
    ref = get_reference(cfg.reference_level, cfg.settings(), cfg.cache_dir, rebuild=args.rebuild)
    print(f"reference {ref.key} in {cache_dir(cfg.cache_dir)}")
    return 0


def cmd_study(cfg: RunConfig, args) -> int:
    from .harness import StudyConfig, run_study, write_study
    sc = StudyConfig(cfg.settings(), cfg.full_levels, cfg.sparse_levels, cfg.reference_level,
                     cfg.region(), cfg.exclusion_min, args.threads, cfg.cache_dir)
    rows = run_study(sc)
    if not all(math.isfinite(r.error) for r in rows):
        raise FloatingPointError("non-finite error in study")
    for path in write_study(rows, cfg.output):
        print(f"wrote {path}")
    for r in rows:
        order = "" if r.order is None else f"  order {r.order:.2f}"
        print(f"{r.method:6s} n={r.n:2d} nodes={r.nodes:7d} error={r.error:.3e} "
              f"time={r.seconds:8.2f}s{order}")
    return 0


def cmd_check(cfg: RunConfig, args) -> int:
    from .consistency import run_checks
    failed = 0
    for name, value, ok in run_checks():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value}")
        failed += not ok
    return 1 if failed else 0


COMMANDS = {
    "solve": (cmd_solve, ("n",), "full-grid solve at level n"),
    "sparse": (cmd_sparse, ("n",), "combination-technique solve at level n"),
    "reference": (cmd_reference, (), "build or load the cached reference solution"),
    "study": (cmd_study, (), "full vs sparse convergence and runtime study"),
    "check": (cmd_check, (), "operator consistency and property checks"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgadi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"sgadi {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, _, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("-c", "--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration value (repeatable)")
        p.add_argument("-n", type=int, help="level n")
        p.add_argument("-o", "--output", help="output directory")
        p.add_argument("--model", help="model kind")
        p.add_argument("--spot", type=float)
        p.add_argument("--sigma", type=float, help="spot variance")
        p.add_argument("--threads", type=int, default=1, help="worker cap for sub-solves")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("solve", "sparse"):
            p.add_argument("--binary", action="store_true", help="also write the VGF1 field")
        if name == "solve":
            p.add_argument("--dump-triples", action="store_true",
                           help="write the compact scheme coefficients as CSV")
            p.add_argument("--trace", help="per-step CSV trace file")
        if name == "sparse":
            p.add_argument("--dump-plan", action="store_true", help="write the combination plan as CSV")
        if name == "reference":
            p.add_argument("--rebuild", action="store_true")
    return ap


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    for key in ("n", "output", "model", "spot", "sigma"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = str(val)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn, required, _ = COMMANDS[args.command]
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        over = _overrides(args)
        if args.command in ("solve", "sparse"):
            over["method"] = "full" if args.command == "solve" else "sparse"
        cfg = parse_config(args.config, over, required)
        return fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
