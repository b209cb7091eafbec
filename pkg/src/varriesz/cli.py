"""Command-line interface: ``varriesz <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .content import dyadic_content, greedy_content
from .domains import build_chain, chain_check
from .fields import load_field, sample_field, save_field
from .potentials import EvalSet, fractional_maximal, riesz_potential
from .report import _plain
from .spaces import luxemburg_norm, modular
from .verify import EXPERIMENTS, ConfigError, build_domain, defaults, load_config, run_experiment
from .verify.config import parse_exponent


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--resolution", type=int, help="cells per axis")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output directory (default: print to stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="output format")


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", default="unit_square",
                   help="domain kind: unit_square, square, disk, mushroom, cusp")
    p.add_argument("--field", help="field JSON written by save_field (overrides --sample)")
    p.add_argument("--sample", default="gaussian", help="named analytic field")
    p.add_argument("--params", default=None,
                   help="JSON parameters of the sampled field, e.g. '{\"width\": 0.1}'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varriesz", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("potential", help="variable-order Riesz potential on an evaluation set")
    _add_common(p), _add_input(p)
    p.add_argument("--alpha", default="const:1", help="order spec")
    p.add_argument("--eval-per-axis", type=int, default=64)

    p = sub.add_parser("maximal", help="fractional maximal function on all masked cells")
    _add_common(p), _add_input(p)
    p.add_argument("--alpha", default="const:1", help="order spec")

    p = sub.add_parser("content", help="Hausdorff content of a mask")
    _add_common(p), _add_input(p)
    p.add_argument("--beta", default="const:1", help="dimension spec")
    p.add_argument("--level", type=float, default=None,
                   help="use {field > level} instead of the whole domain")
    p.add_argument("--method", choices=("dyadic", "greedy"), default="dyadic")

    p = sub.add_parser("norm", help="Luxemburg norm and modular")
    _add_common(p), _add_input(p)
    p.add_argument("--p", default="const:2", help="exponent spec")

    p = sub.add_parser("chain", help="ball chain from the base ball to a point")
    _add_common(p)
    p.add_argument("--domain", default="disk")
    p.add_argument("--point", type=float, nargs="+", required=True)
    p.add_argument("--through-base", action="store_true")

    p = sub.add_parser("domain", help="build a domain and write its fields and manifest")
    _add_common(p)
    p.add_argument("kind", help="unit_square, square, disk, mushroom, cusp")

    p = sub.add_parser("verify", help="run a numbered verification experiment")
    _add_common(p)
    p.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}")
    return ap


# ------------------------------------------------------------------ helpers

def _domain(args, kind=None):
    res = args.resolution or 128
    return build_domain({"kind": kind or args.domain}, res)


def _input_field(args):
    if args.field:
        f, _ = load_field(args.field)
        return f, None
    D = _domain(args)
    params = json.loads(args.params) if args.params else {}
    g = D.grid
    if args.sample == "gaussian":
        params.setdefault("center", (g.lo_array + g.side / 2).tolist())
        params.setdefault("width", g.side / 8)
    elif args.sample == "ball_indicator":
        params.setdefault("center", (g.lo_array + g.side / 2).tolist())
        params.setdefault("radius", g.side / 8)
    elif args.sample == "random_smooth" and args.seed is not None:
        params.setdefault("seed", args.seed)
    return sample_field(g, args.sample, mask=D.mask, **params), D


def _emit(args, name: str, summary: dict, header=None, rows=None) -> None:
    if args.out is None:
        if args.format == "csv" and header is not None:
            w = csv.writer(sys.stdout)
            w.writerow(header)
            w.writerows(rows)
        else:
            print(json.dumps(_plain(summary), indent=2, sort_keys=True))
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv" and header is not None:
        with (out / f"{name}.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    else:
        (out / f"{name}.json").write_text(json.dumps(_plain(summary), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_potential(args) -> int:
    f, D = _input_field(args)
    alpha = parse_exponent(args.alpha, f.grid, f.mask, D)
    es = EvalSet.stratified(f.grid, f.mask, args.eval_per_axis)
    vals = riesz_potential(f, alpha, es)
    pts = es.points
    summary = {"alpha": args.alpha, "points": len(es), "max": float(vals.max()),
               "min": float(vals.min()), "values": vals, "eval_points": pts}
    header = [f"x{i + 1}" for i in range(pts.shape[1])] + ["potential"]
    _emit(args, "potential", summary, header, np.column_stack([pts, vals]).tolist())
    return 0


def cmd_maximal(args) -> int:
    f, D = _input_field(args)
    alpha = parse_exponent(args.alpha, f.grid, f.mask, D)
    M = fractional_maximal(f, alpha)
    if args.out is not None and args.format == "json":
        Path(args.out).mkdir(parents=True, exist_ok=True)
        save_field(M, Path(args.out) / "maximal")
        return 0
    idx = np.argwhere(f.mask)
    pts = f.grid.lo_array + (idx + 0.5) * f.grid.h
    vals = M.values[f.mask]
    summary = {"alpha": args.alpha, "max": float(vals.max()), "cells": int(len(vals))}
    header = [f"x{i + 1}" for i in range(pts.shape[1])] + ["maximal"]
    _emit(args, "maximal", summary, header, np.column_stack([pts, vals]).tolist())
    return 0


def cmd_content(args) -> int:
    if args.field or args.level is not None:
        f, D = _input_field(args)
        mask = f.mask if args.level is None else f.mask & (f.values > args.level)
        grid, dom_mask = f.grid, f.mask
    else:
        D = _domain(args)
        grid, dom_mask, mask = D.grid, D.mask, D.mask
    beta = parse_exponent(args.beta, grid, dom_mask, D)
    est = dyadic_content(mask, beta) if args.method == "dyadic" else greedy_content(mask, beta)
    cov = est.cover
    header = [f"c{i + 1}" for i in range(grid.dim)] + ["radius", "beta", "term"]
    rows = np.column_stack([cov.centers, cov.radii, cov.betas, cov.terms]).tolist()
    _emit(args, "content", est.to_dict(), header, rows)
    return 0


def cmd_norm(args) -> int:
    f, D = _input_field(args)
    p = parse_exponent(args.p, f.grid, f.mask, D)
    res = luxemburg_norm(f, p)
    summary = {"p": args.p, "norm": res.value, "iterations": res.iterations,
               "residual": res.residual, "modular": modular(f, p)}
    _emit(args, "norm", summary, ["norm", "modular"], [[res.value, summary["modular"]]])
    return 0


def cmd_chain(args) -> int:
    D = _domain(args)
    x = np.asarray(args.point, dtype=float)
    if x.shape != (D.grid.dim,):
        raise ValueError(f"--point needs {D.grid.dim} coordinates")
    ch = build_chain(D, x, through_base=args.through_base)
    rep = chain_check(ch, D)
    summary = {"chain": ch.to_dict(), "report": rep.to_dict(timing=False)}
    header = [f"c{i + 1}" for i in range(D.grid.dim)] + ["radius"]
    rows = np.column_stack([ch.centers, ch.radii]).tolist() if len(ch) else []
    _emit(args, "chain", summary, header, rows)
    return 0 if rep.passed else 1


def cmd_domain(args) -> int:
    D = _domain(args, args.kind)
    if args.out is not None:
        D.save(args.out, binary=False)
    else:
        print(json.dumps(_plain(D.manifest()), indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    if args.config:
        cfg = load_config(args.config, args.experiment)
        if cfg["experiment"]["id"] != args.experiment:
            raise ConfigError(f"config names experiment {cfg['experiment']['id']!r}, "
                              f"not {args.experiment!r}")
    else:
        cfg = defaults(args.experiment)
    if args.resolution is not None:
        cfg["experiment"]["resolution"] = args.resolution
    if args.seed is not None:
        cfg["experiment"]["seed"] = args.seed
    out = args.out or "."
    rep = run_experiment(cfg, out)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{args.experiment}: {status} ({sum(c.passed for c in rep.checks)}/{len(rep.checks)} checks)"
          f" -> {Path(out) / (args.experiment + '.json')}")
    for c in rep.checks:
        if not c.passed:
            print(f"  failed {c.name}: value={c.value} bound={c.bound} ({c.detail})")
    return 0 if rep.passed else 1


COMMANDS = {"potential": cmd_potential, "maximal": cmd_maximal, "content": cmd_content,
            "norm": cmd_norm, "chain": cmd_chain, "domain": cmd_domain, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # output piped into a reader that closed early
        sys.stderr.close()
        return 0
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"varriesz {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
