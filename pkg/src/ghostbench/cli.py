"""``ghostbench`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bandop, certify, ghost_pipeline as gp, report
from .coarse_space import MetricError, box_from_json, box_to_json, geometry_profile
from .generators import GenerationError, generate_sequence
from .spectral import DegreeCapReached, SizeCapExceeded, SpectrumOutsideDomain

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_box(path: str):
    return box_from_json(_load_json(path))


def _load_op(args):
    payload = _load_json(args.op)
    box_path = args.box or payload.get("space")
    if not box_path:
        raise ValueError("operator file has no space reference; pass --box")
    box = _load_box(box_path)
    return bandop.operator_from_json(payload, box), box, box_path


def _write_op(op, box_path: str, out: str | None) -> None:
    _emit(report.dumps(bandop.operator_to_json(op, box_path)), out)


# -- handlers -------------------------------------------------------------------


def cmd_gen(args) -> None:
    box = generate_sequence(args.family, args.n, args.seed, d=args.d, m=args.m)
    _emit(report.dumps(box_to_json(box)), args.out)


def cmd_space(args) -> None:
    box = _load_box(args.box)
    if args.action == "build":
        payload = {
            "blocks": [
                {"block": k + 1, "n": b.n, "diameter": b.diameter(), "connected": b.is_connected(),
                 "offset": box.offsets[k]}
                for k, b in enumerate(box.blocks)
            ],
            "n": box.n,
            "separation_ok": box.separation_holds(),
        }
        _emit(report.dumps(payload), args.out)
    else:
        prof = geometry_profile(box.realized, args.radii)
        _emit(report.csv_text(prof.as_rows()), args.out)


def cmd_op(args) -> None:
    if args.action == "laplacian":
        box = _load_box(args.box)
        _write_op(bandop.laplacian(box, args.R), args.box, args.out)
        return
    op, box, box_path = _load_op(args)
    if args.action == "norm":
        lo, hi = bandop.spectral_bounds(op)
        _emit(report.dumps({"norm": max(abs(lo), abs(hi)), "lambda_min": lo, "lambda_max": hi,
                            "propagation": op.propagation}), args.out)
    else:
        _write_op(bandop.truncate(op, args.R), box_path, args.out)


def cmd_certify(args) -> None:
    if args.action == "we":
        box = _load_box(args.box)
        rep = certify.weak_expander_constants(box, args.R, args.S)
        _emit(report.csv_text(rep.rows()), args.out)
        return
    op, box, _ = _load_op(args)
    if args.action == "onl":
        prof = certify.localization_profile(op, args.S)
        _emit(report.csv_text(prof.rows()), args.out)
        if args.plot:
            report.plot_localization(Path(args.plot), prof)
    elif args.action == "decay":
        _emit(report.csv_text(certify.ghost_decay(op, box).rows), args.out)
    else:
        prof = certify.roe_membership_profile(op, args.radii)
        _emit(report.csv_text(prof.rows()), args.out)


def cmd_ghost(args) -> None:
    if args.action == "select":
        op, box, box_path = _load_op(args)
        groups = [box.block_indices(k) for k in range(len(box))]
        _write_op(gp.block_select(op, groups, args.indices), box_path, args.out)
        return
    box = _load_box(args.box)
    if args.action == "gap":
        kappa = report.ball_gap(box, args.R, 2.0) if args.kappa is None else args.kappa
        res = gp.build_gap_ghost(box, args.R, kappa, args.eps)
        ledger, op = res.ledger, res.operator
        meta = gp.filter_log(res.filter, res.approx)
    else:
        provider = lambda S: gp.localized_witness_provider(box, args.R, S)  # noqa: E731
        c = args.c if args.c is not None else provider(1.0).c
        co = gp.onl_block_construction(provider, box, args.count, c, args.R)
        res = gp.build_block_ghost(co, args.eps)
        ledger, op = res.ledger, res.operator
        meta = gp.filter_log(res.filter, res.approx)
    if args.report:
        Path(args.report).write_text(report.csv_text(ledger, report.DECAY_COLUMNS))
    if args.out:
        _write_op(op, args.box, args.out)
    sys.stdout.write(report.dumps(meta))


def cmd_run(args) -> None:
    cfg = report.ExperimentConfig.from_dict(_load_json(args.config))
    if args.out_dir:
        cfg.out_dir = args.out_dir
    bundle = report.run(cfg)
    sys.stdout.write(report.dumps({k: v for k, v in bundle.items() if k != "summary"}))


def cmd_compare(args) -> None:
    _emit(report.dumps(report.compare(args.a, args.b)), args.out)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ghostbench", description="Box spaces, ghost operators and their certificates.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a box space file")
    g.add_argument("--family", required=True)
    g.add_argument("--n", type=_ints, required=True, help="comma-separated sizes (primes for cayley_sl2)")
    g.add_argument("--d", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("space", help="inspect a box space file")
    s.add_argument("action", choices=["build", "profile"])
    s.add_argument("--box", required=True)
    s.add_argument("--radii", type=_floats, default=[1.0, 2.0, 4.0])
    s.add_argument("--out")
    s.set_defaults(func=cmd_space)

    o = sub.add_parser("op", help="operators")
    o.add_argument("action", choices=["laplacian", "norm", "truncate"])
    o.add_argument("--box")
    o.add_argument("--op")
    o.add_argument("--R", type=float, default=1.0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_op)

    c = sub.add_parser("certify", help="certificates and profiles")
    c.add_argument("action", choices=["we", "onl", "decay", "roe"])
    c.add_argument("--box")
    c.add_argument("--op")
    c.add_argument("--R", type=float, default=1.0)
    c.add_argument("--S", type=_floats, default=[1.0, 2.0])
    c.add_argument("--radii", type=_floats, default=[1.0, 2.0, 4.0, 8.0])
    c.add_argument("--plot", help="SVG path for the loc_S curve (onl only)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    h = sub.add_parser("ghost", help="ghost constructions")
    h.add_argument("action", choices=["gap", "blocks", "select"])
    h.add_argument("--box")
    h.add_argument("--op")
    h.add_argument("--R", type=float, default=1.0)
    h.add_argument("--kappa", type=float)
    h.add_argument("--c", type=float)
    h.add_argument("--eps", type=float, default=0.01)
    h.add_argument("--count", type=int, default=4)
    h.add_argument("--indices", type=_ints, default=[1])
    h.add_argument("--report")
    h.add_argument("--out")
    h.set_defaults(func=cmd_ghost)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out-dir")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("compare", help="diff two CSV reports")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--out")
    m.set_defaults(func=cmd_compare)
    return p


NUMERICAL = (bandop.NonConvergence, DegreeCapReached)
PRECONDITION = (ValueError, KeyError, IndexError, OSError, MetricError, GenerationError, SizeCapExceeded,
                SpectrumOutsideDomain, gp.NoWitness, gp.ProviderExhausted, json.JSONDecodeError)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NUMERICAL as exc:
        print(f"ghostbench: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PRECONDITION as exc:
        print(f"ghostbench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
