"""Command-line front-end.

Verbs:

* ``load``      solve one instance for its minimum load, all lower bounds,
                and any applicable closed form; emits JSON that doubles as a
                scheme file for ``verify``.
* ``allocate``  jointly optimize cache sizes for a capacity instance.
* ``verify``    check a scheme file against an instance: LP feasibility,
                side-information consistency, packet-level decode.
* ``sweep``     evaluate a parameter grid into figure-ready CSV (optionally
                rendering a PNG alongside it).

Exit codes: 0 success, 1 validation error, 2 infeasible/verification
failure, 3 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from multiprocessing import Pool

from . import formulas, lp, model, scheme as scheme_mod, solve
from .core import (
    CacheInstance,
    CapacityInstance,
    InstanceError,
    ResourceLimitError,
    cache_instance,
    capacity_instance,
    decimal_str,
    instance_fields_from_json,
    parse_rational,
    rational_str,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFICATION = 2
EXIT_RESOURCE = 3


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceError([f"{path}: {exc}"]) from exc


def _emit(result: dict, out_path: str | None) -> None:
    text = json.dumps(result, indent=2)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")


def _dual(value: Fraction, decimals: int) -> tuple[str, str]:
    return rational_str(value), decimal_str(value, decimals)


# ---------------------------------------------------------------------------
# load
# ---------------------------------------------------------------------------

def cmd_load(args: argparse.Namespace) -> int:
    fields = instance_fields_from_json(_read_json(args.instance))
    if "m" not in fields:
        raise InstanceError(["'load' needs an instance with a memory vector 'm'"])
    inst = cache_instance(fields["K"], fields["N"], fields["m"])
    if args.dump_lp:
        prob = solve._scheme_problem(inst, reduced=False, name="min-load")
        prob.set_objective("min", solve._load_objective(inst.K))
        print(prob.dump(), file=sys.stderr)
    lb = solve.solve_uncoded_lower_bound(inst)  # cheap; raises the K! resource limit early
    result = solve.solve_min_load(inst)
    d = args.decimals
    out = {
        "instance": {"K": inst.K, "N": inst.N, "m": [rational_str(x) for x in inst.m]},
        "load": rational_str(result.load),
        "load_decimal": decimal_str(result.load, d),
        "uncoded_lb": rational_str(lb.value),
        "uncoded_lb_decimal": decimal_str(lb.value, d),
        "amiri_lb": rational_str(formulas.bound_amiri(inst)),
        "cutset_lb": rational_str(formulas.bound_cutset(inst)),
    }
    total = sum(inst.m, Fraction(0))
    if total <= 1:
        out["closed_form"] = {"kind": "small-memory", "value": rational_str(formulas.load_small_memory(inst))}
    elif total >= inst.K - 1:
        out["closed_form"] = {"kind": "large-memory", "value": rational_str(formulas.load_large_memory(inst))}
    if inst.K == 3:
        value, region = formulas.load_three_user(inst)
        out["region"] = region.tag
        out["closed_form"] = {"kind": "three-user", "value": rational_str(value)}
    out.update(model.scheme_to_json(result.scheme))
    _emit(out, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# allocate
# ---------------------------------------------------------------------------

def cmd_allocate(args: argparse.Namespace) -> int:
    fields = instance_fields_from_json(_read_json(args.instance))
    if "C" not in fields or "m_tot" not in fields:
        raise InstanceError(["'allocate' needs an instance with 'C' and 'm_tot'"])
    inst = capacity_instance(fields["K"], fields["N"], fields["C"], fields["m_tot"])
    result = solve.solve_min_dct(inst)
    d = args.decimals
    out = {
        "instance": {
            "K": inst.K,
            "N": inst.N,
            "C": [rational_str(x) for x in inst.C],
            "m_tot": rational_str(inst.m_tot),
        },
        "theta_star": rational_str(result.dct),
        "theta_star_decimal": decimal_str(result.dct, d),
        "m_star": [rational_str(x) for x in result.m],
    }
    if inst.m_tot <= 1:
        closed = formulas.dct_closed_form(inst)
        out["q"] = closed.q
        out["maximizers"] = sorted(closed.maximizers)
        out["theta_closed_form"] = rational_str(closed.theta)
    if inst.m_tot.denominator == 1 and 1 <= inst.m_tot <= inst.K:
        unif = formulas.dct_uniform(inst)
        out["theta_uniform"] = rational_str(unif)
        out["theta_uniform_decimal"] = decimal_str(unif, d)
    out["m"] = [rational_str(x) for x in result.m]
    out.update(model.scheme_to_json(result.scheme))
    out["dct"] = rational_str(result.dct)
    _emit(out, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args: argparse.Namespace) -> int:
    fields = instance_fields_from_json(_read_json(args.instance))
    scheme_data = _read_json(args.scheme)
    if "m" in fields:
        m = fields["m"]
    elif "m" in scheme_data:
        m = [parse_rational(x) for x in scheme_data["m"]]
    else:
        raise InstanceError(["verify needs a memory vector in the instance or scheme file"])
    inst = cache_instance(fields["K"], fields["N"], m)
    sch = model.scheme_from_json(scheme_data, inst.K)

    prob = solve._scheme_problem(inst, reduced=False, name="verify")
    if args.dump_lp:
        print(prob.dump(), file=sys.stderr)
    assignment = model.scheme_assignment(sch, inst)
    violations = lp.check_feasible(prob, assignment)
    side = model.check_side_information(sch)
    out = {
        "feasible": not violations,
        "violations": [v.detail for v in violations],
        "side_information_ok": not side,
        "side_information_violations": side,
    }
    decode_ok = False
    if not violations:
        ms = scheme_mod.materialize(sch, inst)
        report = scheme_mod.simulate_and_decode(ms)
        load, dct = scheme_mod.measure(ms, fields.get("C"))
        decode_ok = report.ok
        out.update(
            {
                "decode_ok": report.ok,
                "decode_failures": report.failures(),
                "packet_count": ms.P,
                "packets_sent": report.packets_sent,
                "load": rational_str(sch.load),
                "measured_load": rational_str(load),
                "users": [
                    {"user": u.user, "file": u.file, "missing_packets": u.missing, "ok": u.ok}
                    for u in report.users
                ],
            }
        )
        if dct is not None:
            out["measured_dct"] = rational_str(dct)
    _emit(out, args.out)
    return EXIT_OK if (not violations and not side and decode_ok) else EXIT_VERIFICATION


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _grid(spec: dict) -> list[Fraction]:
    grid = spec.get("grid")
    if not isinstance(grid, dict):
        raise InstanceError(["sweep spec needs a 'grid' object with start/stop/step"])
    start = parse_rational(grid["start"])
    stop = parse_rational(grid["stop"])
    step = parse_rational(grid["step"])
    if step <= 0 or stop < start:
        raise InstanceError(["sweep grid must have step > 0 and stop >= start"])
    xs = []
    x = start
    while x <= stop:
        xs.append(x)
        x += step
    if not xs:
        raise InstanceError(["sweep grid is empty"])
    return xs


def _sweep_point(task: tuple) -> dict[str, str]:
    mode, x, K, N, rho, C = task
    if mode == "load-vs-m1":
        m = [x / rho ** k for k in range(K)]
        inst = cache_instance(K, N, m)
        row = {
            "x": rational_str(x),
            "achievable": rational_str(solve.solve_min_load(inst).load),
            "uncoded_lb": rational_str(solve.solve_uncoded_lower_bound(inst).value),
            "amiri_lb": rational_str(formulas.bound_amiri(inst)),
            "cutset_lb": rational_str(formulas.bound_cutset(inst)),
        }
        return row
    inst = capacity_instance(K, N, C, x)
    result = solve.solve_min_dct(inst)
    row = {"x": rational_str(x), "theta_star": rational_str(result.dct)}
    if mode == "dct-vs-mtot":
        if x.denominator == 1 and 1 <= x <= K:
            row["theta_unif"] = rational_str(formulas.dct_uniform(inst))
        else:
            row["theta_unif"] = ""
    else:
        for k, mk in enumerate(result.m, start=1):
            row[f"m_star_{k}"] = rational_str(mk)
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = _read_json(args.spec)
    mode = spec.get("mode")
    if mode not in ("load-vs-m1", "dct-vs-mtot", "alloc-vs-mtot"):
        raise InstanceError([f"unknown sweep mode {mode!r}"])
    K = int(spec["K"])
    N = int(spec.get("N", K))
    xs = _grid(spec)
    rho = None
    C = None
    if mode == "load-vs-m1":
        rho = parse_rational(spec.get("rho", "1"))
        if not 0 < rho <= 1:
            raise InstanceError([f"rho={rational_str(rho)} must lie in (0, 1]"])
        kept = [x for x in xs if x / rho ** (K - 1) <= 1]
        if len(kept) < len(xs):
            print(
                f"sweep: dropping {len(xs) - len(kept)} grid points where the largest memory exceeds 1",
                file=sys.stderr,
            )
        xs = kept
        if not xs:
            raise InstanceError(["sweep grid is empty after removing infeasible points"])
        header = ["x", "achievable", "uncoded_lb", "amiri_lb", "cutset_lb"]
    else:
        if "C" not in spec:
            raise InstanceError([f"mode {mode} needs a capacity vector 'C'"])
        C = [parse_rational(x) for x in spec["C"]]
        if mode == "dct-vs-mtot":
            header = ["x", "theta_star", "theta_unif"]
        else:
            header = ["x", "theta_star"] + [f"m_star_{k}" for k in range(1, K + 1)]

    tasks = [(mode, x, K, N, rho, C) for x in xs]
    if args.jobs > 1:
        with Pool(args.jobs) as pool:
            rows = pool.map(_sweep_point, tasks)
    else:
        rows = [_sweep_point(t) for t in tasks]

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    if args.plot:
        _render_plot(header, rows, args.plot, mode)
    return EXIT_OK


def _render_plot(header: list[str], rows: list[dict[str, str]], path: str, mode: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [float(Fraction(r["x"])) for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for col in header[1:]:
        pts = [(x, float(Fraction(r[col]))) for x, r in zip(xs, rows) if r.get(col)]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=col)
    ax.set_xlabel(header[0])
    ax.set_ylabel("value")
    ax.set_title(mode)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cachecraft", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default=None, help="also write the JSON result to this path")
        p.add_argument("--dump-lp", action="store_true", help="dump the LP rows to stderr")
        p.add_argument("--decimals", type=int, default=6, help="decimal places in renderings")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers (sweep only)")

    p_load = sub.add_parser("load", help="minimum delivery load, bounds, closed forms")
    p_load.add_argument("--instance", required=True)
    common(p_load)
    p_load.set_defaults(func=cmd_load)

    p_alloc = sub.add_parser("allocate", help="optimal cache sizes for a memory budget")
    p_alloc.add_argument("--instance", required=True)
    common(p_alloc)
    p_alloc.set_defaults(func=cmd_allocate)

    p_verify = sub.add_parser("verify", help="feasibility + packet-level decode of a scheme file")
    p_verify.add_argument("--instance", required=True)
    p_verify.add_argument("--scheme", required=True)
    common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="grid evaluation into figure-ready CSV")
    p_sweep.add_argument("--spec", required=True)
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--plot", default=None, help="also render a PNG to this path")
    p_sweep.add_argument("--dump-lp", action="store_true")
    p_sweep.add_argument("--decimals", type=int, default=6)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InstanceError, lp.LpError, formulas.RegimeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except scheme_mod.ConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION


if __name__ == "__main__":
    sys.exit(main())
