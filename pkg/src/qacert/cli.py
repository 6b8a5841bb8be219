"""Command-line front end.

Exit codes: 0 the run completed (certificates may still say "fail"),
2 bad input, 3 a pipeline precondition failed, 4 precision exhausted.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from pathlib import Path

import mpmath
from mpmath import mpf

from . import __version__
from . import counterexample as ce
from . import gadget as gd
from . import geometry as geo
from . import omega as om
from . import weights as wt
from .errors import InputError, PrecisionError, PreconditionError, QacertError
from .xnum import ALLOWED_PRECISIONS, default_precision, magnitude_record, precision

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION, EXIT_PRECISION = 0, 2, 3, 4


# --- output helpers -----------------------------------------------------------


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if hasattr(o, "_mpf_"):
        return magnitude_record(o)
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialise {type(o).__name__}")


class Bundle:
    """Collects output files; every file carries the input descriptors."""

    def __init__(self, out: Path, inputs: dict):
        self.out = out
        self.inputs = inputs
        self.files: dict[str, str] = {}

    def json(self, name: str, payload: dict):
        self.files[name] = _dump_json({"inputs": self.inputs, **payload})

    def csv(self, name: str, header: list, rows: list):
        buf = io.StringIO()
        buf.write("# inputs: " + json.dumps(self.inputs, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.files[name] = buf.getvalue()

    def write(self, command: str, started: float):
        self.out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.out / name).write_text(text)
        manifest = {
            "command": command,
            "inputs": self.inputs,
            "precision_bits": mpmath.mp.prec,
            "versions": {"qacert": __version__, "mpmath": mpmath.__version__,
                         "python": platform.python_version()},
            "files": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())},
            "wall_time_seconds": round(time.time() - started, 3),
            "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        (self.out / "manifest.json").write_text(_dump_json(manifest))


def _lg(v):
    return magnitude_record(v)["log10"]


def _read_json(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _parse_number(text: str) -> mpf:
    """Accept plain numbers and powers written as 2^-20."""
    try:
        if "^" in text:
            b, e = text.split("^", 1)
            return mpf(b) ** int(e)
        return mpf(text)
    except (ValueError, TypeError) as exc:
        raise InputError(f"not a number: {text!r}") from exc


# --- commands -----------------------------------------------------------------


def cmd_seq(args) -> dict:
    if args.table:
        raw = _read_json(args.table)
        desc = {"kind": "table", "values": raw} if isinstance(raw, list) else raw
        M = wt.from_descriptor(desc, args.kmax)
    elif args.catalog:
        params = {}
        if args.delta is not None:
            params["delta"] = args.delta
        if args.s is not None:
            params["s"] = args.s
        M = wt.catalog(args.catalog, params, args.kmax)
    else:
        M = wt.parse_spec(args.spec or "log_power:1", args.kmax)
    K = M.kmax
    inputs = {"sequence": M.descriptor(), "kmax": K}
    b = Bundle(Path(args.out), inputs)
    reg = wt.check_regular(M, K)
    payload = {"regularity": reg.to_dict()}
    if M.generator is not None or K >= 17:
        qk = min(K - 1, args.qa_kmax) if M.generator is None else args.qa_kmax
        qa = wt.qa_partial_sums(M, qk)
        payload["quasianalyticity"] = qa.to_dict()
        b.csv("partial_sums.csv", ["k", "partial_sum", "log10"],
              [[k, magnitude_record(s)["decimal"], _lg(s)] for k, s in enumerate(qa.partial_sums)
               if k <= 64 or k % 64 == 0 or k == len(qa.partial_sums) - 1])
    ik = min(K - 1, 256) if M.generator is None else min(K, 256)
    payload["derivation_stability"] = wt.derivation_stability_indicator(M, ik).to_dict()
    if args.compare:
        N = wt.parse_spec(args.compare, args.kmax)
        payload["inclusion_vs"] = {"N": N.descriptor(),
                                   "indicator": wt.inclusion_indicator(M, N, min(K, N.kmax)).to_dict()}
    b.csv("sequence.csv", ["k", "M_k", "log10_M_k", "root_log10"],
          [[k, magnitude_record(M[k])["decimal"], _lg(M[k]),
            None if k == 0 else round(float(M.logs[k] / k / mpmath.log(10)), 12)] for k in range(K + 1)])
    b.json("seq_report.json", payload)
    return {"bundle": b, "summary": {
        "regular": reg.regular,
        "qa": payload.get("quasianalyticity", {}).get("growth_classification")}}


def cmd_gadget(args) -> dict:
    M = wt.parse_spec(args.M, args.kmax)
    k_pole = args.k_pole if args.k_pole is not None else max(gd.DEFAULT_K_POLE, 2 * args.jmax)
    g = gd.build_gadget(M, k_pole)
    xs = [_parse_number(t) for t in args.x.split(",")]
    inputs = {"M": M.descriptor(), "K_pole": k_pole, "jmax": args.jmax, "x": args.x}
    b = Bundle(Path(args.out), inputs)
    rows = []
    for x in [mpf(0)] + xs:
        for j in range(args.jmax + 1):
            d = gd.gadget_derivative(g, j, x)
            v = d.value.mpc
            rows.append([mpmath.nstr(x, 17), j, magnitude_record(v.real)["decimal"],
                         magnitude_record(v.imag)["decimal"], _lg(d.modulus), _lg(d.tail_bound),
                         d.audit.cancellation_loss_bits])
    b.csv("derivatives.csv", ["x", "order", "re", "im", "modulus_log10", "tail_log10", "cancellation_bits"], rows)
    rep = gd.verify_gadget_bounds(g, args.jmax, xs)
    b.json("gadget_bounds.json", rep.to_dict())
    return {"bundle": b, "summary": {"all_pass": rep.all_pass}}


def cmd_counterexample(args) -> dict:
    if args.n < 2:
        raise InputError("the construction needs n >= 2 (got n = %d)" % args.n)
    M = wt.parse_spec(args.M, args.prefix)
    N = wt.parse_spec(args.N, args.prefix)
    F = ce.build(M, N, args.n, args.kmax, K_pole=args.k_pole, finite=args.finite)
    inputs = {"counterexample": F.descriptor()}
    b = Bundle(Path(args.out), inputs)
    b.csv("centers.csv", ["k"] + [f"x{i + 1}" for i in range(args.n)],
          [[k] + [magnitude_record(v)["decimal"] for v in F.center(k)] for k in range(1, args.kmax + 1)])
    b.csv("constants.csv", ["k", "c_k", "log10_c_k", "log10_M_k", "log10_S_k"],
          [[k, magnitude_record(F.constant(k))["decimal"], _lg(F.constant(k)), _lg(M.at(k)),
            _lg(ce.offdiagonal_bound(F, k).value)] for k in range(1, args.kmax + 1)])
    cert = ce.blowup_certificate(F)
    b.json("blowup.json", cert.to_dict())
    b.csv("blowup.csv", ["k", "log10_lower", "log10_target", "log10_ratio", "log10_margin", "verdict"],
          [[r.k, _lg(r.lower), _lg(r.target), _lg(r.ratio), _lg(r.margin), "pass" if r.passed else "fail"]
           for r in cert.rows])
    b.json("nonmembership.json", ce.non_membership_witness(F))
    summary = {"blowup_all_pass": cert.all_pass}
    if not args.no_seminorm:
        rep = ce.seminorm_estimate(F, alpha_max=args.alpha_max, check_independence=not args.no_independence)
        b.json("seminorm.json", rep.to_dict())
        summary["seminorm_k0"] = rep.hypothesis["k0"]
    return {"bundle": b, "summary": summary}


def _plot(path: str) -> geo.MonomialPlot:
    return geo.plot_from_descriptor(_read_json(path))


def cmd_arc(args) -> dict:
    p = _plot(args.plot)
    n = args.n if args.n is not None else p.n
    tmin, tmax = _parse_number(args.tmin), _parse_number(args.tmax)
    if not 0 < tmin <= tmax < 1:
        raise InputError("need 0 < tmin <= tmax < 1")
    ts, t = [], tmax
    while t >= tmin * (1 - mpf(10) ** -12):
        ts.append(t)
        t /= 2
    rep = geo.arc_distance_certificate(p, geo.CANONICAL, n, ts)
    inputs = {"plot": p.descriptor(), "n": n, "tmin": args.tmin, "tmax": args.tmax}
    b = Bundle(Path(args.out), inputs)
    b.json("arc.json", rep.to_dict())
    b.csv("arc_margins.csv", ["t_log2", "margin_log10", "margin_vs_n_log10", "pass"],
          [[r["t_log2"], r["margin_log10"], r["margin_vs_n_log10"], r["pass"]] for r in rep.rows])
    return {"bundle": b, "summary": {"case": rep.case, "all_pass": rep.all_pass}}


def cmd_compose(args) -> dict:
    p = _plot(args.plot)
    M = wt.parse_spec(args.M, args.prefix)
    N = wt.parse_spec(args.N, args.prefix)
    F = ce.build(M, N, p.n, args.kmax, K_pole=args.k_pole)
    base = [_parse_number(t) for t in args.base.split(",")]
    direction = [_parse_number(t) for t in args.direction.split(",")] if args.direction else None
    rep = geo.composition_growth_check(F, p, base, direction, args.order)
    inputs = {"plot": p.descriptor(), "counterexample": F.descriptor(), "base": args.base,
              "direction": args.direction, "order": args.order}
    b = Bundle(Path(args.out), inputs)
    b.json("compose.json", rep.to_dict())
    b.csv("compose.csv", ["k", "log10_derivative", "log10_tail", "log10_fdb_bound", "pass"],
          [[r["k"], r["derivative"]["log10"], r["tail"]["log10"], r["fdb_bound"]["log10"], r["pass"]]
           for r in rep.rows])
    return {"bundle": b, "summary": {"all_pass": rep.all_pass,
                                     "tau_found": None if rep.tau_found is None else float(rep.tau_found)}}


def cmd_omega(args) -> dict:
    if args.table:
        raw = _read_json(args.table)
        w = om.omega_table(raw["samples"] if isinstance(raw, dict) else raw)
    else:
        params = {"a": args.a} if args.a is not None else {}
        w = om.omega_catalog(args.catalog or "identity", params)
    T = float(_parse_number(args.T))
    if w.t_max is not None:
        T = min(T, w.t_max)
    inputs = {"omega": w.descriptor(), "T": T}
    b = Bundle(Path(args.out), inputs)
    top = min(T, 1e6)
    grid = [10 ** (e / 4) for e in range(0, int(4 * mpmath.log10(top)) + 1)] if top > 1 else [1.0]
    rep = om.check_weight_function(w, grid)
    qa = om.qa_integral_partial(w, T)
    conj = []
    for t in (0, 0.5, 1, 2, mpmath.e, 5, 10, 50):
        cv = om.young_conjugate(w, t)
        conj.append([mpmath.nstr(mpf(t), 17), magnitude_record(cv.value)["decimal"],
                     mpmath.nstr(cv.s_star.mpf, 17), cv.at_zero, cv.at_upper_boundary])
    b.csv("conjugate.csv", ["t", "phi_star", "s_star", "at_zero", "at_upper_boundary"], conj)
    b.json("omega_report.json", {"conditions": rep.to_dict(), "qa_integral": qa.to_dict()})
    return {"bundle": b, "summary": {"qa_integral": qa.growth_classification}}


# --- parser -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qacert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qacert {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, name):
        p.add_argument("--precision", type=int, default=None,
                       help=f"working precision in bits, one of {ALLOWED_PRECISIONS}")
        p.add_argument("--out", default=os.path.join("qacert_out", name), help="output directory")

    p = sub.add_parser("seq", help="regularity, quasianalyticity and indicators of a sequence")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--catalog", choices=["constant_one", "log_power", "gevrey"])
    g.add_argument("--table", help="JSON file: list of values or a table descriptor")
    g.add_argument("--spec", help="short form such as log_power:1")
    p.add_argument("--delta", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--kmax", type=int, default=wt.DEFAULT_KMAX)
    p.add_argument("--qa-kmax", type=int, default=wt.DEFAULT_KMAX)
    p.add_argument("--compare", help="second sequence for the inclusion indicator")
    common(p, "seq")
    p.set_defaults(func=cmd_seq)

    p = sub.add_parser("gadget", help="derivative table and bound checks for one gadget")
    p.add_argument("--M", default="log_power:1")
    p.add_argument("--kmax", type=int, default=wt.DEFAULT_KMAX)
    p.add_argument("--k-pole", type=int, default=None, help="default max(64, 2*jmax)")
    p.add_argument("--jmax", type=int, default=20)
    p.add_argument("--x", default="-1,-0.1,0.1,1")
    common(p, "gadget")
    p.set_defaults(func=cmd_gadget)

    p = sub.add_parser("counterexample", help="build f and emit the certificate bundle")
    p.add_argument("--M", default="log_power:1")
    p.add_argument("--N", default="constant_one")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--prefix", type=int, default=wt.DEFAULT_KMAX, help="stored sequence prefix length")
    p.add_argument("--k-pole", type=int, default=gd.DEFAULT_K_POLE)
    p.add_argument("--finite", action="store_true", help="keep only the first kmax terms of f")
    p.add_argument("--alpha-max", type=int, default=8)
    p.add_argument("--no-seminorm", action="store_true")
    p.add_argument("--no-independence", action="store_true")
    common(p, "counterexample")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("arc", help="distance certificate between the flat arc and a plot")
    p.add_argument("--plot", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--tmin", default="2^-20")
    p.add_argument("--tmax", default="2^-3")
    common(p, "arc")
    p.set_defaults(func=cmd_arc)

    p = sub.add_parser("compose", help="growth of f composed with a polynomial plot")
    p.add_argument("--plot", required=True)
    p.add_argument("--M", default="log_power:1")
    p.add_argument("--N", default="constant_one")
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--prefix", type=int, default=wt.DEFAULT_KMAX)
    p.add_argument("--k-pole", type=int, default=gd.DEFAULT_K_POLE)
    p.add_argument("--base", default="-0.5")
    p.add_argument("--direction")
    p.add_argument("--order", type=int, default=40)
    common(p, "compose")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("omega", help="weight function conditions, conjugate table and integral")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--catalog", choices=["identity", "power", "log_damped"])
    g.add_argument("--table", help="JSON file with [[t, omega(t)], ...] samples")
    p.add_argument("--a", type=float)
    p.add_argument("--T", default="1e6")
    common(p, "omega")
    p.set_defaults(func=cmd_omega)
    return ap


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module in the traceback."""
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        stem = Path(tb.tb_frame.f_code.co_filename).stem
        if Path(tb.tb_frame.f_code.co_filename).parent.name == "qacert":
            name = stem
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        bits = args.precision if args.precision is not None else default_precision()
        if bits not in ALLOWED_PRECISIONS:
            raise InputError(f"precision must be one of {ALLOWED_PRECISIONS}")
        started = time.time()
        with precision(bits):
            result = args.func(args)
            result["bundle"].write(args.command, started)
        print(json.dumps({"command": args.command, "out": args.out, **result["summary"]}, sort_keys=True))
        return EXIT_OK
    except PrecisionError as exc:
        print(f"qacert: precision exhausted: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except PreconditionError as exc:
        print(f"qacert: precondition failed in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InputError, QacertError) as exc:
        print(f"qacert: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"qacert: certificate computation failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
