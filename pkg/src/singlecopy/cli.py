"""Batch command-line front end.

Every command writes one JSON document (or CSV table) to stdout or
``--out``. Validation problems exit with status 2 and a single JSON line on
stderr; a filter whose conclusive branch has vanishing probability exits
with status 3.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .densmat import DensityMatrix, matrix_from_json, singlet_fraction, validate_density
from .errors import SingleCopyError, VanishingOutcome
from .locc import (
    KrausChannel,
    LocalFilter,
    apply_filter_pair,
    balance_marginal,
    channel_from_dual,
    depolarizing_channel,
    identity_channel,
    random_channel,
)
from .optimize import Budget, FilterClass, fidelity_via_N, fsup_estimate
from .protocols import (
    ScdBudget,
    channel_dual_state,
    dual_marginal_error,
    ec_feasibility,
    quasidistill_sequence,
    rank_condition,
    scd_search,
    teleport_fidelity,
)
from .states import StateFamilySpec, ab_state

SIG_DIGITS = 15

CLASS_NAMES = {
    "two-way": "two_way",
    "one-way-A": "one_way_A_filters",
    "one-way-B": "one_way_B_filters",
    "deterministic": "deterministic_two_way",
}

CHANNELS = ("identity", "depolarizing", "random", "ab-dual")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(2)


def _emit_error(kind: str, message: str) -> None:
    line = json.dumps({"error": kind, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)


def round_floats(obj):
    """Round every float to 15 significant digits (round-half-even)."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if not math.isfinite(x) else float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return round_floats(float(obj))
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def _fmt(x) -> str:
    return f"{float(x):.{SIG_DIGITS}g}" if isinstance(x, (float, np.floating, Fraction)) else str(x)


def render_json(doc: dict) -> str:
    return json.dumps(round_floats(doc), indent=2) + "\n"


def render_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# -- input assembly -----------------------------------------------------------


def _read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _state_from_doc(doc: dict) -> DensityMatrix:
    if "family" in doc:
        return StateFamilySpec.from_json_dict(doc).build()
    mat, da, db = matrix_from_json(doc)
    return validate_density(mat, da, db)


def _state_from_args(args) -> DensityMatrix:
    if args.infile:
        doc = _read_json(args.infile)
        return _state_from_doc(doc["state"] if "state" in doc else doc)
    if not args.family:
        raise UsageError("give --family or --in")
    fam = args.family
    d = args.d
    if fam == "eq10-2x2":
        fam, d = "eq10", 2
    spec = {
        "max-entangled": "max_entangled", "max-entangled-m": "max_entangled_m",
        "eq10": "eq10", "permutation": "permutation", "ab": "ab_state",
        "isotropic": "isotropic", "embedded": "embedded", "random": "random",
    }
    if fam not in spec:
        raise UsageError(f"unknown family {args.family!r}")
    perm = None
    if args.perm:
        perm = tuple(int(k) for k in args.perm.split(","))
    return StateFamilySpec(
        family=spec[fam], p=args.p, d=d, m=args.m if fam == "max-entangled-m" else None,
        permutation=perm, a=args.a, b=args.b,
        F=float(Fraction(args.F)) if args.F is not None else None,
        d_new=args.d_new, rank=args.rank, seed=args.seed,
    ).build()


def _channel_from_args(args) -> KrausChannel:
    if args.infile:
        return KrausChannel.from_json_dict(_read_json(args.infile))
    kind = args.channel
    d = args.d or 2
    if kind == "identity":
        return identity_channel(d)
    if kind == "depolarizing":
        return depolarizing_channel(d, args.noise)
    if kind == "random":
        return random_channel(d, args.kraus, args.seed)
    if kind == "ab-dual":
        return channel_from_dual(balance_marginal(ab_state(args.a or 0.6, args.b or 0.8)))
    raise UsageError(f"unknown channel {kind!r}; expected one of {CHANNELS}")


def _budget(args) -> Budget:
    return Budget(restarts=args.restarts, max_iters=args.max_iters, seed=args.seed)


def _state_summary(s: DensityMatrix) -> dict:
    return {"dim_a": s.dim_a, "dim_b": s.dim_b, "rank": s.rank,
            "singlet_fraction": singlet_fraction(s)}


# -- commands -------------------------------------------------------------------


def cmd_state(args):
    s = _state_from_args(args)
    doc = _state_summary(s)
    doc["eigenvalues"] = [float(x) for x in s.eigenvalues]
    doc["matrix"] = s.to_json_dict()
    return doc


def cmd_fidelity(args):
    s = _state_from_args(args)
    F = singlet_fraction(s)
    doc = _state_summary(s)
    if args.m is not None:
        doc["m"] = args.m
        doc["m_singlet_fraction"] = singlet_fraction(s, args.m)
    doc["teleport_fidelity"] = teleport_fidelity(min(max(F, 0.0), 1.0), s.d)
    if (s.dim_a, s.dim_b) == (2, 2):
        doc["fidelity_via_N"] = fidelity_via_N(s)
    return doc


def _filter_matrix(spec, dim: int) -> np.ndarray:
    if spec is None:
        return np.eye(dim)
    if isinstance(spec, str):
        return np.diag([float(Fraction(v)) for v in spec.split(",")])
    re = np.asarray(spec["re"], dtype=float)
    return re + 1j * np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)


def cmd_filter(args):
    fa_spec, fb_spec = args.diag_a, args.diag_b
    if args.infile:
        doc = _read_json(args.infile)
        unknown = set(doc) - {"state", "filter_A", "filter_B"}
        if unknown:
            raise UsageError(f"unknown filter-input fields: {sorted(unknown)}")
        s = _state_from_doc(doc["state"])
        fa_spec, fb_spec = doc.get("filter_A"), doc.get("filter_B")
    else:
        s = _state_from_args(args)
    fa = LocalFilter("A", _filter_matrix(fa_spec, s.dim_a))
    fb = LocalFilter("B", _filter_matrix(fb_spec, s.dim_b))
    out = apply_filter_pair(s, fa, fb, args.m)
    return {"achieved_F": out.achieved_F, "success_prob": out.success_prob,
            "post_state": out.post_state.to_json_dict()}


def cmd_quasidistill(args):
    n_values = [int(v) for v in args.n.split(",")]
    rows = quasidistill_sequence(args.p, args.d or 3, n_values)
    if args.format == "json":
        return {"p": args.p, "d": args.d or 3, "rows": [
            {"n": r.n, "F_sim": r.F_simulated, "F_closed": r.F_closed_form,
             "p_sim": r.p_simulated, "p_closed": r.p_closed_form} for r in rows]}
    return render_csv(["n", "F_sim", "F_closed", "p_sim", "p_closed"],
                      [[r.n, r.F_simulated, r.F_closed_form, r.p_simulated, r.p_closed_form]
                       for r in rows])


def cmd_optimize(args):
    s = _state_from_args(args)
    if args.cls not in CLASS_NAMES:
        raise UsageError(f"unknown class {args.cls!r}; expected one of {sorted(CLASS_NAMES)}")
    rep = fsup_estimate(s, FilterClass(CLASS_NAMES[args.cls], args.m), _budget(args))
    doc = rep.to_json_dict()
    doc["budget"] = {"restarts": args.restarts, "max_iters": args.max_iters, "seed": args.seed}
    return doc


def cmd_scd(args):
    s = _state_from_args(args)
    m = args.m or s.d
    possible = rank_condition(s, m)
    doc = {"m": m, "rank": s.rank, "rank_bound": s.dim_a * s.dim_b - m * m + 1,
           "rank_condition": "possible" if possible else "impossible"}
    cert = scd_search(s, m, ScdBudget(seed=args.seed)) if possible else None
    doc["found"] = cert is not None
    if cert is not None:
        doc["certificate"] = cert.to_json_dict()
    return doc


def cmd_teleport(args):
    if args.F is None:
        raise UsageError("teleport needs --F")
    F = Fraction(args.F)
    d = args.d or 2
    f = teleport_fidelity(F, d)
    if args.format == "csv":
        return render_csv(["F", "d", "f"], [[float(F), d, float(f)]])
    return {"F": float(F), "d": d, "f": float(f), "f_exact": str(f)}


def cmd_channel(args):
    ch = _channel_from_args(args)
    dual = channel_dual_state(ch)
    return {"input_dim": ch.input_dim, "output_dim": ch.output_dim,
            "n_kraus": len(ch.kraus_ops), "dual_rank": dual.rank,
            "marginal_error": dual_marginal_error(dual),
            "dual_singlet_fraction": singlet_fraction(dual),
            "dual_state": dual.to_json_dict(), "channel": ch.to_json_dict()}


def cmd_ecfeas(args):
    ch = _channel_from_args(args)
    return ec_feasibility(ch, _budget(args)).to_json_dict()


COMMANDS = {
    "state": (cmd_state, "Build a state from a named family and print it with its spectrum."),
    "fidelity": (cmd_fidelity, "Singlet fraction F (and m-singlet fraction), teleportation "
                               "fidelity (dF+1)/(d+1), and (1+N)/4 for two qubits."),
    "filter": (cmd_filter, "Apply a conclusive local filter pair A (x) B and report the "
                           "conclusive branch: output state, success probability and F."),
    "quasidistill": (cmd_quasidistill, "Quasi-distillation sequence with effects "
                                       "A_n=diag(1/n,1,..), B_n=diag(1,1/n,..) on "
                                       "p P+ + (1-p)|01><01|: simulated vs closed-form F and P(n)."),
    "optimize": (cmd_optimize, "Estimate the best singlet fraction reachable by local filtering "
                               "(F_sup) over a filter class with random-restart Nelder-Mead."),
    "scd": (cmd_scd, "Single-copy distillability: rank condition r <= dA dB - m^2 + 1 and a search "
                     "for an m x m product projection leaving a pure Schmidt-rank-m state."),
    "teleport": (cmd_teleport, "Teleportation fidelity f = (dF+1)/(d+1) from singlet fraction F."),
    "channel": (cmd_channel, "Channel-state duality: the dual state (I (x) Lambda)(P+) of a "
                             "trace-preserving channel and its A-marginal error."),
    "ecfeas": (cmd_ecfeas, "Probabilistic error-correction feasibility of a channel, judged "
                           "from the rank and filterability of its dual state."),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="singlecopy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--p", type=float)
        sp.add_argument("--d", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--n", default="1,2,10,100", help="comma-separated step indices")
        sp.add_argument("--F", help="singlet fraction, decimal or fraction such as 2/3")
        sp.add_argument("--a", type=float)
        sp.add_argument("--b", type=float)
        sp.add_argument("--perm", help="permutation as comma-separated integers")
        sp.add_argument("--d-new", dest="d_new", type=int)
        sp.add_argument("--rank", type=int)
        sp.add_argument("--family", help="max-entangled, max-entangled-m, eq10, eq10-2x2, "
                                         "permutation, ab, isotropic, embedded, random")
        sp.add_argument("--class", dest="cls", default="two-way",
                        help="two-way, one-way-A, one-way-B, deterministic")
        sp.add_argument("--channel", default="identity", help=", ".join(CHANNELS))
        sp.add_argument("--noise", type=float, default=0.1)
        sp.add_argument("--kraus", type=int, default=3)
        sp.add_argument("--diag-a", dest="diag_a")
        sp.add_argument("--diag-b", dest="diag_b")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--restarts", type=int, default=64)
        sp.add_argument("--max-iters", dest="max_iters", type=int, default=20000)
        sp.add_argument("--format", choices=("json", "csv"),
                        default="csv" if name == "quasidistill" else "json")
        sp.add_argument("--in", dest="infile")
        sp.add_argument("--out")
    return parser


def run(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        result = func(args)
    except VanishingOutcome as exc:
        _emit_error("VanishingOutcome", f"{exc}; the conclusive branch never fires")
        return 3
    except (SingleCopyError, ValueError, KeyError, OSError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 2
    text = result if isinstance(result, str) else render_json(result)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
