"""Command-line harness: ``nlqc <group> <action> [options]``.

Every command produces report rows with the frozen schema
experiment,param_json,value,reference,citation,pass,runtime_s.  A row with
a reference passes iff |value - reference| <= tol; rows without one carry
their own check (an inequality or a flag) in ``pass``.

Options may also come from a flat ``key = value`` config file given with
``--config``; command-line flags override file values, which override the
built-in defaults.  Exit status: 0 all rows pass, 1 some row fails or a
computation hits the dimension cap, 2 usage error.
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import bounds, cds, gardenhose, protocols, qcore

COS2 = float(np.cos(np.pi / 8) ** 2)


class UsageError(Exception):
    pass


@dataclass
class Row:
    experiment: str
    params: dict
    value: float
    reference: float = None
    citation: str = ""
    tol: float = 1e-9
    passed: bool = None
    runtime: float = None

    def __post_init__(self):
        if self.passed is None:
            if self.reference is None:
                raise ValueError("a row without a reference needs an explicit pass flag")
            self.passed = bool(abs(self.value - self.reference) <= self.tol)
        self.passed = bool(self.passed)


FIELDS = ["experiment", "param_json", "value", "reference", "citation", "pass", "runtime_s"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v)}")


def report_text(rows, fmt="csv", timing=False):
    """Serialize rows; runtimes are written only when ``timing`` is set so that reports are reproducible."""
    records = [
        {
            "experiment": r.experiment,
            "param_json": json.dumps(r.params, sort_keys=True, default=_jsonable),
            "value": r.value,
            "reference": r.reference,
            "citation": r.citation,
            "pass": r.passed,
            "runtime_s": round(r.runtime, 3) if timing and r.runtime is not None else None,
        }
        for r in rows
    ]
    if fmt == "json":
        return json.dumps(records, indent=1, default=_jsonable) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for rec in records:
        w.writerow([rec["experiment"], rec["param_json"]] + [_fmt(rec[k]) for k in FIELDS[2:4]]
                   + [rec["citation"], _fmt(rec["pass"]), _fmt(rec["runtime_s"])])
    return buf.getvalue()


# ---------------------------------------------------------------- config

CONFIG_KEYS = {
    "function": str, "n": int, "gate": str, "N": int, "d": int, "delta": float, "gamma": float,
    "eps": float, "samples": int, "seed": int, "tol": float, "restarts": int, "formula": str,
    "x": int, "y": int, "step": str, "out": str, "format": str, "protocol": str, "timing": bool,
    "exhaustive": bool,
}

DEFAULTS = {
    "function": "AND", "n": 1, "gate": "CNOT", "N": 4, "d": 2, "delta": 0.0, "gamma": 0.0, "eps": 0.0,
    "samples": 2000, "seed": None, "tol": None, "restarts": 64, "formula": None, "x": 0, "y": 0,
    "step": "all", "out": None, "format": None, "protocol": None, "timing": False, "exhaustive": False,
}


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment.  Unknown keys are rejected."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            kind = CONFIG_KEYS[key]
            try:
                out[key] = _parse_bool(value) if kind is bool else kind(value)
            except ValueError as e:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {e}") from None
    return out


def resolve(args):
    """Merge defaults, config file and flags (flags win)."""
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(read_config(args.config))
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            opts[key] = v
    return opts


def load_function(name, n):
    """Built-in name or path to a CSV truth table."""
    if os.path.exists(name):
        try:
            return gardenhose.BooleanFunctionTable.from_csv(name)
        except (ValueError, csv.Error) as e:
            raise UsageError(f"malformed truth table {name}: {e}") from None
    try:
        return gardenhose.builtin(name, n)
    except KeyError as e:
        raise UsageError(str(e.args[0])) from None


def _need_seed(opts, what):
    if opts["seed"] is None:
        raise UsageError(f"{what} is stochastic: pass --seed")
    return opts["seed"]


def _tol(opts, default):
    return default if opts["tol"] is None else opts["tol"]


def _workers():
    try:
        return max(1, int(os.environ.get("NLQC_THREADS", "1")))
    except ValueError:
        raise UsageError("NLQC_THREADS must be an integer") from None


# ---------------------------------------------------------------- simulate


def sim_routing(opts):
    p = protocols.routing_protocol()
    ident = qcore.identity_channel((2,))
    tol = _tol(opts, 1e-9)
    return [
        Row("simulate:routing", {"b": b}, protocols.residual(p, 0, b, ident, ("R",) if b else ("L",)), 0.0, "exact", tol)
        for b in (0, 1)
    ]


def sim_bb84(opts):
    p = protocols.bb84_measure_protocol()
    tol = _tol(opts, 1e-9)
    return [
        Row("simulate:bb84", {"x": x, "q": q}, protocols.residual(p, x, q, protocols.bb84_target(q), ("L", "R")),
            0.0, "exact", tol)
        for x in (0, 1) for q in (0, 1)
    ]


CLIFFORDS = {"CNOT": qcore.CNOT, "CZ": qcore.CZ, "SWAP": qcore.SWAP}


def sim_clifford(opts):
    name = opts["gate"]
    if name.lower() == "random":
        c = protocols.random_clifford(2, np.random.default_rng(_need_seed(opts, "a random Clifford")))
    elif name in CLIFFORDS:
        c = CLIFFORDS[name]
    else:
        raise UsageError(f"Clifford gate must be one of {sorted(CLIFFORDS)} or 'random'")
    p = protocols.clifford_nlqc(c)
    r = protocols.residual(p, 0, 0, qcore.unitary_channel(c, (2, 2)), ("L", "R"))
    return [Row("simulate:clifford", {"gate": name, "seed": opts["seed"]}, r, 0.0, "exact", _tol(opts, 1e-9))]


def sim_portteleport(opts):
    d, N = opts["d"], opts["N"]
    fe = protocols.port_teleport_fidelity(d, N)
    floor = 1 - (d * d - 1) / N
    rows = [Row("simulate:portteleport:fidelity", {"d": d, "N": N, "floor": floor}, fe, None, "closed-form floor",
                passed=fe >= floor - 1e-12)]
    if d ** (2 * N + 2) <= 2**14:
        brute = protocols.port_teleport_fidelity(d, N, "simulate")
        rows.append(Row("simulate:portteleport:brute", {"d": d, "N": N}, abs(fe - brute), 0.0, "exact",
                        _tol(opts, 1e-9)))
    return rows


def sim_reduction(opts):
    f = load_function(opts["function"], opts["n"])
    steps = protocols.REDUCTION_STEPS if opts["step"] == "all" else [opts["step"]]
    rows = []
    for step in steps:
        if step not in protocols.REDUCTION_STEPS:
            raise UsageError(f"unknown step {step!r}; choose from {list(protocols.REDUCTION_STEPS)}")
        res = protocols.reduction_residuals(step, f)
        rows.append(Row("simulate:reduction", {"step": step, "function": f.name, "n": f.n},
                        max(res.values()), 0.0, "exact", _tol(opts, 1e-9)))
    return rows


# ---------------------------------------------------------------- garden hose


def _formula(opts):
    if not opts["formula"]:
        raise UsageError("--formula is required")
    try:
        return gardenhose.parse_formula(opts["formula"])
    except ValueError as e:
        raise UsageError(f"bad formula: {e}") from None


def gh_compile(opts):
    node = _formula(opts)
    plan = gardenhose.compile_formula(node)
    n = node.n_bits()
    wrong = sum(plan.evaluate(x, y) != node.evaluate(x, y) for x in range(2**n) for y in range(2**n))
    return [
        Row("gh:compile:cost", {"formula": str(node)}, plan.cost, node.leaves(), "leaf count", 0),
        Row("gh:compile:errors", {"formula": str(node)}, wrong, 0, "exhaustive", 0),
    ]


def gh_eval(opts):
    node = _formula(opts)
    plan = gardenhose.compile_formula(node)
    n = node.n_bits()
    pairs = [(x, y) for x in range(2**n) for y in range(2**n)] if opts["exhaustive"] else [(opts["x"], opts["y"])]
    return [Row("gh:eval", {"formula": str(node), "x": x, "y": y}, plan.evaluate(x, y), node.evaluate(x, y),
                "formula value", 0) for x, y in pairs]


def gh_universal(opts):
    f = load_function(opts["function"], opts["n"])
    p = gardenhose.universal_program(f)
    wrong = sum(gardenhose.compute(p, x, y) != f.value(x, y) for x, y in f.inputs())
    return [Row("gh:universal", {"function": f.name, "n": f.n, "pipes": p.pipe_count}, wrong, 0, "exhaustive", 0)]


def gh_xor(opts):
    names = opts["function"].split(",")
    fs = [load_function(nm, opts["n"]) for nm in names]
    progs = [gardenhose.standard_form(gardenhose.universal_program(f)) for f in fs]
    p = gardenhose.xor_compose(progs)
    wrong = sum(gardenhose.compute(p, x, y) != int(sum(f.value(x, y) for f in fs) % 2) for x, y in fs[0].inputs())
    budget = 4 * sum(q.pipe_count for q in progs)
    return [
        Row("gh:xor:errors", {"functions": names, "n": opts["n"]}, wrong, 0, "exhaustive", 0),
        Row("gh:xor:pipes", {"functions": names, "budget": budget}, p.pipe_count, None, "pipe budget",
            passed=p.pipe_count <= budget),
    ]


def gh_tdepth(opts):
    c = gardenhose.tdepth_cost(opts["n"], opts["d"])
    return [Row("gh:tdepth-cost", {"n": c.n, "d": c.d, "K": c.K, "layer": i, "gh_g": g, "gh_h": h}, t, None,
                "recursion", passed=True) for i, (t, g, h) in enumerate(zip(c.t, c.gh_g, c.gh_h))]


def gh_sgate(opts):
    f = load_function(opts["function"], opts["n"])
    prog = _program_for(f)
    rep = gardenhose.simulate_conditional_s_correction(prog)
    return [Row("gh:sgate-sim", {"function": f.name, "branches": rep["branches"]}, rep["branches"] - rep["verified"],
                0, "exhaustive", 0)]


def _program_for(f):
    for prog in (gardenhose.and_program(f.n), gardenhose.or_program(f.n)):
        if gardenhose.computes(prog, f):
            return prog
    return gardenhose.universal_program(f)


# ---------------------------------------------------------------- CDS


def _cds_for(f):
    if f.name == "AND" and f.n == 1:
        return cds.and_cds()
    return cds.gh_to_cds(_program_for(f))


def _cds_rows(tag, p, tol):
    eps, delta = cds.check_cds(p)
    params = {"protocol": p.name, "function": p.f.name, "n": p.f.n}
    return [Row(f"{tag}:epsilon", params, eps, 0.0, "exact", tol), Row(f"{tag}:delta", params, delta, 0.0, "exact", tol)]


def cds_run(opts):
    f = load_function(opts["function"], opts["n"])
    return _cds_rows("cds:run", _cds_for(f), _tol(opts, 1e-12))


def cds_check(opts):
    if not opts["protocol"]:
        raise UsageError("--protocol FILE.json is required")
    try:
        with open(opts["protocol"]) as fh:
            p = cds.CdsProtocol.from_json(fh.read())
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"cannot read CDS protocol: {e}") from None
    return _cds_rows("cds:check", p, _tol(opts, 1e-12))


def _lifted(opts):
    f = load_function(opts["function"], opts["n"])
    return f, cds.cds_to_cdqs(cds.amplify_two_bit(_cds_for(f)))


def cds_lift(opts):
    f, q = _lifted(opts)
    tol = _tol(opts, 1e-8)
    eps, delta = cds.check_cdqs(q)
    params = {"function": f.name, "n": f.n}
    return [Row("cds:lift:epsilon", params, eps, 0.0, "exact", tol),
            Row("cds:lift:delta", params, delta, 0.0, "exact", tol)]


def cds_roundtrip(opts):
    f, q = _lifted(opts)
    tol = _tol(opts, 1e-8)
    fr = cds.cdqs_to_frouting(q)
    res = max(cds.routing_residuals(fr, f).values())
    back = cds.frouting_to_cdqs(fr, f)
    eps, delta = cds.check_cdqs(back)
    params = {"function": f.name, "n": f.n}
    return [Row("cds:roundtrip:routing", params, res, 0.0, "exact", tol),
            Row("cds:roundtrip:epsilon", params, eps, 0.0, "exact", tol),
            Row("cds:roundtrip:delta", params, delta, 0.0, "exact", tol)]


# ---------------------------------------------------------------- bounds


def _gate(opts):
    name = opts["gate"]
    if name not in bounds.GATES:
        raise UsageError(f"unknown gate {name!r}; choose from {sorted(bounds.GATES)}")
    return name, bounds.GATES[name]


def bounds_cc(opts):
    name, u = _gate(opts)
    seed = 0 if opts["seed"] is None else opts["seed"]
    r = bounds.controllable_correlation(u, restarts=opts["restarts"], seed=seed)
    params = {"gate": name, "lambda1": r.lambda1, "lambda2": r.lambda2, "ref_state": r.reference,
              "restarts": opts["restarts"], "seed": seed}
    if name in bounds.TABLE:
        return [Row("bounds:cc", params, r.bound, bounds.TABLE[name][1], "gate table", _tol(opts, 0.01))]
    return [Row("bounds:cc", params, r.bound, None, "", passed=r.bound >= 0)]


def bounds_ce(opts):
    name, u = _gate(opts)
    seed = 0 if opts["seed"] is None else opts["seed"]
    value, _, _, lo = bounds.controllable_entanglement(u, restarts=opts["restarts"], seed=seed)
    params = {"gate": name, "min_ef": lo, "restarts": opts["restarts"], "seed": seed}
    if name in bounds.TABLE:
        ref = bounds.TABLE[name][0]
        tol = _tol(opts, 0.005 if 0 < ref < 1 else 1e-3)
        return [Row("bounds:ce", params, value, ref, "gate table", tol)]
    return [Row("bounds:ce", params, value, None, "", passed=value >= 0)]


def bounds_table(opts):
    seed = 0 if opts["seed"] is None else opts["seed"]
    rows = []
    for name, (ce_ref, cc_ref, tags) in bounds.TABLE.items():
        cc = bounds.controllable_correlation(bounds.GATES[name], restarts=opts["restarts"], seed=seed)
        ce = bounds.controllable_entanglement(bounds.GATES[name], restarts=opts["restarts"], seed=seed)[0]
        ce_tol = 0.005 if 0 < ce_ref < 1 else 1e-3
        ok = abs(cc.bound - cc_ref) <= 0.01 and abs(ce - ce_ref) <= ce_tol
        rows.append(Row("bounds:table", {"gate": name, "ce": ce, "ce_reference": ce_ref, "ref_state": cc.reference,
                                         "table_ref_states": list(tags)},
                        cc.bound, cc_ref, "gate table", 0.01, passed=ok))
    rows.append(_histogram_mean_row(opts, min(opts["samples"], 2000) if opts["samples"] else 0))
    return rows


def _histogram_mean_row(opts, samples, values_out=None):
    seed = 0 if opts["seed"] is None else opts["seed"]
    h = bounds.cc_histogram(samples, seed=seed, workers=_workers())
    if values_out is not None:
        values_out.extend(h["values"])
    return Row("bounds:histogram:mean", {"gate": "random", "samples": samples, "seed": seed}, h["mean"], 0.230,
               "histogram mean", _tol(opts, 0.01))


def bounds_histogram(opts):
    seed = _need_seed(opts, "the histogram")
    values = []
    mean = _histogram_mean_row(opts, opts["samples"], values)
    rows = [Row("bounds:histogram:sample", {"index": i, "seed": seed}, v, None, "", passed=v >= 0)
            for i, v in enumerate(values)]
    return rows + [mean]


def bounds_rank(opts):
    f = load_function(opts["function"], opts["n"])
    p = gardenhose.garden_hose_routing(f)
    value, rank, g = bounds.rank_bound(p, f)
    pattern = bool(np.array_equal(g > 1e-9, f.matrix() != 0))
    ref = f.n / 4 if f.name == "EQ" else None
    params = {"function": f.name, "n": f.n, "rank": rank}
    rows = [Row("bounds:rank:zero-pattern", params, int(pattern), 1, "structure", 0)]
    if ref is None:
        rows.append(Row("bounds:rank", params, value, None, "", passed=value >= 0))
    else:
        rows.append(Row("bounds:rank", params, value, ref, "n/4 for equality", 1e-9))
    return rows


def bounds_nrank(opts):
    f = load_function(opts["function"], opts["n"])
    cert = bounds.nrank_certificate(f)
    params = {"function": f.name, "n": f.n, "method": cert["method"]}
    if f.name in ("EQ", "GT", "DISJ"):
        return [Row("bounds:nrank", params, cert["lower"], 2**f.n, "full rank", 0)]
    return [Row("bounds:nrank", params, cert["lower"], None, "", passed=cert["lower"] >= 1)]


def bounds_moe(opts):
    n, delta = opts["n"], opts["delta"]
    tol = _tol(opts, 1e-9)
    beta_q = 2 ** qcore.binary_entropy(delta) * COS2
    return [
        Row("moe:breidbart", {}, bounds.moe_breidbart(), COS2, "cos^2(pi/8)", tol),
        Row("moe:bound", {"n": n, "delta": delta}, bounds.moe_bound(n, delta), beta_q**n, "closed form", tol),
        Row("moe:product", {}, bounds.product_measure_bound(), 0.89, "approximately 0.89", 0.005),
    ]


def moe_breidbart(opts):
    return bounds_moe(opts)[:1]


def bounds_robustness(opts):
    v = bounds.robustness_bound(opts["n"], opts["delta"], opts["gamma"])
    params = {"n": opts["n"], "delta": opts["delta"], "gamma": opts["gamma"], "vacuous": v.vacuous}
    return [Row("bounds:robustness", params, v.value, None, "closed form", passed=not v.vacuous)]


def bounds_relent(opts):
    v = bounds.rel_entropy_bound(opts["n"], opts["delta"], opts["eps"])
    params = {"n": opts["n"], "delta": opts["delta"], "eps": opts["eps"], "vacuous": v.vacuous}
    return [Row("bounds:relent", params, v.value, None, "closed form", passed=not v.vacuous)]


# ---------------------------------------------------------------- verify


def verify(suite, opts=None):
    """Run the fast suite (exact checks and closed forms), plus optimizers for 'full'."""
    base = dict(DEFAULTS)
    base.update(opts or {})
    base["tol"] = None

    def with_(**kw):
        o = dict(base)
        o.update(kw)
        return o

    rows = []
    rows += sim_routing(base) + sim_bb84(base)
    for g in ("CNOT", "CZ", "SWAP"):
        rows += sim_clifford(with_(gate=g))
    rows += sim_clifford(with_(gate="random", seed=0 if base["seed"] is None else base["seed"]))
    rows += sim_portteleport(with_(d=2, N=4))
    rows += sim_reduction(with_(function="AND", n=1, step="all"))
    rows += gh_eval(with_(formula="AND(x0,y0)", exhaustive=True))
    for n in (1, 2):
        rows += gh_universal(with_(function="EQ", n=n)) + gh_universal(with_(function="GT", n=n))
    for name in ("AND", "OR", "EQ"):
        rows += cds_run(with_(function=name, n=1))
    rows += cds_lift(with_(function="AND", n=1)) + cds_roundtrip(with_(function="AND", n=1))
    rows += bounds_rank(with_(function="EQ", n=1))
    for name in ("EQ", "GT", "DISJ"):
        rows += bounds_nrank(with_(function=name, n=3))
    rows += bounds_moe(with_(n=1, delta=0.0))
    rows += bounds_robustness(with_(n=100, delta=0.0, gamma=0.0))
    rows += _gate_sanity()
    if suite == "full":
        rows += bounds_table(with_(samples=0))[:-1]
        rows += bounds_histogram(with_(samples=2000, seed=0 if base["seed"] is None else base["seed"]))[-1:]
    return rows


def _gate_sanity():
    rows = []
    for name, u in bounds.GATES.items():
        err = float(np.max(np.abs(u.conj().T @ u - np.eye(4))))
        rows.append(Row("verify:gate-unitary", {"gate": name}, err, 0.0, "unitarity", 1e-12))
    u = bounds.oriented(bounds.GATES["CNOT"])
    z, m = np.diag([1.0, 0.0]).astype(complex), np.eye(2) / 2
    l1, l2 = bounds.cc_lambdas(u, bounds.RHO_CC, z, m)
    rows.append(Row("verify:cnot-witness:lambda1", {}, l1, 1.0, "CNOT witness", 1e-9))
    rows.append(Row("verify:cnot-witness:lambda2", {}, l2, 0.0, "CNOT witness", 1e-9))
    return rows


def verify_fast(opts):
    return verify("fast", opts)


def verify_full(opts):
    return verify("full", opts)


# ---------------------------------------------------------------- entry point

COMMANDS = {
    "simulate": {"routing": sim_routing, "bb84": sim_bb84, "clifford": sim_clifford,
                 "portteleport": sim_portteleport, "reduction": sim_reduction},
    "gh": {"compile": gh_compile, "eval": gh_eval, "universal": gh_universal, "xor": gh_xor,
           "tdepth-cost": gh_tdepth, "sgate-sim": gh_sgate},
    "cds": {"run": cds_run, "check": cds_check, "lift": cds_lift, "roundtrip": cds_roundtrip},
    "bounds": {"cc": bounds_cc, "ce": bounds_ce, "table": bounds_table, "histogram": bounds_histogram,
               "rank": bounds_rank, "nrank": bounds_nrank, "moe": bounds_moe, "robustness": bounds_robustness,
               "relent": bounds_relent},
    "moe": {"breidbart": moe_breidbart, "bounds": bounds_moe},
    "verify": {"fast": verify_fast, "full": verify_full},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="nlqc", description="Non-local quantum computation experiments.")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    for group, actions in COMMANDS.items():
        gp = groups.add_parser(group)
        sub = gp.add_subparsers(dest="action", required=True, parser_class=_Parser)
        for action in actions:
            ap = sub.add_parser(action)
            _add_options(ap)
    return parser


def _add_options(ap):
    ap.add_argument("--config", help="flat key = value file; flags override it")
    ap.add_argument("--function", help="built-in name (EQ, GT, DISJ, IP, AND, OR, MAJ3) or CSV truth table")
    ap.add_argument("--n", type=int)
    ap.add_argument("--gate")
    ap.add_argument("--N", type=int, dest="N")
    ap.add_argument("--d", type=int)
    ap.add_argument("--delta", type=float)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--restarts", type=int)
    ap.add_argument("--formula")
    ap.add_argument("--x", type=int)
    ap.add_argument("--y", type=int)
    ap.add_argument("--step")
    ap.add_argument("--protocol", help="CDS protocol JSON file")
    ap.add_argument("--exhaustive", action="store_true", default=None)
    ap.add_argument("--timing", action="store_true", default=None, help="record runtimes in the report")
    ap.add_argument("--out", help="report path; stdout when omitted")
    ap.add_argument("--format", choices=("csv", "json"))


def run(group, action, opts):
    """Dispatch one command; returns its rows, each stamped with the command runtime."""
    t0 = time.perf_counter()
    rows = COMMANDS[group][action](opts)
    elapsed = time.perf_counter() - t0
    for r in rows:
        r.runtime = elapsed
    return rows


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        opts = resolve(args)
        rows = run(args.group, args.action, opts)
    except UsageError as e:
        print(f"nlqc: {e}", file=sys.stderr)
        return 2
    except qcore.DimensionCapError as e:
        print(f"nlqc: dimension cap exceeded: {e}", file=sys.stderr)
        return 1
    fmt = opts["format"] or ("json" if (opts["out"] or "").endswith(".json") else "csv")
    text = report_text(rows, fmt, timing=opts["timing"])
    if opts["out"]:
        with open(opts["out"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} rows pass", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
