"""Acceptance criteria, one test each.  Every test prints a single PASS/FAIL line."""

import itertools
import math
import time

import numpy as np

import test_properties as props
from nlqc import bounds, cds, protocols, qcore
from nlqc import gardenhose as gh

IDENT = qcore.identity_channel((2,))


def verdict(k, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 1


def test_criterion_1_port_teleportation():
    t0 = time.time()
    fids = {N: protocols.port_teleport_fidelity(2, N) for N in (4, 8, 16, 32)}
    floor_ok = all(fe >= 1 - 3 / N for N, fe in fids.items())
    brute_gap = max(
        abs(protocols.port_teleport_fidelity(2, N, "pgm") - protocols.port_teleport_fidelity(2, N, "simulate"))
        for N in (1, 2, 3, 4)
    )
    elapsed = time.time() - t0
    ok = floor_ok and brute_gap <= 1e-9 and elapsed < 10
    verdict(1, ok, f"F_e={ {N: round(v, 6) for N, v in fids.items()} }, brute gap {brute_gap:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 2


def test_criterion_2_protocol_exactness():
    t0 = time.time()
    res = []
    p = protocols.routing_protocol()
    res += [protocols.residual(p, 0, b, IDENT, ("R",) if b else ("L",)) for b in (0, 1)]
    p = protocols.bb84_measure_protocol()
    res += [protocols.residual(p, x, q, protocols.bb84_target(q), ("L", "R")) for x, q in itertools.product((0, 1), repeat=2)]
    gates = [qcore.CNOT, qcore.CZ, qcore.SWAP, protocols.random_clifford(2, np.random.default_rng(11))]
    for g in gates:
        res.append(protocols.residual(protocols.clifford_nlqc(g), 0, 0, qcore.unitary_channel(g, (2, 2)), ("L", "R")))
    f = gh.builtin("AND")
    for step in protocols.REDUCTION_STEPS:
        res.append(max(protocols.reduction_residuals(step, f).values()))
    elapsed = time.time() - t0
    worst = max(res)
    verdict(2, worst <= 1e-9 and elapsed < 30, f"{len(res)} checks, worst residual {worst:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 3


def all_functions(n):
    for bits in itertools.product((0, 1), repeat=2 ** (2 * n)):
        yield gh.BooleanFunctionTable(n, np.reshape(bits, (2**n, 2**n)))


def test_criterion_3_garden_hose():
    t0 = time.time()
    failures = []
    for n in (1, 2):
        failures += [("universal", n) for f in all_functions(n) if not gh.computes(gh.universal_program(f), f)]
    for name in ("EQ", "GT", "DISJ", "IP", "AND", "OR"):
        f = gh.builtin(name, 3)
        if not gh.computes(gh.universal_program(f), f):
            failures.append(("universal", name))

    rng = np.random.default_rng(3)
    for _ in range(50):
        p = gh.random_program(int(rng.integers(1, 3)), int(rng.integers(1, 6)), rng)
        s = gh.standard_form(p)
        if s.pipe_count > 3 * p.pipe_count or not gh.computes(s, gh.function_of(p)):
            failures.append("standard_form")

    fs = [gh.builtin(name) for name in ("AND", "OR", "EQ")]
    progs = [gh.standard_form(gh.universal_program(f)) for f in fs]
    x = gh.xor_compose(progs)
    if x.pipe_count > 4 * sum(p.pipe_count for p in progs):
        failures.append("xor size")
    if any(gh.compute(x, a, b) != sum(f(a, b) for f in fs) % 2 for a, b in fs[0].inputs()):
        failures.append("xor value")

    for text in ("AND(x0,y0)", "OR(AND(x0,y0),NOT(AND(x1,y1)))", "AND(OR(x0,y1),OR(NOT(x1),y0))"):
        node = gh.parse_formula(text)
        if gh.compile_formula(node).cost != node.leaves():
            failures.append(("formula", text))

    for _ in range(30):
        n, m = int(rng.integers(1, 3)), int(rng.integers(1, 7))
        p = gh.random_program(n, m, rng)
        if max(gh.routing_residuals(gh.to_quantum(p), gh.function_of(p)).values()) > 1e-9:
            failures.append(("to_quantum", n, m))
    elapsed = time.time() - t0
    verdict(3, not failures and elapsed < 120, f"{len(failures)} failures, {elapsed:.1f}s")


# ---------------------------------------------------------------- 4


def test_criterion_4_cds():
    t0 = time.time()
    failures = []
    sources = [cds.and_cds()] + [
        cds.gh_to_cds(p)
        for p in (
            gh.and_program(),
            gh.or_program(),
            gh.universal_program(gh.builtin("EQ")),
            *(gh.universal_program(f) for f in all_functions(1)),
            *(gh.universal_program(gh.builtin(name, 2)) for name in ("EQ", "GT", "IP")),
        )
    ]
    for p in sources:
        if cds.check_cds(p) != (0.0, 0.0):
            failures.append(p.name)
        # the doubled randomness of n = 2 sources makes exhaustive checking of the amplified copy too slow
        if p.randomness_bits <= 4 and cds.check_cds(cds.amplify_two_bit(p)) != (0.0, 0.0):
            failures.append(f"amplified {p.name}")

    rho = qcore.random_density(2, np.random.default_rng(4))
    marg_err = 0.0
    lifted = cds.cds_to_cdqs(cds.amplify_two_bit(cds.and_cds()))
    if cds.check_cdqs(lifted)[0] > 1e-8:
        failures.append("decoding")
    for x, y in lifted.f.inputs():
        if lifted.f(x, y) == 0:
            marg = cds.referee_secret_marginal(lifted, x, y, rho)
            marg_err = max(marg_err, float(np.max(np.abs(marg - np.eye(2) / 2))))
    fr = cds.cdqs_to_frouting(lifted)
    if max(cds.routing_residuals(fr, lifted.f).values()) > 1e-8:
        failures.append("to f-routing")
    routes = [(fr, lifted.f)] + [(gh.garden_hose_routing(gh.builtin(n)), gh.builtin(n)) for n in ("AND", "OR", "EQ")]
    for route, f in routes:
        if max(cds.check_cdqs(cds.frouting_to_cdqs(route, f))) > 1e-8:
            failures.append("back to CDQS")
    elapsed = time.time() - t0
    ok = not failures and marg_err <= 1e-8 and elapsed < 120
    verdict(4, ok, f"{len(sources)} CDS checked, marginal error {marg_err:.1e}, failures {failures}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 5

CC_EXPECTED = {
    "CNOT": 0.5, "DCNOT": 0.5, "B": 0.5, "RXX": 0.5, "iSWAP": 0.5, "sqrtSWAP": 0.30, "Sycamore": 0.48,
    "Magic": 0.5, "DagwoodBumstead": 0.08, "CS": 0.30, "CT": 0.12, "ECR": 0.5, "CSX": 0.30,
}
CE_EXPECTED = {"CNOT": (1.0, 1e-3), "RXX": (1.0, 1e-3), "B": (0.601, 0.005)}


def test_criterion_5_gate_table():
    t0 = time.time()
    bad = []
    for name, cc_ref in CC_EXPECTED.items():
        u = bounds.GATES[name]
        cc = bounds.controllable_correlation(u, restarts=64).bound
        ce = bounds.controllable_entanglement(u, restarts=64)[0]
        ce_ref, ce_tol = CE_EXPECTED.get(name, (0.0, 1e-3))
        if abs(cc - cc_ref) > 0.01:
            bad.append(f"{name} CC {cc:.4f} vs {cc_ref}")
        if abs(ce - ce_ref) > ce_tol:
            bad.append(f"{name} CE {ce:.4f} vs {ce_ref}")
    elapsed = time.time() - t0
    if elapsed >= 900:
        bad.append(f"runtime {elapsed:.0f}s")
    verdict(5, not bad, f"{len(CC_EXPECTED)} gates, mismatches: {'; '.join(bad) or 'none'}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 6


def test_criterion_6_histogram():
    t0 = time.time()
    hist = bounds.cc_histogram(2000, seed=0, workers=1)
    elapsed = time.time() - t0
    prefix = bounds.cc_histogram(5, seed=0)
    deterministic = np.array_equal(prefix["values"], hist["values"][:5])
    mean = hist["mean"]
    ok = abs(mean - 0.230) <= 0.01 and deterministic and elapsed < 1200
    verdict(6, ok, f"mean {mean:.4f} vs 0.230, deterministic {deterministic}, {elapsed:.0f}s")


# ---------------------------------------------------------------- 7


def test_criterion_7_rank_bounds():
    bad = []
    for name, n in itertools.product(("EQ", "GT", "DISJ"), (1, 2, 3)):
        cert = bounds.nrank_certificate(gh.builtin(name, n))
        # independent check: real rank is a lower bound on nonnegative rank, and 2^n is an upper bound
        real_rank = np.linalg.matrix_rank(gh.builtin(name, n).matrix())
        if cert["lower"] != 2**n or real_rank != 2**n:
            bad.append(f"nrank {name}{n}")
    f = gh.builtin("EQ")
    value, rank, g = bounds.rank_bound(gh.garden_hose_routing(f), f)
    if rank != 2 or abs(value - 0.25) > 1e-9:
        bad.append(f"EQ rank {rank} bound {value}")
    for name, n in itertools.product(("AND", "OR", "EQ"), (1, 2)):
        f = gh.builtin(name, n)
        g = bounds.structure_matrix(gh.garden_hose_routing(f), f)
        if not np.array_equal(g > 1e-9, f.matrix() == 1):
            bad.append(f"pattern {name}{n}")
    verdict(7, not bad, f"failures: {bad or 'none'}")


# ---------------------------------------------------------------- 8


def h(p):
    return 0.0 if p in (0, 1) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def test_criterion_8_monogamy():
    beta = math.cos(math.pi / 8) ** 2
    bad = []
    if abs(bounds.moe_breidbart() - beta) > 1e-9:
        bad.append("breidbart")
    if abs(bounds.product_measure_bound() - 0.890) > 0.005:
        bad.append("product bound")
    for n, delta in ((1, 0.0), (5, 0.02), (20, 0.05)):
        hand = (2 ** h(delta) * beta) ** n
        if abs(bounds.moe_bound(n, delta) - hand) > 1e-12 * max(1, hand):
            bad.append(f"moe {n},{delta}")
    for n, delta, gamma in ((100, 0.0, 0.0), (50, 0.01, 0.5), (10, 0.03, 0.9)):
        hand = -n * (h(delta) + math.log2(beta)) + math.log2(1 - gamma)
        if abs(bounds.robustness_bound(n, delta, gamma).value - hand) > 1e-9:
            bad.append(f"robustness {n},{delta},{gamma}")
    for n, delta, eps in ((100, 0.02, 0.01), (1000, 0.01, 0.0), (64, 0.03, 0.02)):
        hand = -n * (h(delta) + math.log2(beta)) - 1
        if abs(bounds.rel_entropy_bound(n, delta, eps).value - hand) > 1e-9:
            bad.append(f"relent {n},{delta},{eps}")
    verdict(8, not bad, f"breidbart {bounds.moe_breidbart():.12f}, product {bounds.product_measure_bound():.5f}, failures: {bad or 'none'}")


# ---------------------------------------------------------------- 9

SUITES = {
    "MI continuity": props.test_mutual_information_continuity,
    "FvdG": props.test_fuchs_van_de_graaf,
    "E_f vs PPT": props.test_ef_faithful_against_ppt,
    "E_f data processing": props.test_ef_data_processing,
    "decoupling": props.test_decoupling_biconditional,
    "causality": props.test_left_marginal_independent_of_right_input,
}


def test_criterion_9_property_suites():
    failed = []
    for name, suite in SUITES.items():
        try:
            suite()
        except AssertionError:
            failed.append(name)
    verdict(9, not failed, f"{len(SUITES)} suites, failing: {failed or 'none'}")
