"""Conditional disclosure of secrets: classical protocols, the quantum lift,
and the conversions between quantum CDS and f-routing.

A classical CDS protocol is given by message maps ``alice_msg(x, s, r)`` and
``bob_msg(y, r)`` over uniformly random shared strings ``r``.  Messages are
hashable tuples.  Correctness and security are checked by exhaustive
enumeration of the exact message distributions.

Quantum protocols run on the register engine of ``protocols``: messages are
sent to the referee with ``side.send(name, to=REFEREE)``.
"""

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from . import qcore
from .gardenhose import TAP, BooleanFunctionTable, GardenHoseProgram, function_of
from .protocols import NlqcProtocol, ResourcePiece, Side, WiringError, _Run, _run_protocol

REFEREE = "REF"
RANDOMNESS_CAP = 16


# ---------------------------------------------------------------- classical CDS


@dataclass(frozen=True)
class CdsProtocol:
    """Classical CDS protocol with ``randomness_bits`` uniform shared bits."""

    randomness_bits: int
    secret_alphabet: int
    alice_msg: Callable
    bob_msg: Callable
    f: BooleanFunctionTable
    name: str = "cds"

    def messages(self, x, y, s, r):
        return self.alice_msg(x, s, r), self.bob_msg(y, r)

    def to_json(self):
        n = self.f.n
        alice = [
            [x, s, r, _jsonable(self.alice_msg(x, s, r))]
            for x in range(2**n)
            for s in range(self.secret_alphabet)
            for r in range(2**self.randomness_bits)
        ]
        bob = [[y, r, _jsonable(self.bob_msg(y, r))] for y in range(2**n) for r in range(2**self.randomness_bits)]
        return json.dumps(
            {
                "name": self.name,
                "randomness_bits": self.randomness_bits,
                "secret_alphabet": self.secret_alphabet,
                "f": {"n": n, "table": [list(r) for r in self.f.table], "name": self.f.name},
                "alice": alice,
                "bob": bob,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        a = {(x, s, r): _hashable(m) for x, s, r, m in d["alice"]}
        b = {(y, r): _hashable(m) for y, r, m in d["bob"]}
        fd = d["f"]
        f = BooleanFunctionTable(fd["n"], np.array(fd["table"], dtype=np.uint8), fd.get("name", "f"))
        return cls(
            d["randomness_bits"],
            d["secret_alphabet"],
            lambda x, s, r: a[(x, s, r)],
            lambda y, r: b[(y, r)],
            f,
            d.get("name", "cds"),
        )


def _jsonable(m):
    if isinstance(m, tuple):
        return [_jsonable(v) for v in m]
    return m


def _hashable(m):
    if isinstance(m, list):
        return tuple(_hashable(v) for v in m)
    return m


def and_cds():
    """One shared bit r; Alice sends s xor r if x = 1, Bob sends r if y = 1."""
    from .gardenhose import builtin

    return CdsProtocol(
        1,
        2,
        lambda x, s, r: ((s ^ r),) if x else (),
        lambda y, r: (r,) if y else (),
        builtin("AND", 1),
        "and-cds",
    )


def gh_to_cds(p: GardenHoseProgram, max_pipes=8):
    """CDS protocol from a garden-hose program, one shared bit per pipe.

    Each connection Alice or Bob makes is announced as the XOR of the bits
    at its two ends (the tap carries the secret).  Bob also announces the
    bits of pipes he leaves open; Alice keeps quiet about hers.
    """
    if p.standard:
        raise ValueError("standard-form programs compute f by output position, not by spill side")
    if p.pipe_count > max_pipes:
        raise ValueError(f"program has {p.pipe_count} pipes; at most {max_pipes} supported")
    m = p.pipe_count

    def bit(r, j):
        return (r >> j) & 1

    def alice(x, s, r):
        out = []
        for a, b in sorted(p.alice_links.get(x, ()), key=lambda t: (min(t), max(t))):
            va = s if a == TAP else bit(r, a)
            vb = s if b == TAP else bit(r, b)
            out.append((a, b, va ^ vb))
        return tuple(out)

    def bob(y, r):
        links = p.bob_links.get(y, ())
        used = {e for link in links for e in link}
        out = [(a, b, bit(r, a) ^ bit(r, b)) for a, b in sorted(links)]
        out += [(j, None, bit(r, j)) for j in range(m) if j not in used]
        return tuple(out)

    return CdsProtocol(m, 2, alice, bob, function_of(p), f"cds-{p.name}")


def message_distributions(p: CdsProtocol, x, y):
    """Exact distribution of (alice message, bob message) for every secret."""
    if p.randomness_bits > RANDOMNESS_CAP:
        raise qcore.DimensionCapError(f"{p.randomness_bits} random bits exceed the enumeration cap")
    weight = 2.0 ** -p.randomness_bits
    dists = []
    for s in range(p.secret_alphabet):
        d = {}
        for r in range(2**p.randomness_bits):
            m = p.messages(x, y, s, r)
            d[m] = d.get(m, 0.0) + weight
        dists.append(d)
    return dists


def ml_decoder(dists):
    """Maximum-likelihood secret for each message; ties go to the smaller secret."""
    support = set().union(*dists)
    return {m: max(range(len(dists)), key=lambda s: (dists[s].get(m, 0.0), -s)) for m in support}


def _l1(a, b):
    keys = set(a) | set(b)
    return sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def _chebyshev_radius(dists, iters=400):
    """Upper bound on min_c max_s ||P_s - c||_1 from iterated midpoints toward the farthest point."""
    keys = sorted(set().union(*dists), key=repr)
    vecs = np.array([[d.get(k, 0.0) for k in keys] for d in dists])
    c = vecs[0].copy()
    best = np.max(np.abs(vecs - c).sum(axis=1))
    for t in range(1, iters + 1):
        far = int(np.argmax(np.abs(vecs - c).sum(axis=1)))
        c += (vecs[far] - c) / (t + 1)
        best = min(best, np.max(np.abs(vecs - c).sum(axis=1)))
    return float(best)


def security_distance(dists):
    """Best simulator distance max_s ||P_s - S||_1 over message distributions.

    Exact for two secrets (half the pairwise distance, attained by the
    midpoint).  For larger alphabets this is an upper bound.
    """
    pair = max((_l1(a, b) for a, b in itertools.combinations(dists, 2)), default=0.0)
    if len(dists) <= 2:
        return pair / 2
    if pair == 0.0:
        return 0.0
    return _chebyshev_radius(dists)


def check_cds(p: CdsProtocol):
    """(epsilon, delta) by exhaustive enumeration."""
    eps = delta = 0.0
    for x, y in p.f.inputs():
        dists = message_distributions(p, x, y)
        if p.f.value(x, y):
            dec = ml_decoder(dists)
            for s, d in enumerate(dists):
                eps = max(eps, sum(w for m, w in d.items() if dec[m] != s))
        else:
            delta = max(delta, security_distance(dists))
    return eps, delta


def amplify_two_bit(p: CdsProtocol):
    """Two independent copies hiding the two bits of a secret in {0, 1, 2, 3}."""
    if p.secret_alphabet != 2:
        raise ValueError("amplification expects a protocol hiding one bit")
    k = p.randomness_bits
    mask = (1 << k) - 1
    return CdsProtocol(
        2 * k,
        4,
        lambda x, s, r: (p.alice_msg(x, s & 1, r & mask), p.alice_msg(x, s >> 1, r >> k)),
        lambda y, r: (p.bob_msg(y, r & mask), p.bob_msg(y, r >> k)),
        p.f,
        f"{p.name}-x2",
    )


# ---------------------------------------------------------------- quantum CDS


def one_time_pad_key(k):
    """Pauli X^(k & 1) Z^(k >> 1)."""
    return qcore.paulix_z(k & 1, k >> 1)


def one_time_pad_average(rho):
    """(1/4) sum_k P_k rho P_k^dagger."""
    rho = qcore.as_matrix(rho)
    return sum(one_time_pad_key(k) @ rho @ one_time_pad_key(k).conj().T for k in range(4)) / 4


@dataclass(frozen=True)
class CdqsProtocol:
    """Quantum CDS: one round, every message goes to the referee.

    Round functions deliver messages with ``side.send(name, to=REFEREE)``.
    ``referee(side, x, y)`` acts on the messages and returns the register
    holding the recovered secret.  ``gather(run)``, when given, moves
    registers to the referee after the round (used by conversions).
    """

    f: BooleanFunctionTable
    round1_left: Callable
    round1_right: Callable
    referee: Callable
    left_inputs: tuple = (("Q", 2),)
    right_inputs: tuple = ()
    resource: tuple = ()
    gather: Callable = None
    name: str = "cdqs"
    info: dict = field(default_factory=dict, compare=False)


def _run_cdqs(p, x, y):
    run = _Run(p)
    run.round = 1
    p.round1_left(Side(run, "L"), x)
    p.round1_right(Side(run, "R"), y)
    if p.gather is not None:
        p.gather(run)
    for name, d in run.dest.items():
        if d != REFEREE:
            raise WiringError(f"{name!r} was sent to {d!r}; quantum CDS messages go to the referee")
        run.loc[name] = REFEREE
    run.dest = {}
    run.broadcast = {n for n in run.state.classical if run.loc.get(n) == REFEREE}
    return run


def referee_messages(run):
    return sorted(n for n, s in run.loc.items() if s == REFEREE and n not in run.state.discarded)


def message_channel(p, x, y):
    """Channel from the secret to everything the referee receives."""
    run = _run_cdqs(p, x, y)
    msgs = referee_messages(run)
    choi = qcore.choi_from_state(run.state, msgs, run.refs)
    return qcore.QuantumChannel(choi, (2,), tuple(run.state.dim(m) for m in msgs)), msgs


def referee_channel(p, x, y):
    """Channel from the secret to the referee's decoded output."""
    run = _run_cdqs(p, x, y)
    run.round = 2
    outs = list(p.referee(Side(run, REFEREE), x, y) or [])
    choi = qcore.choi_from_state(run.state, outs, run.refs)
    return qcore.QuantumChannel(choi, (2,), tuple(run.state.dim(o) for o in outs))


def constant_channel_residual(ch):
    """||J - sigma (x) I/d_in||_1 / d_in: zero iff the channel ignores its input."""
    sigma = qcore.ptrace_matrix(ch.choi, (ch.d_out, ch.d_in), [0]) / ch.d_in
    return qcore.trace_distance(ch.choi, np.kron(sigma, np.eye(ch.d_in))) / ch.d_in


def check_cdqs(p: CdqsProtocol):
    """(epsilon, delta) as Choi residuals over all inputs.

    epsilon: distance of the referee's decoded channel from the identity
    on 1-instances.  delta: distance of the message channel from the
    constant channel with the same output on 0-instances.
    """
    eps = delta = 0.0
    for x, y in p.f.inputs():
        if p.f.value(x, y):
            ch = referee_channel(p, x, y)
            eps = max(eps, qcore.channels_equal(ch, qcore.identity_channel((2,)))[1])
        else:
            ch, _ = message_channel(p, x, y)
            delta = max(delta, constant_channel_residual(ch))
    return eps, delta


def referee_secret_marginal(p, x, y, rho):
    """Referee's state on the forwarded secret register alone, for input ``rho``."""
    ch, msgs = message_channel(p, x, y)
    keep = [i for i, m in enumerate(msgs) if m == "Q"]
    if not keep:
        raise WiringError("the secret register is not among the messages")
    out = ch.apply(rho)
    return qcore.ptrace_matrix(out, ch.out_dims, keep)


def _index_map(values):
    table = {}
    for v in values:
        table.setdefault(v, len(table))
    return table


def cds_to_cdqs(p: CdsProtocol):
    """Quantum CDS hiding one qubit from a CDS protocol hiding two bits.

    Alice draws a key k, applies the Pauli P_k to Q, forwards Q, and runs the
    classical protocol with secret k.  The referee decodes k by maximum
    likelihood and undoes P_k.
    """
    if p.secret_alphabet != 4:
        raise ValueError("the quantum lift needs a CDS protocol hiding two bits")
    R = 2**p.randomness_bits
    if R * R > 2**14:
        raise qcore.DimensionCapError("shared randomness too large for the register simulation")
    n = p.f.n
    a_index = _index_map(
        p.alice_msg(x, s, r) for x in range(2**n) for s in range(4) for r in range(R)
    )
    b_index = _index_map(p.bob_msg(y, r) for y in range(2**n) for r in range(R))
    decoders = {}
    for x, y in p.f.inputs():
        dec = ml_decoder(message_distributions(p, x, y))
        decoders[(x, y)] = {(a_index[ma], b_index[mb]): s for (ma, mb), s in dec.items()}

    shared = np.zeros((R, R), dtype=complex)
    shared[np.arange(R), np.arange(R)] = 1 / np.sqrt(R)
    resource = (ResourcePiece(("rL", "rR"), shared.reshape(-1), (R, R), ("L", "R")),)

    def r1_left(side, x):
        side.measure("rL")
        side.prepare_state("K", np.full(4, 0.5))
        side.measure("K")
        side.controlled(one_time_pad_key, ["Q"], ["K"])
        side.compute("mA", lambda k, r: a_index[p.alice_msg(x, k, r)], ["K", "rL"], len(a_index))
        side.send("Q", "mA", to=REFEREE)

    def r1_right(side, y):
        side.measure("rR")
        side.compute("mB", lambda r: b_index[p.bob_msg(y, r)], ["rR"], len(b_index))
        side.send("mB", to=REFEREE)

    def referee(side, x, y):
        dec = decoders[(x, y)]
        side.compute("khat", lambda a, b: dec.get((a, b), 0), ["mA", "mB"], 4)
        side.controlled(lambda k: one_time_pad_key(k).conj().T, ["Q"], ["khat"])
        return ["Q"]

    return CdqsProtocol(
        p.f,
        r1_left,
        r1_right,
        referee,
        resource=resource,
        name=f"cdqs-{p.name}",
        info={"message_qubits": 1, "classical_alphabets": (len(a_index), len(b_index))},
    )


def _held(run, side):
    return sorted(
        n for n, s in run.loc.items()
        if s == side and n not in run.state.discarded and not n.startswith("~")
    )


def left_decoder_unitary(run, left_regs, tol=1e-9):
    """Unitary on (left registers, fresh qubit) extracting the secret.

    The mid-protocol state is sum_j |j>_ref |v_j>/sqrt 2 with |v_j> on
    (right, left).  When the right marginal does not depend on j, Schmidt
    vectors on the left are orthonormal over (i, j) and the map
    |b_ij>|0> -> |e_i>|j> is extended to a unitary.
    """
    st = run.state
    refs = run.refs
    if len(refs) != 1 or st.dim(refs[0]) != 2:
        raise ValueError("expected one qubit secret")
    others = [n for n in st.names if n not in refs and n not in left_regs]
    axes = [st.axis(refs[0])] + [st.axis(n) for n in others] + [st.axis(n) for n in left_regs]
    dR = int(np.prod([st.dim(n) for n in others])) if others else 1
    dL = int(np.prod([st.dim(n) for n in left_regs])) if left_regs else 1
    qcore.check_dim(4 * dL * dL)
    psi = np.transpose(st.psi, axes).reshape(2, dR, dL) * np.sqrt(2)
    sigma = psi[0] @ psi[0].conj().T
    lam, vecs = np.linalg.eigh(sigma)
    keep = lam > tol
    lam, vecs = lam[keep], vecs[:, keep]
    k = len(lam)
    if 2 * k > dL:
        raise ValueError("left systems are too small to hold the secret")
    cols_in, cols_out = [], []
    for j in range(2):
        b = (vecs.conj().T @ psi[j]) / np.sqrt(lam)[:, None]
        for i in range(k):
            v = np.zeros(2 * dL, dtype=complex)
            v[0::2] = b[i]
            cols_in.append(v)
            e = np.zeros(2 * dL, dtype=complex)
            e[2 * i + j] = 1
            cols_out.append(e)
    A = np.array(cols_in).T
    B = np.array(cols_out).T
    if np.max(np.abs(A.conj().T @ A - np.eye(2 * k))) > 1e-6:
        raise ValueError("right marginal depends on the secret; no exact left decoder")
    U = B @ A.conj().T
    Ac, Bc = null_space(A.conj().T), null_space(B.conj().T)
    return U + Bc @ Ac.conj().T


def cdqs_to_frouting(c: CdqsProtocol):
    """f-routing protocol from a quantum CDS protocol.

    Both parties run their round in purified form.  Message systems go
    right and everything else goes left.  On 1-instances the right side
    runs the referee; on 0-instances the left side applies the decoder
    guaranteed by decoupling, computed from the mid-protocol state.
    """
    if c.gather is not None:
        raise ValueError("protocol already derived from an f-routing protocol")
    f = c.f
    holder = {}
    cache = {}

    def r1_left(side, x):
        side.coherent = True
        c.round1_left(side, x)
        for n in side.registers():
            if side.destination(n) == REFEREE:
                side.unsend(n)
                side.send(n)

    def r1_right(side, y):
        side.coherent = True
        c.round1_right(side, y)
        for n in side.registers():
            if n.startswith("~"):
                continue
            if side.destination(n) == REFEREE:
                side.unsend(n)
            elif side.destination(n) is None:
                side.send(n)

    def r2_right(side, x, y):
        side.coherent = True
        if not f.value(x, y):
            return []
        return list(c.referee(side, x, y))

    def r2_left(side, x, y):
        if f.value(x, y):
            return []
        if (x, y) not in cache:
            run = _run_protocol(holder["p"], x, y, stop="mid")
            regs = _held(run, "L")
            cache[(x, y)] = (regs, left_decoder_unitary(run, regs))
        regs, u = cache[(x, y)]
        side.prepare("Qout")
        side.apply(u, *regs, "Qout")
        return ["Qout"]

    p = NlqcProtocol(
        left_inputs=c.left_inputs,
        resource=c.resource,
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=r2_left,
        round2_right=r2_right,
        name=f"routing-from-{c.name}",
        info={"f": f},
    )
    holder["p"] = p
    return p


def frouting_to_cdqs(q: NlqcProtocol, f: BooleanFunctionTable):
    """Quantum CDS from an f-routing protocol.

    The referee receives what the right side would hold after the round
    (including broadcast classical registers) and runs the right side's
    second round.  Systems bound for the left are traced out.
    """

    def gather(run):
        for n, d in list(run.dest.items()):
            run.loc[n] = d
        run.dest = {}
        for n, s in list(run.loc.items()):
            if n.startswith("~") or n in run.state.discarded:
                continue
            if s == "R" or n in run.state.classical:
                run.dest[n] = REFEREE
            else:
                run.state.discard([n])

    def referee(side, x, y):
        return list(q.round2_right(side, x, y) or [])

    return CdqsProtocol(
        f,
        q.round1_left,
        q.round1_right,
        referee,
        left_inputs=q.left_inputs,
        right_inputs=q.right_inputs,
        resource=q.resource,
        gather=gather,
        name=f"cdqs-from-{q.name}",
    )


def routing_residuals(p, f):
    """Residual of an f-routing protocol against the identity on the side f names."""
    from .protocols import residual

    ident = qcore.identity_channel((2,))
    return {(x, y): residual(p, x, y, ident, ("R",) if f.value(x, y) else ("L",)) for x, y in f.inputs()}


def message_qubits(p: NlqcProtocol, x=0, y=0):
    """Qubits sent in each direction in the communication round."""
    run = _run_protocol(p, x, y, stop="round1")
    sent = {"L": 0.0, "R": 0.0}
    for n, d in run.dest.items():
        sent[d] = sent.get(d, 0.0) + np.log2(run.state.dim(n))
    return sent


def referee_view_qubits(c: CdqsProtocol, x=0, y=0):
    run = _run_cdqs(c, x, y)
    return float(sum(np.log2(run.state.dim(n)) for n in referee_messages(run)))


__all__ = [
    "CdsProtocol",
    "CdqsProtocol",
    "REFEREE",
    "and_cds",
    "gh_to_cds",
    "check_cds",
    "amplify_two_bit",
    "message_distributions",
    "ml_decoder",
    "security_distance",
    "one_time_pad_key",
    "one_time_pad_average",
    "cds_to_cdqs",
    "check_cdqs",
    "message_channel",
    "referee_channel",
    "referee_secret_marginal",
    "constant_channel_residual",
    "cdqs_to_frouting",
    "frouting_to_cdqs",
    "left_decoder_unitary",
    "routing_residuals",
    "message_qubits",
]
