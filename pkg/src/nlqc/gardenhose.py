"""Garden-hose model, code-routing from formulas, and their quantum versions.

Pipe ends are integers ``0..m-1``; Alice's tap is ``TAP = -1``.  A program
maps each Alice input ``x`` to a matching on ``{TAP} U pipes`` (her ends) and
each Bob input ``y`` to a matching on pipes (his ends).  Water leaves the tap,
crosses a pipe, follows Bob's hose (if any), crosses back, and so on until
it reaches an unconnected end, where it spills.
"""

from dataclasses import dataclass, field
import csv
import itertools
import json
import re

import numpy as np

from . import qcore
from .qcore import paulix_z
from .protocols import NlqcProtocol, WiringError, epr, ResourcePiece

TAP = -1
ALICE, BOB = 0, 1


# ---------------------------------------------------------------- Boolean functions


@dataclass(frozen=True)
class BooleanFunctionTable:
    """Truth table ``table[x][y]`` of f on n-bit halves; bit i of x is ``(x >> i) & 1``."""

    n: int
    table: tuple
    name: str = "f"

    def __post_init__(self):
        t = np.asarray(self.table, dtype=int)
        if t.shape != (2**self.n, 2**self.n):
            raise ValueError(f"table must be {2**self.n} x {2**self.n}, got {t.shape}")
        if not np.isin(t, (0, 1)).all():
            raise ValueError("table entries must be bits")
        object.__setattr__(self, "table", tuple(tuple(int(v) for v in row) for row in t))

    def value(self, x, y):
        return self.table[x][y]

    __call__ = value

    def matrix(self):
        return np.array(self.table, dtype=int)

    def inputs(self):
        return itertools.product(range(2**self.n), repeat=2)

    @classmethod
    def from_function(cls, n, fn, name="f"):
        return cls(n, [[int(bool(fn(x, y))) for y in range(2**n)] for x in range(2**n)], name)

    @classmethod
    def from_csv(cls, path, name=None):
        with open(path, newline="") as fh:
            rows = [[int(v) for v in row if v.strip() != ""] for row in csv.reader(fh) if row]
        n = int(round(np.log2(len(rows))))
        return cls(n, rows, name or str(path))


def _bit(v, i):
    return (v >> i) & 1


def _maj3(x, y):
    return int(_bit(x, 0) + _bit(x, 1) + _bit(y, 0) >= 2)


BUILTINS = {
    "EQ": lambda n: (lambda x, y: x == y),
    "GT": lambda n: (lambda x, y: x >= y),
    "DISJ": lambda n: (lambda x, y: (x & y) == 0),
    "IP": lambda n: (lambda x, y: bin(x & y).count("1") % 2),
    "AND": lambda n: (lambda x, y: _bit(x, 0) & _bit(y, 0)),
    "OR": lambda n: (lambda x, y: _bit(x, 0) | _bit(y, 0)),
    "MAJ3": lambda n: _maj3,
}


def builtin(name, n=1):
    """Built-in table: EQ, GT, DISJ, IP on n bits; AND, OR on bit 0; MAJ3 = maj(x0, x1, y0), n = 2."""
    key = name.upper()
    if key not in BUILTINS:
        raise KeyError(f"unknown function {name!r}; choose from {sorted(BUILTINS)}")
    if key == "MAJ3":
        n = max(n, 2)
    return BooleanFunctionTable.from_function(n, BUILTINS[key](n), key)


def constant(n, value):
    return BooleanFunctionTable.from_function(n, lambda x, y: value, f"CONST{value}")


# ---------------------------------------------------------------- programs


@dataclass(frozen=True)
class GardenHoseProgram:
    """Garden-hose program on ``pipe_count`` pipes for n-bit inputs.

    ``alice_links[x]`` and ``bob_links[y]`` are tuples of end pairs.
    ``designated_outputs[x] = (zero_end, one_end)`` marks a standard-form
    program, whose water always spills on Alice's side at the end named
    by f(x, y); ``TAP`` means the water never leaves the tap.
    """

    n: int
    pipe_count: int
    alice_links: dict
    bob_links: dict
    designated_outputs: dict = None
    name: str = "gh"

    def __post_init__(self):
        for x in range(2**self.n):
            _check_matching(self.alice_links.get(x, ()), self.pipe_count, allow_tap=True)
        for y in range(2**self.n):
            _check_matching(self.bob_links.get(y, ()), self.pipe_count, allow_tap=False)

    @property
    def standard(self):
        return self.designated_outputs is not None

    def to_json(self):
        return json.dumps(
            {
                "name": self.name,
                "n": self.n,
                "pipes": self.pipe_count,
                "alice": {str(x): [list(p) for p in v] for x, v in self.alice_links.items()},
                "bob": {str(y): [list(p) for p in v] for y, v in self.bob_links.items()},
                "outputs": None
                if self.designated_outputs is None
                else {str(x): list(v) for x, v in self.designated_outputs.items()},
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        outs = d.get("outputs")
        return cls(
            d["n"],
            d["pipes"],
            {int(x): tuple(tuple(p) for p in v) for x, v in d["alice"].items()},
            {int(y): tuple(tuple(p) for p in v) for y, v in d["bob"].items()},
            None if outs is None else {int(x): tuple(v) for x, v in outs.items()},
            d.get("name", "gh"),
        )


def _check_matching(pairs, m, allow_tap):
    seen = set()
    for pair in pairs:
        if len(pair) != 2 or pair[0] == pair[1]:
            raise ValueError(f"malformed link {pair!r}")
        for e in pair:
            if e == TAP and not allow_tap:
                raise ValueError("Bob cannot connect the tap")
            if e != TAP and not 0 <= e < m:
                raise ValueError(f"pipe {e} out of range")
            if e in seen:
                raise ValueError(f"pipe end {e} is connected twice")
            seen.add(e)


def _as_map(pairs):
    out = {}
    for u, v in pairs:
        out[u] = v
        out[v] = u
    return out


def trace(p, x, y):
    """Water path as a list of hops ``(side, a, b)``: ``side`` connected end a to end b.

    Returns ``(path, spill_side, spill_end)``.
    """
    amap = _as_map(p.alice_links.get(x, ()))
    bmap = _as_map(p.bob_links.get(y, ()))
    path = []
    if TAP not in amap:
        return path, ALICE, TAP
    cur = amap[TAP]
    path.append((ALICE, TAP, cur))
    visited = {cur}
    while True:
        # at Bob's end of pipe cur
        if cur not in bmap:
            return path, BOB, cur
        nxt = bmap[cur]
        path.append((BOB, cur, nxt))
        if nxt in visited:
            raise AssertionError("water revisited a pipe")
        visited.add(nxt)
        cur = nxt
        # at Alice's end of pipe cur
        if cur not in amap:
            return path, ALICE, cur
        nxt = amap[cur]
        path.append((ALICE, cur, nxt))
        if nxt in visited or nxt == TAP:
            raise AssertionError("water revisited a pipe")
        visited.add(nxt)
        cur = nxt


def evaluate(p, x, y):
    """Spill side (0 Alice, 1 Bob) and spill end (``TAP`` or a pipe index)."""
    _, side, end = trace(p, x, y)
    return side, end


def compute(p, x, y):
    """Function value computed by the program.

    For a standard-form program this is which designated output the water
    reaches; otherwise it is the spill side.
    """
    side, end = evaluate(p, x, y)
    if not p.standard:
        return side
    zero, one = p.designated_outputs[x]
    if side != ALICE or end not in (zero, one):
        raise AssertionError("standard-form program spilled outside its outputs")
    return int(end == one and end != zero)


def computes(p, f):
    return all(compute(p, x, y) == f.value(x, y) for x, y in f.inputs())


def and_program(n=1, bit=0):
    """Two-pipe AND of x_bit and y_bit.

    Alice connects the tap to pipe 0 when her bit is 1; Bob joins pipes 0
    and 1 when his bit is 0.
    """
    alice = {x: (((TAP, 0),) if _bit(x, bit) else ()) for x in range(2**n)}
    bob = {y: (() if _bit(y, bit) else ((0, 1),)) for y in range(2**n)}
    return GardenHoseProgram(n, 2, alice, bob, name="AND")


def or_program(n=1, bit=0):
    """Three-pipe OR of x_bit and y_bit.

    Alice sends the water down pipe 2 (never returned) when her bit is 1 and
    down pipe 0 otherwise; Bob returns pipe 0 through pipe 1 when his bit is 0.
    """
    alice = {x: (((TAP, 2),) if _bit(x, bit) else ((TAP, 0),)) for x in range(2**n)}
    bob = {y: (() if _bit(y, bit) else ((0, 1),)) for y in range(2**n)}
    return GardenHoseProgram(n, 3, alice, bob, name="OR")


def universal_program(f):
    """Program with 2^(n+1) pipes: pair x is pipes (2x, 2x+1).

    Alice connects the tap to pipe 2x; Bob joins the pair x' whenever
    f(x', y) = 0, so the water returns to Alice exactly when f(x, y) = 0.
    """
    N = 2**f.n
    alice = {x: ((TAP, 2 * x),) for x in range(N)}
    bob = {y: tuple((2 * xp, 2 * xp + 1) for xp in range(N) if f.value(xp, y) == 0) for y in range(N)}
    return GardenHoseProgram(f.n, 2 * N, alice, bob, name=f"universal-{f.name}")


def random_program(n, m, rng, tap_prob=0.8):
    """Random program with random matchings; used for property tests."""

    def matching(ends):
        ends = list(ends)
        rng.shuffle(ends)
        k = int(rng.integers(0, len(ends) // 2 + 1))
        return tuple((ends[2 * i], ends[2 * i + 1]) for i in range(k))

    alice = {}
    for x in range(2**n):
        ends = list(range(m))
        if rng.random() < tap_prob:
            t = int(rng.integers(m))
            ends.remove(t)
            alice[x] = ((TAP, t),) + matching(ends)
        else:
            alice[x] = matching(ends)
    bob = {y: matching(range(m)) for y in range(2**n)}
    return GardenHoseProgram(n, m, alice, bob, name="random")


def function_of(p):
    return BooleanFunctionTable.from_function(p.n, lambda x, y: compute(p, x, y), p.name)


# ---------------------------------------------------------------- standard form and XOR


def _tap_partner(p, x):
    return _as_map(p.alice_links.get(x, ())).get(TAP)


def standard_form(p):
    """Standard form with three copies of ``p`` (3m pipes).

    Copy 1 runs ``p``.  Bob joins each of his open ends in copy 1 to the same
    end of copy 2, Alice joins hers to copy 3.  Water spilling on Bob's side
    retraces its path through copy 2 and emerges at copy 2's tap end (the
    one output); water spilling on Alice's side emerges from copy 3 (the zero
    output).  Both outputs depend only on x.
    """
    if p.standard:
        raise ValueError("program is already in standard form")
    m = p.pipe_count
    alice, bob, outs = {}, {}, {}
    for x in range(2**p.n):
        links = p.alice_links.get(x, ())
        amap = _as_map(links)
        inner = [(u, v) for u, v in links if TAP not in (u, v)]
        new = list(links)  # copy 1 including the tap
        for c in (1, 2):
            new += [(u + c * m, v + c * m) for u, v in inner]
        for u in range(m):
            if u not in amap:
                new.append((u, u + 2 * m))
        alice[x] = tuple(new)
        t = amap.get(TAP)
        outs[x] = (TAP, None) if t is None else (t + 2 * m, t + m)
    for y in range(2**p.n):
        links = p.bob_links.get(y, ())
        bmap = _as_map(links)
        new = [(u + c * m, v + c * m) for c in range(3) for u, v in links]
        new += [(u, u + m) for u in range(m) if u not in bmap]
        bob[y] = tuple(new)
    return GardenHoseProgram(p.n, 3 * m, alice, bob, outs, name=f"std-{p.name}")


class _Wiring:
    """Alice-side terminal graph that resolves pass-through copies.

    A copy whose tap is unconnected (for this x) is a pass-through: its tap
    port and zero output are the same point.  Ports are resolved to real
    pipe ends by following these identifications.
    """

    def __init__(self):
        self.edges = {}

    def link(self, a, b):
        for u, v in ((a, b), (b, a)):
            self.edges.setdefault(u, []).append(v)

    def pairs(self):
        real = [k for k in self.edges if k[0] == "end"]
        done, out = set(), []
        for start in real:
            if start in done:
                continue
            prev, cur = None, start
            while True:
                nbrs = [v for v in self.edges.get(cur, []) if v != prev]
                if cur != start and cur[0] == "end":
                    break
                if not nbrs:
                    cur = None
                    break
                prev, cur = cur, nbrs[0]
            done.add(start)
            if cur is not None:
                done.add(cur)
                out.append((start[1], cur[1]))
        return out


def xor_compose(programs):
    """XOR of standard-form programs using four copies of each (XOR gadget).

    Copies: TL (0 in), TR (1 in), BL (0 out), BR (1 out).  Output b of TL
    meets output b of BL when b = 0 and of BR when b = 1; TR's outputs meet
    the opposite copies.  Water entering a gadget at "c in" leaves at
    "c xor f_i out".  Gadgets are chained 0-to-0 and 1-to-1.
    """
    if not programs:
        raise ValueError("need at least one program")
    n = programs[0].n
    for p in programs:
        if not p.standard:
            raise ValueError("xor_compose needs standard-form programs")
        if p.n != n:
            raise ValueError("programs must share the input length")
    offsets, total = [], 0
    for p in programs:
        offsets.append([total + k * p.pipe_count for k in range(4)])
        total += 4 * p.pipe_count
    alice, bob, outs = {}, {}, {}
    for x in range(2**n):
        w = _Wiring()
        ends = []

        def port(i, k, which):
            return ("port", i, k, which)

        for i, p in enumerate(programs):
            t = _tap_partner(p, x)
            zero, one = p.designated_outputs[x]
            for k, off in enumerate(offsets[i]):
                for u, v in p.alice_links.get(x, ()):
                    if TAP not in (u, v):
                        w.link(("end", u + off), ("end", v + off))
                if t is None:
                    w.link(port(i, k, "tap"), port(i, k, "zero"))
                else:
                    w.link(port(i, k, "tap"), ("end", t + off))
                    w.link(port(i, k, "zero"), ("end", zero + off))
                    w.link(port(i, k, "one"), ("end", one + off))
            TL, TR, BL, BR = 0, 1, 2, 3
            w.link(port(i, TL, "zero"), port(i, BL, "zero"))
            w.link(port(i, TL, "one"), port(i, BR, "one"))
            w.link(port(i, TR, "zero"), port(i, BR, "zero"))
            w.link(port(i, TR, "one"), port(i, BL, "one"))
            if i == 0:
                w.link(("end", TAP), port(0, TL, "tap"))
            else:
                w.link(port(i - 1, BL, "tap"), port(i, TL, "tap"))
                w.link(port(i - 1, BR, "tap"), port(i, TR, "tap"))
        last = len(programs) - 1
        # the gadget outputs are terminals; whatever they resolve to is a designated output
        w.link(port(last, BL, "tap"), ("end", ("out", 0)))
        w.link(port(last, BR, "tap"), ("end", ("out", 1)))
        pairs = []
        zero_end = one_end = None
        for a, b in w.pairs():
            if isinstance(a, tuple) or isinstance(b, tuple):
                o, e = (a, b) if isinstance(a, tuple) else (b, a)
                if o[1] == 0:
                    zero_end = e
                else:
                    one_end = e
            else:
                pairs.append((a, b))
        alice[x] = tuple(pairs)
        outs[x] = (zero_end, one_end)
    for y in range(2**n):
        new = []
        for i, p in enumerate(programs):
            for off in offsets[i]:
                new += [(u + off, v + off) for u, v in p.bob_links.get(y, ())]
        bob[y] = tuple(new)
    return GardenHoseProgram(n, total, alice, bob, outs, name="xor")


# ---------------------------------------------------------------- formulas


@dataclass(frozen=True)
class FormulaNode:
    """Boolean formula node: ``kind`` in {AND, OR, NOT, leaf}.

    Leaves carry ``(side, index, negated)`` with side ``'x'`` or ``'y'``.
    """

    kind: str
    children: tuple = ()
    leaf: tuple = None

    def evaluate(self, x, y):
        if self.kind == "leaf":
            side, i, neg = self.leaf
            v = _bit(x if side == "x" else y, i)
            return v ^ int(neg)
        vals = [c.evaluate(x, y) for c in self.children]
        if self.kind == "AND":
            return int(all(vals))
        if self.kind == "OR":
            return int(any(vals))
        if self.kind == "NOT":
            return 1 - vals[0]
        raise ValueError(f"unknown node kind {self.kind!r}")

    def leaves(self):
        if self.kind == "leaf":
            return 1
        return sum(c.leaves() for c in self.children)

    def n_bits(self):
        if self.kind == "leaf":
            return self.leaf[1] + 1
        return max(c.n_bits() for c in self.children)

    def __str__(self):
        if self.kind == "leaf":
            s = f"{self.leaf[0]}{self.leaf[1]}"
            return f"NOT({s})" if self.leaf[2] else s
        return f"{self.kind}({', '.join(str(c) for c in self.children)})"


def leaf(side, index=0, negated=False):
    return FormulaNode("leaf", leaf=(side, index, bool(negated)))


_TOKEN = re.compile(r"\s*(AND|OR|NOT|[xy]\d+|\(|\)|,)", re.IGNORECASE)


def parse_formula(text):
    """Parse ``AND(NOT(x0), OR(x0, y0))``; AND and OR take two or more arguments."""
    tokens, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    i = 0

    def expect(tok):
        nonlocal i
        if i >= len(tokens) or tokens[i] != tok:
            raise ValueError(f"expected {tok!r} at token {i}")
        i += 1

    def node():
        nonlocal i
        if i >= len(tokens):
            raise ValueError("unexpected end of formula")
        tok = tokens[i]
        i += 1
        up = tok.upper()
        if up in ("AND", "OR", "NOT"):
            expect("(")
            kids = [node()]
            while i < len(tokens) and tokens[i] == ",":
                i += 1
                kids.append(node())
            expect(")")
            if up == "NOT" and len(kids) != 1:
                raise ValueError("NOT takes one argument")
            if up != "NOT" and len(kids) < 2:
                raise ValueError(f"{up} takes at least two arguments")
            return FormulaNode(up, tuple(kids))
        if re.fullmatch(r"[xy]\d+", tok, re.IGNORECASE):
            return leaf(tok[0].lower(), int(tok[1:]))
        raise ValueError(f"unexpected token {tok!r}")

    root = node()
    if i != len(tokens):
        raise ValueError("trailing tokens after formula")
    return root


def normalize(node, negate=False):
    """Push negations to the leaves (De Morgan) and binarize AND/OR."""
    if node.kind == "leaf":
        side, i, neg = node.leaf
        return leaf(side, i, neg ^ negate)
    if node.kind == "NOT":
        return normalize(node.children[0], not negate)
    kind = node.kind
    if negate:
        kind = "OR" if kind == "AND" else "AND"
    kids = [normalize(c, negate) for c in node.children]
    out = kids[0]
    for k in kids[1:]:
        out = FormulaNode(kind, (out, k))
    return out


@dataclass(frozen=True)
class CodeRoutingPlan:
    """Code-routing plan: AND nodes keep their first share, OR nodes send it.

    The other two shares go to the children; a leaf unit-routes its share
    to the side named by the literal.
    """

    root: FormulaNode

    @property
    def cost(self):
        return self.root.leaves()

    def evaluate(self, x, y):
        """Side (0 left, 1 right) on which the input is recoverable."""

        def side_of(node):
            if node.kind == "leaf":
                return node.evaluate(x, y)
            a, b = (side_of(c) for c in node.children)
            fixed = 0 if node.kind == "AND" else 1
            votes = [fixed, a, b]
            return int(sum(votes) >= 2)

        return side_of(self.root)


def compile_formula(root):
    """Normalize a formula and turn it into a code-routing plan."""
    if isinstance(root, str):
        root = parse_formula(root)
    norm = normalize(root)
    _check_normal(norm)
    return CodeRoutingPlan(norm)


def _check_normal(node):
    if node.kind == "leaf":
        return
    if node.kind not in ("AND", "OR") or len(node.children) != 2:
        raise ValueError("malformed formula tree")
    for c in node.children:
        _check_normal(c)


# ---------------------------------------------------------------- sharing code

# Any two of the three shares recover the input.  Qubit shares of sizes
# (1, 1, 1) or (2, 1, 1) cannot do this, so the five-qubit code is split into
# shares of sizes (2, 2, 1); losing one share loses at most two qubits.

SHARE_QUBITS = ((0, 1), (2, 3), (4,))


def _five_qubit_code():
    gens = ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"]
    proj = np.eye(32, dtype=complex)
    for g in gens:
        proj = proj @ (np.eye(32) + qcore.pauli_string(g)) / 2
    zero = proj[:, 0] / np.linalg.norm(proj[:, 0])
    one = qcore.pauli_string("XXXXX") @ zero
    return np.stack([zero, one], axis=1)


SHARE_ENCODER = _five_qubit_code()


def _decoder(lost):
    """Unitary on the kept qubits whose first output qubit is the secret."""
    kept = [q for q in range(5) if q not in SHARE_QUBITS[lost]]
    gone = list(SHARE_QUBITS[lost])
    dk, dg = 2 ** len(kept), 2 ** len(gone)
    cols = []
    for i in range(2):
        t = SHARE_ENCODER[:, i].reshape([2] * 5)
        cols.append(np.transpose(t, kept + gone).reshape(dk, dg))
    # Schmidt basis of the lost share from logical zero
    u, s, vh = np.linalg.svd(cols[0])
    r = int(np.sum(s > 1e-9))
    w = np.zeros((dk, 2 * r), dtype=complex)
    for i in range(2):
        for j in range(r):
            w[:, i * r + j] = cols[i] @ vh[j].conj() / s[j]
    dec = np.concatenate([w, _orth_complement(w, dk)], axis=1)
    # map column (i, j) to basis index i * dk/2 + j so the first qubit is i
    perm = np.zeros(dk, dtype=int)
    half = dk // 2
    order = [i * half + j for i in range(2) for j in range(r)]
    rest = [k for k in range(dk) if k not in order]
    perm[: 2 * r] = order
    perm[2 * r:] = rest
    target = np.zeros((dk, dk), dtype=complex)
    target[perm, np.arange(dk)] = 1
    return target @ dec.conj().T, kept


def _orth_complement(w, d):
    u, s, _ = np.linalg.svd(w, full_matrices=True)
    return u[:, w.shape[1]:]


DECODERS = {lost: _decoder(lost) for lost in range(3)}


# ---------------------------------------------------------------- quantum versions


def _measured_pair(links, a, b):
    """The two ends of a hop in the order their Bell measurement was declared."""
    return (a, b) if (a, b) in tuple(tuple(l) for l in links) else (b, a)


def _register(side_char, e):
    return "Q" if e == TAP else f"{side_char}{e}"


def garden_hose_quantum(p):
    """f-routing protocol from a garden-hose program: one EPR pair per pipe.

    Connecting two ends becomes a Bell measurement of the corresponding
    qubits (the tap is the input ``Q``).  The input ends up, Pauli-encrypted,
    wherever the water spills; that side undoes the accumulated Pauli in
    the second round.
    """
    if p.standard:
        raise ValueError("standard-form programs do not route; use the plain program")
    m = p.pipe_count
    if m > 8:
        raise qcore.DimensionCapError(f"{m} pipes exceed the simulation limit of 8")

    def r1_left(side, x):
        for u, v in p.alice_links.get(x, ()):
            side.bell_measure(_register("a", u), _register("a", v))

    def r1_right(side, y):
        for u, v in p.bob_links.get(y, ()):
            side.bell_measure(f"b{u}", f"b{v}")

    def r2(who):
        def run(side, x, y):
            path, s, end = trace(p, x, y)
            if s != who:
                return []
            target = _register("a" if who == ALICE else "b", end)
            controls = []
            for hop_side, a, b in path:
                c = "a" if hop_side == ALICE else "b"
                links = p.alice_links.get(x, ()) if hop_side == ALICE else p.bob_links.get(y, ())
                u, v = _measured_pair(links, a, b)
                controls += [_register(c, u), _register(c, v)]
            if controls:
                side.controlled(
                    lambda *bits: paulix_z(
                        int(np.bitwise_xor.reduce(bits[0::2])), int(np.bitwise_xor.reduce(bits[1::2]))
                    ),
                    [target],
                    controls,
                )
            return [target]

        return run

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        resource=tuple(epr(f"a{i}", f"b{i}") for i in range(m)),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=r2(ALICE),
        round2_right=r2(BOB),
        name=f"gh-{p.name}",
        info={"epr_pairs": m},
    )


def _plan_layout(node, prefix, qubits):
    """Assign share registers for a plan subtree whose secret occupies ``qubits``.

    Returns a nested description used by the code-routing protocol.
    """
    if node.kind == "leaf":
        return {"kind": "leaf", "leaf": node.leaf, "regs": list(qubits), "name": prefix}
    # encode each secret qubit separately; share s of the node collects share s of each
    shares = [[], [], []]
    enc = []
    for k, q in enumerate(qubits):
        regs = [q] + [f"{prefix}{k}.{j}" for j in range(1, 5)]
        enc.append(regs)
        for s, idx in enumerate(SHARE_QUBITS):
            shares[s] += [regs[i] for i in idx]
    a, b = node.children
    # the larger subtree gets the smallest share
    if _size(a) > _size(b):
        a, b = b, a
    return {
        "kind": node.kind,
        "enc": enc,
        "shares": shares,
        "children": [
            _plan_layout(a, prefix + "a", shares[1]),
            _plan_layout(b, prefix + "b", shares[2]),
        ],
    }


def _size(node):
    return 0 if node.kind == "leaf" else 1 + sum(_size(c) for c in node.children)


def code_routing_quantum(plan):
    """f-routing protocol from a code-routing plan using the (2, 2, 1) sharing code.

    Alice encodes the input recursively.  AND nodes keep share 0 on the
    left, OR nodes send it right.  An x-leaf sends or keeps its share; a
    y-leaf teleports* its share into EPR pairs whose right halves Bob keeps
    (y-literal 1) or sends left (0).  The side holding two shares of every
    node on the path decodes bottom-up.
    """
    lay = _plan_layout(plan.root, "s", ["Q"])
    resources = []
    y_leaves = []

    def collect(l):
        if l["kind"] == "leaf":
            if l["leaf"][0] == "y":
                y_leaves.append(l)
                for r in l["regs"]:
                    resources.append(epr(f"eL.{r}", f"eR.{r}"))
            return
        for c in l["children"]:
            collect(c)

    collect(lay)

    def holder(l, x, y):
        """Where the (teleported) physical registers of a leaf end up, and their names."""
        lit = l["leaf"]
        val = plan_literal(lit, x, y)
        if lit[0] == "x":
            return val, list(l["regs"])
        return val, [f"eR.{r}" for r in l["regs"]]

    def r1_left(side, x):
        def enc(l):
            if l["kind"] == "leaf":
                return
            for regs in l["enc"]:
                for r in regs[1:]:
                    side.prepare(r)
                side.apply(SHARE_ENCODER_UNITARY, *regs)
            if l["kind"] == "OR":
                side.send(*l["shares"][0])
            for c in l["children"]:
                enc(c)

        enc(lay)

        def route(l):
            if l["kind"] == "leaf":
                lit = l["leaf"]
                if lit[0] == "x":
                    if plan_literal(lit, x, 0):
                        side.send(*l["regs"])
                else:
                    for r in l["regs"]:
                        side.bell_measure(r, f"eL.{r}")
                return
            for c in l["children"]:
                route(c)

        route(lay)

    def r1_right(side, y):
        for l in y_leaves:
            if not plan_literal(l["leaf"], 0, y):
                side.send(*[f"eR.{r}" for r in l["regs"]])

    def recover(side, who, x, y):
        """Decode bottom-up on side ``who``; returns the register holding the secret or None."""

        def rec(l):
            # returns list of registers (on this side) holding this node's secret, or None
            if l["kind"] == "leaf":
                val, regs = holder(l, x, y)
                if val != who:
                    return None
                if l["leaf"][0] == "y":
                    for r, e in zip(l["regs"], regs):
                        side.controlled(lambda s1, s2: paulix_z(s1, s2), [e], [r, f"eL.{r}"])
                return regs
            have = [None, None, None]
            if (l["kind"] == "AND") == (who == ALICE):
                have[0] = list(l["shares"][0])
            have[1] = rec(l["children"][0])
            have[2] = rec(l["children"][1])
            present = [i for i in range(3) if have[i] is not None]
            if len(present) < 2:
                return None
            lost = [i for i in range(3) if i not in present][0] if len(present) == 2 else 2
            dec, kept = DECODERS[lost]
            out = []
            for k in range(len(l["enc"])):
                # registers of qubit k of this node, by code position
                pos = {}
                for s in range(3):
                    if have[s] is None:
                        continue
                    width = len(SHARE_QUBITS[s])
                    chunk = have[s][k * width:(k + 1) * width]
                    for idx, reg in zip(SHARE_QUBITS[s], chunk):
                        pos[idx] = reg
                regs = [pos[i] for i in kept]
                side.apply(dec, *regs)
                out.append(regs[0])
            return out

        got = rec(lay)
        return got

    def r2(who):
        def run(side, x, y):
            if plan.evaluate(x, y) != who:
                return []
            got = recover(side, who, x, y)
            if got is None:
                raise WiringError("secret not recoverable on the expected side")
            return got

        return run

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        resource=tuple(resources),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=r2(ALICE),
        round2_right=r2(BOB),
        name="code-routing",
        info={"epr_pairs": len(resources), "unit_routings": plan.cost},
    )


def plan_literal(lit, x, y):
    side, i, neg = lit
    return _bit(x if side == "x" else y, i) ^ int(neg)


def _encoder_unitary():
    """Unitary on (secret, 4 fresh qubits) extending the five-qubit encoder."""
    u = np.zeros((32, 32), dtype=complex)
    # columns for inputs |s>|0000> are the codewords
    u[:, 0] = SHARE_ENCODER[:, 0]
    u[:, 16] = SHARE_ENCODER[:, 1]
    rest = _orth_complement(SHARE_ENCODER, 32)
    others = [k for k in range(32) if k not in (0, 16)]
    u[:, others] = rest
    return u


SHARE_ENCODER_UNITARY = _encoder_unitary()


def to_quantum(p):
    """NLQC f-routing protocol for a garden-hose program or a code-routing plan."""
    if isinstance(p, CodeRoutingPlan):
        return code_routing_quantum(p)
    if isinstance(p, GardenHoseProgram):
        return garden_hose_quantum(p)
    raise TypeError("expected a GardenHoseProgram or CodeRoutingPlan")


def garden_hose_routing(f):
    """f-routing protocol from the cheapest built-in program that computes ``f``."""
    for prog in (and_program(f.n), or_program(f.n)):
        if computes(prog, f):
            return garden_hose_quantum(prog)
    return garden_hose_quantum(universal_program(f))


def routing_residuals(protocol, f):
    """Choi residual against identity-on-side-f(x, y) for every input pair."""
    from .protocols import residual

    ident = qcore.identity_channel((2,))
    return {
        (x, y): residual(protocol, x, y, ident, ("R",) if f.value(x, y) else ("L",))
        for x, y in f.inputs()
    }


# ---------------------------------------------------------------- T-depth costs


@dataclass(frozen=True)
class TdepthCost:
    n: int
    d: int
    K: int
    t: tuple
    gh_g: tuple
    gh_h: tuple

    @property
    def total(self):
        return self.t[-1]


def tdepth_cost(n, d, K=184):
    """EPR-pair bound t_d from t_0 = 2, t_(i+1) = K n t_i.

    Also reports, per layer, the garden-hose bounds 4 t_i and 11 t_i for the
    Pauli-frame functions g and h produced by undoing an S gate.
    """
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    t = [2]
    for _ in range(d):
        t.append(K * n * t[-1])
    return TdepthCost(n, d, K, tuple(t), tuple(4 * v for v in t), tuple(11 * v for v in t))


def _doubled_program(p):
    """Two copies of ``p``: open ends of copy 1 are joined to copy 2 on both sides.

    Water retraces its path through copy 2 and returns to copy 2's tap end.
    Returns (alice_links, bob_links, tap_end) per input.
    """
    m = p.pipe_count
    alice, bob, outs = {}, {}, {}
    for x in range(2**p.n):
        links = p.alice_links.get(x, ())
        amap = _as_map(links)
        inner = [(u, v) for u, v in links if TAP not in (u, v)]
        alice[x] = tuple(links) + tuple((u + m, v + m) for u, v in inner) + tuple(
            (u, u + m) for u in range(m) if u not in amap
        )
        t = amap.get(TAP)
        outs[x] = TAP if t is None else t + m
    for y in range(2**p.n):
        links = p.bob_links.get(y, ())
        bmap = _as_map(links)
        bob[y] = tuple(links) + tuple((u + m, v + m) for u, v in links)
        bob[y] += tuple((u, u + m) for u in range(m) if u not in bmap)
    return alice, bob, outs


def simulate_conditional_s_correction(p, psi=None):
    """Apply (S^dagger)^f(x,y) to Alice's qubit without communication, up to a Pauli.

    The program ``p`` (computing f) is run on the qubit; Bob applies
    S^dagger on every open end of the first copy, which holds the qubit
    exactly when f = 1; a second copy then returns the qubit to Alice.
    Every branch of every measurement on the water path is checked against
    X^g Z^h (S^dagger)^f |psi> with g = xor of X bits and h = xor of Z bits,
    where the X bits of hops before the S^dagger also flip h.
    Returns a report dict.
    """
    m = p.pipe_count
    if 2 * m > 8:
        raise qcore.DimensionCapError("program too large to simulate")
    psi = np.array([1, 1], dtype=complex) / np.sqrt(2) if psi is None else np.asarray(psi, complex)
    psi = psi / np.linalg.norm(psi)
    alice, bob, outs = _doubled_program(p)
    sdg = qcore.S.conj().T
    report = {"branches": 0, "verified": 0, "cases": []}
    for x in range(2**p.n):
        for y in range(2**p.n):
            f = evaluate(p, x, y)[0]
            st = qcore.RegisterState()
            st.add("Q", psi)
            for i in range(2 * m):
                st.add([f"a{i}", f"b{i}"], qcore.max_entangled(2).data, [2, 2])
            bmap1 = _as_map(p.bob_links.get(y, ()))
            # copy 1 and 2 measurements in path order are all local and commute
            for u, v in alice[x]:
                st.measure([_register("a", u), _register("a", v)], qcore.BELL_BASIS)
            for u in range(m):
                if u not in bmap1:
                    st.apply(sdg, [f"b{u}"])
            for u, v in bob[y]:
                st.measure([f"b{u}", f"b{v}"], qcore.BELL_BASIS)
            out = _register("a", outs[x])
            # water path through the doubled program
            prog2 = GardenHoseProgram(p.n, 2 * m, alice, bob)
            path, side, end = trace(prog2, x, y)
            if side != ALICE or end != outs[x]:
                raise AssertionError("doubled program did not return the water to Alice")
            regs, pre_s = [], []
            crossed = False
            for hop_side, a, b in path:
                c = "a" if hop_side == ALICE else "b"
                u, v = _measured_pair(alice[x] if hop_side == ALICE else bob[y], a, b)
                regs.append((_register(c, u), _register(c, v)))
                if hop_side == BOB and min(a, b) < m <= max(a, b):
                    crossed = True
                pre_s.append(not crossed)
            ctrl = [r for pair in regs for r in pair]
            count = 0
            ok = 0
            for bits in itertools.product((0, 1), repeat=len(ctrl)):
                g = h = 0
                for k in range(len(regs)):
                    s1, s2 = bits[2 * k], bits[2 * k + 1]
                    g ^= s1
                    h ^= s2
                    if f and pre_s[k]:
                        h ^= s1
                expected = qcore.paulix_z(g, h) @ np.linalg.matrix_power(sdg, f) @ psi
                vec = _branch_vector(st, dict(zip(ctrl, bits)), out)
                count += 1
                if vec is None:
                    continue
                overlap = abs(np.vdot(expected, vec)) ** 2
                ok += int(abs(overlap - 1) < 1e-9)
            report["branches"] += count
            report["verified"] += ok
            report["cases"].append({"x": x, "y": y, "f": f, "branches": count, "verified": ok})
    report["all_verified"] = report["branches"] == report["verified"]
    return report


def _branch_vector(st, fixed, out):
    """Normalized state of ``out`` given the classical values in ``fixed``.

    Other registers are traced out; returns None when the branch has
    probability zero.  Raises if the conditional state is mixed.
    """
    names = list(fixed) + [out]
    rho = st.reduced(names)
    dims = [st.dim(n) for n in names]
    t = rho.reshape(dims + dims)
    idx = tuple(fixed.values())
    block = t[idx + (slice(None),) + idx + (slice(None),)]
    pr = np.trace(block).real
    if pr < 1e-12:
        return None
    block = block / pr
    w, v = np.linalg.eigh(block)
    if w[-1] < 1 - 1e-9:
        raise AssertionError("conditional output state is not pure")
    return v[:, -1]
