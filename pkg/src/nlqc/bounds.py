"""Lower-bound machinery: entanglement of formation, controllable correlation
and entanglement of two-qubit gates, structure-function rank bounds,
monogamy-game values and closed-form bound evaluators.

Two-qubit gates act on (A, B).  The reference Q-bar is attached to A and the
far input phi sits on B.  Gate matrices are written with the first tensor
factor as the row-major high bit; ``GATE_ORDER`` records which factor of a
library matrix plays A.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from . import qcore
from .qcore import CNOT, CZ, SWAP, X, Y, Z, binary_entropy, inverse_binary_entropy

# ---------------------------------------------------------------- gate library

_c8, _s8 = np.cos(np.pi / 8), np.sin(np.pi / 8)
_c38, _s38 = np.cos(3 * np.pi / 8), np.sin(3 * np.pi / 8)
_r2 = 1 / np.sqrt(2)
_w = np.exp(1j * np.pi / 4)

GATES = {
    "CNOT": CNOT,
    "DCNOT": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [0, 1, 0, 0]], dtype=complex),
    "B": np.array(
        [[_c8, 0, 0, 1j * _s8], [0, _c38, 1j * _s38, 0], [0, 1j * _s38, _c38, 0], [1j * _s8, 0, 0, _c8]]
    ),
    "RXX": np.array(
        [[_r2, 0, 0, -1j * _r2], [0, _r2, -1j * _r2, 0], [0, -1j * _r2, _r2, 0], [-1j * _r2, 0, 0, _r2]]
    ),
    "iSWAP": np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "sqrtSWAP": np.array(
        [[1, 0, 0, 0], [0, (1 + 1j) / 2, (1 - 1j) / 2, 0], [0, (1 - 1j) / 2, (1 + 1j) / 2, 0], [0, 0, 0, 1]]
    ),
    "Sycamore": np.array(
        [[1, 0, 0, 0], [0, 0, -1j, 0], [0, -1j, 0, 0], [0, 0, 0, np.exp(-1j * np.pi / 6)]]
    ),
    "Magic": _r2 * np.array([[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]]),
    "DagwoodBumstead": np.array(
        [[1, 0, 0, 0], [0, _c38, -1j * _s38, 0], [0, -1j * _s38, _c38, 0], [0, 0, 0, 1]]
    ),
    "CS": np.diag([1, 1, 1, 1j]).astype(complex),
    "CT": np.diag([1, 1, 1, _w]).astype(complex),
    "ECR": _r2 * np.array([[0, 0, 1, 1j], [0, 0, 1j, 1], [1, -1j, 0, 0], [-1j, 1, 0, 0]]),
    "CSX": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, _w * _r2, np.conj(_w) * _r2], [0, 0, np.conj(_w) * _r2, _w * _r2]]
    ),
    "SWAP": SWAP,
    "CZ": CZ,
    "I": np.eye(4, dtype=complex),
}

# published values: gate -> (CE, CC, reference tags)
TABLE = {
    "CNOT": (1.0, 0.5, ("rho_cc", "psi_plus")),
    "DCNOT": (0.0, 0.5, ("rho_cc", "psi_plus")),
    "B": (0.601, 0.5, ("rho_cc",)),
    "RXX": (1.0, 0.5, ("rho_cc", "psi_plus")),
    "iSWAP": (0.0, 0.5, ("rho_cc", "psi_plus")),
    "sqrtSWAP": (0.0, 0.30, ("psi_plus",)),
    "Sycamore": (0.0, 0.48, ("rho_cc", "psi_plus")),
    "Magic": (0.0, 0.5, ("rho_cc", "psi_plus")),
    "DagwoodBumstead": (0.0, 0.08, ("psi_plus",)),
    "CS": (0.0, 0.30, ("psi_plus",)),
    "CT": (0.0, 0.12, ("psi_plus",)),
    "ECR": (0.0, 0.5, ("psi_plus",)),
    "CSX": (0.0, 0.30, ("psi_plus",)),
}

# Library matrices are read with the first factor as B, so CNOT is
# controlled from B.  With a Psi+ reference the two readings give identical
# values; with rho_cc they can differ.
GATE_ORDER = "BA"

PSI_PLUS = np.outer(qcore.max_entangled(2).data, qcore.max_entangled(2).data.conj())
RHO_CC = qcore.classically_correlated(2).data
REFERENCES = {"psi_plus": PSI_PLUS, "rho_cc": RHO_CC}


def oriented(u, order=None):
    """Gate as an operator on (A, B) given the factor order of its matrix."""
    order = GATE_ORDER if order is None else order
    u = np.asarray(u, dtype=complex)
    if order == "AB":
        return u
    if order == "BA":
        return SWAP @ u @ SWAP
    raise ValueError("order must be 'AB' or 'BA'")


def _check_unitary(u, tol=1e-10):
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or np.max(np.abs(u.conj().T @ u - np.eye(4))) > tol:
        raise ValueError("expected a 4x4 unitary")
    return u


# ---------------------------------------------------------------- entanglement of formation

_YY = np.kron(Y, Y)


def concurrence(rho):
    """Wootters concurrence of a two-qubit density matrix (batched over leading axes)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise ValueError("concurrence needs 4x4 density matrices")
    # lambda_i are the singular values of sqrt(rho) (Y x Y) conj(sqrt(rho)),
    # which avoids square roots of tiny eigenvalues of rho rho~
    w, v = np.linalg.eigh((rho + np.conj(np.swapaxes(rho, -1, -2))) / 2)
    root = (v * np.sqrt(np.clip(w, 0, None))[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    lam = np.linalg.svd(root @ _YY @ root.conj(), compute_uv=False)
    c = lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3]
    return np.maximum(c, 0.0)


def _h_array(p):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    out = np.zeros_like(p)
    m = (p > 0) & (p < 1)
    q = p[m]
    out[m] = -q * np.log2(q) - (1 - q) * np.log2(1 - q)
    return out


def ef_from_concurrence(c):
    c = np.clip(np.asarray(c, dtype=float), 0.0, 1.0)
    return _h_array((1 + np.sqrt(1 - c * c)) / 2)


def entanglement_of_formation(rho):
    """E_f in ebits for a two-qubit state (closed form via the concurrence)."""
    m = qcore.as_matrix(rho)
    if m.shape != (4, 4):
        raise ValueError("entanglement_of_formation needs a two-qubit density matrix")
    return float(ef_from_concurrence(concurrence(m)))


def is_ppt(rho, tol=1e-12):
    """Positive partial transpose on the second qubit."""
    pt = qcore.partial_transpose(qcore.as_matrix(rho), (2, 2), 1)
    return float(np.linalg.eigvalsh((pt + pt.conj().T) / 2).min()) >= -tol


# ---------------------------------------------------------------- controllable correlation / entanglement

_BLOCH = (np.eye(2, dtype=complex), X, Y, Z)


def linear_terms(u, ref):
    """T_k with rho_{Q A}(phi) = T_0 + sum_k r_k T_k for phi = (I + r.sigma)/2.

    ``u`` acts on (A, B); ``ref`` is the state on (Q-bar, A).
    """
    full = np.kron(np.eye(2), u)
    terms = []
    for s in _BLOCH:
        inp = np.kron(ref, s / 2)
        out = full @ inp @ full.conj().T
        terms.append(qcore.ptrace_matrix(out, (2, 2, 2), [0, 1]))
    return np.array(terms)


def _bloch(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(n > 1, v / np.maximum(n, 1e-300), v)


def _states(terms, r):
    r = np.atleast_2d(r)
    return terms[0] + np.einsum("nk,kij->nij", r, terms[1:])


def _entropy_batch(rhos):
    ev = np.linalg.eigvalsh(rhos)
    ev = np.where(ev > 1e-15, ev, 1.0)
    return -np.sum(ev * np.log2(ev), axis=-1)


def _mi_batch(rhos):
    t = rhos.reshape(-1, 2, 2, 2, 2)
    rq = np.einsum("niaja->nij", t)
    ra = np.einsum("niaib->nab", t)
    return _entropy_batch(rq) + _entropy_batch(ra) - _entropy_batch(rhos)


def _ef_batch(rhos):
    return ef_from_concurrence(concurrence(rhos))


def _candidates(rng, count):
    """Seeded Bloch-ball points: the six axis poles, the centre, and random points."""
    fixed = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    v = rng.standard_normal((count, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    radius = np.where(rng.random(count) < 0.5, 1.0, rng.random(count) ** (1 / 3))
    return np.vstack([fixed, v * radius[:, None]])


def optimize_bloch(objective, sign, rng, restarts=64, candidates=512):
    """Extremize ``objective(batch of Bloch vectors)`` over the ball.

    ``sign=+1`` maximizes, ``-1`` minimizes.  The best ``restarts`` seeded
    candidates are polished with Nelder-Mead.  Returns (value, vector).
    """
    pts = _candidates(rng, candidates)
    vals = sign * objective(pts)
    order = np.argsort(-vals)[:restarts]
    best_val, best_r = vals[order[0]], pts[order[0]]

    def f(v):
        return -sign * float(objective(_bloch(v)[None, :])[0])

    for idx in order:
        res = minimize(f, pts[idx], method="Nelder-Mead", options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 600})
        if -res.fun > best_val:
            best_val, best_r = -res.fun, _bloch(res.x)
    return sign * best_val, best_r


def bloch_density(r):
    r = np.asarray(r, dtype=float)
    return (np.eye(2) + r[0] * X + r[1] * Y + r[2] * Z) / 2


@dataclass(frozen=True)
class CcResult:
    lambda1: float
    lambda2: float
    bound: float
    reference: str
    phi1: np.ndarray
    phi2: np.ndarray


def cc_lambdas(u, ref, phi1, phi2, n_a=1):
    """I(Q-bar:A) after ``u`` on A B for inputs phi1 and phi2 on B (any qubit count)."""
    dq = da = 2**n_a
    db = u.shape[0] // da
    out = []
    for phi in (phi1, phi2):
        full = np.kron(np.eye(dq), u)
        st = full @ np.kron(ref, phi) @ full.conj().T
        qa = qcore.ptrace_matrix(st, (dq, da, db), [0, 1])
        out.append(qcore.mutual_information(qa, [0], [1], (dq, da)))
    return tuple(out)


def parallel_lambdas(u, ref, phi1, phi2):
    """(lambda1, lambda2) for u (x) u with reference ref (x) ref and inputs phi (x) phi.

    ``u`` acts on (A, B); the lifted gate acts on (A1 A2, B1 B2).
    """
    perm = [0, 2, 1, 3]
    uu = qcore.permute_factors(np.kron(u, u), (2, 2, 2, 2), perm)
    rr = qcore.permute_factors(np.kron(ref, ref), (2, 2, 2, 2), perm)
    return cc_lambdas(uu, rr, np.kron(phi1, phi1), np.kron(phi2, phi2), n_a=2)


def controllable_correlation(u, refs=("psi_plus", "rho_cc"), order=None, restarts=64, seed=0, candidates=512):
    """Best (lambda1 - lambda2)/2 over reference states and Bloch-ball inputs on B.

    For a fixed reference the two inputs are independent, so lambda1 is a
    maximization and lambda2 a minimization of I(Q-bar:A).
    """
    u = oriented(_check_unitary(u), order)
    rng = np.random.default_rng(seed)
    best = None
    for tag in refs:
        terms = linear_terms(u, REFERENCES[tag])
        obj = lambda r, t=terms: _mi_batch(_states(t, r))  # noqa: E731
        l1, r1 = optimize_bloch(obj, +1, rng, restarts, candidates)
        l2, r2 = optimize_bloch(obj, -1, rng, restarts, candidates)
        res = CcResult(float(l1), float(l2), max(0.0, float(l1 - l2) / 2), tag, bloch_density(r1), bloch_density(r2))
        if best is None or res.bound > best.bound + 1e-12:
            best = res
    return best


def controllable_entanglement(u, order=None, restarts=64, seed=0, candidates=512, sep_tol=1e-6):
    """Largest E_f(Q-bar:A) reachable when some other input leaves Q-bar:A separable.

    The feasibility condition does not involve the first input, so this is
    max E_f if min E_f <= ``sep_tol`` and 0 otherwise.  Returns
    (value, phi1, phi2, min_ef).
    """
    u = oriented(_check_unitary(u), order)
    rng = np.random.default_rng(seed)
    terms = linear_terms(u, PSI_PLUS)
    obj = lambda r: _ef_batch(_states(terms, r))  # noqa: E731
    lo, r2 = optimize_bloch(obj, -1, rng, restarts, candidates)
    hi, r1 = optimize_bloch(obj, +1, rng, restarts, candidates)
    value = float(hi) if lo <= sep_tol else 0.0
    return value, bloch_density(r1), bloch_density(r2), float(lo)


def lower_bound_table(gates=None, restarts=64, seed=0, order=None):
    """Rows (gate, CE, CC, reference tag) for the named library gates."""
    rows = []
    for name in gates or TABLE:
        ce = controllable_entanglement(GATES[name], order, restarts, seed)[0]
        cc = controllable_correlation(GATES[name], order=order, restarts=restarts, seed=seed)
        rows.append((name, ce, cc.bound, cc.reference))
    return rows


def _histogram_sample(ss, restarts, candidates):
    rng = np.random.default_rng(ss)
    u = qcore.haar_unitary(4, rng)
    opt_seed = int(rng.integers(2**32))
    return controllable_correlation(u, order="AB", restarts=restarts, seed=opt_seed, candidates=candidates).bound


def cc_histogram(samples, seed=0, restarts=2, candidates=128, bins=20, workers=1):
    """Controllable-correlation bound of Haar-random two-qubit unitaries.

    Each sample gets its own child seed, so the values do not depend on
    ``workers``.  Haar-random gates are already orientation-free.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    children = np.random.SeedSequence(seed).spawn(samples)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            values = np.array(list(pool.map(_histogram_sample, children, [restarts] * samples, [candidates] * samples)))
    else:
        values = np.array([_histogram_sample(ss, restarts, candidates) for ss in children])
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return {"mean": float(values.mean()), "values": values, "counts": counts, "edges": edges}


def delta_error(x, n):
    """4 n x + (1 + 2x) h(2x / (1 + 2x))."""
    if x < 0:
        raise ValueError("x must be non-negative")
    return 4 * n * x + (1 + 2 * x) * binary_entropy(2 * x / (1 + 2 * x))


# ---------------------------------------------------------------- structure function and rank bound


def structure_function(protocol, x, y):
    """tr (rho_{Q M'} - I/d_Q (x) rho_{M'})^2 on the right side mid-protocol.

    M' is everything the right side holds after the communication round,
    including broadcast classical registers.
    """
    from .protocols import midprotocol_state

    rho, dims, names = midprotocol_state(protocol, x, y, "R")
    nq = sum(1 for n in names if n.startswith("~"))
    dq = int(np.prod(dims[:nq]))
    dm = int(np.prod(dims[nq:])) if len(dims) > nq else 1
    rho_m = qcore.ptrace_matrix(rho, (dq, dm), [1])
    diff = rho - np.kron(np.eye(dq) / dq, rho_m)
    return float(np.real(np.trace(diff @ diff)))


def structure_matrix(protocol, f):
    return np.array([[structure_function(protocol, x, y) for y in range(2**f.n)] for x in range(2**f.n)])


def rank_bound(protocol, f, tol=1e-9):
    """(1/4) log2 rank of the structure matrix, with its rank and the matrix."""
    g = structure_matrix(protocol, f)
    if g.size == 0 or np.max(np.abs(g)) == 0:
        return 0.0, 0, g
    sv = np.linalg.svd(g, compute_uv=False)
    rank = int(np.sum(sv > tol))
    return 0.25 * np.log2(rank) if rank else 0.0, rank, g


def nrank_certificate(f):
    """Lower bound on the non-deterministic rank of M_f from a triangular certificate.

    Rows are peeled greedily: a row with exactly one nonzero among the
    remaining columns becomes the next diagonal entry.  Success means some
    row and column permutation is triangular with nonzero diagonal, so
    every matrix with the same zero pattern has full rank.
    """
    m = np.asarray(f.matrix() if callable(getattr(f, "matrix", None)) else f.matrix) != 0
    N = m.shape[0]
    if m.shape[0] != m.shape[1]:
        return {"lower": 1, "method": "trivial"}
    for name, mat in (("diagonal", m), ("triangular", m), ("anti-triangular", m[:, ::-1])):
        if name == "diagonal":
            if np.array_equal(mat, np.eye(N, dtype=bool)):
                return {"lower": N, "method": name, "rows": list(range(N)), "cols": list(range(N))}
            continue
        if _is_triangular(mat):
            return {"lower": N, "method": name, "rows": list(range(N)), "cols": list(range(N))}
    rows, cols = _peel(m)
    if rows is not None:
        return {"lower": N, "method": "permuted-triangular", "rows": rows, "cols": cols}
    return {"lower": 1 if m.any() else 0, "method": "trivial"}


def _is_triangular(m):
    d = np.all(np.diag(m))
    return bool(d and (not np.triu(m, 1).any() or not np.tril(m, -1).any()))


def _peel(m):
    remaining_rows = set(range(m.shape[0]))
    remaining_cols = set(range(m.shape[1]))
    rows, cols = [], []
    while remaining_rows:
        pick = None
        for r in sorted(remaining_rows):
            nz = [c for c in remaining_cols if m[r, c]]
            if len(nz) == 1:
                pick = (r, nz[0])
                break
        if pick is None:
            return None, None
        rows.append(pick[0])
        cols.append(pick[1])
        remaining_rows.discard(pick[0])
        remaining_cols.discard(pick[1])
    return rows, cols


# ---------------------------------------------------------------- monogamy games and closed-form bounds

BETA = np.cos(np.pi / 8) ** 2


@dataclass(frozen=True)
class MoEGame:
    """BB84 monogamy game repeated ``n`` times, winning on a 1 - delta fraction."""

    n: int = 1
    delta: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0 <= self.delta < 0.5:
            raise ValueError("delta must lie in [0, 1/2)")

    def bound(self):
        return moe_bound(self.n, self.delta)


def breidbart_basis():
    a, b = np.pi / 8, 5 * np.pi / 8
    return np.array([[np.cos(a), np.cos(b)], [np.sin(a), np.sin(b)]], dtype=complex)


def moe_breidbart():
    """Success probability of sharing Psi+ with the referee and measuring in the Breidbart basis."""
    psi = qcore.max_entangled(2).data
    rho = np.outer(psi, psi.conj())
    bases = (np.eye(2, dtype=complex), qcore.H)
    guess = breidbart_basis()
    p = 0.0
    for basis in bases:
        for x in range(2):
            ref = np.outer(basis[:, x], basis[:, x].conj())
            mine = np.outer(guess[:, x], guess[:, x].conj())
            p += np.real(np.trace(np.kron(ref, mine) @ rho)) / len(bases)
    return float(p)


def _check_delta(delta):
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")


def moe_bound(n, delta):
    """(2^h(delta) cos^2(pi/8))^n."""
    _check_delta(delta)
    if n < 1:
        raise ValueError("n must be at least 1")
    return float((2 ** binary_entropy(delta) * BETA) ** n)


def product_measure_bound():
    """1 - h^{-1}(1/2) for product-state resources."""
    return 1.0 - inverse_binary_entropy(0.5, tol=1e-12)


class BoundValue(NamedTuple):
    value: float
    vacuous: bool


def _rate(delta):
    _check_delta(delta)
    q = 2 ** binary_entropy(delta) * BETA
    return -np.log2(q), q >= 1


def robustness_bound(n, delta, gamma):
    """Log-robustness bound n(-log2(2^h(delta) beta)) + log2(1 - gamma)."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    rate, vacuous = _rate(delta)
    return BoundValue(float(n * rate + np.log2(1 - gamma)), bool(vacuous))


def rel_entropy_bound(n, delta, eps):
    """Leading terms -n log2(2^h(delta) beta) - 1 of the relative-entropy bound.

    The expansion needs eps < delta and 2^h(delta) beta > exp(-2 (delta - eps)^2);
    outside that regime, or when the rate is not positive, the value is
    flagged vacuous.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    rate, vacuous = _rate(delta)
    q = 2.0**-rate
    regime = eps < delta and q > np.exp(-2 * (delta - eps) ** 2)
    return BoundValue(float(n * rate - 1), bool(vacuous or not regime))


# ---------------------------------------------------------------- convexity check for unitary targets


def average_fidelity(channel, u):
    """Average-case fidelity of U^dagger o N, from its entanglement fidelity."""
    d = channel.d_in
    fe = qcore.entanglement_fidelity(channel, qcore.unitary_channel(u, channel.in_dims))
    return (d * fe + 1) / (d + 1)


def diamond_proxies(channel, u):
    """(lower, upper) estimates of ||N - U||_diamond from the average fidelity."""
    d = channel.d_in
    fbar = min(1.0, average_fidelity(channel, u))
    lower = 2 * (d + 1) / d * (1 - fbar)
    upper = 2 * np.sqrt(d * (d + 1)) * np.sqrt(max(0.0, 1 - fbar))
    return lower, upper


def convexity_check_unitary(u, channels, weights, tol=1e-10):
    """Check sum_i p_i dist(N_i, U) <= d sqrt(2 dist(sum_i p_i N_i, U)).

    The left side uses the upper fidelity proxy for each term and the right
    side the lower proxy for the mixture.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-9 or len(weights) != len(channels):
        raise ValueError("weights must be a probability vector matching the channels")
    for ch in channels:
        if not ch.is_valid(1e-8):
            raise ValueError("invalid channel in the mixture")
    d = channels[0].d_in
    mix = qcore.QuantumChannel(
        sum(w * ch.choi for w, ch in zip(weights, channels)), channels[0].in_dims, channels[0].out_dims
    )
    lhs = sum(w * diamond_proxies(ch, u)[1] for w, ch in zip(weights, channels))
    rhs = d * np.sqrt(2 * diamond_proxies(mix, u)[0])
    return bool(lhs <= rhs + tol)
