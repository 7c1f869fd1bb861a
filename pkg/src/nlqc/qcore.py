"""Dense linear algebra for states, channels, distances and entropies.

Everything is exact dense complex arithmetic.  Logarithms are base 2.
Choi matrices use the unnormalized convention
``J = sum_ij N(|i><j|) (x) |i><j|`` with the output factor first.
"""

from dataclasses import dataclass, field
import itertools
import json

import numpy as np

MAX_DIM = 2**20
EIG_CLAMP = 1e-10


class DimensionCapError(ValueError):
    """Raised when a Hilbert space would exceed ``MAX_DIM``."""


def check_dim(total):
    if total > MAX_DIM:
        raise DimensionCapError(f"total dimension {total} exceeds cap {MAX_DIM}")
    return total


# ---------------------------------------------------------------- operators

KINDS = ("state-vector", "density", "unitary", "general")


@dataclass(frozen=True)
class DenseOperator:
    """Complex vector or matrix on a tensor product of factors ``dims``."""

    data: np.ndarray
    dims: tuple
    kind: str = "general"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"bad factor dimensions {dims}")
        total = check_dim(int(np.prod(dims)) if dims else 1)
        data = np.asarray(self.data, dtype=complex)
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "state-vector":
            data = data.reshape(-1)
            if data.shape != (total,):
                raise ValueError("vector length does not match dims")
        elif data.shape != (total, total):
            raise ValueError(f"matrix shape {data.shape} does not match dims {dims}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self):
        return int(np.prod(self.dims)) if self.dims else 1

    def matrix(self):
        """Density/operator matrix; state vectors become projectors."""
        if self.kind == "state-vector":
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_density(self):
        return DenseOperator(self.matrix(), self.dims, "density")

    def validate(self, tol=1e-10):
        """Raise ``ValueError`` if the kind invariants fail."""
        d = self.data
        if self.kind == "state-vector":
            if abs(np.linalg.norm(d) - 1) > tol:
                raise ValueError("state vector is not normalized")
        elif self.kind == "density":
            if np.max(np.abs(d - d.conj().T)) > tol:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(d).real - 1) > tol:
                raise ValueError("density matrix does not have unit trace")
            if np.linalg.eigvalsh((d + d.conj().T) / 2).min() < -tol:
                raise ValueError("density matrix has a negative eigenvalue")
        elif self.kind == "unitary":
            if np.max(np.abs(d.conj().T @ d - np.eye(len(d)))) > tol:
                raise ValueError("operator is not unitary")
        return self

    def to_json(self):
        flat = self.data.reshape(-1)
        inter = np.empty(2 * flat.size)
        inter[0::2] = flat.real
        inter[1::2] = flat.imag
        return json.dumps({"dims": list(self.dims), "kind": self.kind, "entries": inter.tolist()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        inter = np.asarray(obj["entries"], dtype=float)
        flat = inter[0::2] + 1j * inter[1::2]
        total = int(np.prod(obj["dims"]))
        if obj["kind"] != "state-vector":
            flat = flat.reshape(total, total)
        return cls(flat, tuple(obj["dims"]), obj["kind"])


def as_matrix(op):
    return op.matrix() if isinstance(op, DenseOperator) else np.asarray(op, dtype=complex)


def _dims_of(op, dims):
    if dims is not None:
        return tuple(dims)
    if isinstance(op, DenseOperator):
        return op.dims
    n = np.asarray(op).shape[0]
    return (n,)


def tensor(a, b):
    """Kronecker product of two operators of compatible kind."""
    vec_a, vec_b = a.kind == "state-vector", b.kind == "state-vector"
    if vec_a != vec_b:
        raise ValueError("cannot tensor a state vector with a matrix")
    check_dim(a.dim * b.dim)
    if vec_a:
        kind = "state-vector"
    elif a.kind == b.kind:
        kind = a.kind
    else:
        kind = "general"
    return DenseOperator(np.kron(a.data, b.data), a.dims + b.dims, kind)


def tensor_all(ops):
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def ket(index, dims):
    """Computational basis vector; ``index`` is an int or a digit tuple."""
    dims = tuple(dims)
    if not isinstance(index, (int, np.integer)):
        index = int(np.ravel_multi_index(tuple(index), dims))
    v = np.zeros(int(np.prod(dims)), dtype=complex)
    v[index] = 1
    return DenseOperator(v, dims, "state-vector")


def maximally_mixed(dims):
    dims = tuple(dims) if np.iterable(dims) else (dims,)
    d = int(np.prod(dims))
    return DenseOperator(np.eye(d) / d, dims, "density")


def max_entangled(d):
    """|Phi> = sum_i |ii>/sqrt(d) on two d-level systems."""
    v = np.eye(d).reshape(-1) / np.sqrt(d)
    return DenseOperator(v, (d, d), "state-vector")


def bell_state(a, b):
    """Psi_ab = (I (x) X^a Z^b)|Psi+>; Psi_00 is Psi+."""
    v = np.kron(np.eye(2), paulix_z(a, b)) @ max_entangled(2).data
    return DenseOperator(v, (2, 2), "state-vector")


def classically_correlated(d=2):
    """rho_cc = sum_i |ii><ii| / d."""
    m = np.zeros((d * d, d * d))
    for i in range(d):
        m[i * d + i, i * d + i] = 1 / d
    return DenseOperator(m, (d, d), "density")


# ---------------------------------------------------------------- gates

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])
T = np.diag([1, np.exp(1j * np.pi / 4)])
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def paulix_z(a, b):
    """X^a Z^b."""
    return np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)


def pauli_string(labels):
    """Tensor product of Paulis from a string such as ``'XIZ'``."""
    table = {"I": I2, "X": X, "Y": Y, "Z": Z}
    out = np.ones((1, 1), dtype=complex)
    for c in labels:
        out = np.kron(out, table[c])
    return out


# columns are the Bell states Psi_ab ordered (00, 01, 10, 11)
BELL_BASIS = np.stack(
    [bell_state(a, b).data for a, b in itertools.product(range(2), repeat=2)], axis=1
)


# ---------------------------------------------------------------- partial traces

def partial_trace(op, keep, dims=None):
    """Reduce ``op`` to the factors listed in ``keep`` (in the given order).

    Accepts a ``DenseOperator`` or a raw matrix with explicit ``dims``.
    Returns the same type it was given.
    """
    dims = _dims_of(op, dims)
    keep = list(keep)
    n = len(dims)
    for k in keep:
        if not 0 <= k < n:
            raise IndexError(f"factor index {k} out of range for {n} factors")
    if len(set(keep)) != len(keep):
        raise IndexError("repeated factor index")
    if isinstance(op, DenseOperator) and op.kind == "state-vector":
        psi = op.data.reshape(dims)
        rest = [i for i in range(n) if i not in keep]
        m = np.transpose(psi, keep + rest).reshape(int(np.prod([dims[k] for k in keep])), -1)
        red = m @ m.conj().T
    else:
        red = ptrace_matrix(as_matrix(op), dims, keep)
    if isinstance(op, DenseOperator):
        kind = "density" if op.kind in ("density", "state-vector") else "general"
        return DenseOperator(red, tuple(dims[k] for k in keep), kind)
    return red


def ptrace_matrix(rho, dims, keep):
    """Partial trace of a matrix; ``keep`` order defines the output order."""
    dims = list(dims)
    n = len(dims)
    keep = list(keep)
    rest = [i for i in range(n) if i not in keep]
    t = np.asarray(rho).reshape(dims + dims)
    perm = keep + rest + [n + k for k in keep] + [n + r for r in rest]
    t = np.transpose(t, perm)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    dr = int(np.prod([dims[r] for r in rest])) if rest else 1
    t = t.reshape(dk, dr, dk, dr)
    return np.einsum("ajbj->ab", t)


def permute_factors(rho, dims, order):
    """Reorder the tensor factors of a matrix."""
    dims = list(dims)
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    t = np.transpose(t, list(order) + [n + o for o in order])
    d = int(np.prod(dims))
    return t.reshape(d, d)


def partial_transpose(rho, dims, sys):
    dims = list(dims)
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    axes = list(range(2 * n))
    axes[sys], axes[n + sys] = axes[n + sys], axes[sys]
    d = int(np.prod(dims))
    return np.transpose(t, axes).reshape(d, d)


# ---------------------------------------------------------------- entropies

def binary_entropy(p):
    """h(p) in bits, with h(0) = h(1) = 0."""
    p = float(p)
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def inverse_binary_entropy(y, tol=1e-12):
    """The p in [0, 1/2] with h(p) = y, by bisection."""
    if not 0 <= y <= 1:
        raise ValueError("binary entropy values lie in [0, 1]")
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if binary_entropy(mid) < y:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def entropy_of_spectrum(evals):
    ev = np.asarray(evals, dtype=float)
    ev = ev[ev > EIG_CLAMP]
    return float(-np.sum(ev * np.log2(ev)))


def von_neumann_entropy(rho):
    """S(rho) = -tr rho log2 rho."""
    if isinstance(rho, DenseOperator):
        if rho.kind == "state-vector":
            return 0.0
        if rho.kind != "density":
            raise ValueError("entropy needs a density operator")
    m = as_matrix(rho)
    return entropy_of_spectrum(np.linalg.eigvalsh((m + m.conj().T) / 2))


def _subsystem_entropy(rho, dims, part):
    part = sorted(part)
    if not part:
        return 0.0
    if len(part) == len(dims):
        return von_neumann_entropy(rho)
    return von_neumann_entropy(ptrace_matrix(rho, dims, part))


def _parts_check(dims, *parts):
    seen = set()
    for p in parts:
        for k in p:
            if not 0 <= k < len(dims):
                raise IndexError(f"factor index {k} out of range")
            if k in seen:
                raise ValueError("subsystem parts overlap")
            seen.add(k)


def mutual_information(rho, part_a, part_b, dims=None):
    """I(A:B) = S(A) + S(B) - S(AB); other factors are traced out."""
    dims = _dims_of(rho, dims)
    _parts_check(dims, part_a, part_b)
    m = as_matrix(rho)
    return (
        _subsystem_entropy(m, dims, part_a)
        + _subsystem_entropy(m, dims, part_b)
        - _subsystem_entropy(m, dims, list(part_a) + list(part_b))
    )


def conditional_mutual_information(rho, part_a, part_b, part_c, dims=None):
    """I(A:B|C) = S(AC) + S(BC) - S(C) - S(ABC)."""
    dims = _dims_of(rho, dims)
    _parts_check(dims, part_a, part_b, part_c)
    m = as_matrix(rho)
    a, b, c = list(part_a), list(part_b), list(part_c)
    return (
        _subsystem_entropy(m, dims, a + c)
        + _subsystem_entropy(m, dims, b + c)
        - _subsystem_entropy(m, dims, c)
        - _subsystem_entropy(m, dims, a + b + c)
    )


# ---------------------------------------------------------------- distances

def _same_shape(a, b):
    if isinstance(a, DenseOperator) and isinstance(b, DenseOperator) and a.dims != b.dims:
        raise ValueError(f"shape mismatch {a.dims} vs {b.dims}")
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch {ma.shape} vs {mb.shape}")
    return ma, mb


def trace_norm(m):
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def trace_distance(a, b):
    """One-norm ||a - b||_1 (orthogonal pure states give 2)."""
    ma, mb = _same_shape(a, b)
    diff = ma - mb
    return float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


def psd_sqrt(m):
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a, b):
    """F = ||sqrt(a) sqrt(b)||_1^2."""
    ma, mb = _same_shape(a, b)
    return float(trace_norm(psd_sqrt(ma) @ psd_sqrt(mb)) ** 2)


def purified_distance(a, b):
    """P = sqrt(1 - F) with F the squared fidelity above."""
    return float(np.sqrt(max(0.0, 1.0 - fidelity(a, b))))


def uhlmann_extension(rho_a, sigma_ab, dims):
    """Extension of ``rho_a`` close to ``sigma_ab`` (dims = (d_A, d_B)).

    Purify ``sigma_ab`` on A|BC, then choose the purification of ``rho_a``
    with maximal overlap (polar decomposition) and trace out C.
    """
    da, db = dims
    sig = as_matrix(sigma_ab)
    w, v = np.linalg.eigh((sig + sig.conj().T) / 2)
    w = np.clip(w, 0, None)
    dc = len(w)
    # |sigma>_{ABC} = sum_k sqrt(w_k) |v_k>_{AB} |k>_C, as an A x (BC) matrix
    psi = (v * np.sqrt(w)).reshape(da, db * dc)
    root_rho = psd_sqrt(as_matrix(rho_a))
    u_, _, vh = np.linalg.svd(root_rho @ psi, full_matrices=False)
    m_rho = root_rho @ (u_ @ vh)
    full = m_rho.reshape(-1)
    return ptrace_matrix(np.outer(full, full.conj()), (da, db, dc), [0, 1])


# ---------------------------------------------------------------- random objects

def haar_unitary(d, rng):
    """Haar-random unitary: QR of a complex Gaussian with the phases of R fixed."""
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state_vector(d, rng):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d, rng, rank=None):
    """Random density matrix from a Ginibre matrix of the given rank."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


# ---------------------------------------------------------------- channels

@dataclass(frozen=True)
class QuantumChannel:
    """A channel stored by its Choi matrix (output factors first)."""

    choi: np.ndarray
    in_dims: tuple
    out_dims: tuple
    kraus: tuple = None
    out_sides: tuple = field(default=None, compare=False)
    classical_out: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "in_dims", tuple(self.in_dims))
        object.__setattr__(self, "out_dims", tuple(self.out_dims))
        c = np.asarray(self.choi, dtype=complex)
        n = self.d_in * self.d_out
        if c.shape != (n, n):
            raise ValueError("Choi matrix shape does not match dimensions")
        c.setflags(write=False)
        object.__setattr__(self, "choi", c)

    @property
    def d_in(self):
        return int(np.prod(self.in_dims)) if self.in_dims else 1

    @property
    def d_out(self):
        return int(np.prod(self.out_dims)) if self.out_dims else 1

    def apply(self, rho):
        """N(rho) = tr_in[J (I (x) rho^T)]."""
        r = as_matrix(rho)
        j = self.choi.reshape(self.d_out, self.d_in, self.d_out, self.d_in)
        return np.einsum("aibj,ij->ab", j, r)

    def validity_residuals(self):
        """(min eigenvalue, trace-preservation error) of the Choi matrix."""
        c = (self.choi + self.choi.conj().T) / 2
        mineig = float(np.linalg.eigvalsh(c).min())
        tp = ptrace_matrix(self.choi, (self.d_out, self.d_in), [1])
        return mineig, float(np.max(np.abs(tp - np.eye(self.d_in))))

    def is_valid(self, tol=1e-10):
        mineig, tp = self.validity_residuals()
        return mineig >= -tol and tp <= tol


def choi_from_kraus(kraus, d_in):
    d_out = kraus[0].shape[0]
    j = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for k in kraus:
        # column i of K is K|i>; vec = sum_i K|i> (x) |i>
        v = np.asarray(k).reshape(d_out, d_in).reshape(-1)
        j += np.outer(v, v.conj())
    return j


def channel_from_kraus(kraus, in_dims, out_dims=None):
    in_dims = tuple(in_dims)
    out_dims = tuple(in_dims if out_dims is None else out_dims)
    kraus = tuple(np.asarray(k, dtype=complex) for k in kraus)
    return QuantumChannel(choi_from_kraus(kraus, int(np.prod(in_dims))), in_dims, out_dims, kraus)


def unitary_channel(u, dims=None):
    u = np.asarray(u, dtype=complex)
    dims = (u.shape[0],) if dims is None else tuple(dims)
    return channel_from_kraus([u], dims, dims)


def identity_channel(dims):
    dims = tuple(dims) if np.iterable(dims) else (dims,)
    return unitary_channel(np.eye(int(np.prod(dims))), dims)


def replacement_channel(state, in_dims):
    """rho -> tr(rho) * state."""
    s = as_matrix(state)
    d_in = int(np.prod(in_dims))
    out_dims = state.dims if isinstance(state, DenseOperator) else (len(s),)
    return QuantumChannel(np.kron(s, np.eye(d_in)), in_dims, out_dims)


def depolarizing_channel(p, d):
    """rho -> p rho + (1 - p) tr(rho) I/d."""
    ident = identity_channel((d,)).choi
    return QuantumChannel(p * ident + (1 - p) * np.eye(d * d) / d, (d,), (d,))


def measurement_copy_channel(basis, copies=2):
    """Measure in the columns of ``basis`` and write the outcome into ``copies`` registers."""
    basis = np.asarray(basis, dtype=complex)
    d = basis.shape[0]
    kraus = []
    for b in range(d):
        out = np.zeros(d**copies, dtype=complex)
        out[sum(b * d**k for k in range(copies))] = 1
        kraus.append(np.outer(out, basis[:, b].conj()))
    return channel_from_kraus(kraus, (d,), (d,) * copies)


def compose(second, first):
    """second o first, computed on Choi matrices via Kraus-free link product."""
    if first.out_dims != second.in_dims:
        raise ValueError("dimension mismatch in composition")
    da, db, dc = first.d_in, first.d_out, second.d_out
    j1 = first.choi.reshape(db, da, db, da)
    j2 = second.choi.reshape(dc, db, dc, db)
    j = np.einsum("cbdB,baBA->cadA", j2, j1).reshape(dc * da, dc * da)
    return QuantumChannel(j, first.in_dims, second.out_dims)


def channel_tensor(a, b):
    """a (x) b acting on in_a in_b -> out_a out_b."""
    ja = a.choi.reshape(a.d_out, a.d_in, a.d_out, a.d_in)
    jb = b.choi.reshape(b.d_out, b.d_in, b.d_out, b.d_in)
    j = np.einsum("aibj,ckdl->acikbdjl", ja, jb)
    n = a.d_out * b.d_out * a.d_in * b.d_in
    return QuantumChannel(j.reshape(n, n), a.in_dims + b.in_dims, a.out_dims + b.out_dims)


def channels_equal(a, b, tol=1e-9):
    """Compare Choi matrices: residual = ||J_a - J_b||_1 / d_in."""
    if a.in_dims != b.in_dims or a.out_dims != b.out_dims:
        if a.d_in != b.d_in or a.d_out != b.d_out:
            raise ValueError(f"channel shape mismatch {a.in_dims}->{a.out_dims} vs {b.in_dims}->{b.out_dims}")
    residual = trace_distance(a.choi, b.choi) / a.d_in
    return residual <= tol, residual


def entanglement_fidelity(channel, target):
    """F(I (x) N (Phi), I (x) M (Phi)) on a maximally entangled input."""
    d = channel.d_in
    return fidelity(channel.choi / d, target.choi / d)


# ---------------------------------------------------------------- register simulation

class RegisterState:
    """Pure state over named registers, used to simulate circuits exactly.

    Measurements are deferred: a measured register is rotated to the
    computational basis and then flagged classical.  Later operations may
    only read it as a control.  Discarded registers stay in the
    purification and are traced out when the state is reduced.
    """

    def __init__(self):
        self.psi = np.ones((), dtype=complex)
        self.names = []
        self.dims = []
        self.classical = set()
        self.discarded = set()

    # bookkeeping
    def axis(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no register named {name!r}") from None

    def dim(self, name):
        return self.dims[self.axis(name)]

    def total_dim(self):
        return int(np.prod(self.dims)) if self.dims else 1

    def add(self, name, vector, dims=None):
        """Append registers prepared in ``vector`` (names may be a list)."""
        names = [name] if isinstance(name, str) else list(name)
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        if dims is None:
            dims = [len(vector)] if len(names) == 1 else [2] * len(names)
        dims = list(dims)
        for n in names:
            if n in self.names:
                raise ValueError(f"register {n!r} already exists")
        check_dim(self.total_dim() * int(np.prod(dims)))
        self.psi = np.multiply.outer(self.psi, vector.reshape(dims))
        self.names.extend(names)
        self.dims.extend(dims)

    def prepare(self, name, dim=2, index=0):
        v = np.zeros(dim, dtype=complex)
        v[index] = 1
        self.add(name, v)

    def _live(self, names):
        for n in names:
            if n in self.discarded:
                raise ValueError(f"register {n!r} was discarded")

    def apply(self, u, targets):
        targets = list(targets)
        self._live(targets)
        for t in targets:
            if t in self.classical:
                raise ValueError(f"register {t!r} is classical; it can only be a control")
        self._apply(np.asarray(u, dtype=complex), [self.axis(t) for t in targets], self.psi)

    def _apply(self, u, axes, psi):
        dims = [psi.shape[a] for a in axes]
        k = int(np.prod(dims))
        if u.shape != (k, k):
            raise ValueError(f"operator of shape {u.shape} does not match targets {dims}")
        ut = u.reshape(dims + dims)
        n = len(axes)
        out = np.tensordot(ut, psi, axes=(list(range(n, 2 * n)), axes))
        out = np.moveaxis(out, list(range(n)), axes)
        psi[...] = out

    def controlled(self, u_of, targets, controls, coherent=False):
        """Apply ``u_of(values)`` on ``targets`` for each classical value tuple of ``controls``.

        ``u_of`` returns a matrix or ``None`` for no operation.  With
        ``coherent=True`` the controls may be quantum registers and the
        operation is the corresponding block-diagonal unitary.
        """
        targets, controls = list(targets), list(controls)
        self._live(targets + controls)
        for c in controls:
            if not coherent and c not in self.classical:
                raise ValueError(f"control {c!r} is not a classical register")
        for t in targets:
            if t in self.classical:
                raise ValueError(f"register {t!r} is classical")
        caxes = [self.axis(c) for c in controls]
        taxes = [self.axis(t) for t in targets]
        for values in itertools.product(*[range(self.dims[a]) for a in caxes]):
            u = u_of(*values)
            if u is None:
                continue
            index = [slice(None)] * self.psi.ndim
            for a, v in zip(caxes, values):
                index[a] = v
            view = self.psi[tuple(index)]
            # axes of the view shift down for every fixed control axis before them
            shifted = [a - sum(1 for c in caxes if c < a) for a in taxes]
            self._apply(np.asarray(u, dtype=complex), shifted, view)

    def compute(self, name, fn, controls, dim=2, coherent=False):
        """New classical register holding ``fn(*control values)``.

        With ``coherent=True`` this is the isometry |v>|0> -> |v>|fn(v)> on
        arbitrary control registers and the new register stays quantum.
        """
        self.prepare(name, dim)
        if not coherent:
            self.classical.add(name)
        caxes = [self.axis(c) for c in controls]
        for c in controls:
            if not coherent and c not in self.classical:
                raise ValueError(f"input {c!r} is not a classical register")
        tax = self.axis(name)
        for values in itertools.product(*[range(self.dims[a]) for a in caxes]):
            val = int(fn(*values)) % dim
            if val == 0:
                continue
            index = [slice(None)] * self.psi.ndim
            for a, v in zip(caxes, values):
                index[a] = v
            view = self.psi[tuple(index)]
            ax = tax - sum(1 for c in caxes if c < tax)
            view[...] = np.roll(view, val, axis=ax)

    def xor_into(self, name, fn, controls):
        """In place ``name <- name + fn(*controls) mod dim`` on a classical register."""
        if name not in self.classical:
            raise ValueError(f"register {name!r} is not classical")
        if name in controls:
            raise ValueError("the updated register cannot be its own control")
        self._live([name] + list(controls))
        caxes = [self.axis(c) for c in controls]
        for c in controls:
            if c not in self.classical:
                raise ValueError(f"input {c!r} is not a classical register")
        tax = self.axis(name)
        dim = self.dims[tax]
        for values in itertools.product(*[range(self.dims[a]) for a in caxes]):
            val = int(fn(*values)) % dim
            if val == 0:
                continue
            index = [slice(None)] * self.psi.ndim
            for a, v in zip(caxes, values):
                index[a] = v
            view = self.psi[tuple(index)]
            ax = tax - sum(1 for c in caxes if c < tax)
            view[...] = np.roll(view, val, axis=ax)

    def measure(self, targets, basis=None):
        """Measure in the columns of ``basis`` (computational by default)."""
        targets = list(targets)
        if basis is not None:
            self.apply(np.asarray(basis, dtype=complex).conj().T, targets)
        else:
            self._live(targets)
        self.classical.update(targets)

    def povm(self, name, kraus, targets):
        """Kraus measurement: new classical register ``name`` records the outcome."""
        targets = list(targets)
        self._live(targets)
        axes = [self.axis(t) for t in targets]
        check_dim(self.total_dim() * len(kraus))
        branches = []
        for k in kraus:
            branch = self.psi.copy()
            self._apply(np.asarray(k, dtype=complex), axes, branch)
            branches.append(branch)
        self.psi = np.stack(branches, axis=-1)
        self.names.append(name)
        self.dims.append(len(kraus))
        self.classical.add(name)

    def discard(self, targets):
        self._live(targets)
        self.discarded.update(targets)

    def reduced(self, keep):
        """Density matrix on ``keep`` (in order) with classical registers dephased."""
        keep = list(keep)
        axes = [self.axis(k) for k in keep]
        rest = [i for i in range(len(self.names)) if i not in axes]
        dk = int(np.prod([self.dims[a] for a in axes])) if axes else 1
        m = np.transpose(self.psi, axes + rest).reshape(dk, -1)
        rho = m @ m.conj().T
        cls = [i for i, k in enumerate(keep) if k in self.classical]
        if cls:
            kd = [self.dims[a] for a in axes]
            n = len(kd)
            t = rho.reshape(kd + kd)
            for i in cls:
                shape = [1] * (2 * n)
                shape[i] = shape[n + i] = kd[i]
                t = t * np.eye(kd[i]).reshape(shape)
            rho = t.reshape(dk, dk)
        return rho


@dataclass(frozen=True)
class Op:
    """One circuit instruction for ``channel_from_circuit``.

    kind: 'unitary' (matrix, targets), 'measure' (targets, optional basis),
    'discard' (targets), 'prepare' (name, vector), 'controlled'
    (fn, targets, controls), 'compute' (name, fn, controls, dim),
    'povm' (name, kraus, targets).
    """

    kind: str
    targets: tuple = ()
    matrix: object = None
    name: str = None
    controls: tuple = ()
    fn: object = None
    dim: int = 2


def unitary(u, *targets):
    return Op("unitary", tuple(targets), matrix=u)


def measure(*targets, basis=None):
    return Op("measure", tuple(targets), matrix=basis)


def discard(*targets):
    return Op("discard", tuple(targets))


def prepare(name, vector):
    return Op("prepare", name=name, matrix=vector)


def controlled(fn, targets, controls):
    return Op("controlled", tuple(targets), fn=fn, controls=tuple(controls))


def compute(name, fn, controls, dim=2):
    return Op("compute", name=name, fn=fn, controls=tuple(controls), dim=dim)


def povm(name, kraus, targets):
    return Op("povm", tuple(targets), matrix=kraus, name=name)


def run_op(state, op):
    if op.kind == "unitary":
        state.apply(op.matrix, op.targets)
    elif op.kind == "measure":
        state.measure(op.targets, op.matrix)
    elif op.kind == "discard":
        state.discard(op.targets)
    elif op.kind == "prepare":
        vec = op.matrix.data if isinstance(op.matrix, DenseOperator) else op.matrix
        dims = op.matrix.dims if isinstance(op.matrix, DenseOperator) else None
        state.add(op.name, vec, dims)
    elif op.kind == "controlled":
        state.controlled(op.fn, op.targets, op.controls)
    elif op.kind == "compute":
        state.compute(op.name, op.fn, op.controls, op.dim)
    elif op.kind == "povm":
        state.povm(op.name, op.matrix, op.targets)
    else:
        raise ValueError(f"unknown op kind {op.kind!r}")


def entangle_with_reference(state, inputs):
    """Add each input register maximally entangled with a reference ``~name``.

    Returns the reference names.
    """
    refs = []
    for name, d in inputs:
        check_dim(state.total_dim() * d * d)
        state.add(["~" + name, name], np.eye(d).reshape(-1) / np.sqrt(d), [d, d])
        refs.append("~" + name)
    return refs


def choi_from_state(state, outputs, refs):
    """Choi matrix (outputs first) from a state whose refs purify the inputs."""
    d_in = int(np.prod([state.dim(r) for r in refs])) if refs else 1
    return d_in * state.reduced(list(outputs) + list(refs))


def channel_from_circuit(inputs, ops, outputs):
    """Channel of a register circuit.

    ``inputs`` is a list of (name, dim); ``outputs`` lists the registers kept.
    Classical outputs are dephased; everything else is traced out.
    """
    inputs = list(inputs.items()) if isinstance(inputs, dict) else list(inputs)
    state = RegisterState()
    refs = entangle_with_reference(state, inputs)
    for op in ops:
        run_op(state, op)
    for o in outputs:
        if o in state.discarded:
            raise ValueError(f"output {o!r} was discarded")
    choi = choi_from_state(state, outputs, refs)
    return QuantumChannel(
        choi,
        tuple(d for _, d in inputs),
        tuple(state.dim(o) for o in outputs),
        classical_out=tuple(o for o in outputs if o in state.classical),
    )
