"""Dense state-vector algebra for small composite systems.

States are plain amplitude vectors over a mixed-radix basis in which the
leftmost subsystem is the most significant digit. Every value here is
immutable; operations return new objects.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

ATOL = 1e-9
PRUNE = 1e-12
MAX_AMPLITUDES = 2**20


class DimensionError(ValueError):
    """Raised when subsystem dimensions do not line up."""


class CapacityError(MemoryError):
    """Raised when a state would exceed the configured amplitude cap."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized pure state over subsystems of dimensions ``dims``."""

    dims: tuple[int, ...]
    amps: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        amps = _frozen(np.ravel(self.amps))
        if any(d < 2 for d in dims):
            raise DimensionError(f"bad subsystem dimensions {dims}")
        if amps.size != int(np.prod(dims, dtype=np.int64)):
            raise DimensionError(f"{amps.size} amplitudes for dims {dims}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite amplitude")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL:
            raise ValueError(f"state not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def _trusted(cls, dims: tuple[int, ...], amps: np.ndarray) -> "PureState":
        """Skip validation for states built here from already valid ones."""
        state = object.__new__(cls)
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        amps.setflags(write=False)
        object.__setattr__(state, "dims", dims)
        object.__setattr__(state, "amps", amps)
        return state

    @classmethod
    def from_amplitudes(cls, amps, dims=None, normalize=False) -> "PureState":
        amps = np.asarray(amps, dtype=complex).ravel()
        if dims is None:
            dims = (amps.size,)
        if normalize:
            n = np.linalg.norm(amps)
            if n == 0:
                raise ValueError("cannot normalize the zero vector")
            amps = amps / n
        return cls(tuple(dims), amps)

    @classmethod
    def basis(cls, dims: Sequence[int], labels: Sequence[int]) -> "PureState":
        dims = tuple(dims)
        amps = np.zeros(int(np.prod(dims, dtype=np.int64)), dtype=complex)
        amps[np.ravel_multi_index(tuple(labels), dims) if dims else 0] = 1.0
        return cls(dims, amps)

    @classmethod
    def empty(cls) -> "PureState":
        return cls((), np.ones(1, dtype=complex))

    @property
    def size(self) -> int:
        return self.amps.size

    def tensor_view(self) -> np.ndarray:
        return self.amps.reshape(self.dims) if self.dims else self.amps.reshape(())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass(frozen=True, eq=False)
class Unitary:
    matrix: np.ndarray
    diagonal: bool = field(default=False, compare=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"unitary must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite unitary entry")
        is_diag = bool(np.count_nonzero(m - np.diag(np.diag(m))) == 0)
        if is_diag:
            ok = np.allclose(np.abs(np.diag(m)), 1.0, rtol=0, atol=ATOL)
        else:
            ok = np.allclose(m.conj().T @ m, np.eye(m.shape[0]), rtol=0, atol=ATOL)
        if not ok:
            raise ValueError("matrix is not unitary within 1e-9")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "diagonal", is_diag)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> "Unitary":
        return Unitary(self.matrix.conj().T)

    def __matmul__(self, other: "Unitary") -> "Unitary":
        return Unitary(self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"density matrix must be square, got {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0, atol=ATOL):
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(m).real - 1.0) > ATOL:
            raise ValueError("density matrix trace != 1")
        if np.linalg.eigvalsh(m).min() < -ATOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.clip(np.linalg.eigvalsh(self.matrix), 0.0, None)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def trace_distance(self, other: "DensityMatrix") -> float:
        return 0.5 * float(np.abs(np.linalg.eigvalsh(self.matrix - other.matrix)).sum())


# -- structural helpers ------------------------------------------------------


def _check_targets(dims: tuple[int, ...], targets: Sequence[int]) -> list[int]:
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise DimensionError(f"duplicate target in {targets}")
    for t in targets:
        if not 0 <= t < len(dims):
            raise DimensionError(f"target {t} out of range for {len(dims)} subsystems")
    return targets


def _front(state: PureState, targets: list[int]) -> tuple[np.ndarray, tuple[int, ...]]:
    """Reshape so the targets form the rows (mixed radix in target order)."""
    psi = np.moveaxis(state.tensor_view(), targets, list(range(len(targets))))
    rest = psi.shape[len(targets):]
    dt = int(np.prod([state.dims[t] for t in targets], dtype=np.int64))
    return psi.reshape(dt, -1), rest


def _back(mat: np.ndarray, dims: tuple[int, ...], targets: list[int]) -> np.ndarray:
    tdims = [dims[t] for t in targets]
    rest = [d for i, d in enumerate(dims) if i not in targets]
    psi = mat.reshape(tdims + rest)
    return np.moveaxis(psi, list(range(len(targets))), targets).reshape(-1)


def tensor(left: PureState, right: PureState, max_size: int | None = None) -> PureState:
    cap = MAX_AMPLITUDES if max_size is None else max_size
    if left.size * right.size > cap:
        raise CapacityError(f"{left.size * right.size} amplitudes exceeds cap {cap}")
    return PureState._trusted(left.dims + right.dims, np.kron(left.amps, right.amps))


def apply_unitary(state: PureState, u: Unitary, targets: Sequence[int]) -> PureState:
    targets = _check_targets(state.dims, targets)
    tdim = int(np.prod([state.dims[t] for t in targets], dtype=np.int64))
    if u.dim != tdim:
        raise DimensionError(f"unitary of dim {u.dim} on targets of dim {tdim}")
    if u.diagonal:
        shape = [1] * len(state.dims)
        for t in targets:
            shape[t] = state.dims[t]
        # a diagonal over the targets broadcasts without moving axes
        diag = np.diag(u.matrix).reshape([state.dims[t] for t in targets])
        order = np.argsort(targets)
        diag = np.transpose(diag, order).reshape(shape)
        out = (state.tensor_view() * diag).reshape(-1)
    else:
        mat, _ = _front(state, targets)
        out = _back(u.matrix @ mat, state.dims, targets)
    return PureState._trusted(state.dims, out)


def _class_weights(mat: np.ndarray, classes: np.ndarray | None):
    rows = np.einsum("ij,ij->i", mat, mat.conj()).real
    if classes is None:
        labels = np.arange(rows.size)
        return labels, rows, labels
    classes = np.asarray(classes)
    if classes.shape != rows.shape:
        raise DimensionError(f"{classes.size} class labels for {rows.size} basis states")
    labels, inverse = np.unique(classes, return_inverse=True)
    weights = np.bincount(inverse, weights=rows, minlength=labels.size)
    return labels, weights, classes


def _collapse(state, targets, mat, classes, outcome, prob) -> PureState:
    keep = classes == outcome
    post = np.where(keep[:, None], mat, 0.0) / np.sqrt(prob)
    return PureState._trusted(state.dims, _back(post, state.dims, targets))


def measure(state: PureState, targets: Sequence[int], rand: float, classes=None):
    """Projective measurement of ``targets`` driven by a uniform variate.

    ``classes`` optionally coarse-grains the target basis: entry ``i`` is the
    outcome label of basis index ``i``. The chosen outcome is the first one
    whose cumulative probability exceeds ``rand``.
    """
    if not 0.0 <= rand < 1.0:
        raise ValueError("rand must lie in [0, 1)")
    targets = _check_targets(state.dims, targets)
    mat, _ = _front(state, targets)
    labels, weights, cls = _class_weights(mat, classes)
    live = np.where(weights > PRUNE, weights, 0.0)
    cum = np.cumsum(live) / live.sum()
    idx = min(int(np.searchsorted(cum, rand, side="right")), labels.size - 1)
    while live[idx] == 0.0:
        idx -= 1
    outcome, prob = int(labels[idx]), float(weights[idx])
    return outcome, prob, _collapse(state, targets, mat, cls, outcome, prob)


def enumerate_branches(state: PureState, targets: Sequence[int], classes=None):
    targets = _check_targets(state.dims, targets)
    mat, _ = _front(state, targets)
    labels, weights, cls = _class_weights(mat, classes)
    return [
        (int(o), float(p), _collapse(state, targets, mat, cls, int(o), float(p)))
        for o, p in zip(labels, weights)
        if p > PRUNE
    ]


def outcome_probabilities(state: PureState, targets: Sequence[int], classes=None) -> dict[int, float]:
    targets = _check_targets(state.dims, targets)
    mat, _ = _front(state, targets)
    labels, weights, _ = _class_weights(mat, classes)
    return {int(o): float(p) for o, p in zip(labels, weights)}


def project(state: PureState, targets: Sequence[int], outcome: int, classes=None) -> tuple[float, PureState]:
    """Probability of one outcome and the renormalized post-state."""
    targets = _check_targets(state.dims, targets)
    mat, _ = _front(state, targets)
    labels, weights, cls = _class_weights(mat, classes)
    hit = np.flatnonzero(labels == outcome)
    if hit.size == 0 or weights[hit[0]] <= PRUNE:
        raise ValueError(f"outcome {outcome} has probability zero")
    prob = float(weights[hit[0]])
    return prob, _collapse(state, targets, mat, cls, outcome, prob)


def reduced_density(state: PureState, keep: Sequence[int]) -> DensityMatrix:
    keep = _check_targets(state.dims, keep)
    mat, _ = _front(state, keep)
    return DensityMatrix(mat @ mat.conj().T)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits, with 0 log 0 taken as 0."""
    lam = rho.eigenvalues()
    lam = lam[lam > 0]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def shannon_entropy(p: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"binary entropy needs p in [0, 1], got {p}")
    return shannon_entropy([p, 1.0 - p])


def fidelity_pure(a: PureState, b: PureState) -> float:
    if a.dims != b.dims:
        raise DimensionError(f"dims differ: {a.dims} vs {b.dims}")
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def fidelity_on(state: PureState, keep: Sequence[int], target: PureState) -> float:
    """<target| rho_keep |target> without forming the reduced density matrix."""
    keep = _check_targets(state.dims, keep)
    if tuple(state.dims[k] for k in keep) != target.dims:
        raise DimensionError("target dims do not match the kept subsystems")
    mat, _ = _front(state, keep)
    v = target.amps.conj() @ mat
    return float(np.vdot(v, v).real)


# -- gate library ------------------------------------------------------------
# Unitaries are immutable, so fixed gates are cached.


def xor_qubit() -> Unitary:
    """CNOT acting on (control, target)."""
    return generalized_xor(2)


@lru_cache(maxsize=256)
def generalized_xor(dim: int) -> Unitary:
    """|x, y> -> |x, y + x mod dim> on (control, target)."""
    m = np.zeros((dim * dim, dim * dim))
    for x in range(dim):
        for y in range(dim):
            m[x * dim + (y + x) % dim, x * dim + y] = 1.0
    return Unitary(m)


_S2 = 1 / np.sqrt(2)


@lru_cache(maxsize=256)
def hadamard() -> Unitary:
    return Unitary(np.array([[_S2, _S2], [_S2, -_S2]]))


@lru_cache(maxsize=256)
def pauli_x() -> Unitary:
    return Unitary(np.array([[0, 1], [1, 0]]))


@lru_cache(maxsize=256)
def pauli_y() -> Unitary:
    return Unitary(np.array([[0, -1j], [1j, 0]]))


@lru_cache(maxsize=256)
def pauli_z() -> Unitary:
    return Unitary(np.diag([1, -1]))


@lru_cache(maxsize=256)
def identity(dim: int) -> Unitary:
    return Unitary(np.eye(dim))


def phase(theta: float) -> Unitary:
    return Unitary(np.diag([1.0, np.exp(1j * theta)]))


@lru_cache(maxsize=256)
def fourier(dim: int) -> Unitary:
    k = np.arange(dim)
    return Unitary(np.exp(2j * np.pi * np.outer(k, k) / dim) / np.sqrt(dim))


@lru_cache(maxsize=256)
def phase_correction(dim: int, k: int) -> Unitary:
    return Unitary(np.diag(np.exp(-2j * np.pi * k * np.arange(dim) / dim)))


def permutation(perm: Sequence[int]) -> Unitary:
    """Unitary sending basis |i> to |perm[i]>."""
    return _permutation(tuple(int(i) for i in perm))


@lru_cache(maxsize=256)
def _permutation(perm: tuple[int, ...]) -> Unitary:
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(perm.size)):
        raise ValueError(f"not a permutation: {perm.tolist()}")
    m = np.zeros((perm.size, perm.size))
    m[perm, np.arange(perm.size)] = 1.0
    return Unitary(m)


def cyclic_shift(dim: int, indices: Sequence[int], s: int) -> Unitary:
    """Within ``indices`` send k_v to k_{v+s mod R}; identity elsewhere."""
    perm = list(range(dim))
    r = len(indices)
    for v, k in enumerate(indices):
        perm[k] = indices[(v + s) % r]
    return permutation(perm)


def complete_to_unitary(dim: int, prescribed: Mapping[int, Sequence[complex]]) -> Unitary:
    """Extend prescribed columns to a full unitary.

    Columns not in ``prescribed`` are filled, in ascending column order, by
    Gram-Schmidt over the standard basis taken in ascending index order;
    candidates with residual norm below 1e-9 are skipped.
    """
    cols = sorted(int(c) for c in prescribed)
    block = np.array([np.asarray(prescribed[c], dtype=complex) for c in cols]).T
    if cols and block.shape[0] != dim:
        raise DimensionError(f"prescribed columns have length {block.shape[0]}, need {dim}")
    if cols and (min(cols) < 0 or max(cols) >= dim):
        raise DimensionError("prescribed column index out of range")
    key = (dim, tuple(cols), block.tobytes() if cols else b"")
    return _complete_cached(key)


@lru_cache(maxsize=256)
def _complete_cached(key) -> Unitary:
    dim, cols, raw = key
    block = np.frombuffer(raw, dtype=complex).reshape(dim, len(cols)) if cols else np.zeros((dim, 0), complex)
    gram = block.conj().T @ block
    if not np.allclose(gram, np.eye(len(cols)), rtol=0, atol=ATOL):
        raise ValueError("prescribed columns are not orthonormal within 1e-9")
    basis = np.zeros((dim, dim), dtype=complex)
    basis[:, : len(cols)] = block
    count = len(cols)
    for i in range(dim):
        if count == dim:
            break
        q = basis[:, :count]
        v = -q @ q[i, :].conj()
        v[i] += 1.0
        v -= q @ (q.conj().T @ v)
        n = np.linalg.norm(v)
        if n < ATOL:
            continue
        basis[:, count] = v / n
        count += 1
    if count != dim:
        raise ValueError("failed to complete the basis")
    free = [c for c in range(dim) if c not in set(cols)]
    u = np.empty((dim, dim), dtype=complex)
    u[:, cols] = block
    u[:, free] = basis[:, len(cols):]
    return Unitary(u)


def random_state(dims: Sequence[int], rng: np.random.Generator) -> PureState:
    dims = tuple(dims)
    n = int(np.prod(dims, dtype=np.int64))
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return PureState.from_amplitudes(v, dims, normalize=True)
