"""Dense linear algebra for multipartite pure states.

Amplitudes are indexed row-major over the subsystem list: the leftmost
subsystem is the most significant digit. Operators are plain complex
``numpy.ndarray`` matrices.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tolerances import DEFAULT

__all__ = [
    "Party",
    "SubsystemLayout",
    "StateVector",
    "DensityMatrix",
    "SchmidtForm",
    "basis_state",
    "tensor_product",
    "apply_local",
    "reduced_density_matrix",
    "partial_trace",
    "reshape_to_matrix",
    "matrix_to_state",
    "schmidt_decompose",
    "polar_unitary_factor",
    "trace_distance",
    "root_fidelity",
    "overlap_up_to_phase",
    "is_unitary",
    "unitarity_error",
]


class Party(str, enum.Enum):
    ALICE = "A"
    BOB = "B"
    BOB_ANCILLA = "Banc"

    @property
    def side(self) -> "Party":
        """The party owning the subsystem; Bob's ancillas belong to Bob."""
        return Party.ALICE if self is Party.ALICE else Party.BOB


def _as_party(label) -> Party:
    if isinstance(label, Party):
        return label
    try:
        return Party(label)
    except ValueError:
        raise ValueError(f"unknown party label {label!r}") from None


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered subsystem dimensions with owning party and optional names."""

    dims: tuple[int, ...]
    party: tuple[Party, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        party = tuple(_as_party(p) for p in self.party)
        if len(dims) != len(party):
            raise ValueError("dims and party must have equal length")
        if any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 1, got {dims}")
        names = tuple(self.names) or tuple("" for _ in dims)
        if len(names) != len(dims):
            raise ValueError("names must match dims in length")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "party", party)
        object.__setattr__(self, "names", names)

    @classmethod
    def bipartite(cls, d_a: int, d_b: int) -> "SubsystemLayout":
        return cls((d_a, d_b), (Party.ALICE, Party.BOB))

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.dims)

    def indices(self, side) -> list[int]:
        """Subsystem indices owned by ``side`` (Bob's side includes ancillas)."""
        side = _as_party(side).side
        return [i for i, p in enumerate(self.party) if p.side is side]

    def party_indices(self, party) -> list[int]:
        """Subsystem indices carrying exactly the label ``party``."""
        party = _as_party(party)
        return [i for i, p in enumerate(self.party) if p is party]

    def dim_of(self, subsystems: Iterable[int]) -> int:
        return math.prod(self.dims[i] for i in subsystems)

    def append(self, dim: int, party=Party.BOB_ANCILLA, name: str = "") -> "SubsystemLayout":
        return SubsystemLayout(self.dims + (dim,), self.party + (_as_party(party),),
                               self.names + (name,))

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(self.dims + other.dims, self.party + other.party,
                               self.names + other.names)

    def drop(self, index: int) -> "SubsystemLayout":
        keep = [i for i in range(len(self)) if i != index]
        return SubsystemLayout([self.dims[i] for i in keep], [self.party[i] for i in keep],
                               [self.names[i] for i in keep])

    def find(self, name: str) -> int:
        """Index of the subsystem called ``name``."""
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no subsystem named {name!r} in layout") from None

    def require_bipartite(self):
        if not self.indices(Party.ALICE) or not self.indices(Party.BOB):
            raise ValueError("layout needs at least one Alice and one Bob subsystem")


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state amplitudes over a :class:`SubsystemLayout`."""

    amplitudes: np.ndarray
    layout: SubsystemLayout

    def __post_init__(self):
        amps = _freeze(self.amplitudes).reshape(-1)
        if amps.size != self.layout.total_dim:
            raise ValueError(f"{amps.size} amplitudes do not fit layout of total "
                             f"dimension {self.layout.total_dim}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes, layout: SubsystemLayout) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm, layout)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.norm ** 2 - 1.0) <= tol

    def tensor(self) -> np.ndarray:
        """Amplitudes as an array with one axis per subsystem."""
        return self.amplitudes.reshape(self.layout.dims)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = _freeze(self.entries)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def violations(self, tol: float = DEFAULT.structural) -> list[str]:
        """Broken density-matrix invariants (empty when physical)."""
        rho = self.entries
        out = []
        herm_err = np.max(np.abs(rho - rho.conj().T), initial=0.0)
        if herm_err > tol:
            out.append(f"not Hermitian (max deviation {herm_err:.3e})")
        tr = np.trace(rho)
        if abs(tr - 1) > tol:
            out.append(f"trace {tr.real:.12g} != 1")
        lam_min = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min(initial=0.0)
        if lam_min < -tol:
            out.append(f"negative eigenvalue {lam_min:.3e}")
        return out

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True, eq=False)
class SchmidtForm:
    """``|psi> = sum_i coefficients[i] |alice_vectors[:, i]> (x) |bob_vectors[:, i]>``.

    Coefficients are the singular values (square roots of the Schmidt
    weights), nonincreasing. ``bob_vectors`` live on the joint space of all
    non-Alice subsystems in layout order.
    """

    coefficients: np.ndarray
    alice_vectors: np.ndarray
    bob_vectors: np.ndarray
    layout: SubsystemLayout = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        return self.coefficients ** 2

    def rank(self, tol: float = DEFAULT.structural) -> int:
        return int(np.count_nonzero(self.coefficients > tol))

    def reassemble(self) -> StateVector:
        m = (self.alice_vectors * self.coefficients) @ self.bob_vectors.T
        return matrix_to_state(m, self.layout)


def basis_state(index, layout: SubsystemLayout) -> StateVector:
    """Computational basis state; ``index`` is a flat int or one digit per subsystem."""
    if np.ndim(index) == 0:
        flat = int(index)
    else:
        flat = int(np.ravel_multi_index(tuple(index), layout.dims))
    amps = np.zeros(layout.total_dim, dtype=np.complex128)
    amps[flat] = 1.0
    return StateVector(amps, layout)


def tensor_product(a, b):
    """Kronecker product of two states (layouts concatenated) or two operators."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), a.layout.concat(b.layout))
    if isinstance(a, StateVector) or isinstance(b, StateVector):
        raise TypeError("tensor_product needs two states or two operators, not a mix")
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise TypeError("operators must be 2-D matrices")
    return np.kron(a, b)


def _permutation(layout: SubsystemLayout, first: Sequence[int]) -> list[int]:
    first = list(first)
    if len(set(first)) != len(first) or any(not 0 <= i < len(layout) for i in first):
        raise ValueError(f"invalid subsystem selection {first}")
    return first + [i for i in range(len(layout)) if i not in first]


def apply_local(op, state: StateVector, subsystems: Sequence[int]) -> StateVector:
    """Apply ``op`` to the joint space of ``subsystems`` (identity elsewhere)."""
    op = np.asarray(op, dtype=np.complex128)
    d = state.layout.dim_of(subsystems)
    if op.shape != (d, d):
        raise ValueError(f"operator of shape {op.shape} does not act on a {d}-dim subspace")
    perm = _permutation(state.layout, subsystems)
    t = state.tensor().transpose(perm).reshape(d, -1)
    t = (op @ t).reshape([state.layout.dims[i] for i in perm])
    return StateVector(t.transpose(np.argsort(perm)).reshape(-1), state.layout)


def _split_matrix(state: StateVector, rows: Sequence[int]) -> np.ndarray:
    perm = _permutation(state.layout, rows)
    d_rows = state.layout.dim_of(rows)
    return state.tensor().transpose(perm).reshape(d_rows, -1)


def reduced_density_matrix(state: StateVector, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on the subsystems ``keep`` (in the given order)."""
    m = _split_matrix(state, keep)
    return DensityMatrix(m @ m.conj().T)


def partial_trace(state: StateVector, keep) -> DensityMatrix:
    """Reduced state of one party: ``keep`` is ``"A"`` or ``"B"``.

    Bob's side comprises every non-Alice subsystem, ancillas included.
    The traced-out side must be nonempty.
    """
    side = _as_party(keep).side
    kept = state.layout.indices(side)
    if not kept:
        raise ValueError(f"party {side.value!r} is absent from the layout")
    if len(kept) == len(state.layout):
        raise ValueError("nothing left to trace out")
    return reduced_density_matrix(state, kept)


def reshape_to_matrix(state: StateVector) -> np.ndarray:
    """Coefficient matrix ``M`` with ``|psi> = sum_ij M_ij |i>_A |j>_rest``."""
    state.layout.require_bipartite()
    return _split_matrix(state, state.layout.indices(Party.ALICE))


def matrix_to_state(m, layout: SubsystemLayout) -> StateVector:
    """Inverse of :func:`reshape_to_matrix` for the given layout."""
    alice = layout.indices(Party.ALICE)
    perm = _permutation(layout, alice)
    t = np.asarray(m, dtype=np.complex128).reshape([layout.dims[i] for i in perm])
    return StateVector(t.transpose(np.argsort(perm)).reshape(-1), layout)


def schmidt_decompose(state: StateVector, tol: float = DEFAULT.structural) -> SchmidtForm:
    """Schmidt decomposition across the Alice / rest cut via the SVD."""
    if not state.is_normalized(tol):
        raise ValueError(f"state is not normalized (norm^2 = {state.norm ** 2:.15g})")
    m = reshape_to_matrix(state)
    x, s, yh = np.linalg.svd(m, full_matrices=False)
    return SchmidtForm(s, x, yh.T, state.layout)


def polar_unitary_factor(c) -> np.ndarray:
    """Unitary ``W = X Y^H`` from the SVD ``C = X S Y^H``.

    ``W`` maximizes ``Re tr(W^H C)`` over all unitaries (orthogonal
    Procrustes). For rank-deficient ``C`` the completion off the support is
    whatever basis the SVD returns, which is deterministic for fixed input.
    """
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"polar factor needs a square matrix, got shape {c.shape}")
    x, _, yh = np.linalg.svd(c)
    return x @ yh


def trace_distance(r0, r1) -> float:
    r0 = np.asarray(r0)
    r1 = np.asarray(r1)
    if r0.shape != r1.shape:
        raise ValueError(f"dimension mismatch: {r0.shape} vs {r1.shape}")
    # canonical operand order makes the result bitwise symmetric
    if r0.tobytes() > r1.tobytes():
        r0, r1 = r1, r0
    diff = r0 - r1
    lam = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, 0.5 * np.abs(lam).sum()))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    lam, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    return (v * np.sqrt(np.clip(lam, 0, None))) @ v.conj().T


def root_fidelity(r0, r1) -> float:
    """Uhlmann root fidelity ``|| sqrt(r0) sqrt(r1) ||_1``."""
    r0 = np.asarray(r0)
    r1 = np.asarray(r1)
    if r0.shape != r1.shape:
        raise ValueError(f"dimension mismatch: {r0.shape} vs {r1.shape}")
    s = np.linalg.svd(_psd_sqrt(r0) @ _psd_sqrt(r1), compute_uv=False)
    return float(min(1.0, s.sum()))


def overlap_up_to_phase(a, b) -> float:
    """``|<a|b>|`` clipped to [0, 1]; insensitive to global phase."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(min(1.0, abs(np.vdot(a, b))))


def unitarity_error(u) -> float:
    """Max-norm of ``U^H U - I``; ``inf`` for non-square input."""
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return math.inf
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0))


def is_unitary(u, tol: float = DEFAULT.structural) -> bool:
    return unitarity_error(u) <= tol
