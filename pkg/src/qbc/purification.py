"""Purified classical randomness on Bob's side.

Bob defers a secret choice among distributions ``omega_i`` by entangling
with a ``chi`` register; each ``omega_i`` already defers his choice of
branch ``V_k`` through a ``xi`` register. The purified state lives on
``[A | B | xi | chi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .protocol_model import XI, DistributionFamily, ProtocolSpec, branch_superposition
from .tensor_core import Party, StateVector, overlap_up_to_phase
from .tolerances import DEFAULT

__all__ = [
    "CHI",
    "PurifiedState",
    "FlattenedForm",
    "FlattenError",
    "purify_branches",
    "purify_commitment",
    "effective_distribution",
    "flatten",
    "collapse_ancilla",
    "collapse_probabilities",
    "measure_ancilla",
]

CHI = "chi"


class FlattenError(RuntimeError):
    """The flattened state disagrees with the purified state it came from."""

    def __init__(self, overlap):
        self.overlap = overlap
        super().__init__(f"flattened state has overlap {overlap:.17g} with the purified "
                         "state; inputs are inconsistent")


@dataclass(frozen=True, eq=False)
class PurifiedState:
    state: StateVector
    branch_count: int
    omega_count: int

    def __post_init__(self):
        layout = self.state.layout
        if layout.dims[-1] != self.omega_count or layout.names[-1] != CHI:
            raise ValueError("purified layout must end with the chi register")
        if XI in layout.names and layout.dims[layout.find(XI)] != self.branch_count:
            raise ValueError("xi register dimension does not match branch_count")
        if not self.state.is_normalized(DEFAULT.structural):
            raise ValueError("purified state is not normalized")


@dataclass(frozen=True, eq=False)
class FlattenedForm:
    """Single effective distribution equivalent to a purified mixture.

    ``chi_prime_vectors[j]`` belongs to branch ``kept_branches[j]``; branches
    with zero effective weight are listed in ``dropped_branches``.
    """

    effective_dist: np.ndarray
    chi_prime_vectors: tuple
    kept_branches: tuple
    dropped_branches: tuple
    state: StateVector
    identity_overlap: float


def _check_prob(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError(f"{name} is not a probability vector: {p}")
    return p


def purify_branches(branch_states, pi) -> PurifiedState:
    """``sum_i sqrt(p_i) |branch_i> (x) |chi_i>`` with a fresh ``chi`` register appended."""
    branch_states = list(branch_states)
    pi = _check_prob(pi, "pi")
    if len(branch_states) != pi.size:
        raise ValueError(f"{len(branch_states)} branch states but {pi.size} weights")
    layout = branch_states[0].layout
    if any(s.layout != layout for s in branch_states):
        raise ValueError("branch states do not share a layout")
    cols = np.stack([math.sqrt(p) * s.amplitudes for p, s in zip(pi, branch_states)], axis=1)
    n_branches = layout.dims[layout.find(XI)] if XI in layout.names else 1
    state = StateVector(cols.reshape(-1), layout.append(pi.size, Party.BOB_ANCILLA, CHI))
    return PurifiedState(state, n_branches, pi.size)


def purify_commitment(spec: ProtocolSpec, family: DistributionFamily, b: int,
                      pi=None) -> PurifiedState:
    """Purified commitment ``|Psi'^(b)(pi)>``; ``pi`` defaults to ``family.meta_dist``."""
    pi = family.meta_dist if pi is None else pi
    branches = [branch_superposition(spec, b, q) for q in family.branch_dists]
    return purify_branches(branches, pi)


def effective_distribution(pi, omegas) -> np.ndarray:
    """``q'_k = sum_i p_i q_ik``."""
    pi = np.asarray(pi, dtype=float)
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    if pi.ndim != 1 or omegas.shape[0] != pi.size:
        raise ValueError(f"shape mismatch: pi {pi.shape} vs omegas {omegas.shape}")
    return pi @ omegas


def flatten(purified: PurifiedState, spec: ProtocolSpec, family: DistributionFamily,
            b: int, pi=None, tol: float = DEFAULT.derived) -> FlattenedForm:
    """Rewrite the purified commitment as one effective distribution.

    Builds ``|chi'_k> = sum_i sqrt(p_i q_ik / q'_k) |chi_i>`` for every branch
    with ``q'_k > 0`` and reassembles ``sum_k sqrt(q'_k) V_k U^(b)|phi> |xi_k> |chi'_k>``.
    Raises :class:`FlattenError` when the result is not the purified state.
    """
    pi = family.meta_dist if pi is None else _check_prob(pi, "pi")
    q = family.branch_dists
    q_eff = effective_distribution(pi, q)
    kept = tuple(int(k) for k in np.flatnonzero(q_eff > 0))
    dropped = tuple(int(k) for k in np.flatnonzero(q_eff <= 0))

    chi_prime = tuple(np.sqrt(pi * q[:, k] / q_eff[k]) for k in kept)
    # amplitudes of V_k U^(b)|phi> (x) |xi_k>, one column per branch
    branch_cols = np.eye(spec.n_branches)
    out = np.zeros((spec.layout.total_dim * spec.n_branches, purified.omega_count),
                   dtype=np.complex128)
    for k, chi_k in zip(kept, chi_prime):
        xi_term = branch_superposition(spec, b, branch_cols[k]).amplitudes
        out += math.sqrt(q_eff[k]) * np.outer(xi_term, chi_k)
    state = StateVector(out.reshape(-1), purified.state.layout)
    ov = overlap_up_to_phase(state, purified.state)
    if ov < 1 - tol:
        raise FlattenError(ov)
    return FlattenedForm(q_eff, chi_prime, kept, dropped, state, ov)


def collapse_probabilities(purified: PurifiedState) -> np.ndarray:
    """Outcome probabilities of measuring the ``chi`` register."""
    cols = purified.state.amplitudes.reshape(-1, purified.omega_count)
    return np.sum(np.abs(cols) ** 2, axis=0)


def collapse_ancilla(purified: PurifiedState, i: int):
    """Project ``chi`` onto ``|chi_i>``.

    Returns ``(p_i, branch_state)``; the branch state is ``None`` when
    ``p_i == 0``.
    """
    if not 0 <= i < purified.omega_count:
        raise IndexError(f"omega index {i} out of range [0, {purified.omega_count})")
    col = purified.state.amplitudes.reshape(-1, purified.omega_count)[:, i]
    p = float(np.vdot(col, col).real)
    if p == 0:
        return 0.0, None
    layout = purified.state.layout.drop(len(purified.state.layout) - 1)
    return p, StateVector(col / math.sqrt(p), layout)


def measure_ancilla(purified: PurifiedState, seed):
    """Sample ``i`` with probability ``p_i`` and collapse onto it."""
    rng = np.random.default_rng(seed)
    probs = collapse_probabilities(purified)
    i = int(rng.choice(purified.omega_count, p=probs / probs.sum()))
    return i, collapse_ancilla(purified, i)[1]
