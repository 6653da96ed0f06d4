"""Concealment checks and the constructive EPR attack.

The cheating unitary is recovered as the polar factor of ``M1 M0^H`` where
``M_b`` is the Alice-by-rest coefficient matrix of the commitment state.
When Bob's reductions agree, ``M1 = U M0`` for some Alice unitary and the
polar factor reproduces ``U`` on the support of ``M0``; this avoids pairing
Schmidt vectors, which is ill-defined for degenerate coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .protocol_model import DistributionFamily, ProtocolSpec, commit_state
from .purification import purify_commitment
from .tensor_core import (
    Party,
    StateVector,
    apply_local,
    overlap_up_to_phase,
    partial_trace,
    polar_unitary_factor,
    reshape_to_matrix,
    root_fidelity,
    trace_distance,
)
from .tolerances import DEFAULT

__all__ = [
    "NotConcealingError",
    "PreconditionError",
    "Concealment",
    "AttackReport",
    "EPRTranscript",
    "concealment_check",
    "build_cheating_unitary",
    "apply_alice",
    "attack_overlap",
    "cheating_bound",
    "state_cheating_bound",
    "attack_report",
    "verify_theorem1",
    "epr_attack_run",
]


class NotConcealingError(ValueError):
    """Bob's reduced states differ, so no exact Alice-local attack exists."""

    def __init__(self, distance, fidelity_bound=None):
        self.distance = distance
        self.fidelity_bound = fidelity_bound
        msg = f"commitments are not concealing (trace distance {distance:.12g})"
        if fidelity_bound is not None:
            msg += f"; best attack overlap is bounded by {fidelity_bound:.12g}"
        super().__init__(msg)


class PreconditionError(ValueError):
    pass


class Concealment(NamedTuple):
    concealing: bool
    max_trace_distance: float


@dataclass(frozen=True, eq=False)
class AttackReport:
    concealing: bool
    max_trace_distance: float
    cheating_unitary: np.ndarray | None
    attack_overlap: float
    per_branch_overlaps: list = field(default_factory=list)
    fidelity_bound: float = 1.0
    branch_agreement: np.ndarray | None = None


@dataclass(frozen=True)
class EPRTranscript:
    commit_bit: int
    unveil_bit: int
    applied_unitary: bool
    verification_overlap: float
    fidelity_bound: float


def _bob_distance(psi0: StateVector, psi1: StateVector) -> float:
    return trace_distance(partial_trace(psi0, Party.BOB), partial_trace(psi1, Party.BOB))


def concealment_check(spec: ProtocolSpec, family: DistributionFamily,
                      tol: float = DEFAULT.conceal) -> Concealment:
    """Compare Bob's b=0 and b=1 reductions per ``omega_i`` and for the purified mixture."""
    distances = [_bob_distance(commit_state(spec, family, 0, i), commit_state(spec, family, 1, i))
                 for i in range(family.n_omegas)]
    distances.append(_bob_distance(purify_commitment(spec, family, 0).state,
                                   purify_commitment(spec, family, 1).state))
    worst = max(distances)
    return Concealment(worst <= tol, worst)


def cheating_bound(rho0, rho1) -> float:
    """Uhlmann root fidelity: the best overlap any Alice-local unitary can reach."""
    return root_fidelity(rho0, rho1)


def state_cheating_bound(psi0: StateVector, psi1: StateVector) -> float:
    """Root fidelity of the Bob reductions of two pure states.

    Equals the trace norm of ``M1 M0^H``, which avoids matrix square roots
    of nearly singular reductions.
    """
    if psi0.layout != psi1.layout:
        raise ValueError("states do not share a layout")
    c = reshape_to_matrix(psi1) @ reshape_to_matrix(psi0).conj().T
    return float(min(1.0, np.linalg.svd(c, compute_uv=False).sum()))


def build_cheating_unitary(psi0: StateVector, psi1: StateVector,
                           tol: float = DEFAULT.conceal, check: bool = True) -> np.ndarray:
    """Alice unitary taking ``psi0`` to ``psi1`` (up to global phase).

    With ``check`` the Bob reductions must agree to trace distance ``tol``,
    otherwise :class:`NotConcealingError` is raised. Without it the best
    Procrustes guess is returned regardless.
    """
    if psi0.layout != psi1.layout:
        raise ValueError("states do not share a layout")
    if check:
        dist = _bob_distance(psi0, psi1)
        if dist > tol:
            raise NotConcealingError(dist, state_cheating_bound(psi0, psi1))
    m0 = reshape_to_matrix(psi0)
    m1 = reshape_to_matrix(psi1)
    return polar_unitary_factor(m1 @ m0.conj().T)


def apply_alice(u_a, psi: StateVector) -> StateVector:
    """``(U_A (x) I) |psi>``."""
    return apply_local(u_a, psi, psi.layout.indices(Party.ALICE))


def attack_overlap(u_a, psi0: StateVector, psi1: StateVector) -> float:
    if psi0.layout != psi1.layout:
        raise ValueError("states do not share a layout")
    return overlap_up_to_phase(apply_alice(u_a, psi0), psi1)


def attack_report(spec: ProtocolSpec, family: DistributionFamily,
                  tol_conceal: float = DEFAULT.conceal, pi=None) -> AttackReport:
    """Attack at the purified level: one unitary built from ``|Psi'^(b)(pi)>``.

    Non-concealing input gives a report with ``cheating_unitary=None`` and
    the fidelity bound filled in rather than an exception.
    """
    concealing, dist = concealment_check(spec, family, tol_conceal)
    psi0 = purify_commitment(spec, family, 0, pi).state
    psi1 = purify_commitment(spec, family, 1, pi).state
    bound = state_cheating_bound(psi0, psi1)
    if not concealing:
        return AttackReport(False, dist, None, 0.0, [], bound)
    u_a = build_cheating_unitary(psi0, psi1, tol=tol_conceal)
    per_branch = [(i, attack_overlap(u_a, commit_state(spec, family, 0, i),
                                     commit_state(spec, family, 1, i)))
                  for i in range(family.n_omegas)]
    return AttackReport(True, dist, u_a, attack_overlap(u_a, psi0, psi1), per_branch, bound)


def verify_theorem1(spec: ProtocolSpec, family: DistributionFamily,
                    tol_conceal: float = DEFAULT.conceal, pi=None) -> AttackReport:
    """Check that the purified-level unitary attacks every secret branch.

    Every ``p_i`` must be nonzero. Besides the per-branch overlaps of the
    single purified-level unitary, ``branch_agreement[i, j]`` records how
    closely the unitary built from branch ``i`` alone matches the one built
    from branch ``j`` when both act on the b=0 state of branch ``j``.
    """
    pi = family.meta_dist if pi is None else np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        zeros = [int(i) for i in np.flatnonzero(pi <= 0)]
        raise PreconditionError(
            f"p_i = 0 for omega indices {zeros}; Consider the case where p_i != 0 "
            "for all i")
    report = attack_report(spec, family, tol_conceal, pi)
    if not report.concealing:
        raise NotConcealingError(report.max_trace_distance, report.fidelity_bound)

    pairs = [(commit_state(spec, family, 0, i), commit_state(spec, family, 1, i))
             for i in range(family.n_omegas)]
    branch_u = [build_cheating_unitary(p0, p1, tol=tol_conceal) for p0, p1 in pairs]
    n = family.n_omegas
    agreement = np.empty((n, n))
    for j, (p0, _) in enumerate(pairs):
        target = apply_alice(branch_u[j], p0)
        for i in range(n):
            agreement[i, j] = overlap_up_to_phase(apply_alice(branch_u[i], p0), target)
    return AttackReport(report.concealing, report.max_trace_distance, report.cheating_unitary,
                        report.attack_overlap, report.per_branch_overlaps,
                        report.fidelity_bound, agreement)


def epr_attack_run(spec: ProtocolSpec, family: DistributionFamily, unveil_bit: int,
                   commit_bit: int = 0, tol_conceal: float = DEFAULT.conceal,
                   force: bool = False) -> EPRTranscript:
    """Alice commits to ``commit_bit`` and later unveils ``unveil_bit``.

    When the bits differ she applies the cheating unitary to her subsystems.
    Bob's check is the overlap of the final joint state with the honest
    ``|Psi'^(unveil_bit)>``. ``force`` runs the attack on non-concealing
    input using the unchecked Procrustes unitary.
    """
    if {commit_bit, unveil_bit} - {0, 1}:
        raise ValueError("bits must be 0 or 1")
    concealing, dist = concealment_check(spec, family, tol_conceal)
    psi = {b: purify_commitment(spec, family, b).state for b in (0, 1)}
    bound = state_cheating_bound(psi[commit_bit], psi[unveil_bit])
    if not concealing and not force:
        raise NotConcealingError(dist, bound)
    cheat = unveil_bit != commit_bit
    if not cheat:
        # Bob receives exactly the honest state
        return EPRTranscript(commit_bit, unveil_bit, False, 1.0, bound)
    u_a = build_cheating_unitary(psi[commit_bit], psi[unveil_bit], check=False)
    final = apply_alice(u_a, psi[commit_bit])
    return EPRTranscript(commit_bit, unveil_bit, True,
                         overlap_up_to_phase(final, psi[unveil_bit]), bound)
