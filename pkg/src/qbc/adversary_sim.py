"""Monte-Carlo picture of a dishonest Bob facing distribution checks.

Bob is told to pick branch ``V_k`` on every qubit with distribution
``target``. He instead prepares, per qubit, a purified mixture of other
distributions whose effective distribution equals ``target``. Checked
qubits look honest; on the kept ones he measures his ``chi`` register and
ends up following some ``omega_i`` that need not be ``target``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .protocol_model import DistributionFamily
from .purification import effective_distribution

__all__ = [
    "InfeasibleTargetError",
    "CorollaryScenario",
    "SwitchStats",
    "solve_mixing_weights",
    "make_scenario",
    "frequency_check",
    "simulate_check_phase",
    "post_check_switch",
    "match_mass",
    "all_match_probability",
]

INFEASIBLE_RESIDUAL = 1e-6
CONSTRAINT_TOL = 1e-9
EQUAL_DIST_TOL = 1e-12
SIGMAS = 4.0


class InfeasibleTargetError(ValueError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"target is outside the convex hull of the family "
                         f"(least-squares residual {residual:.3e})")


@dataclass(frozen=True, eq=False)
class CorollaryScenario:
    target_dist: np.ndarray
    family: DistributionFamily
    mixing: np.ndarray
    n_qubits: int
    check_fraction: float

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if not 0 < self.check_fraction < 1:
            raise ValueError("check_fraction must lie in (0, 1)")
        for name in ("target_dist", "mixing"):
            p = np.array(getattr(self, name), dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, name, p)
            if np.any(p < 0) or abs(p.sum() - 1) > EQUAL_DIST_TOL:
                raise ValueError(f"{name} is not a probability vector")
        eff = effective_distribution(self.mixing, self.family.branch_dists)
        err = float(np.max(np.abs(eff - self.target_dist)))
        if err > CONSTRAINT_TOL:
            raise ValueError(f"mixing does not reproduce the target (max error {err:.3e})")

    @property
    def checked_count(self) -> int:
        return int(round(self.check_fraction * self.n_qubits))

    @property
    def kept_count(self) -> int:
        return self.n_qubits - self.checked_count


@dataclass(frozen=True, eq=False)
class SwitchStats:
    checked_count: int
    kept_count: int
    empirical_check_dist: np.ndarray
    check_passed: bool
    realized_dists: np.ndarray | None = None
    all_target_probability: float | None = None

    def realized_frequencies(self, n_omegas: int) -> np.ndarray:
        if self.realized_dists is None or self.kept_count == 0:
            return np.zeros(n_omegas)
        return np.bincount(self.realized_dists, minlength=n_omegas) / self.kept_count


def solve_mixing_weights(target, family) -> np.ndarray:
    """Mixing weights ``pi`` on the simplex with ``pi @ omegas == target``.

    Solves the simplex-constrained least-squares problem with an active-set
    nonnegative solver; the normalization row is redundant for exact
    solutions because every ``omega_i`` sums to one. Raises
    :class:`InfeasibleTargetError` when the residual exceeds 1e-6.
    """
    omegas = family.branch_dists if isinstance(family, DistributionFamily) \
        else np.atleast_2d(np.asarray(family, dtype=float))
    target = np.asarray(target, dtype=float)
    if omegas.size == 0:
        raise ValueError("family is empty")
    if target.shape != (omegas.shape[1],):
        raise ValueError(f"target of shape {target.shape} does not match "
                         f"{omegas.shape[1]} branches")
    a = np.vstack([omegas.T, np.ones(omegas.shape[0])])
    rhs = np.append(target, 1.0)
    pi, _ = nnls(a, rhs)
    total = pi.sum()
    if total > 0:
        pi = pi / total
    residual = float(np.linalg.norm(pi @ omegas - target))
    if total == 0 or residual > INFEASIBLE_RESIDUAL:
        raise InfeasibleTargetError(residual)
    return pi


def make_scenario(target, family, n_qubits: int, check_fraction: float) -> CorollaryScenario:
    omegas = family.branch_dists if isinstance(family, DistributionFamily) else family
    fam = DistributionFamily(omegas, solve_mixing_weights(target, omegas))
    return CorollaryScenario(np.asarray(target, dtype=float), fam, fam.meta_dist,
                             n_qubits, check_fraction)


def frequency_check(empirical, expected, n: int) -> bool:
    """Pass iff every ``|empirical_k - q_k| <= 4 sqrt(q_k (1 - q_k) / n)``."""
    if n == 0:
        return True
    empirical = np.asarray(empirical, dtype=float)
    expected = np.asarray(expected, dtype=float)
    band = SIGMAS * np.sqrt(expected * (1 - expected) / n)
    # rounding slack so deterministic distributions pass exactly
    return bool(np.all(np.abs(empirical - expected) <= band + 1e-12))


def _streams(seed):
    check_ss, switch_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(check_ss), np.random.default_rng(switch_ss)


def _sample_actions(scenario: CorollaryScenario, n: int, rng, via_ancilla: bool) -> np.ndarray:
    q = scenario.family.branch_dists
    if not via_ancilla:
        q_eff = effective_distribution(scenario.mixing, q)
        return rng.choice(q.shape[1], size=n, p=q_eff / q_eff.sum())
    # measure chi then xi: two-stage sampling with the same k-marginal
    omega_idx = rng.choice(q.shape[0], size=n, p=scenario.mixing)
    u = rng.random(n)
    cdf = np.cumsum(q[omega_idx], axis=1)
    return np.minimum((u[:, None] >= cdf).sum(axis=1), q.shape[1] - 1)


def simulate_check_phase(scenario: CorollaryScenario, seed, via_ancilla: bool = False) -> SwitchStats:
    """Sample the branch index of each checked qubit and run the frequency test.

    By default the index is drawn from the effective distribution (measuring
    the ``xi`` register of the flattened state); ``via_ancilla`` measures
    ``chi`` first and then ``xi``.
    """
    rng, _ = _streams(seed)
    n = scenario.checked_count
    n_branches = scenario.family.n_branches
    k = _sample_actions(scenario, n, rng, via_ancilla)
    emp = np.bincount(k, minlength=n_branches) / n if n else np.zeros(n_branches)
    passed = frequency_check(emp, scenario.target_dist, n)
    return SwitchStats(n, scenario.kept_count, emp, passed)


def post_check_switch(scenario: CorollaryScenario, seed, via_ancilla: bool = False) -> SwitchStats:
    """Check phase, then a ``chi`` measurement on every kept qubit.

    ``realized_dists[j]`` is the index of the distribution governing kept
    qubit ``j`` afterwards.
    """
    stats = simulate_check_phase(scenario, seed, via_ancilla)
    _, rng = _streams(seed)
    realized = rng.choice(scenario.family.n_omegas, size=scenario.kept_count, p=scenario.mixing)
    return SwitchStats(stats.checked_count, stats.kept_count, stats.empirical_check_dist,
                       stats.check_passed, realized, all_match_probability(scenario))


def _matches(scenario: CorollaryScenario) -> np.ndarray:
    diff = np.abs(scenario.family.branch_dists - scenario.target_dist).max(axis=1)
    return diff <= EQUAL_DIST_TOL


def match_mass(scenario: CorollaryScenario) -> float:
    """Total mixing weight on distributions identical to the target."""
    return float(scenario.mixing[_matches(scenario)].sum())


def all_match_probability(scenario: CorollaryScenario) -> float:
    """Probability that every kept qubit ends up following exactly the target."""
    return math.pow(match_mass(scenario), scenario.kept_count)
