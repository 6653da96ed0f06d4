"""Protocol instances: data model, file format, validation and generators.

A protocol file is a JSON document::

    {
      "layout": {"dims": [2, 2], "party": ["A", "B"]},
      "initial_state": [[re, im], ...],
      "commit": {"0": matrix, "1": matrix},
      "branches": [matrix, ...],
      "family": {"omegas": [[q, ...], ...], "pi": [p, ...]},
      "corollary": {"target": [q, ...], "n_qubits": 10000, "check_fraction": 0.5},
      "meta": {...}
    }

Matrices are row-major lists of rows, complex entries are ``[re, im]``.
``branches`` are Bob-local: they act on the joint space of the ``"B"``
subsystems and are identity-padded on Alice's side. ``corollary`` and
``meta`` are optional.
"""

from __future__ import annotations

import json
import math
import numbers
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .tensor_core import (
    Party,
    StateVector,
    SubsystemLayout,
    apply_local,
    basis_state,
    unitarity_error,
)
from .tolerances import DEFAULT

__all__ = [
    "ProtocolSpec",
    "DistributionFamily",
    "CorollaryStanza",
    "ValidationReport",
    "ProtocolDocument",
    "ProtocolParseError",
    "parse_document",
    "parse_protocol",
    "serialize",
    "validate",
    "commit_state",
    "branch_superposition",
    "haar_unitary",
    "known_attack",
    "random_concealing_instance",
    "random_nonconcealing_instance",
    "XI",
]

XI = "xi"
PROB_TOL = 1e-12


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    """End-of-commitment protocol data.

    ``commit_unitaries[b]`` acts on the full space of ``layout``;
    ``bob_branches[k]`` acts on the joint space of the ``"B"`` subsystems.
    """

    layout: SubsystemLayout
    initial_state: StateVector
    commit_unitaries: dict
    bob_branches: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "commit_unitaries",
                           {b: _readonly(u, np.complex128) for b, u in self.commit_unitaries.items()})
        object.__setattr__(self, "bob_branches",
                           tuple(_readonly(v, np.complex128) for v in self.bob_branches))

    @property
    def bob_subsystems(self) -> list[int]:
        return self.layout.party_indices(Party.BOB)

    @property
    def d_bob(self) -> int:
        return self.layout.dim_of(self.bob_subsystems)

    @property
    def n_branches(self) -> int:
        return len(self.bob_branches)


@dataclass(frozen=True, eq=False)
class DistributionFamily:
    """Bob's secret distributions ``branch_dists[i, k] = q_ik`` and mixing ``meta_dist[i] = p_i``."""

    branch_dists: np.ndarray
    meta_dist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "branch_dists", _readonly(np.atleast_2d(self.branch_dists), float))
        object.__setattr__(self, "meta_dist", _readonly(np.atleast_1d(self.meta_dist), float))

    @property
    def n_omegas(self) -> int:
        return self.branch_dists.shape[0]

    @property
    def n_branches(self) -> int:
        return self.branch_dists.shape[1]

    @classmethod
    def deterministic(cls, n_branches: int = 1, k: int = 0) -> "DistributionFamily":
        q = np.zeros((1, n_branches))
        q[0, k] = 1.0
        return cls(q, [1.0])


@dataclass(frozen=True, eq=False)
class CorollaryStanza:
    target: np.ndarray
    n_qubits: int
    check_fraction: float

    def __post_init__(self):
        object.__setattr__(self, "target", _readonly(self.target, float))


class ValidationReport(NamedTuple):
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(f"{path}: {msg}" for path, msg in self.violations)


class ProtocolDocument(NamedTuple):
    spec: ProtocolSpec
    family: DistributionFamily
    corollary: CorollaryStanza | None = None


class ProtocolParseError(ValueError):
    """Malformed or invalid protocol document.

    Syntax errors carry ``line``, ``column`` and ``position``; schema and
    validation errors carry the offending ``path`` and, for validation,
    the full list of ``violations``.
    """

    def __init__(self, message, *, path=None, line=None, column=None, position=None,
                 violations=()):
        self.path = path
        self.line = line
        self.column = column
        self.position = position
        self.violations = tuple(violations)
        where = []
        if path is not None:
            where.append(path)
        if position is not None:
            where.append(f"line {line} column {column} (position {position})")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


# --------------------------------------------------------------------------
# validation

def _prob_violations(path, p, expected_len=None):
    out = []
    p = np.asarray(p, dtype=float)
    if expected_len is not None and p.shape[-1] != expected_len:
        out.append((path, f"has length {p.shape[-1]}, expected {expected_len}"))
    if not np.all(np.isfinite(p)):
        out.append((path, "contains non-finite entries"))
        return out
    if np.any(p < 0):
        out.append((path, f"has negative entries (min {p.min():.3e})"))
    s = p.sum()
    if abs(s - 1.0) > PROB_TOL:
        out.append((path, f"sums to {s:.15g}, not 1"))
    return out


def validate(spec: ProtocolSpec, family: DistributionFamily | None = None,
             corollary: CorollaryStanza | None = None,
             tol: float = DEFAULT.structural) -> ValidationReport:
    """Check every invariant of the instance and report all violations."""
    v = []
    layout = spec.layout
    if not layout.indices(Party.ALICE):
        v.append(("layout.party", "no Alice ('A') subsystem"))
    if not layout.party_indices(Party.BOB):
        v.append(("layout.party", "no Bob ('B') subsystem"))

    psi = spec.initial_state
    if psi.layout.dims != layout.dims:
        v.append(("initial_state", f"layout {psi.layout.dims} differs from {layout.dims}"))
    if abs(psi.norm ** 2 - 1) > tol:
        v.append(("initial_state", f"not normalized (norm^2 = {psi.norm ** 2:.15g})"))

    d = layout.total_dim
    keys = set(spec.commit_unitaries)
    if keys != {0, 1}:
        v.append(("commit", f"keys {sorted(keys, key=str)} must be exactly 0 and 1"))
    for b, u in sorted(spec.commit_unitaries.items(), key=lambda kv: str(kv[0])):
        path = f"commit.{b}"
        if u.shape != (d, d):
            v.append((path, f"shape {u.shape}, expected ({d}, {d})"))
            continue
        err = unitarity_error(u)
        if err > tol:
            v.append((path, f"not unitary (max |U^H U - I| = {err:.3e})"))

    d_b = spec.d_bob
    if not spec.bob_branches:
        v.append(("branches", "at least one Bob branch operator is required"))
    for k, vk in enumerate(spec.bob_branches):
        path = f"branches[{k}]"
        if vk.shape != (d_b, d_b):
            hint = " (full-space matrices are rejected; give the Bob-local block)" \
                if vk.shape == (d, d) and d != d_b else ""
            v.append((path, f"shape {vk.shape}, expected Bob-local ({d_b}, {d_b}){hint}"))
            continue
        err = unitarity_error(vk)
        if err > tol:
            v.append((path, f"not unitary (max |V^H V - I| = {err:.3e})"))

    if family is not None:
        q = family.branch_dists
        if q.ndim != 2 or q.shape[0] == 0:
            v.append(("family.omegas", "must be a nonempty list of distributions"))
        else:
            for i, row in enumerate(q):
                v.extend(_prob_violations(f"family.omegas[{i}]", row, spec.n_branches))
        v.extend(_prob_violations("family.pi", family.meta_dist, q.shape[0]))

    if corollary is not None:
        v.extend(_prob_violations("corollary.target", corollary.target, spec.n_branches))
        if corollary.n_qubits < 1:
            v.append(("corollary.n_qubits", "must be >= 1"))
        if not 0 < corollary.check_fraction < 1:
            v.append(("corollary.check_fraction", "must lie strictly between 0 and 1"))
    return ValidationReport(tuple(v))


# --------------------------------------------------------------------------
# file format

def _encode_vector(a):
    return [[float(z.real), float(z.imag)] for z in np.asarray(a, dtype=complex).reshape(-1)]


def _encode_matrix(m):
    return [_encode_vector(row) for row in np.asarray(m, dtype=complex)]


def _fail(path, msg):
    raise ProtocolParseError(msg, path=path)


def _is_number(x):
    return isinstance(x, numbers.Real) and not isinstance(x, bool)


def _decode_complex(x, path):
    if not (isinstance(x, list) and len(x) == 2 and all(_is_number(c) for c in x)):
        _fail(path, "complex numbers must be [re, im] pairs")
    return complex(x[0], x[1])


def _decode_vector(x, path):
    if not isinstance(x, list) or not x:
        _fail(path, "expected a nonempty list of [re, im] pairs")
    return np.array([_decode_complex(z, f"{path}[{i}]") for i, z in enumerate(x)])


def _decode_matrix(x, path):
    if not isinstance(x, list) or not x:
        _fail(path, "expected a nonempty list of rows")
    rows = [_decode_vector(r, f"{path}[{i}]") for i, r in enumerate(x)]
    if len({len(r) for r in rows}) != 1:
        _fail(path, "rows have unequal lengths")
    return np.array(rows)


def _decode_reals(x, path):
    if not isinstance(x, list) or not x or not all(_is_number(c) for c in x):
        _fail(path, "expected a nonempty list of numbers")
    return np.array(x, dtype=float)


def _get(obj, key, path, kind=dict):
    if not isinstance(obj, dict) or key not in obj:
        _fail(path or "<root>", f"missing field {key!r}")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        _fail(f"{path}.{key}" if path else key, f"expected {kind.__name__}")
    return val


def parse_document(text) -> ProtocolDocument:
    """Parse and validate a protocol document.

    Raises :class:`ProtocolParseError` on syntax errors (with line, column and
    character position), schema errors (with the field path) and invariant
    violations (with every violation found).
    """
    if not isinstance(text, str):
        text = text.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolParseError(f"syntax error: {exc.msg}", line=exc.lineno,
                                 column=exc.colno, position=exc.pos) from None
    if not isinstance(doc, dict):
        _fail("<root>", "document must be a JSON object")

    lay = _get(doc, "layout", "")
    dims = _get(lay, "dims", "layout", list)
    party = _get(lay, "party", "layout", list)
    if not dims or not all(isinstance(d, int) and not isinstance(d, bool) for d in dims):
        _fail("layout.dims", "expected a nonempty list of integers")
    if any(p not in ("A", "B") for p in party):
        _fail("layout.party", "labels must be 'A' or 'B'")
    try:
        layout = SubsystemLayout(dims, party)
    except ValueError as exc:
        _fail("layout", str(exc))

    amps = _decode_vector(_get(doc, "initial_state", "", list), "initial_state")
    if amps.size != layout.total_dim:
        _fail("initial_state", f"has {amps.size} amplitudes, layout needs {layout.total_dim}")
    commit = _get(doc, "commit", "")
    commit_unitaries = {}
    for key, m in commit.items():
        if key not in ("0", "1"):
            _fail(f"commit.{key}", "commit keys must be '0' and '1'")
        commit_unitaries[int(key)] = _decode_matrix(m, f"commit.{key}")
    branches = [_decode_matrix(m, f"branches[{k}]")
                for k, m in enumerate(_get(doc, "branches", "", list))]
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        _fail("meta", "expected object")
    spec = ProtocolSpec(layout, StateVector(amps, layout), commit_unitaries, branches, meta)

    fam = _get(doc, "family", "")
    omegas = _get(fam, "omegas", "family", list)
    if not omegas:
        _fail("family.omegas", "expected a nonempty list of distributions")
    rows = [_decode_reals(r, f"family.omegas[{i}]") for i, r in enumerate(omegas)]
    if len({len(r) for r in rows}) != 1:
        _fail("family.omegas", "distributions have unequal lengths")
    pi = _decode_reals(_get(fam, "pi", "family", list), "family.pi")
    family = DistributionFamily(np.array(rows), pi)

    corollary = None
    if "corollary" in doc:
        cor = _get(doc, "corollary", "")
        n_qubits = _get(cor, "n_qubits", "corollary", int)
        frac = _get(cor, "check_fraction", "corollary", None)
        if not _is_number(frac):
            _fail("corollary.check_fraction", "expected a number")
        corollary = CorollaryStanza(_decode_reals(_get(cor, "target", "corollary", list),
                                                  "corollary.target"), n_qubits, float(frac))

    report = validate(spec, family, corollary)
    if not report.ok:
        first_path, first_msg = report.violations[0]
        more = f" (+{len(report.violations) - 1} more)" if len(report.violations) > 1 else ""
        raise ProtocolParseError(first_msg + more, path=first_path, violations=report.violations)
    return ProtocolDocument(spec, family, corollary)


def parse_protocol(text) -> tuple[ProtocolSpec, DistributionFamily]:
    doc = parse_document(text)
    return doc.spec, doc.family


def serialize(spec: ProtocolSpec, family: DistributionFamily,
              corollary: CorollaryStanza | None = None) -> str:
    """Render the instance as a protocol document (exact float round trip)."""
    doc: dict[str, Any] = {
        "layout": {"dims": list(spec.layout.dims),
                   "party": [p.value for p in spec.layout.party]},
        "initial_state": _encode_vector(spec.initial_state.amplitudes),
        "commit": {str(b): _encode_matrix(u) for b, u in sorted(spec.commit_unitaries.items())},
        "branches": [_encode_matrix(v) for v in spec.bob_branches],
        "family": {"omegas": [[float(x) for x in row] for row in family.branch_dists],
                   "pi": [float(x) for x in family.meta_dist]},
    }
    if corollary is not None:
        doc["corollary"] = {"target": [float(x) for x in corollary.target],
                            "n_qubits": int(corollary.n_qubits),
                            "check_fraction": float(corollary.check_fraction)}
    doc["meta"] = spec.meta
    # one top-level field per line keeps diffs readable without exploding matrices
    body = ",\n".join(f" {json.dumps(k)}: {json.dumps(v, sort_keys=True)}" for k, v in doc.items())
    return "{\n" + body + "\n}\n"


# --------------------------------------------------------------------------
# commitment states

def branch_superposition(spec: ProtocolSpec, b: int, q) -> StateVector:
    """``sum_k sqrt(q_k) (V_k U^(b) |phi>) (x) |xi_k>`` with ``xi`` appended rightmost."""
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.n_branches,):
        raise ValueError(f"distribution of length {q.shape} does not match "
                         f"{spec.n_branches} branches")
    base = StateVector(spec.commit_unitaries[b] @ spec.initial_state.amplitudes, spec.layout)
    cols = np.zeros((spec.layout.total_dim, spec.n_branches), dtype=np.complex128)
    for k, vk in enumerate(spec.bob_branches):
        if q[k] > 0:
            cols[:, k] = math.sqrt(q[k]) * apply_local(vk, base, spec.bob_subsystems).amplitudes
    return StateVector(cols.reshape(-1), spec.layout.append(spec.n_branches, Party.BOB_ANCILLA, XI))


def commit_state(spec: ProtocolSpec, family: DistributionFamily, b: int,
                 omega_index: int) -> StateVector:
    """Bob-purified commitment state for bit ``b`` under distribution ``omega_index``."""
    if b not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {b!r}")
    if not 0 <= omega_index < family.n_omegas:
        raise IndexError(f"omega index {omega_index} out of range [0, {family.n_omegas})")
    return branch_superposition(spec, b, family.branch_dists[omega_index])


# --------------------------------------------------------------------------
# generators

def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Ginibre matrix with phase-fixed R."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    qm, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return qm * ph


def _unitary_with_first_column(v, rng) -> np.ndarray:
    d = v.size
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    z[:, 0] = v
    qm, r = np.linalg.qr(z)
    qm[:, 0] *= r[0, 0] / abs(r[0, 0])
    qm[:, 0] = v  # equal up to rounding already; pin it exactly
    return qm


def _dirichlet(rng, n):
    return rng.dirichlet(np.ones(n)) if n > 1 else np.ones(1)


def _check_dims(d_a, d_b, n_branches, n_omegas):
    if d_a < 2 or d_b < 2:
        raise ValueError(f"dimensions must be >= 2, got d_A={d_a}, d_B={d_b}")
    if n_branches < 1 or n_omegas < 1:
        raise ValueError("n_branches and n_omegas must be >= 1")


def random_concealing_instance(seed: int, d_a: int, d_b: int, n_branches: int = 2,
                               n_omegas: int | None = None):
    """Instance concealing by construction: ``U^(1) = (G (x) I_B) U^(0)``.

    ``G`` is a Haar-random Alice unitary stored under ``meta["known_attack"]``.
    ``n_omegas`` defaults to 1 for a single branch and 2 otherwise. Returns
    ``(spec, family)``; identical seeds give bit-identical instances.
    """
    if n_omegas is None:
        n_omegas = 1 if n_branches == 1 else 2
    _check_dims(d_a, d_b, n_branches, n_omegas)
    rng = np.random.default_rng(seed)
    layout = SubsystemLayout.bipartite(d_a, d_b)
    u0 = haar_unitary(d_a * d_b, rng)
    g = haar_unitary(d_a, rng)
    u1 = np.kron(g, np.eye(d_b)) @ u0
    branches = [haar_unitary(d_b, rng) for _ in range(n_branches)]
    omegas = np.array([_dirichlet(rng, n_branches) for _ in range(n_omegas)])
    pi = _dirichlet(rng, n_omegas)
    meta = {"generator": "random_concealing_instance", "seed": seed,
            "known_attack": _encode_matrix(g)}
    spec = ProtocolSpec(layout, basis_state(0, layout), {0: u0, 1: u1}, branches, meta)
    return spec, DistributionFamily(omegas, pi)


def random_nonconcealing_instance(seed: int, d_a: int, d_b: int, n_branches: int = 1,
                                  n_omegas: int = 1):
    """Instance whose two commitments leave Bob orthogonal pure states.

    ``U^(b)|phi> = |a> (x) W|b>`` for a random Alice state ``|a>`` and
    Haar-random Bob unitary ``W``, so the Bob reductions (ancillas included)
    have trace distance 1 for every distribution. Returns ``(spec, family)``.
    """
    _check_dims(d_a, d_b, n_branches, n_omegas)
    rng = np.random.default_rng(seed)
    layout = SubsystemLayout.bipartite(d_a, d_b)
    a = rng.standard_normal(d_a) + 1j * rng.standard_normal(d_a)
    a /= np.linalg.norm(a)
    w = haar_unitary(d_b, rng)
    commit = {b: _unitary_with_first_column(np.kron(a, w[:, b]), rng) for b in (0, 1)}
    branches = [haar_unitary(d_b, rng) for _ in range(n_branches)]
    omegas = np.array([_dirichlet(rng, n_branches) for _ in range(n_omegas)])
    pi = _dirichlet(rng, n_omegas)
    meta = {"generator": "random_nonconcealing_instance", "seed": seed}
    spec = ProtocolSpec(layout, basis_state(0, layout), commit, branches, meta)
    return spec, DistributionFamily(omegas, pi)


def known_attack(spec: ProtocolSpec):
    """The generator's recorded Alice unitary, or ``None``."""
    m = spec.meta.get("known_attack")
    return None if m is None else _decode_matrix(m, "meta.known_attack")
