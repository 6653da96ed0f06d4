"""``qbc`` command-line interface.

Exit codes: 0 positive verdict, 1 negative verdict or infeasible target,
2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import adversary_sim as adv
from .attack_engine import (
    NotConcealingError,
    PreconditionError,
    apply_alice,
    attack_report,
    concealment_check,
    epr_attack_run,
    verify_theorem1,
)
from .protocol_model import (
    ProtocolParseError,
    commit_state,
    parse_document,
    random_concealing_instance,
    random_nonconcealing_instance,
    serialize,
)
from .purification import FlattenError, flatten, purify_commitment
from .tensor_core import overlap_up_to_phase
from .tolerances import DEFAULT, Tolerances

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT = 0, 1, 2
FLATTEN_IDENTITY_TOL = 1e-12


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    input: str | None = None
    seed: int = 0
    tolerances: Tolerances = DEFAULT
    format: str = "text"
    unveil: int | None = None
    trials: int = 1
    out: str | None = None
    # generate only
    concealing: bool = True
    d_a: int = 2
    d_b: int = 2
    branches: int = 2
    omegas: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("--trials must be >= 1")


@dataclass
class Report:
    subcommand: str
    exit_code: int
    verdicts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls(**json.loads(text))

    def to_text(self) -> str:
        lines = [f"qbc {self.subcommand}: exit {self.exit_code}"]
        for k, v in self.verdicts.items():
            lines.append(f"  {k}: {v}")
        for k, v in self.diagnostics.items():
            lines.append(f"  {k}: {_fmt(v)}")
        lines.append(f"  wall_time: {self.wall_time:.3f} s")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, list):
        if v and isinstance(v[0], list) and v[0] and isinstance(v[0][0], list):
            return f"<{len(v)}x{len(v[0])} complex matrix; use --format json>"
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def _matrix(m):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def _floats(a):
    return [float(x) for x in np.asarray(a).reshape(-1)]


def _load(config: RunConfig):
    if not config.input:
        raise InputError("--input is required")
    try:
        with open(config.input, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {config.input}: {exc.strerror}") from None
    try:
        return parse_document(text)
    except ProtocolParseError as exc:
        raise InputError(str(exc)) from None


def cmd_check(config: RunConfig) -> Report:
    spec, family, _ = _load(config)
    tol = config.tolerances.conceal
    concealing, worst = concealment_check(spec, family, tol)
    per_omega = []
    for i in range(family.n_omegas):
        single = type(family)(family.branch_dists[i:i + 1], [1.0])
        per_omega.append(concealment_check(spec, single, tol).max_trace_distance)
    return Report("check", EXIT_OK if concealing else EXIT_NEGATIVE,
                  {"concealing": concealing},
                  {"max_trace_distance": worst, "per_omega_trace_distance": per_omega,
                   "tol_conceal": tol})


def cmd_attack(config: RunConfig) -> Report:
    spec, family, _ = _load(config)
    tols = config.tolerances
    report = attack_report(spec, family, tols.conceal)
    diag = {"max_trace_distance": report.max_trace_distance,
            "fidelity_bound": report.fidelity_bound}
    if not report.concealing:
        return Report("attack", EXIT_NEGATIVE, {"concealing": False, "attack_succeeds": False},
                      diag)
    bits = (0, 1) if config.unveil is None else (config.unveil,)
    transcripts = {str(b): asdict(epr_attack_run(spec, family, b, tol_conceal=tols.conceal))
                   for b in bits}
    success = all(t["verification_overlap"] >= 1 - tols.attack for t in transcripts.values())
    diag.update({"attack_overlap": report.attack_overlap,
                 "per_branch_overlaps": [ov for _, ov in report.per_branch_overlaps],
                 "epr_transcripts": transcripts,
                 "cheating_unitary": _matrix(report.cheating_unitary)})
    return Report("attack", EXIT_OK if success else EXIT_NEGATIVE,
                  {"concealing": True, "attack_succeeds": success}, diag)


def cmd_theorem1(config: RunConfig) -> Report:
    spec, family, _ = _load(config)
    tols = config.tolerances
    try:
        report = verify_theorem1(spec, family, tols.conceal)
    except PreconditionError as exc:
        raise InputError(str(exc)) from None
    except NotConcealingError as exc:
        return Report("theorem1", EXIT_NEGATIVE, {"concealing": False, "certified": False},
                      {"max_trace_distance": exc.distance, "fidelity_bound": exc.fidelity_bound})
    overlaps = [ov for _, ov in report.per_branch_overlaps]
    # second full-support mixing drawn from the seed: the attack must act identically
    rng = np.random.default_rng(config.seed)
    pi2 = rng.dirichlet(np.ones(family.n_omegas)) if family.n_omegas > 1 else np.ones(1)
    u2 = verify_theorem1(spec, family, tols.conceal, pi=pi2).cheating_unitary
    agree = []
    for i in range(family.n_omegas):
        psi = commit_state(spec, family, 0, i)
        agree.append(overlap_up_to_phase(apply_alice(report.cheating_unitary, psi),
                                         apply_alice(u2, psi)))
    certified = min(overlaps) >= 1 - tols.attack and min(agree) >= 1 - tols.attack
    return Report("theorem1", EXIT_OK if certified else EXIT_NEGATIVE,
                  {"concealing": True, "certified": certified},
                  {"max_trace_distance": report.max_trace_distance,
                   "attack_overlap": report.attack_overlap,
                   "per_branch_overlaps": overlaps,
                   "second_pi": _floats(pi2),
                   "pi_independence_overlaps": agree,
                   "branch_agreement": report.branch_agreement.tolist(),
                   "cheating_unitary": _matrix(report.cheating_unitary)})


def cmd_flatten(config: RunConfig) -> Report:
    spec, family, _ = _load(config)
    diag = {}
    ok = True
    for b in (0, 1):
        try:
            form = flatten(purify_commitment(spec, family, b), spec, family, b)
        except FlattenError as exc:
            return Report("flatten", EXIT_NEGATIVE, {"identity_holds": False},
                          {f"identity_overlap_b{b}": exc.overlap})
        diag[f"identity_overlap_b{b}"] = form.identity_overlap
        ok = ok and form.identity_overlap >= 1 - FLATTEN_IDENTITY_TOL
    diag = {"effective_distribution": _floats(form.effective_dist),
            "dropped_branches": list(form.dropped_branches), **diag}
    return Report("flatten", EXIT_OK if ok else EXIT_NEGATIVE, {"identity_holds": ok}, diag)


def cmd_corollary(config: RunConfig) -> Report:
    _, family, stanza = _load(config)
    if stanza is None:
        raise InputError("input has no 'corollary' stanza")
    try:
        scenario = adv.make_scenario(stanza.target, family, stanza.n_qubits,
                                     stanza.check_fraction)
    except adv.InfeasibleTargetError as exc:
        return Report("corollary", EXIT_NEGATIVE, {"feasible": False},
                      {"residual": exc.residual, "message": "infeasible"})
    seeds = np.random.SeedSequence(config.seed).generate_state(config.trials)
    runs = [adv.post_check_switch(scenario, int(s)) for s in seeds]
    first = runs[0]
    realized = first.realized_frequencies(family.n_omegas)
    off_target = ~adv._matches(scenario)
    passed = sum(r.check_passed for r in runs)
    prob = adv.all_match_probability(scenario)
    mass = adv.match_mass(scenario)
    return Report("corollary", EXIT_OK if passed == len(runs) else EXIT_NEGATIVE,
                  {"feasible": True, "check_passed": passed == len(runs)},
                  {"mixing": _floats(scenario.mixing),
                   "checked_count": first.checked_count,
                   "kept_count": first.kept_count,
                   "empirical_check_dist": _floats(first.empirical_check_dist),
                   "realized_omega_frequencies": _floats(realized),
                   "switched_fraction": float(realized[off_target].sum()),
                   "trials": len(runs), "checks_passed": passed,
                   "match_mass": mass,
                   "all_match_probability": prob,
                   "log10_all_match_probability":
                       first.kept_count * math.log10(mass) if mass > 0 else None})


def cmd_generate(config: RunConfig) -> tuple[Report, str]:
    try:
        if config.concealing:
            spec, family = random_concealing_instance(config.seed, config.d_a, config.d_b,
                                                      config.branches, config.omegas)
        else:
            spec, family = random_nonconcealing_instance(config.seed, config.d_a, config.d_b,
                                                         config.branches, config.omegas or 1)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = serialize(spec, family)
    return Report("generate", EXIT_OK, {"concealing": config.concealing},
                  {"seed": config.seed, "d_a": config.d_a, "d_b": config.d_b}), text


COMMANDS = {
    "check": cmd_check,
    "attack": cmd_attack,
    "theorem1": cmd_theorem1,
    "flatten": cmd_flatten,
    "corollary": cmd_corollary,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbc", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=[*COMMANDS, "generate"])
    p.add_argument("--input", "-i")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-conceal", type=float)
    p.add_argument("--tol-attack", type=float)
    p.add_argument("--format", choices=["text", "json"],
                   default=os.environ.get("QBC_FORMAT") or "text")
    p.add_argument("--unveil", type=int, choices=[0, 1])
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", "-o")
    g = p.add_argument_group("generate")
    g.add_argument("--concealing", dest="concealing", action="store_true", default=True)
    g.add_argument("--non-concealing", dest="concealing", action="store_false")
    g.add_argument("--d-a", type=int, default=2)
    g.add_argument("--d-b", type=int, default=2)
    g.add_argument("--branches", type=int, default=2)
    g.add_argument("--omegas", type=int)
    return p


def config_from_args(args) -> RunConfig:
    try:
        tols = DEFAULT.with_overrides(conceal=args.tol_conceal, attack=args.tol_attack)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return RunConfig(args.subcommand, args.input, args.seed, tols, args.format, args.unveil,
                     args.trials, args.out, args.concealing, args.d_a, args.d_b,
                     args.branches, args.omegas)


def run(config: RunConfig) -> tuple[Report, str | None]:
    """Execute one subcommand; returns the report and, for ``generate``, the file text."""
    start = time.perf_counter()
    payload = None
    try:
        if config.subcommand == "generate":
            report, payload = cmd_generate(config)
        else:
            report = COMMANDS[config.subcommand](config)
    except InputError as exc:
        report = Report(config.subcommand, EXIT_INPUT, {"input_error": True},
                        {"message": str(exc)})
    report.wall_time = time.perf_counter() - start
    return report, payload


def _emit(report: Report, fmt: str, stream):
    stream.write((report.to_json() if fmt == "json" else report.to_text()) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        config = config_from_args(args)
        report, payload = run(config)
    except InputError as exc:
        print(f"qbc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - exit-code contract allows only 0/1/2
        print(f"qbc: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INPUT

    if payload is not None:
        if config.out:
            with open(config.out, "w", encoding="utf-8") as fh:
                fh.write(payload)
            _emit(report, config.format, sys.stderr)
        else:
            sys.stdout.write(payload)
        return report.exit_code

    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            _emit(report, config.format, fh)
    else:
        _emit(report, config.format, sys.stdout if report.exit_code != EXIT_INPUT else sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
