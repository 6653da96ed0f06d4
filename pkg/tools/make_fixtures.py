"""Regenerate the bundled protocol fixtures in src/qbc/fixtures/.

Generated fixtures go through ``qbc generate`` so that tests can check
byte-identical regeneration; hand-written ones are assembled here.
"""

import math
import pathlib

import numpy as np

from qbc.cli import main as qbc_main
from qbc.protocol_model import (
    CorollaryStanza,
    DistributionFamily,
    ProtocolSpec,
    serialize,
)
from qbc.tensor_core import SubsystemLayout, basis_state

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "qbc" / "fixtures"

# name -> generate arguments; tests/test_cli.py re-runs these
GENERATED = {
    "concealing_3omega": ["--concealing", "--seed", "7", "--d-a", "3", "--d-b", "3",
                          "--branches", "3", "--omegas", "3"],
    "concealing_singleton": ["--concealing", "--seed", "5", "--d-a", "2", "--d-b", "3",
                             "--branches", "2", "--omegas", "1"],
    "nonconcealing": ["--non-concealing", "--seed", "11", "--d-a", "2", "--d-b", "3"],
}

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1.0, -1.0])
H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])


def bell_spec(branches):
    layout = SubsystemLayout.bipartite(2, 2)
    u0 = CNOT @ np.kron(H, I2)            # |00> -> (|00> + |11>)/sqrt2
    u1 = np.kron(X, I2) @ u0              # Alice flips her half
    return ProtocolSpec(layout, basis_state(0, layout), {0: u0, 1: u1}, branches,
                        {"description": "Bell-pair commitment; b=1 differs by X on Alice"})


def hand_written():
    yield "bell_commit", bell_spec([I2, Z]), \
        DistributionFamily([[0.5, 0.5], [0.2, 0.8]], [0.3, 0.7]), None
    yield "zero_pi", bell_spec([I2, Z]), \
        DistributionFamily([[0.5, 0.5], [0.2, 0.8]], [1.0, 0.0]), None
    yield "corollary_half", bell_spec([I2, X]), \
        DistributionFamily([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5]), \
        CorollaryStanza([0.5, 0.5], 10000, 0.5)
    yield "corollary_infeasible", bell_spec([I2, X]), \
        DistributionFamily([[0.6, 0.4], [0.4, 0.6]], [0.5, 0.5]), \
        CorollaryStanza([1.0, 0.0], 1000, 0.5)
    yield "corollary_singleton", bell_spec([I2, X]), \
        DistributionFamily([[0.25, 0.75]], [1.0]), \
        CorollaryStanza([0.25, 0.75], 1000, 0.5)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, args in GENERATED.items():
        code = qbc_main(["generate", *args, "--out", str(OUT / f"{name}.qbc.json")])
        assert code == 0, name
    for name, spec, family, corollary in hand_written():
        (OUT / f"{name}.qbc.json").write_text(serialize(spec, family, corollary))


if __name__ == "__main__":
    main()
