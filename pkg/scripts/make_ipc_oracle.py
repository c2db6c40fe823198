"""Regenerate tests/fixtures/ipc_oracle.json with a fine Störmer-Verlet run.

The particle (m = 1, speed 1) enters an IPC barrier with κ = 1, d̂ = 1
(ω = 1) exactly at the edge of its support and is integrated at dt = 1e-5
until it leaves moving away.
"""
import json
import sys
from pathlib import Path

from asearch.analysis import CollisionScenario, reference_trajectory

DT_REF = 1e-5


def main(out=None):
    sc = CollisionScenario("ipc", omega2=1.0, beta=0.0, h=1.0, speed=1.0, dhat=1.0)
    ref = reference_trajectory(sc, DT_REF)
    data = {
        "barrier": "ipc",
        "kappa": 1.0,
        "dhat": 1.0,
        "mass": 1.0,
        "incoming_speed": 1.0,
        "dt_ref": DT_REF,
        "exit_speed": float(ref.v[-1][0]),
        "contact_time": float(ref.t[-1]),
        "min_distance": float(ref.x[:, 0].min()),
        "max_energy_drift": float(abs(ref.energy - ref.energy[0]).max()),
    }
    path = Path(out) if out else Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "ipc_oracle.json"
    path.write_text(json.dumps(data, indent=2) + "\n")
    print(json.dumps(data, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
