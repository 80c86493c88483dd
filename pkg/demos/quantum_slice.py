"""A two-dimensional slice through behavior space.

Behaviors ``q0 P_local + q1 P_W + (1 - q0 - q1) P_noise`` are scanned along
rays from the noise point. On each ray the NPA (quantum) boundary is found by
bisection on an eigenvalue margin and compared with the local boundary, found
by a linear program over deterministic strategies. The W behavior sits
exactly on the quantum boundary, and beyond the local one. Where both
boundaries share an edge, the two ``t`` values agree to the bisection
tolerance (``1e-4``).
"""
import math

from marginal_selftest import ExperimentConfig, run


def main():
    table = run(ExperimentConfig("slice", directions=8, workers=4))
    print("angle/pi   quantum t*   local t   (q0, q1) on the quantum boundary")
    for row in table.rows:
        e = row.extra
        print(f"  {row.params['angle'] / math.pi:5.2f}     {row.value:.5f}      {e['local_t']:.5f}"
              f"   ({e['q0']:+.4f}, {e['q1']:+.4f})")
    for name, flags in table.report["anchors"].items():
        print(f"{name}: quantum {flags['npa_feasible']}, local {flags['local_feasible']}")


if __name__ == "__main__":
    main()
