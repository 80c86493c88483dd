"""Reading a Bell-type inequality off the dual of the W-state problem.

At zero noise the relaxation has no strictly feasible point: the W
correlators sit on the boundary of the quantum set. The multipliers of an
exposing certificate then describe a linear functional of the correlators
that the W behavior maximizes. Rounded to integers it becomes ``S0 - T00``,
whose local bound is 2 and which W saturates.
"""
from marginal_selftest import ExperimentConfig, run


def main():
    table = run(ExperimentConfig("dual"))
    rep = table.report
    print("Normalized family coefficients of the dual functional:")
    for row in table.rows:
        print(f"  {row.params['coefficient']:8s} {row.value:+.5f}   rounded {row.extra['guess']:+.0f}")
    print(f"\n|alpha + lambda0| / |alpha| = {rep['alpha_plus_lambda0_relative']:.2e}")
    print(f"largest other coefficient / |alpha| = {rep['max_other_relative']:.2e}")
    print(f"rounded inequality on the W behavior:      {rep['guess_on_w_behavior']:+.4f}")
    print(f"rounded inequality on the all -1 strategy: {rep['guess_on_all_minus_one']:+.4f}")
    print(f"local bound of the rounded inequality:     {rep['guess_local_bound']:+.4f}")


if __name__ == "__main__":
    main()
