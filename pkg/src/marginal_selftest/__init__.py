"""Device-independent fidelity bounds from marginal correlators.

The package lower-bounds the fidelity of an unknown multiqubit state with a
target state, using only observed correlators among subsets of parties. It
relaxes the SWAP isometry construction into a semidefinite program over the
NPA moment matrix and solves it with a bundled primal-dual interior point
method.

Modules
-------
oracle
    Dense qubit simulation: target states, correlators, SWAP circuits, Bell operators.
algebra
    Monomials of dichotomic unitaries, polynomials, party permutation groups.
bell
    Permutation and translation-invariant correlator Bell expressions.
relaxation
    Moment bases, symmetrized moment structures, localizing blocks, SDP assembly.
sdp
    Problem data, interior point solver, facial reduction, certificates, SDPA files.
experiments
    Configured experiment runs and result persistence.
checks
    Oracle check battery used by the ``oracle-check`` command.
"""
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, ResultRow, ResultTable, run
from .oracle import Behavior, PureState, make_state

__version__ = "0.1.0"

__all__ = ["EXPERIMENTS", "Behavior", "ConfigError", "ExperimentConfig", "PureState", "ResultRow",
           "ResultTable", "make_state", "run", "__version__"]
