"""gnatrom: Gauss-Newton reduced-order models with gappy hyper-reduction.

Library layout:

- :mod:`gnatrom.model`     discrete Burgers full-order model, masked kernels
- :mod:`gnatrom.snapshots` snapshot collection and bit-exact persistence
- :mod:`gnatrom.pod`       truncated proper orthogonal decomposition
- :mod:`gnatrom.sampling`  greedy sample-node selection, online operators
- :mod:`gnatrom.solvers`   tier I/II/III solvers and baseline reductions
- :mod:`gnatrom.bounds`    a-posteriori error-bound diagnostics
- :mod:`gnatrom.pipeline`  offline/online orchestration and metrics
- :mod:`gnatrom.cli`       command-line front end
"""

from .model import (BurgersModel, Grid1D, MaskedState, ParameterPoint,
                    TimeDiscretization, TridiagonalMatrix, godunov_flux,
                    godunov_flux_derivatives)
from .pod import PodBasis, compute_pod
from .sampling import (GreedyConfig, OnlineOperators, OutputSpec, SampleSets,
                       build_sample_matrix_action, compute_online_operators,
                       greedy_select, output_index_set)
from .snapshots import (HyperReductionCollector, SnapshotMatrix,
                        collect_state_snapshots, load, normalize_columns,
                        persist)
from .solvers import (SolverConfig, Trajectory, baseline_collocation_galerkin,
                      baseline_collocation_least_squares, baseline_deim_like,
                      compute_outputs, solve_fom, solve_gnat_online,
                      solve_tier2_pg)
from .bounds import (BoundTrace, bound_terms, estimate_lipschitz_a,
                     gappy_bound_factor, global_bounds, lipschitz_a_dense,
                     projection_error_estimate)

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
