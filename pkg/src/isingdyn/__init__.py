"""Learning Ising models from Glauber dynamics samples."""
__version__ = "0.1.0"

from ._backend import backend_name
from .active import ActiveConfig, active_learn, build_query_distribution, glauber_entropy, mixing_coefficient
from .dynamics import (
    DynamicsSample,
    InitialDistribution,
    SampleSet,
    conditional_prob,
    glauber_step,
    one_step_oracle,
    run_batches,
    run_m_regime,
    run_t_regime,
    sample_initial,
)
from .estimators import (
    NeighborhoodEstimate,
    NoDataError,
    RegularizationConfig,
    SolverConfig,
    cd_coordinate_minimum,
    d_iso_gradient,
    d_iso_value,
    d_pl_gradient,
    d_pl_value,
    fit_drise,
    fit_drple,
    fit_node,
    gradient_term_statistics,
    lambda_value,
)
from .experiments import MStarSpec, beta_sweep, clambda_sweep, find_m_star, fit_exponent
from .model import (
    IsingModel,
    ModelStats,
    TopologySpec,
    build_topology,
    exact_partition_function,
    gibbs_weight,
    model_stats,
)
from .reconstruction import (
    CouplingMatrixEstimate,
    EdgeSetEstimate,
    average_couplings,
    edge_errors,
    fit_all_nodes,
    info_theoretic_lower_bound,
    learn_structure,
    structure_success,
    threshold_edges,
)
from .seeding import stream
