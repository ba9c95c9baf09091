"""Lattice-rule QMC estimators of the expected information gain for
sensor placement in a parametric elliptic PDE inverse problem."""

__version__ = "0.1.0"

from .lattice import (
    GeneratingVector,
    ShiftStream,
    ShiftedLatticeRule,
    cbc_construct,
    lattice_points,
    load_generating_vector,
    make_shifts,
)
from .weights import (
    RegularityParams,
    WeightSchedule,
    order_dependent_weights_outer,
    pod_weights_inner,
    product_weights,
    rho,
    spod_weights_periodic,
)
from .fem import Design, DiffusionField, ForwardModel, UnitSquareMesh
from .likelihood import NoiseModel, TruncationBox
from .cubature import (
    InnerRule,
    NestedEstimatorConfig,
    OuterRule,
    ftp_estimate,
    g_xlogx,
    stp_estimate,
    stp_estimate_periodic,
)
from .design import (
    ConvergenceRecord,
    EIGEstimate,
    convergence_study,
    eig_for_design,
    enumerate_designs,
    select_optimal_design,
)
