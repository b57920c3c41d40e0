"""Reflected Brownian motion with drift in a planar wedge.

Simulation of the constrained dynamics (oblique reflection with optional
vertex absorption), Girsanov reweighting between driftless and drifted path
laws, and Monte-Carlo estimators for the numerically checkable properties of
the process: vertex-hitting probabilities, boundary occupation, dyadic
p-variation and zero-energy trends, submartingale diagnostics, and Feller /
scaling distances.
"""

from .admissible_functions import (
    TestFunction,
    certify_test_function,
    make_constant,
    make_f_eps_C,
    make_origin_bump,
    verify_derivatives,
)
from .config import ExperimentSpec, load_experiment, load_sim_config
from .errors import CertificateError, ConfigError, GeometryError, RegimeError
from .estimators import (
    EstimateReport,
    GirsanovCheck,
    ScalingCheck,
    VariationSweep,
    energy_distance,
    estimate_boundary_occupation,
    estimate_hitting_probability,
    feller_distance,
    flatness_audit,
    girsanov_crosscheck,
    hitting_time_profile,
    p_variation,
    scaling_check,
    submartingale_check,
    variation_sweep,
    zero_energy_sweep,
)
from .experiments import (
    export_paths,
    read_paths_binary,
    run_experiment,
    run_theorem_suite,
    theorem_suite_specs,
)
from .geometry import (
    Cone2D,
    WedgeGeometry,
    boundary_cone,
    build_wedge,
    cone_hull,
    vertex_attraction_condition,
    wedge_contains,
)
from .simulator import (
    PathSample,
    SimConfig,
    TerminalBatch,
    batch_simulate,
    girsanov_weight,
    simulate_path,
    simulate_terminals,
)
from .skorokhod import (
    MODE_ABSORBED,
    MODE_REFLECTED,
    NEVER,
    ConstrainedStep,
    EspViolationReport,
    check_esp,
    constrain_path,
    constrain_step,
)

__version__ = "0.1.0"
