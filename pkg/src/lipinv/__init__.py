"""Numerical machinery for globally inverting piecewise-smooth maps.

The toolkit evaluates maps given as expression DAGs with tagged kink
nodes, computes their limiting Jacobian sets and subgradient hulls,
certifies maximal rank of the generalized Jacobian, inverts maps by
nonsmooth descent with a semismooth Newton polish, and probes injectivity
with a discretized mountain-pass search.  Coercivity and descent
compactness diagnostics round out the hypothesis checks.
"""

from .map_model import (
    DagBuilder,
    EvaluationError,
    ExprNode,
    MapDefinition,
    MapError,
    MapSyntaxError,
    MapValidationError,
    PatternExplosionError,
    SignPattern,
    active_patterns,
    eval_map,
    eval_piece,
    eval_piece_jacobian,
    parse_map,
    pattern_is_active,
    pretty_print,
    switching_values,
)
from .clarke import (
    DirDerivEstimate,
    GeneralizedJacobian,
    RankCertificate,
    certificate_report,
    gen_dir_derivative,
    limiting_jacobians,
    max_rank_certificate,
    phi_subgradient_set,
)
from .inversion import (
    SolveOptions,
    SolveReport,
    invert,
    min_norm_hull_element,
    minimize_phi,
    project_simplex,
    semismooth_newton_polish,
    solve_report_dict,
)
from .mountain_pass import (
    InjectivityReport,
    MPOptions,
    MPReport,
    PathPolyline,
    ProbeOptions,
    ShiftedMap,
    injectivity_probe,
    injectivity_report_dict,
    mountain_pass_search,
    mp_report_dict,
    psi_value,
    ring_infimum,
    shift_map,
)
from .ps_probe import (
    CoercivityReport,
    PSTrace,
    StartTrace,
    coercivity_report_dict,
    coercivity_scan,
    ps_sequence_probe,
    ps_trace_dict,
)
from .zoo import ZOO, MapZooEntry, get_entry, load_zoo_map, zoo_names

__version__ = "0.1.0"
