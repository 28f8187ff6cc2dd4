"""Chart-level Poisson and Dirac geometry on foliated manifolds with torus symmetry.

Submodules
----------
jets         second-order forward-mode derivatives
fields       tensor fields on a coordinate chart
calculus     d, Schouten brackets, pullbacks, Jacobi residual
foliation    normal bundles, bigrading, coupling, curvature
dirac        pointwise Dirac subspaces and gauge transformations
averaging    torus actions, Haar averages, averaged structures
deformation  gauge path, Moser isotopy, first-order cocycles
dynamics     fibered deformations and slow-fast simulation
scenarios    built-in scenarios
verify       verification suites and reports
cli          command-line entry point
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AcpoissonError,
    ConstructionError,
    CouplingDegeneracyError,
    DimensionError,
    GaugeDegeneracyError,
    IntegrationError,
    NewtonError,
    NotAGraphError,
    NumericalFailure,
    ScenarioError,
    SingularJacobianError,
    SplittingError,
)
from .jets import Jet  # noqa: E402
from .fields import ConstantField, DerivedField, Field, FunctionField, MemoField  # noqa: E402
from .calculus import (  # noqa: E402
    SmoothMap,
    exterior_derivative,
    flat,
    jacobi_residual,
    lie_bracket,
    lie_derivative,
    pullback,
    pullback_bivector,
    schouten_bivector_bivector,
    schouten_vector_bivector,
    sharp,
)
from .foliation import (  # noqa: E402
    Connection,
    FoliatedChart,
    almost_coupling_report,
    bigrade_bivector,
    bigrade_oneform,
    coupling_form,
    curvature,
    d_bigraded,
    horizontal_lift,
    is_coupling,
)
from .dirac import (  # noqa: E402
    DiracField,
    DiracSubspace,
    extract_poisson,
    gauge_poisson,
    gauge_subspace,
    graph_of_poisson,
    horizontal_distribution,
    is_graph,
    split_D,
)
from .averaging import (  # noqa: E402
    CompatibilityData,
    TorusAction,
    average_connection,
    averaged_dirac,
    averaged_poisson,
    haar_average,
    q_form,
    theta_form,
    verify_compatibility,
)
from .deformation import (  # noqa: E402
    DeformationFamily,
    first_order_cocycles,
    gauge_family,
    homotopy_residual,
    integrate_isotopy,
    moser_generator,
)
from .dynamics import build_fibered_deformation, compare_conjugated_dynamics, simulate, slow_fast_field  # noqa: E402
from .scenarios import build_scenario, list_scenarios  # noqa: E402
