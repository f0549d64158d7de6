"""Direct data-driven predictive control with online dataset adaptation.

The toolkit represents an unknown system by mosaic Hankel matrices of
measured input-output trajectories, keeps that representation current with
an SVD-robustified rank test on candidate datasets, and closes the loop with
a regularized data-enabled predictive controller.  A two-link robot
simulator and a Monte-Carlo harness reproduce the reference-tracking study
comparing the proposed, always-update, and never-update strategies.
"""

__version__ = "0.1.0"

from .behavior import (
    Trajectory,
    Dataset,
    DataMatrix,
    LtiSystem,
    build_hankel,
    build_mosaic_hankel,
    is_persistently_exciting,
    generalized_pe_rank,
    check_generalized_pe,
    trajectory_membership,
    simulate_lti,
    lag,
)
from .rank import SingularSpectrum, singular_spectrum, robustified_rank, threshold_window
from .adapter import (
    AdapterState,
    ArtificialSteadyState,
    ConstantFill,
    FromDataTail,
    UpdateDecision,
    init_adapter,
)
from .qp import QpProblem, QpSolution, QpStatus, kkt_residual, solve as solve_qp
from .controller import (
    ControllerConfig,
    ControlStep,
    SolverFailure,
    build_ocp,
    compute_control,
    stage_cost,
    truncate_data_matrix,
)
from .robot import NoiseModel, PlantState, RobotParams, lower_equilibrium
from .config import (
    AdaptationConfig,
    ConfigError,
    DataCollectionConfig,
    ReferenceSchedule,
    ScenarioConfig,
    Segment,
    Strategy,
    default_config,
    load_config,
)
from .harness import (
    EpisodeResult,
    StrategySummary,
    StudyResult,
    build_reference,
    collect_initial_data,
    export_results,
    run_episode,
    run_monte_carlo,
    run_study,
)
