"""Decentralized learning of Nash equilibria in stochastic games with independent chains."""

from .confidence import ConfidenceState, WidthSchedule, as_constraints, occupancy_constraints
from .convex import (
    LinearConstraintSystem, RegularizerSpec, omd_update, project, project_dykstra, solve_lp,
)
from .errors import (
    ConfidenceCollapseError, ConfigError, ErgodicityError, IndChainsError, InfeasibleError,
    NumericalError, SnapshotError, StructuralError, UnboundedError,
)
from .evaluation import (
    GapReport, GapTracker, best_response_value, exact_value, ni_gap, payoff_gradient,
    stability_probe,
)
from .game import (
    AssumptionReport, JointGame, PlayerModel, builtin_game, g1, g2, g3, joint_step,
    validate_game,
)
from .gamefile import dump_game, load_game
from .learner import Learner, LearnerConfig, StepSizeSchedule, WarmupSchedule
from .occupancy import (
    ShrunkPolytopeSpec, check_membership, induced_kernel_and_policy, occupancy_from_policy,
    stationary_distribution,
)
from .simulator import (
    RunRecord, SimulationConfig, build_config, final_policies, replay_policies, run,
)

__version__ = "0.1.0"
