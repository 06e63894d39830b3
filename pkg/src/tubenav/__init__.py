"""tubenav: prescribed-time multi-agent reach-avoid-stay navigation.

Plans one time-varying box-valued tube per agent from its start set to its
target, deforms tubes around static obstacles, negotiates away pairwise tube
overlaps by freezing and replanning, and tracks the result with a closed-form
funnel controller that is robust to bounded disturbances.
"""
from .control import (CHANNEL_MAPS, ControllerGains, control_input,
                      control_vector, normalized_error, transformed_error)
from .curves import (Affine, Blend, Bump, Constant, Piecewise, Smoothstep,
                     Sum, curve_from_dict, smoothstep)
from .dynamics import (DynamicsModel, custom_affine, omni_robot,
                       single_integrator, step_dynamics)
from .errors import (ArtifactError, CannotReplanError, DegenerateTubeError,
                     DimensionMismatchError, FunnelViolationError,
                     HorizonError, InfeasibilityError, NonTerminationError,
                     NumericalBlowupError, ScenarioValidationError,
                     TubenavError)
from .geometry import HyperRect, Interval
from .negotiation import (CollisionInterval, NegotiationLog, ReplanContext,
                          Topology, detect_collision_interval, negotiate,
                          parameterize_tube, verify_disjointness)
from .pipeline import (PlanResult, RunArtifacts, RunResult,
                       export_plot_data, feasible_random_scenarios, plan,
                       run, verify_artifacts)
from .scenario import (AgentSpec, Scenario, bundled_scenario,
                       bundled_scenario_path, load_scenario, random_scenario,
                       save_scenario, validate_scenario)
from .simulation import (DisturbanceSpec, FleetResult, RasVerdict,
                         Trajectory, evaluate_ras, min_pairwise_distance,
                         simulate_agent, simulate_fleet)
from .tubes import (BoundaryProfile, ObstacleSet, Segment, Tube,
                    ValidityReport, build_reachability_tube,
                    circumvent_obstacles, load_tubes, save_tubes,
                    tube_cross_section, verify_tube)

__version__ = "0.1.0"

__all__ = [
    "AgentSpec", "Affine", "ArtifactError", "Blend", "BoundaryProfile",
    "Bump", "CHANNEL_MAPS", "CannotReplanError", "CollisionInterval",
    "Constant", "ControllerGains", "DegenerateTubeError", "DimensionMismatchError",
    "DisturbanceSpec", "DynamicsModel", "FleetResult", "FunnelViolationError",
    "HorizonError", "HyperRect", "InfeasibilityError", "Interval",
    "NegotiationLog", "NonTerminationError", "NumericalBlowupError",
    "ObstacleSet", "Piecewise", "PlanResult", "RasVerdict", "ReplanContext",
    "RunArtifacts", "RunResult", "Scenario", "ScenarioValidationError",
    "Segment", "Smoothstep", "Sum", "Topology", "Trajectory", "Tube",
    "TubenavError", "ValidityReport", "build_reachability_tube",
    "bundled_scenario", "bundled_scenario_path", "circumvent_obstacles",
    "control_input", "control_vector", "curve_from_dict", "custom_affine",
    "detect_collision_interval", "evaluate_ras", "export_plot_data",
    "feasible_random_scenarios", "load_scenario", "load_tubes",
    "min_pairwise_distance", "negotiate", "normalized_error", "omni_robot",
    "parameterize_tube", "plan", "random_scenario", "run", "save_scenario",
    "save_tubes", "simulate_agent", "simulate_fleet", "single_integrator",
    "smoothstep", "step_dynamics", "transformed_error", "tube_cross_section",
    "validate_scenario", "verify_artifacts", "verify_disjointness",
    "verify_tube",
]
