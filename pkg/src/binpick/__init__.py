"""Dual-arm bin-picking planning library and discrete-event simulator."""

from .clutter import ClutterGraph, build_graph, min_feedback_arc_set, occluder_count, resolve, simplify_two_cycles
from .coordination import (
    PlannerState,
    Task,
    TaskKind,
    assign_task,
    generate_pick_tasks,
    rank_pick_detections,
    rank_stow_detections,
    select_stow_pair,
    tasks_compatible,
)
from .geometry import (
    Polygon,
    Segment,
    area_and_centroid,
    distance_to_contour,
    pole_of_inaccessibility,
    polyline_min_distance,
    segment_min_distance,
    surface_normal,
)
from .grasping import (
    GraspAnchor,
    GraspKind,
    GraspPose,
    choose_grasp_kind,
    lift_to_pose,
    perturb_grasp,
    select_grasp_point,
    verify_weight,
)
from .model import (
    Container,
    ContainerKind,
    Detection,
    Item,
    Scenario,
    SceneMaps,
    ScenarioError,
    TaskMode,
    Workspace,
    bundled_scenario_text,
    default_workspace,
    load_scenario,
    save_scenario,
)
from .placement import PlacementPose, PlacementProblem, oblong_orientations, plan_placement
from .simulator import (
    EpisodeLog,
    SimConfig,
    SimScene,
    render,
    run_episode,
    run_experiment,
    sample_scene,
)

__version__ = "0.1.0"
