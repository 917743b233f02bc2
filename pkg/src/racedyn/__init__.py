"""Vehicle-dynamics workbench: load-sensitive single-track physics, a
bounded recurrent parameter estimator trained through the physics, open-loop
accuracy evaluation, and closed-loop racing against a reference line."""

from .physics import (
    PARAM_NAMES,
    TRACE_COLUMNS,
    V_EPS,
    LOAD_FLOOR,
    AxleLoads,
    BodyState,
    ControlInput,
    DrivetrainCoeffs,
    ForceTrace,
    ModelParams,
    PacejkaCoeffs,
    PhysicsMode,
    Pose,
    StateRates,
    Trajectory,
    VehicleGeometry,
    advance_pose,
    axle_loads,
    body_derivative,
    euler_step,
    longitudinal_force,
    pacejka_lateral,
    rollout,
    simulate_step,
    slip_angles,
    wrap_angle,
)
from .guard import (
    GuardedParams,
    ParamBounds,
    count_violations,
    get_profile,
    load_bounds,
    project,
    real_profile,
    sim_profile,
    validate,
)
from .errors import (
    CheckpointError,
    DataError,
    DivergedError,
    OrderingError,
    SchemaError,
    TelemetryError,
    TrainingDivergedError,
)
from .telemetry import (
    CSV_COLUMNS,
    FEATURE_COLUMNS,
    ByFraction,
    ByLap,
    SampleWindow,
    TelemetryRecord,
    TelemetrySeries,
    WindowBatch,
    load_csv,
    make_windows,
    split,
    write_csv,
)
from .tracks import (
    BUNDLED_TRACKS,
    NearestPoint,
    TrackDefinition,
    bundled_track,
    load_track,
    make_clover,
    make_stadium,
    write_track,
)
from .estimator import (
    AppliedInput,
    Network,
    NetworkConfig,
    checkpoint_metadata,
    estimate_params,
    load_checkpoint,
    parameter_count,
    predict_next_state,
    real_default_config,
    save_checkpoint,
    sim_default_config,
)
from .training import (
    Adam,
    TrainConfig,
    TrainResult,
    batch_loss_and_grads,
    evaluate_loss,
    fit,
)
from .generate import (
    GeneratorConfig,
    generate,
    load_params_toml,
    tabletop_geometry,
    tabletop_params,
    without_actuator_lag,
    write_params_toml,
)
from .evaluation import (
    OpenLoopReport,
    evaluate_open_loop,
    max_abs_err,
    rmse,
    write_report_json,
)
from .driving import (
    PursuitConfig,
    pure_pursuit,
    pure_pursuit_steer,
    reference_speed,
    throttle_for_speed,
)
from .raceloop import (
    LapResult,
    NmpcConfig,
    NmpcSolution,
    RaceResult,
    lane_violations,
    nmpc_solve,
    plan_references,
    run_race,
    write_race_json,
    write_race_trace_csv,
    write_raceline_csv,
)

__version__ = "0.1.0"
