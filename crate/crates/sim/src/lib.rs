//! Storm-on-grid Monte Carlo: procedural radial distribution networks,
//! thunderstorm wind fields, line fragility, crew-based restoration, and
//! the episode engine that ties them together and emits training data.

pub mod engine;
pub mod fragility;
pub mod hazard;
pub mod recovery;
pub mod topology;

pub use engine::{
    run_episode, run_monte_carlo, write_traces_json, AreaSummary, BrokenLineRecord, EpisodeTrace, MonteCarloOutput,
    SimConfig, SimDataset, SimSample, WindowMode, ANCHOR_STREAM_BASE, PLACEMENT_STREAM,
    TOPOLOGY_STREAM,
};
pub use fragility::{hourly_failure_probability, sample_failures, FragilityParams};
pub use hazard::{
    area_anchors, build_wind_field, make_schedule, sample_sparse_field, weather_representation,
    AreaAnchors, GustSchedule, HazardConfig, LogNormalParams, WindDistributions, WindField,
    ANCHORS_PER_AREA,
};
pub use recovery::{
    initial_team_placement, plan_repairs, step_restoration, RecoveryConfig, RestorationState, Team,
};
pub use topology::{
    generate_topology, AreaId, BoundingBox, Building, BuildingId, GridTopology, Line, LineId,
    NodeRef, Pole, PoleId, ServiceArea, ServicePaths, SimError, Substation, SubstationId,
    TopologyGenConfig,
};
