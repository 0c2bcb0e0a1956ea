//! Extended object tracking with information filters under the
//! multiplicative error model, centralized and over sensor networks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod consensus;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod info_filter;
pub mod linalg;
pub mod linearization;
pub mod scenario;
pub mod trackers;

pub use config::{grid_network, preset, ScenarioConfig};
pub use consensus::{
    build_network, check_primitive, complete_network, consensus_rounds, metropolis_weights, ConsensusMatrix,
    ConsensusValue, NodeKind, SensorNetwork,
};
pub use error::{EotError, Result};
pub use experiment::{Experiment, RunRecord};
pub use geometry::{extent_vertices, sample_measurements, shape_matrix, Extent, KinematicState, Point, ShapeKind};
pub use info_filter::{InformationState, InnovationPair};
pub use trackers::{FilterConfig, FilterKind, MotionModel, NodeEstimate, NodeOutput, OmegaMode, Tracker};
