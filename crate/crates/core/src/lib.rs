//! Observer-based differentially private consensus for discrete-time linear
//! multi-agent systems.
//!
//! Agents share Laplace-perturbed state estimates with their neighbors. The
//! crate checks the consensus and observer conditions, computes privacy
//! budgets in series and closed form, designs noise decay rates for a target
//! budget, audits privacy with a deterministic ledger, and simulates the
//! network.

pub mod analysis;
pub mod error;
pub mod graph;
pub mod io;
pub mod matops;
pub mod noise;
pub mod plant;
pub mod privacy;
pub mod sim;

pub use nalgebra;

pub use analysis::{ConditionReport, ContractionModuli, ReducedModulus};
pub use error::{Error, Result};
pub use graph::{make_topology, Graph, GraphSpectrum, Topology};
pub use matops::{Matrix, Vector};
pub use noise::{NoiseSchedule, RngSpec, ScheduleKind};
pub use plant::{GainSet, LtiPlant, Observer, ReducedForm};
pub use privacy::{AdjacencySpec, DeviationShape, EpsilonReport, Method};
pub use sim::{ScenarioConfig, SimTrace};
