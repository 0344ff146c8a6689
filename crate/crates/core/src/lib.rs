//! Simulation and perception stack for an inverted-delta docking actuator.
//!
//! The crate covers the full desk-scale loop: parametric delta kinematics
//! ([`kinematics`]), synthetic tactile contact generation and the
//! short-circuit safety oracle ([`contact`]), from-scratch shallow and deep
//! misalignment classifiers ([`learn`]), dataset generation and the DTAC/DMOD
//! file formats ([`dataio`]), and the safe-docking state machine
//! ([`dockfsm`]). Everything is deterministic given a seed; no hardware is
//! required.

pub mod config;
pub mod contact;
pub mod dataio;
pub mod dockfsm;
pub mod kinematics;
pub mod learn;
pub mod rng;

pub use contact::{CurrentModel, ElectrodePlan, MisalignmentState, SafetyVerdict, TactileFrame};
pub use kinematics::{DeltaGeometry, JointAngles, Pose};
