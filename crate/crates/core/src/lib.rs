//! Desk-scale workbench for certifying genuine multipartite entanglement of
//! cluster states under realistic readout noise, and for driving a
//! measurement-based teleportation wire through symmetry-protected phases.
//!
//! The crate is organised around three pillars:
//!
//! * exact stabilizer simulation with per-setting outcome samplers
//!   ([`tableau`]), built on bit-packed GF(2) Pauli algebra ([`pauli`]);
//! * classical readout-noise machinery: forward channels ([`noise`]),
//!   calibration estimators ([`calib`]) and quasi-probability error
//!   mitigation with overhead accounting ([`mitigate`]);
//! * campaign drivers: fidelity witnesses with Hoeffding sample planning
//!   ([`witness`]) and the teleportation wire with oscillation fits
//!   ([`teleport`]).
//!
//! Everything statistical is cross-checked against brute-force dense
//! linear algebra in [`oracle`].

pub mod bits;
pub mod calib;
pub mod config;
pub mod error;
pub mod graph;
pub mod mitigate;
pub mod noise;
pub mod numeric;
pub mod oracle;
pub mod pauli;
pub mod report;
pub mod rng;
pub mod tableau;
pub mod teleport;
pub mod witness;

pub use bits::BitString;
pub use error::{Error, Result};
pub use graph::GraphSpec;
pub use mitigate::{Method, MitigatedEstimate};
pub use noise::{GeneratorTerm, NoiseChannel, ReadoutNoiseModel};
pub use pauli::{Basis, PauliString};
pub use tableau::{StabilizerTableau, WitnessSetting};
pub use witness::WitnessPlan;
