//! Cross-layer resilience analysis of the submarine cable network: ties IP
//! links to the cable segments they ride, models natural hazards over the
//! cable map, and measures how segment failures propagate into the IP and
//! AS layers.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`ingest`] loads landing stations, cross-layer link records, and
//!    hazard intensity grids.
//! 2. [`embed`] builds the cross-layer maps (segment to country, segment to
//!    AS, landing country to connected country).
//! 3. [`hazard`] and [`identify`] turn a disaster model into a set of
//!    impacted segments.
//! 4. [`analysis`] measures impact across components, risk per country and
//!    AS, probability sweeps, dependency clusters, and the robustness of
//!    those numbers to mapping error.
//! 5. [`report`] writes the results as deterministic CSV plus a JSON run
//!    manifest.
//!
//! [`synth`] generates seeded synthetic worlds and carries brute-force
//! oracle implementations used to cross-check the pipeline in tests.

pub mod analysis;
pub mod config;
pub mod embed;
pub mod hazard;
pub mod identify;
pub mod ingest;
pub mod model;
pub mod report;
pub mod synth;
