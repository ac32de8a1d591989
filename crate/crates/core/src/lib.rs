//! Semi-supervised video object segmentation with re-identification.
//!
//! Given a video and the masks of the objects of interest in its first
//! frame, the engine propagates every mask through the sequence with optical
//! flow and a patch refiner, then repeatedly searches for frames where a
//! lost object can be re-identified and re-propagates from there.
//!
//! ```
//! use vosreid::{engine::{Backends, Engine, EngineConfig}, synth};
//!
//! let scene = synth::generate(&synth::unoccluded_scene(), 1).unwrap();
//! let backends = Backends::default();
//! let engine = Engine::new(&scene.sequence, &backends, EngineConfig::default()).unwrap();
//! let out = engine.run(&scene.first_masks()).unwrap();
//! assert_eq!(out.labels.len(), scene.sequence.len());
//! ```

pub mod bbox;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod flow;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod propagation;
pub mod reid;
pub mod synth;

pub use bbox::BBox;
pub use engine::{Backends, Engine, EngineConfig, RunOutput};
pub use error::{Error, Result};
pub use grid::{FlowField, Frame, FrameRef, Grid, LabelMap, ProbMap, VideoSequence};
