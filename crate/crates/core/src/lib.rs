//! Semi-supervised abnormality detection by co-evolving an image detector
//! and a report classifier.
//!
//! The engine runs teacher-student pseudo-label distillation for both
//! modalities, refines each modality's pseudo labels with the other's
//! predictions, and alternates the two students across generations. All
//! of it runs on a seeded synthetic paired dataset with built-in evaluation.
//!
//! Module map:
//!
//! - [`geometry`]: boxes and IoU
//! - [`suppression`]: class-aware NMS and the teacher/student merge
//! - [`refine`]: cross-modal pseudo-label filters
//! - [`losses`]: focal, smooth-L1 and multi-label cross-entropy
//! - [`models`]: linear reference detector and report classifier
//! - [`pipeline`]: distillation loops and the generation orchestrator
//! - [`eval`]: mAP and ROC-AUC
//! - [`synthdata`]: paired dataset generator and noise injection
//! - [`config`], [`persistence`], [`commands`]: run configuration, files, CLI backends

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod models;
pub mod persistence;
pub mod pipeline;
pub mod refine;
pub mod seed;
pub mod suppression;
pub mod synthdata;

pub use error::{Error, Result};
pub use geometry::BBox;
pub use suppression::{Detection, DetectionSet, Source};
