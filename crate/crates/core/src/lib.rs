//! Affect-aware cross-domain recommendation.
//!
//! Music preferences elicited from a listener are turned into painting
//! recommendations through one of four engines that share a common
//! valence-arousal grounding:
//!
//! * **Haydn** ranks paintings by rating-weighted distance in the
//!   valence-arousal plane.
//! * **Mozart** learns a joint 128-dimensional space from reduced modality
//!   features enriched with valence-arousal, trained with a kernel-weighted
//!   contrastive loss.
//! * **Salieri** compares autoencoded two-stream (signal + description)
//!   embeddings by cosine similarity.
//! * **Visual** is the same-domain baseline: cosine similarity between raw
//!   painting features, driven by painting ratings.

pub mod affect;
pub mod catalog;
pub mod checksum;
pub mod engine;
mod error;
pub mod evaluation;
pub mod neural;
pub mod session;

pub use error::{Error, ErrorClass, Result};
