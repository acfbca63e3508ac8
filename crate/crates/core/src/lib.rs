//! Speaker voice codes.
//!
//! Per-sound bottleneck encoders turn frames into pronunciation codes; a
//! pattern-completion network fuses a growing set of those codes into a
//! low-dimensional speaker voice code; a three-level recognizer consumes
//! the code as an adaptation input.

pub mod alignment;
pub mod analysis;
pub mod corpus;
pub mod error;
pub mod model_io;
pub mod net;
pub mod ppc;
pub mod recognizer;
pub mod svc;

pub use alignment::SoundId;
pub use error::{Error, Result};
