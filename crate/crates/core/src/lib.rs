//! Open-vocabulary grounding and grasp selection on a synthetic tabletop.
//!
//! A referring expression is grounded to one box on a grid feature map
//! (optionally refined by the IGLA and LGIA alignment modules), the box is
//! cropped out of a rendered depth image, and antipodal grasps on the crop
//! are tried under a three-attempt protocol.

pub mod alignment;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod grasp;
pub mod grounding;
pub mod io;
pub mod pipeline;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
