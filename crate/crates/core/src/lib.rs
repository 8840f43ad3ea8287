//! Camera autocalibration from point depths and the image of the absolute
//! conic: enumeration and certification of minimal relaxations, homotopy
//! solving by monodromy, pose recovery and evaluation metrics.

pub mod camera;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod monodromy;
pub mod polysys;
pub mod recovery;
pub mod robust;
pub mod scene;
pub mod slp;
pub mod solver;
pub mod taxonomy;
pub mod tracker;

pub use error::{Error, Result};
