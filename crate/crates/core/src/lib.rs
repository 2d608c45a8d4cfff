//! Radiomics and invasiveness features from tumour structure maps, plus the
//! survival models, ensemble label fusion and evaluation built on them.
//!
//! A structure map is a 3D label volume with 0 = background, 1 = necrosis /
//! non-enhancing core, 2 = edema and 4 = enhancing tumour.

pub mod error;
pub mod evalx;
pub mod featsel;
pub mod fusion;
pub mod imgvol;
pub mod invasive;
pub mod morphfeat;
pub mod pipeline;
pub mod prognosis;
mod serde_util;
pub mod synthgen;
pub mod texfeat;

pub use error::{Error, Result};
