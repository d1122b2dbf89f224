//! Intensity standardization and evaluation toolkit for multicentre
//! FLAIR MRI.
//!
//! MRI intensities are scanner-arbitrary: the same tissue lands in
//! different intensity ranges on different scanners, which breaks models
//! trained on one site when they meet data from another. This crate
//! standardizes FLAIR volumes with four methods (z-score, White Stripe,
//! Nyul landmark matching and IAMLAB mode alignment), fuses lesion-mask
//! predictions by majority vote, and measures both histogram alignment
//! (KL divergence against the dataset mean) and segmentation quality
//! (Dice, extra fraction, H95, volume difference, lesion-wise F1/recall)
//! with Box-Cox/t-test significance machinery on top.
//!
//! Volumes travel as NIfTI-1 files ([`nifti`]), in-memory as dense
//! [`volume::Volume`] grids. All operations are pure functions over
//! immutable inputs and safe to run concurrently across volumes.
//!
//! ```
//! use flairnorm::standardize::{run_pipeline, Method, PipelineParams};
//! use flairnorm::volume::{Mask, MaskKind, Volume};
//!
//! let volume = Volume::new((3, 3, 1), (1.0, 1.0, 3.0), vec![
//!     10.0, 20.0, 30.0,
//!     40.0, 50.0, 60.0,
//!     70.0, 80.0, 90.0,
//! ])?;
//! let brain = Mask::new((3, 3, 1), MaskKind::Icv, vec![true; 9])?;
//!
//! let z = run_pipeline(&volume, &brain, Method::Zscore, &PipelineParams::default())?;
//! assert!(z.voxels()[4].abs() < 1e-12); // the median voxel is the mean here
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod ensemble;
pub mod metrics;
pub mod nifti;
pub mod preprocess;
pub mod standardize;
pub mod stats;
mod util;
pub mod volume;

pub use ensemble::majority_vote;
pub use metrics::{EvalRecord, KlRecord, MetricsError};
pub use nifti::{read_mask, read_volume, write_mask, write_volume, Datatype, NiftiError};
pub use standardize::{Method, PipelineParams, StandardScale, StandardizeError};
pub use volume::{Histogram, Mask, MaskKind, Volume, VolumeError};

// The guide's code snippets double as doctests so the book cannot drift
// from the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(volumes, "../../../book/src/volumes.md");
    chapter!(nifti_io, "../../../book/src/nifti-io.md");
    chapter!(preprocessing, "../../../book/src/preprocessing.md");
    chapter!(standardization, "../../../book/src/standardization.md");
    chapter!(evaluation, "../../../book/src/evaluation.md");
    chapter!(ensemble_fusion, "../../../book/src/ensemble.md");
    chapter!(statistics, "../../../book/src/statistics.md");
    chapter!(cli, "../../../book/src/cli.md");
}
