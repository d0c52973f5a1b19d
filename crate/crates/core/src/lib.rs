//! MAP inference for fully connected pairwise CRFs whose Potts edge weights
//! are quantized by a superpixel partition: every pixel pair drawn from the
//! same two superpixels shares one weight.
//!
//! * [`binary`]: two-label solver that collapses each superpixel to a count
//!   variable and minimizes with expansion moves.
//! * [`multilabel`]: nested expansion, each α-move rewritten as a two-label
//!   problem of the same form.
//! * [`baselines`]: ICM (pixel and superpixel) and mean-field inference.
//! * [`oracle`]: pixel-level graph cut and exhaustive enumeration.

pub mod baselines;
pub mod binary;
pub mod energy;
pub mod error;
pub mod maxflow;
pub mod multilabel;
pub mod oracle;
pub mod superpix;
pub mod weights;

pub use baselines::{
    icm_pixel, icm_superpixel, mean_field, IcmConfig, IcmMove, IcmResult, MeanFieldConfig,
    MeanFieldResult,
};
pub use binary::{solve_binary, BinaryConfig, SuperLabeling, SuperpixelProblem};
pub use energy::{
    count_labels, pairwise_energy, total_energy, EnergyParams, GridImage, LabelCountTable,
    Labeling, SuperpixelPartition, UnaryCosts,
};
pub use error::{Error, Result};
pub use multilabel::{build_expansion_energy, solve_multilabel, MultilabelConfig};
pub use oracle::{enumerate_optimum, exact_binary};
pub use superpix::{slic_partition, split_by_labeling};
pub use weights::{build_weights, gaussian_pairwise_energy, relative_difference, WeightTable};
