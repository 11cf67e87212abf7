//! Expression matrices and everything done to them before training.

pub mod align;
pub mod bundle;
pub mod downsample;
pub mod mask;
pub mod matrix;
pub mod preprocess;
pub mod synth;

pub use align::{align, split, split_sizes, GeneAlignment, SplitSpec};
pub use bundle::{Bundle, BundleReport};
pub use downsample::downsample;
pub use mask::{make_masks, MaskMode, MaskPair};
pub use matrix::{load_matrix, load_table, ExpressionMatrix, GeneStats, Orientation};
pub use preprocess::{dropout_rate, preprocess};
pub use synth::{synthesize, SynthConfig, SynthDataset};
