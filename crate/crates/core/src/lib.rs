//! Subset-lattice information decomposition for label-conditioned bitstring
//! counts, with resampling inference, a pairwise maximum-entropy surrogate and
//! matched decoders for testing whether pairwise statistics explain a label.
//!
//! Numerical cores are generic over the scalar type ([`scalar::Field`] for
//! exact arithmetic such as rationals, [`scalar::Real`] for floats); the
//! aliases below fix the common `f64` instantiations.

pub mod decode;
pub mod error;
pub mod lattice;
mod linalg;
pub mod maxent;
pub mod pipeline;
pub mod records;
pub mod resample;
pub mod scalar;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
pub use lattice::{decompose, diagnostics, mutual_information, LabelPrior, SubsetId};
pub use pipeline::{run_analysis, AnalysisConfig, AnalysisReport};
pub use records::{aggregate, BitOrder, CircuitRecord, Dataset, Label, LabeledCounts};

pub type Decomposition = lattice::LatticeDecomposition<f64>;
pub type Diagnostics = lattice::LowOrderDiagnostics<f64>;
pub type Conditionals = lattice::Conditionals<f64>;
pub type Surrogate = maxent::MaxEntSurrogate<f64>;
pub type Joint = synth::ExactJoint<f64>;
