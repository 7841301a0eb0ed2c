//! Effective information (EI) of small feedforward networks.
//!
//! A layer is driven with independent uniform noise, both sides are binned,
//! and plug-in mutual information gives EI together with its decompositions:
//! sensitivity, degeneracy, EI_parts and φ. Around the estimators sit a
//! bias-free dense network with SGD training, Iris and reduced-MNIST loaders,
//! a training harness that measures every layer as it learns, convergence
//! tools for the sample count, and SVG figure output.
//!
//! ```
//! use ei_probe::{measure_all, ActivationKind, LayerSlice, PerturbationConfig};
//!
//! let slice = LayerSlice::single_edge(1.0, ActivationKind::Relu).unwrap();
//! let r = measure_all(&slice, &PerturbationConfig::new(20_000, 8, 0)).unwrap();
//! assert_eq!(r.ei, Some(r.ei_parts));
//! ```

pub mod activation;
pub mod convergence;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod measure;
pub mod mi;
pub mod nn;
pub mod parallel;
pub mod record;
pub mod report;
pub mod rng;
pub mod viz;
pub mod weights;

pub use activation::{ActivationKind, Interval};
pub use convergence::{ConvergencePolicy, ExtrapolationFit};
pub use datasets::{Dataset, SplitSpec};
pub use error::{Error, Result};
pub use harness::{CausalPlanePoint, ExperimentSpec, RunRecord, Task};
pub use matrix::Matrix;
pub use measure::{measure_all, EIResult, LayerSlice, PerturbationConfig};
pub use mi::{BinningScheme, JointHistogram};
pub use nn::{DenseLayer, Network, TrainConfig};
pub use viz::PlotSpec;
