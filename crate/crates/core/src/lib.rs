//! Ridge-regularized largest-root test for general linear hypotheses in
//! high dimensions.
//!
//! Given responses `Y`, a design `X` and a hypothesis `C`, the crate forms
//! the hypothesis and error SSCP matrices, computes the largest eigenvalue of
//! `(W2 + lambda I)^-1 W1`, estimates its Tracy-Widom centering and scaling
//! from the data alone, and returns a calibrated p-value. `lambda` can be
//! fixed or chosen to maximize an estimated signal-to-noise ratio.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix it to `f64`. The simulation harness and file
//! formats ([`sim`], [`io`]) are `f64` only.
//!
//! ```
//! use hdlr::{build_sscp, run_test, LambdaPolicy, LinearModel, PipelineOptions};
//! use nalgebra::DMatrix;
//!
//! // p = 40 responses, one-way layout with two groups of 60.
//! let (p, n) = (40, 120);
//! let y = DMatrix::from_fn(p, n, |i, j| (((i * n + j) as f64 * 12.9898).sin() * 43758.5453).fract());
//! let x = DMatrix::from_fn(2, n, |g, j| if (j < 60) == (g == 0) { 1.0 } else { 0.0 });
//! let c = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
//! let model = LinearModel::new(y, x, c).unwrap();
//! let sscp = build_sscp(&model).unwrap();
//! let out = run_test(&sscp, &LambdaPolicy::Fixed(1.0), &PipelineOptions::default());
//! assert!(out.is_ok());
//! ```

pub mod edge;
pub mod error;
pub mod io;
pub mod measure;
pub mod model;
pub mod pipeline;
pub mod power;
pub mod scalar;
pub mod sim;
pub mod simplex;
pub mod spectral;
pub mod tw;

pub use edge::{estimate_edge_params, EstimateOptions};
pub use error::{Error, Result};
pub use model::build_sscp;
pub use pipeline::{run_test, PipelineOptions};
pub use power::{select_lambda, SelectOptions};
pub use scalar::Real;

pub type LinearModel = model::LinearModel<f64>;
pub type SscpPair = model::SscpPair<f64>;
pub type LargestRootResult = model::LargestRootResult<f64>;
pub type DiscreteMeasure = measure::DiscreteMeasure<f64>;
pub type LpFitReport = measure::LpFitReport<f64>;
pub type EdgeParams = edge::EdgeParams<f64>;
pub type TestReport = tw::TestReport<f64>;
pub type AlternativePrior = power::AlternativePrior<f64>;
pub type LambdaSelection = power::LambdaSelection<f64>;
pub type LambdaPolicy = pipeline::LambdaPolicy<f64>;
pub type PipelineOutput = pipeline::PipelineOutput<f64>;
pub type SpectrumView = spectral::SpectrumView<f64>;
