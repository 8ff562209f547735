//! End-to-end test from an SSCP pair: choose `lambda`, estimate the edge
//! parameters, standardize the largest root.

use serde::{Deserialize, Serialize};

use crate::edge::{estimate_edge_params, EdgeParams};
use crate::error::Result;
use crate::model::{largest_root, LargestRootResult, SscpPair};
use crate::power::{select_lambda, AlternativePrior, LambdaSelection, SelectOptions};
use crate::scalar::Real;
use crate::spectral::SpectrumView;
use crate::tw::{standardized_test, TestReport, ThetaSource};

pub const DEFAULT_ALPHAS: [f64; 2] = [0.05, 0.01];

#[derive(Debug, Clone)]
pub enum LambdaPolicy<T: Real> {
    Fixed(T),
    DataDriven(AlternativePrior<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Estimation settings; `select.estimate` is also used for a fixed `lambda`.
    pub select: SelectOptions,
    pub alphas: Vec<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            select: SelectOptions::default(),
            alphas: DEFAULT_ALPHAS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutput<T> {
    pub report: TestReport<T>,
    pub root: LargestRootResult<T>,
    pub edge: EdgeParams<T>,
    /// Minimax residual and support size of the fitted measure, when fitted at the chosen `lambda`.
    pub fit_loss: T,
    pub fit_atoms: usize,
    pub selection: Option<LambdaSelection<T>>,
}

/// Runs the test on an SSCP pair.
pub fn run_test<T: Real>(sscp: &SscpPair<T>, policy: &LambdaPolicy<T>, opts: &PipelineOptions) -> Result<PipelineOutput<T>> {
    let view = SpectrumView::from_sscp(sscp)?;
    let (lambda, edge, fit_loss, fit_atoms, selection) = match policy {
        LambdaPolicy::Fixed(lambda) => {
            let (fit, edge) = estimate_edge_params(&view, *lambda, &opts.select.estimate)?;
            (*lambda, edge, fit.loss_theta, fit.n_active, None)
        }
        LambdaPolicy::DataDriven(prior) => {
            let sel = select_lambda(&view, sscp, prior, &opts.select)?;
            let edge = *sel.params_opt();
            (sel.lambda_opt, edge, T::zero(), 0, Some(sel))
        }
    };
    let root = largest_root(sscp, lambda, 1)?;
    let report = standardized_test(&root, &edge, sscp.p(), &opts.alphas, ThetaSource::Empirical)?;
    Ok(PipelineOutput {
        report,
        root,
        edge,
        fit_loss,
        fit_atoms,
        selection,
    })
}
