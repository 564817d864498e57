//! Composite training objective for one example:
//!
//! ```text
//! domain:     mean|S(P) - D_zoom| + λ · mean_j(s_jᵀ L_j s_j)
//! synthetic:  τ · mean|S(P) - D_gt|
//! ```
//!
//! Every term returns its value together with the cotangent (gradient with
//! respect to the predicted disparity map) that feeds the model's backward pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{build_graph, regularizer_grad, regularizer_value, ExemplarSet, PatchGraph};
use crate::patch::{extract_patch, scatter_patch_add, PatchGrid};
use crate::types::{DisparityMap, Field, Origin};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the synthetic L1 term.
    pub tau: f64,
    /// Weight of the mean per-patch Laplacian regularizer.
    pub lambda_agg: f64,
    pub w_left: f64,
    pub w_curr: f64,
    pub w_fine: f64,
    /// Spatial term weight in the exemplar distance.
    pub alpha: f64,
    pub patch_side: usize,
    /// Divide each patch's `sᵀLs` by its pixel count, so the regularizer and
    /// the L1 terms are both per-pixel averages.
    pub reg_per_pixel: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            tau: 1.2,
            lambda_agg: 1.5,
            w_left: 0.3,
            w_curr: 1.0,
            w_fine: 0.8,
            alpha: 0.2,
            patch_side: 20,
            reg_per_pixel: true,
        }
    }
}

impl LossWeights {
    /// Factor applied to the mean per-patch regularizer in the composite loss.
    pub fn reg_scale(&self, grid: &PatchGrid) -> f64 {
        if self.reg_per_pixel {
            1.0 / grid.patch_len() as f64
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("tau", self.tau),
            ("lambda_agg", self.lambda_agg),
            ("w_left", self.w_left),
            ("w_curr", self.w_curr),
            ("w_fine", self.w_fine),
            ("alpha", self.alpha),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.patch_side == 0 {
            return Err(Error::Config("patch_side must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loss breakdown for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleLossReport {
    pub l1: f64,
    /// Mean per-patch regularizer after [`LossWeights::reg_scale`].
    pub reg_mean: f64,
    pub total: f64,
    pub origin: Origin,
}

/// Mean absolute error and its cotangent `sign(pred - target) / (H·W)`.
pub fn l1_loss(pred: &Field, target: &Field) -> Result<(f64, Field)> {
    if !pred.same_shape(target) {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs target {}x{}",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let cot = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            sum += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum / n, Field::from_raw(pred.height(), pred.width(), cot)))
}

/// The three weighted exemplar patches `(left, curr, fine)` for patch `j`.
pub fn build_exemplars(
    left_gray: &Field,
    curr_pred: &Field,
    fine_pred: &Field,
    grid: &PatchGrid,
    j: usize,
    weights: &LossWeights,
) -> Result<ExemplarSet> {
    let weighted = |map: &Field, w: f64| -> Result<Vec<f64>> {
        let mut p = extract_patch(map, grid, j)?;
        for v in &mut p {
            *v *= w;
        }
        Ok(p)
    };
    ExemplarSet::new(vec![
        weighted(left_gray, weights.w_left)?,
        weighted(curr_pred, weights.w_curr)?,
        weighted(fine_pred, weights.w_fine)?,
    ])
}

/// One graph per patch of the grid, built from the current exemplars.
///
/// Patches are processed in parallel; the output order is the patch order.
pub fn build_patch_graphs(
    left_gray: &Field,
    curr_pred: &Field,
    fine_pred: &Field,
    grid: &PatchGrid,
    weights: &LossWeights,
) -> Result<Vec<PatchGraph>> {
    (0..grid.patch_count())
        .into_par_iter()
        .map(|j| {
            let ex = build_exemplars(left_gray, curr_pred, fine_pred, grid, j, weights)?;
            build_graph(&ex, weights.alpha, grid.patch_side())
        })
        .collect()
}

/// `(1/M) Σ_j s_jᵀ L_j s_j` over the patches of `pred`, with cotangent.
pub fn graph_loss(pred: &Field, graphs: &[PatchGraph], grid: &PatchGrid) -> Result<(f64, Field)> {
    let count = grid.patch_count();
    if graphs.len() != count {
        return Err(Error::Dimension(format!("{} graphs for {count} patches", graphs.len())));
    }
    let scale = 1.0 / count as f64;
    let mut value = 0.0;
    let mut cot = Field::zeros(pred.height(), pred.width());
    for (j, g) in graphs.iter().enumerate() {
        let s = extract_patch(pred, grid, j)?;
        value += regularizer_value(g, &s)?;
        let mut grad = regularizer_grad(g, &s)?;
        for v in &mut grad {
            *v *= scale;
        }
        scatter_patch_add(&mut cot, grid, j, &grad)?;
    }
    Ok((value * scale, cot))
}

/// Graphs for one domain example, or `None` for synthetic examples.
#[derive(Debug, Clone, Copy)]
pub struct GraphTerm<'a> {
    pub graphs: &'a [PatchGraph],
    pub grid: PatchGrid,
}

/// The full per-example objective.
///
/// Domain examples need graphs unless `lambda_agg` is zero; synthetic
/// examples must not carry any.
pub fn composite_loss(
    pred: &DisparityMap,
    origin: Origin,
    target: Option<&DisparityMap>,
    graphs: Option<GraphTerm<'_>>,
    weights: &LossWeights,
) -> Result<(ExampleLossReport, Field)> {
    let target = target.ok_or_else(|| {
        Error::InvalidArgument(match origin {
            Origin::Domain => "domain example is missing its zoom target".into(),
            Origin::Synthetic => "synthetic example is missing its ground truth".into(),
        })
    })?;
    let (l1, l1_cot) = l1_loss(pred, target)?;
    match origin {
        Origin::Synthetic => {
            if graphs.is_some() {
                return Err(Error::InvalidArgument("synthetic examples take no graphs".into()));
            }
            let report = ExampleLossReport {
                l1,
                reg_mean: 0.0,
                total: weights.tau * l1,
                origin,
            };
            Ok((report, l1_cot.scaled(weights.tau)))
        }
        Origin::Domain => {
            let (reg_mean, reg_cot) = match graphs {
                Some(term) => {
                    let (v, c) = graph_loss(pred, term.graphs, &term.grid)?;
                    let k = weights.reg_scale(&term.grid);
                    (v * k, c.scaled(k))
                }
                None if weights.lambda_agg == 0.0 => (0.0, Field::zeros(pred.height(), pred.width())),
                None => return Err(Error::InvalidArgument("domain example is missing its graphs".into())),
            };
            let mut cot = l1_cot;
            cot.add_scaled(weights.lambda_agg, &reg_cot)?;
            let report = ExampleLossReport {
                l1,
                reg_mean,
                total: l1 + weights.lambda_agg * reg_mean,
                origin,
            };
            Ok((report, cot))
        }
    }
}
