//! Goodness-of-fit summaries: Gaussian-implied correlation matrices,
//! correlation discrepancies, and Vuong comparisons of two fitted models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaFamily;
use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::likelihood::{LoglikEvaluator, ModelSpec, ParamVector, PMF_FLOOR};
use crate::select::CorrelationMatrix;
use crate::{QuadratureRule, ResponseMatrix};

/// Latent correlation matrix of an all-BVN model.
///
/// Item j's latent normal is θ₁ⱼX₁ + √(1−θ₁ⱼ²)(θ₂ⱼX₂ + √(1−θ₂ⱼ²)Eⱼ), where
/// corr(Eⱼ, Eₖ) is the product of the edge parameters along the tree path
/// between j and k. Independence links and edges count as zero.
pub fn model_corr_matrix(spec: &ModelSpec, params: &ParamVector) -> Result<CorrelationMatrix> {
    spec.validate()?;
    params.validate(spec)?;
    let gaussian = |f: &CopulaFamily| matches!(f, CopulaFamily::Bvn | CopulaFamily::Independence);
    if !(spec.factor1.iter().all(gaussian)
        && spec.factor2.iter().all(gaussian)
        && spec.tree_families.iter().all(gaussian))
    {
        return Err(Error::Unsupported(
            "implied correlations need BVN links and edges".into(),
        ));
    }
    let d = spec.d;
    let t1 = |j: usize| {
        if spec.factors >= 1 {
            params.theta1[j]
        } else {
            0.0
        }
    };
    let t2 = |j: usize| {
        if spec.factors == 2 {
            params.theta2[j]
        } else {
            0.0
        }
    };
    let residual = |j: usize, k: usize| match &spec.tree {
        Some(tree) => tree
            .path_between(j, k)
            .iter()
            .map(|&e| params.delta[e])
            .product(),
        None => 0.0,
    };
    let mut m = DMatrix::identity(d, d);
    for j in 0..d {
        for k in j + 1..d {
            let (a1, b1, a2, b2) = (t1(j), t1(k), t2(j), t2(k));
            let given1 = a2 * b2 + ((1.0 - a2 * a2) * (1.0 - b2 * b2)).sqrt() * residual(j, k);
            let r = a1 * b1 + ((1.0 - a1 * a1) * (1.0 - b1 * b1)).sqrt() * given1;
            m[(j, k)] = r;
            m[(k, j)] = r;
        }
    }
    CorrelationMatrix::new(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancies {
    /// Largest absolute off-diagonal difference.
    pub d1: f64,
    /// Mean absolute off-diagonal difference over unordered pairs.
    pub d2: f64,
    /// log det R_model − log det R_observed + tr(R_model⁻¹ R_observed) − d.
    pub d3: f64,
}

pub fn discrepancies(
    model: &CorrelationMatrix,
    observed: &CorrelationMatrix,
) -> Result<Discrepancies> {
    let d = model.d();
    if observed.d() != d {
        return Err(Error::InvalidInput(format!(
            "dimensions differ: {d} and {}",
            observed.d()
        )));
    }
    let (mut d1, mut sum, mut pairs) = (0.0f64, 0.0, 0usize);
    for j in 0..d {
        for k in j + 1..d {
            let diff = (model.get(j, k) - observed.get(j, k)).abs();
            d1 = d1.max(diff);
            sum += diff;
            pairs += 1;
        }
    }
    let d2 = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
    let rm = model.matrix();
    let ro = observed.matrix();
    let chol = rm
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("model correlation matrix is singular".into()))?;
    let logdet_m = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let det_o = ro.determinant();
    if det_o.is_nan() || det_o <= 0.0 {
        return Err(Error::Numeric(
            "observed correlation matrix is not positive definite".into(),
        ));
    }
    let trace = chol.solve(ro).trace();
    Ok(Discrepancies {
        d1,
        d2,
        d3: logdet_m - det_o.ln() + trace - d as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Model2Better,
    Model1Better,
    Indistinguishable,
}

/// AIC-adjusted Vuong comparison; positive values favour model 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    pub dbar: f64,
    pub s: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub verdict: Verdict,
    pub n: usize,
    pub dim1: usize,
    pub dim2: usize,
    /// Observations whose pmf hit the floor under either model.
    pub floored: usize,
}

const Z_975: f64 = 1.959963984540054;

/// Vuong statistics from per-observation log-pmfs of the two models.
pub fn vuong_from_logpmf(
    log1: &[f64],
    log2: &[f64],
    dim1: usize,
    dim2: usize,
) -> Result<VuongResult> {
    let n = log1.len();
    if n != log2.len() || n < 2 {
        return Err(Error::InvalidInput(
            "log-pmf vectors must have equal length of at least 2".into(),
        ));
    }
    let floor = PMF_FLOOR.ln();
    let floored = log1
        .iter()
        .zip(log2)
        .filter(|(a, b)| **a <= floor || **b <= floor)
        .count();
    let diffs: Vec<f64> = log1.iter().zip(log2).map(|(a, b)| b - a).collect();
    let nf = n as f64;
    let dbar = diffs.iter().sum::<f64>() / nf;
    let s = (diffs.iter().map(|x| (x - dbar).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let centre = dbar - (dim2 as f64 - dim1 as f64) / nf;
    let half = Z_975 * s / nf.sqrt();
    let (ci_low, ci_high) = (centre - half, centre + half);
    let verdict = if ci_low > 0.0 {
        Verdict::Model2Better
    } else if ci_high < 0.0 {
        Verdict::Model1Better
    } else {
        Verdict::Indistinguishable
    };
    Ok(VuongResult {
        dbar,
        s,
        ci_low,
        ci_high,
        verdict,
        n,
        dim1,
        dim2,
        floored,
    })
}

/// Compares two fits of the same data.
pub fn vuong(
    data: &ResponseMatrix,
    fit1: &FitResult,
    fit2: &FitResult,
    rule: &QuadratureRule,
) -> Result<VuongResult> {
    let logs = |fit: &FitResult| -> Result<Vec<f64>> {
        LoglikEvaluator::new(data, &fit.cutpoints, &fit.spec, rule)?.observation_logpmf(&fit.params)
    };
    let r = vuong_from_logpmf(&logs(fit1)?, &logs(fit2)?, fit1.n_params, fit2.n_params)?;
    if r.floored > 0 {
        log::warn!(
            "{} observations have pmf at the floor in the Vuong comparison",
            r.floored
        );
    }
    Ok(r)
}
