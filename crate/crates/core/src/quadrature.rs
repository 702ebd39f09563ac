//! Gauss–Legendre rules on the unit interval.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const DEFAULT_NQ: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// The shared default rule with [`DEFAULT_NQ`] nodes.
    pub fn default_rule() -> &'static QuadratureRule {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| gauss_legendre_unit(DEFAULT_NQ).expect("default rule"))
    }
}

/// `nq`-point Gauss–Legendre rule mapped from (−1, 1) to (0, 1). Nodes come
/// from Newton iteration on `P_nq` started at the Chebyshev-like guess.
pub fn gauss_legendre_unit(nq: usize) -> Result<QuadratureRule> {
    if nq < 2 {
        return Err(Error::Domain(format!(
            "quadrature needs at least 2 nodes, got {nq}"
        )));
    }
    let n = nq as f64;
    let mut nodes = vec![0.0; nq];
    let mut weights = vec![0.0; nq];
    let half = nq.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(nq, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(nq, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; map t ↦ (1 + t)/2
        nodes[i] = 0.5 * (1.0 - x);
        nodes[nq - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[nq - 1 - i] = 0.5 * w;
    }
    if nq % 2 == 1 {
        nodes[nq / 2] = 0.5;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
