//! Joint pmf and log-likelihood of the factor, 1-truncated vine and factor
//! tree models for ordinal data.
//!
//! Writing `F_j(y | x)` for the conditional cdf of item j given the latent
//! factors and `f_j` for its differences, every structure reduces to
//!
//! ```text
//! π(y) = Σ_q w_q Π_j f_j(y_j | x_q) Π_{jk∈E} f_jk(y_j, y_k | x_q) / (f_j f_k)
//! ```
//!
//! where `f_jk` is the rectangle probability of the edge copula evaluated at
//! the conditional cdfs. A model without factors has a single node of weight
//! one, and a model without a tree has an empty edge product.

use serde::{Deserialize, Serialize};

use crate::copula::{Copula, CopulaFamily};
use crate::data::{CutpointSet, ResponseMatrix};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::tree::EdgeSet;

/// Lower bound applied to every pmf before taking logs.
pub const PMF_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    OneFactor,
    TwoFactor,
    Vine,
    OneFactorTree,
    TwoFactorTree,
}

/// Model structure: factor count, per-link copula families and the
/// residual tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    pub factors: usize,
    pub factor1: Vec<CopulaFamily>,
    #[serde(default)]
    pub factor2: Vec<CopulaFamily>,
    #[serde(default)]
    pub tree: Option<EdgeSet>,
    #[serde(default)]
    pub tree_families: Vec<CopulaFamily>,
    /// Item whose second-factor link is fixed to independence.
    #[serde(default)]
    pub identified_item: Option<usize>,
}

/// Address of one dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Slot {
    Theta1(usize),
    Theta2(usize),
    Delta(usize),
}

impl ModelSpec {
    pub fn new(
        d: usize,
        factors: usize,
        factor1: Vec<CopulaFamily>,
        factor2: Vec<CopulaFamily>,
        tree: Option<(EdgeSet, Vec<CopulaFamily>)>,
    ) -> Result<Self> {
        let (tree, tree_families) = match tree {
            Some((t, f)) => (Some(t), f),
            None => (None, Vec::new()),
        };
        let spec = ModelSpec {
            d,
            factors,
            factor1,
            factor2,
            tree,
            tree_families,
            identified_item: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One family per tree of the model.
    pub fn uniform(
        d: usize,
        factors: usize,
        f1: CopulaFamily,
        f2: CopulaFamily,
        tree: Option<(EdgeSet, CopulaFamily)>,
    ) -> Result<Self> {
        let factor1 = if factors >= 1 {
            vec![f1; d]
        } else {
            Vec::new()
        };
        let factor2 = if factors == 2 {
            vec![f2; d]
        } else {
            Vec::new()
        };
        let tree = tree.map(|(t, f)| {
            let m = t.len();
            (t, vec![f; m])
        });
        Self::new(d, factors, factor1, factor2, tree)
    }

    pub fn one_factor(d: usize, f1: CopulaFamily) -> Result<Self> {
        Self::uniform(d, 1, f1, f1, None)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.d < 3 {
            return bad(format!("model needs at least 3 items, got {}", self.d));
        }
        if self.factors > 2 {
            return Err(Error::Unsupported(format!(
                "{} factors (at most 2 supported)",
                self.factors
            )));
        }
        let want1 = if self.factors >= 1 { self.d } else { 0 };
        let want2 = if self.factors == 2 { self.d } else { 0 };
        if self.factor1.len() != want1 {
            return bad(format!(
                "{} first-factor families, expected {want1}",
                self.factor1.len()
            ));
        }
        if self.factor2.len() != want2 {
            return bad(format!(
                "{} second-factor families, expected {want2}",
                self.factor2.len()
            ));
        }
        match &self.tree {
            Some(t) => {
                if t.d() != self.d {
                    return bad(format!("tree on {} nodes for {} items", t.d(), self.d));
                }
                if self.tree_families.len() != t.len() {
                    return bad(format!(
                        "{} tree families for {} edges",
                        self.tree_families.len(),
                        t.len()
                    ));
                }
            }
            None => {
                if self.factors == 0 {
                    return bad("a model without factors needs a tree".into());
                }
                if !self.tree_families.is_empty() {
                    return bad("tree families given without a tree".into());
                }
            }
        }
        if let Some(j) = self.identified_item {
            if self.factors != 2 || j >= self.d || self.factor2[j] != CopulaFamily::Independence {
                return bad(format!(
                    "identified item {j} must have an independence second-factor link"
                ));
            }
        }
        for f in self
            .factor1
            .iter()
            .chain(&self.factor2)
            .chain(&self.tree_families)
        {
            if let CopulaFamily::StudentT { dof } = f {
                if !(dof.is_finite() && *dof > 0.0) {
                    return Err(Error::Domain(format!("Student-t degrees of freedom {dof}")));
                }
            }
        }
        Ok(())
    }

    pub fn structure(&self) -> Structure {
        match (self.factors, self.tree.is_some()) {
            (0, _) => Structure::Vine,
            (1, false) => Structure::OneFactor,
            (1, true) => Structure::OneFactorTree,
            (_, false) => Structure::TwoFactor,
            (_, true) => Structure::TwoFactorTree,
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.tree.as_ref().map_or(&[], |t| t.edges())
    }

    pub fn family(&self, slot: Slot) -> CopulaFamily {
        match slot {
            Slot::Theta1(j) => self.factor1[j],
            Slot::Theta2(j) => self.factor2[j],
            Slot::Delta(e) => self.tree_families[e],
        }
    }

    /// Free parameters, ordered factor 1, factor 2, tree.
    pub fn slots(&self) -> Vec<Slot> {
        let mut s = Vec::new();
        for (j, f) in self.factor1.iter().enumerate() {
            if f.has_parameter() {
                s.push(Slot::Theta1(j));
            }
        }
        for (j, f) in self.factor2.iter().enumerate() {
            if f.has_parameter() {
                s.push(Slot::Theta2(j));
            }
        }
        for (e, f) in self.tree_families.iter().enumerate() {
            if f.has_parameter() {
                s.push(Slot::Delta(e));
            }
        }
        s
    }

    pub fn n_params(&self) -> usize {
        self.slots().len()
    }

    /// Both factor trees Gaussian, so the second factor is only identified
    /// up to rotation.
    pub fn needs_identification(&self) -> bool {
        self.factors == 2
            && self.factor1.iter().all(|f| *f == CopulaFamily::Bvn)
            && self
                .factor2
                .iter()
                .all(|f| matches!(f, CopulaFamily::Bvn | CopulaFamily::Independence))
    }

    /// Fixes the second-factor link of `item` to independence.
    pub fn with_identification(mut self, item: usize) -> Result<Self> {
        if self.factors != 2 || item >= self.d {
            return Err(Error::InvalidInput(format!(
                "cannot fix second-factor link of item {item}"
            )));
        }
        self.factor2[item] = CopulaFamily::Independence;
        self.identified_item = Some(item);
        Ok(self)
    }

    /// Same structure with every family of one tree replaced.
    pub fn with_factor1_family(&self, f: CopulaFamily) -> Self {
        let mut s = self.clone();
        s.factor1 = vec![f; s.factor1.len()];
        s
    }

    pub fn with_factor2_family(&self, f: CopulaFamily) -> Self {
        let mut s = self.clone();
        for (j, fam) in s.factor2.iter_mut().enumerate() {
            if Some(j) != s.identified_item {
                *fam = f;
            }
        }
        if s.identified_item.is_some() && !s.needs_identification() {
            if let Some(j) = s.identified_item.take() {
                s.factor2[j] = f;
            }
        }
        s
    }

    pub fn with_tree_family(&self, f: CopulaFamily) -> Self {
        let mut s = self.clone();
        s.tree_families = vec![f; s.tree_families.len()];
        s
    }

    pub fn with_tree(&self, tree: EdgeSet, f: CopulaFamily) -> Self {
        let mut s = self.clone();
        s.tree_families = vec![f; tree.len()];
        s.tree = Some(tree);
        s
    }
}

/// Copula parameters on their natural scale. Entries for independence links
/// are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub theta1: Vec<f64>,
    #[serde(default)]
    pub theta2: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
}

impl ParamVector {
    /// Parameters matching Kendall's τ values; `tau2`/`tau_tree` may be empty
    /// when the structure lacks that part. Independence links get 0.
    pub fn from_taus(
        spec: &ModelSpec,
        tau1: &[f64],
        tau2: &[f64],
        tau_tree: &[f64],
    ) -> Result<Self> {
        let conv = |fams: &[CopulaFamily], taus: &[f64], what: &str| -> Result<Vec<f64>> {
            if fams.len() != taus.len() {
                return Err(Error::InvalidInput(format!(
                    "{} {what} τ values for {} links",
                    taus.len(),
                    fams.len()
                )));
            }
            fams.iter()
                .zip(taus)
                .map(|(f, &t)| {
                    if f.has_parameter() {
                        f.tau_to_theta(t)
                    } else {
                        Ok(0.0)
                    }
                })
                .collect()
        };
        Ok(ParamVector {
            theta1: conv(&spec.factor1, tau1, "first-factor")?,
            theta2: conv(&spec.factor2, tau2, "second-factor")?,
            delta: conv(&spec.tree_families, tau_tree, "tree")?,
        })
    }

    pub fn get(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Theta1(j) => self.theta1[j],
            Slot::Theta2(j) => self.theta2[j],
            Slot::Delta(e) => self.delta[e],
        }
    }

    pub fn set(&mut self, slot: Slot, v: f64) {
        match slot {
            Slot::Theta1(j) => self.theta1[j] = v,
            Slot::Theta2(j) => self.theta2[j] = v,
            Slot::Delta(e) => self.delta[e] = v,
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.theta1.len() != spec.factor1.len()
            || self.theta2.len() != spec.factor2.len()
            || self.delta.len() != spec.tree_families.len()
        {
            return Err(Error::InvalidInput(
                "parameter vector does not match model structure".into(),
            ));
        }
        for slot in spec.slots() {
            spec.family(slot).validate(self.get(slot))?;
        }
        Ok(())
    }

    /// Kendall's τ of each free parameter, in [`ModelSpec::slots`] order.
    pub fn taus(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.slots()
            .iter()
            .map(|&s| spec.family(s).tau_unchecked(self.get(s)))
            .collect()
    }
}

fn check_row(y: &[usize], cut: &CutpointSet) -> Result<()> {
    if y.len() != cut.d() {
        return Err(Error::InvalidInput(format!(
            "response of length {} for {} items",
            y.len(),
            cut.d()
        )));
    }
    for (j, &v) in y.iter().enumerate() {
        if v >= cut.categories(j) {
            return Err(Error::InvalidInput(format!(
                "item {j}: category {v} out of range"
            )));
        }
    }
    Ok(())
}

fn check_structure(spec: &ModelSpec, want: Structure) -> Result<()> {
    spec.validate()?;
    if spec.structure() != want {
        return Err(Error::Unsupported(format!(
            "expected a {want:?} model, got {:?}",
            spec.structure()
        )));
    }
    Ok(())
}

pub fn pmf_1factor(
    y: &[usize],
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
    rule: &QuadratureRule,
) -> Result<f64> {
    check_structure(spec, Structure::OneFactor)?;
    pmf(y, cut, spec, params, rule)
}

pub fn pmf_2factor(
    y: &[usize],
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
    rule: &QuadratureRule,
) -> Result<f64> {
    check_structure(spec, Structure::TwoFactor)?;
    pmf(y, cut, spec, params, rule)
}

/// Closed-form pmf of a 1-truncated vine; no quadrature is involved.
pub fn pmf_vine(
    y: &[usize],
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
) -> Result<f64> {
    check_structure(spec, Structure::Vine)?;
    pmf(y, cut, spec, params, QuadratureRule::default_rule())
}

pub fn pmf_1factor_tree(
    y: &[usize],
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
    rule: &QuadratureRule,
) -> Result<f64> {
    check_structure(spec, Structure::OneFactorTree)?;
    pmf(y, cut, spec, params, rule)
}

pub fn pmf_2factor_tree(
    y: &[usize],
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
    rule: &QuadratureRule,
) -> Result<f64> {
    check_structure(spec, Structure::TwoFactorTree)?;
    pmf(y, cut, spec, params, rule)
}

/// pmf of one response vector under any structure, evaluated row by row
/// without the shared tables of [`LoglikEvaluator`].
pub fn pmf(
    y: &[usize],
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
    rule: &QuadratureRule,
) -> Result<f64> {
    spec.validate()?;
    params.validate(spec)?;
    check_row(y, cut)?;
    if cut.d() != spec.d {
        return Err(Error::InvalidInput(format!(
            "cutpoints for {} items, model has {}",
            cut.d(),
            spec.d
        )));
    }
    let d = spec.d;
    let links1: Vec<Copula> = copulas(&spec.factor1, &params.theta1);
    let links2: Vec<Copula> = copulas(&spec.factor2, &params.theta2);
    let edges: Vec<Copula> = copulas(&spec.tree_families, &params.delta);
    let (nodes, weights) = node_grid(spec.factors, rule);
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut total = 0.0;
    for (&(x1, x2), &w) in nodes.iter().zip(&weights) {
        for j in 0..d {
            let a = cut.item(j);
            let (mut l, mut h) = (a[y[j]], a[y[j] + 1]);
            if spec.factors >= 1 {
                l = links1[j].cond_cdf(l, x1);
                h = links1[j].cond_cdf(h, x1);
            }
            if spec.factors == 2 {
                l = links2[j].cond_cdf(l, x2);
                h = links2[j].cond_cdf(h, x2);
            }
            lo[j] = l;
            hi[j] = h;
        }
        let mut integrand = w;
        for j in 0..d {
            integrand *= (hi[j] - lo[j]).max(0.0);
        }
        if integrand == 0.0 {
            continue;
        }
        for (e, &(j, k)) in spec.edges().iter().enumerate() {
            let c = &edges[e];
            if c.family() == CopulaFamily::Independence {
                continue;
            }
            let rect = c.cdf(hi[j], hi[k]) - c.cdf(lo[j], hi[k]) - c.cdf(hi[j], lo[k])
                + c.cdf(lo[j], lo[k]);
            integrand *= edge_ratio(rect, hi[j] - lo[j], hi[k] - lo[k]);
        }
        total += integrand;
    }
    Ok(total.max(PMF_FLOOR))
}

/// Cell probabilities below this contribute nothing to a node's integrand.
const CELL_FLOOR: f64 = 1e-250;

/// rect / (fa·fb), with the rectangle held inside its Fréchet bounds so the
/// ratio stays finite when a cell probability is tiny.
#[inline]
fn edge_ratio(rect: f64, fa: f64, fb: f64) -> f64 {
    if fa < CELL_FLOOR || fb < CELL_FLOOR {
        return 0.0;
    }
    rect.clamp(0.0, fa.min(fb)) / fa / fb
}

fn copulas(fams: &[CopulaFamily], thetas: &[f64]) -> Vec<Copula> {
    fams.iter()
        .zip(thetas)
        .map(|(&f, &t)| Copula::new_unchecked(f, t))
        .collect()
}

/// Latent nodes `(x1, x2)` and their weights for a given factor count.
fn node_grid(factors: usize, rule: &QuadratureRule) -> (Vec<(f64, f64)>, Vec<f64>) {
    let (x, w) = (rule.nodes(), rule.weights());
    match factors {
        0 => (vec![(0.5, 0.5)], vec![1.0]),
        1 => (x.iter().map(|&a| (a, 0.5)).collect(), w.to_vec()),
        _ => {
            let mut nodes = Vec::with_capacity(x.len() * x.len());
            let mut weights = Vec::with_capacity(x.len() * x.len());
            for q1 in 0..x.len() {
                for q2 in 0..x.len() {
                    nodes.push((x[q1], x[q2]));
                    weights.push(w[q1] * w[q2]);
                }
            }
            (nodes, weights)
        }
    }
}

/// Per-node tables of conditional cdfs, category probabilities and edge
/// rectangle ratios for one parameter vector.
#[derive(Debug, Clone)]
pub struct Tables {
    level1: Vec<f64>,
    cdf: Vec<f64>,
    vals: Vec<f64>,
}

/// Log-likelihood evaluator for a fixed dataset, cutpoints and structure.
///
/// Distinct response patterns are evaluated once and weighted by their
/// multiplicity. Tables can be partially refreshed after a single parameter
/// changes, which is what the finite-difference gradient relies on.
#[derive(Debug, Clone)]
pub struct LoglikEvaluator {
    spec: ModelSpec,
    cut: CutpointSet,
    x: Vec<f64>,
    nodes: Vec<(usize, usize)>,
    weights: Vec<f64>,
    n1: usize,
    cdf_off: Vec<usize>,
    cdf_stride: usize,
    pmf_off: Vec<usize>,
    edge_off: Vec<usize>,
    val_stride: usize,
    incident: Vec<Vec<usize>>,
    row_idx: Vec<u32>,
    row_len: usize,
    mult: Vec<f64>,
    obs_row: Vec<usize>,
    n_obs: usize,
}

impl LoglikEvaluator {
    pub fn new(
        data: &ResponseMatrix,
        cut: &CutpointSet,
        spec: &ModelSpec,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        spec.validate()?;
        cut.check_matches(data)?;
        if data.d() != spec.d {
            return Err(Error::InvalidInput(format!(
                "data has {} items, model has {}",
                data.d(),
                spec.d
            )));
        }
        let d = spec.d;
        let k: Vec<usize> = (0..d).map(|j| cut.categories(j)).collect();
        let mut cdf_off = Vec::with_capacity(d);
        let mut pmf_off = Vec::with_capacity(d);
        let (mut co, mut po) = (0, 0);
        for &kj in &k {
            cdf_off.push(co);
            pmf_off.push(po);
            co += kj + 1;
            po += kj;
        }
        let mut edge_off = Vec::new();
        let mut eo = po;
        let mut incident = vec![Vec::new(); d];
        for (e, &(a, b)) in spec.edges().iter().enumerate() {
            edge_off.push(eo);
            eo += k[a] * k[b];
            incident[a].push(e);
            incident[b].push(e);
        }
        let (n1, x) = match spec.factors {
            0 => (1, vec![0.5]),
            _ => (rule.len(), rule.nodes().to_vec()),
        };
        let (nodes, weights): (Vec<(usize, usize)>, Vec<f64>) = match spec.factors {
            0 => (vec![(0, 0)], vec![1.0]),
            1 => ((0..n1).map(|q| (q, 0)).collect(), rule.weights().to_vec()),
            _ => {
                let w = rule.weights();
                (0..n1 * n1)
                    .map(|q| ((q / n1, q % n1), w[q / n1] * w[q % n1]))
                    .unzip()
            }
        };

        // map every observation to its distinct pattern
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| data.row(a).cmp(data.row(b)));
        let row_len = d + spec.edges().len();
        let mut row_idx = Vec::new();
        let mut mult = Vec::new();
        let mut obs_row = vec![0; data.n()];
        let mut prev: Option<&[u8]> = None;
        for &i in &order {
            let r = data.row(i);
            if prev != Some(r) {
                for j in 0..d {
                    row_idx.push((pmf_off[j] + r[j] as usize) as u32);
                }
                for (e, &(a, b)) in spec.edges().iter().enumerate() {
                    row_idx.push((edge_off[e] + r[a] as usize * k[b] + r[b] as usize) as u32);
                }
                mult.push(0.0);
                prev = Some(r);
            }
            *mult.last_mut().unwrap() += 1.0;
            obs_row[i] = mult.len() - 1;
        }

        Ok(LoglikEvaluator {
            spec: spec.clone(),
            cut: cut.clone(),
            x,
            nodes,
            weights,
            n1,
            cdf_off,
            cdf_stride: co,
            pmf_off,
            edge_off,
            val_stride: eo,
            incident,
            row_idx,
            row_len,
            mult,
            obs_row,
            n_obs: data.n(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn cutpoints(&self) -> &CutpointSet {
        &self.cut
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_patterns(&self) -> usize {
        self.mult.len()
    }

    pub fn loglik(&self, params: &ParamVector) -> Result<f64> {
        params.validate(&self.spec)?;
        Ok(self.sum_rows(&self.tables(params)))
    }

    /// Log-pmf of every observation, in data order.
    pub fn observation_logpmf(&self, params: &ParamVector) -> Result<Vec<f64>> {
        params.validate(&self.spec)?;
        let t = self.tables(params);
        let per_row: Vec<f64> = (0..self.mult.len())
            .map(|r| self.row_pmf(&t, r).max(PMF_FLOOR).ln())
            .collect();
        Ok(self.obs_row.iter().map(|&r| per_row[r]).collect())
    }

    /// Builds all tables; parameters are assumed valid.
    pub fn tables(&self, params: &ParamVector) -> Tables {
        let n_nodes = self.nodes.len();
        let mut t = Tables {
            level1: if self.spec.factors == 2 {
                vec![0.0; self.n1 * self.cdf_stride]
            } else {
                Vec::new()
            },
            cdf: vec![0.0; n_nodes * self.cdf_stride],
            vals: vec![0.0; n_nodes * self.val_stride],
        };
        for j in 0..self.spec.d {
            self.fill_item(&mut t, params, j, true);
        }
        for e in 0..self.spec.edges().len() {
            self.fill_edge(&mut t, params, e);
        }
        t
    }

    /// Log-likelihood after `params` differs from the parameters behind
    /// `base` only in `slot`.
    pub fn loglik_after(&self, base: &Tables, params: &ParamVector, slot: Slot) -> f64 {
        let mut t = base.clone();
        self.update(&mut t, params, slot);
        self.sum_rows(&t)
    }

    pub fn update(&self, t: &mut Tables, params: &ParamVector, slot: Slot) {
        match slot {
            Slot::Theta1(j) | Slot::Theta2(j) => {
                self.fill_item(t, params, j, matches!(slot, Slot::Theta1(_)));
                for &e in &self.incident[j] {
                    self.fill_edge(t, params, e);
                }
            }
            Slot::Delta(e) => self.fill_edge(t, params, e),
        }
    }

    pub fn sum_rows(&self, t: &Tables) -> f64 {
        (0..self.mult.len())
            .map(|r| self.mult[r] * self.row_pmf(t, r).max(PMF_FLOOR).ln())
            .sum()
    }

    fn row_pmf(&self, t: &Tables, r: usize) -> f64 {
        let idx = &self.row_idx[r * self.row_len..(r + 1) * self.row_len];
        let mut s = 0.0;
        for (node, &w) in self.weights.iter().enumerate() {
            let v = &t.vals[node * self.val_stride..(node + 1) * self.val_stride];
            let mut p = w;
            for &i in idx {
                p *= v[i as usize];
            }
            s += p;
        }
        s
    }

    fn fill_item(&self, t: &mut Tables, params: &ParamVector, j: usize, level1_changed: bool) {
        let a = self.cut.item(j);
        let m = a.len();
        let co = self.cdf_off[j];
        match self.spec.factors {
            0 => t.cdf[co..co + m].copy_from_slice(a),
            1 => {
                let c = Copula::new_unchecked(self.spec.factor1[j], params.theta1[j]);
                for q in 0..self.n1 {
                    let s = q * self.cdf_stride + co;
                    c.cond_cdf_many(a, self.x[q], &mut t.cdf[s..s + m]);
                }
            }
            _ => {
                if level1_changed {
                    let c = Copula::new_unchecked(self.spec.factor1[j], params.theta1[j]);
                    for q in 0..self.n1 {
                        let s = q * self.cdf_stride + co;
                        c.cond_cdf_many(a, self.x[q], &mut t.level1[s..s + m]);
                    }
                }
                let c2 = Copula::new_unchecked(self.spec.factor2[j], params.theta2[j]);
                for (node, &(q1, q2)) in self.nodes.iter().enumerate() {
                    let src = q1 * self.cdf_stride + co;
                    let dst = node * self.cdf_stride + co;
                    c2.cond_cdf_many(
                        &t.level1[src..src + m],
                        self.x[q2],
                        &mut t.cdf[dst..dst + m],
                    );
                }
            }
        }
        let po = self.pmf_off[j];
        for node in 0..self.nodes.len() {
            let f = &t.cdf[node * self.cdf_stride + co..node * self.cdf_stride + co + m];
            let v = &mut t.vals[node * self.val_stride + po..node * self.val_stride + po + m - 1];
            for y in 0..m - 1 {
                v[y] = (f[y + 1] - f[y]).max(0.0);
            }
        }
    }

    fn fill_edge(&self, t: &mut Tables, params: &ParamVector, e: usize) {
        let (j, k) = self.spec.edges()[e];
        let (mj, mk) = (self.cut.categories(j), self.cut.categories(k));
        let (cj, ck) = (self.cdf_off[j], self.cdf_off[k]);
        let (pj, pk) = (self.pmf_off[j], self.pmf_off[k]);
        let eo = self.edge_off[e];
        let c = Copula::new_unchecked(self.spec.tree_families[e], params.delta[e]);
        let indep = c.family() == CopulaFamily::Independence;
        let mut grid = vec![0.0; (mj + 1) * (mk + 1)];
        for node in 0..self.nodes.len() {
            let cb = node * self.cdf_stride;
            let vb = node * self.val_stride;
            if !indep {
                c.cdf_grid(
                    &t.cdf[cb + cj..cb + cj + mj + 1],
                    &t.cdf[cb + ck..cb + ck + mk + 1],
                    &mut grid,
                );
            }
            for a in 0..mj {
                let fa = t.vals[vb + pj + a];
                for b in 0..mk {
                    let fb = t.vals[vb + pk + b];
                    let ratio = if indep {
                        if fa > 0.0 && fb > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        let w = mk + 1;
                        let rect =
                            grid[(a + 1) * w + b + 1] - grid[a * w + b + 1] - grid[(a + 1) * w + b]
                                + grid[a * w + b];
                        edge_ratio(rect, fa, fb)
                    };
                    t.vals[vb + eo + a * mk + b] = ratio;
                }
            }
        }
    }
}

/// Σ_i log π(y_i), aggregated over distinct response patterns.
pub fn loglik(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    spec: &ModelSpec,
    params: &ParamVector,
    rule: &QuadratureRule,
) -> Result<f64> {
    LoglikEvaluator::new(data, cut, spec, rule)?.loglik(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut3() -> CutpointSet {
        CutpointSet::new(vec![
            vec![0.0, 0.3, 1.0],
            vec![0.0, 0.5, 1.0],
            vec![0.0, 0.45, 0.8, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn independence_factorizes() {
        let spec = ModelSpec::one_factor(3, CopulaFamily::Independence).unwrap();
        let p = ParamVector {
            theta1: vec![0.0; 3],
            theta2: vec![],
            delta: vec![],
        };
        let cut = cut3();
        let rule = QuadratureRule::default_rule();
        let got = pmf_1factor(&[1, 0, 2], &cut, &spec, &p, rule).unwrap();
        assert!((got - 0.7 * 0.5 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn structure_mismatch_is_rejected() {
        let spec = ModelSpec::one_factor(3, CopulaFamily::Bvn).unwrap();
        let p = ParamVector {
            theta1: vec![0.5; 3],
            theta2: vec![],
            delta: vec![],
        };
        let r = pmf_2factor(
            &[0, 0, 0],
            &cut3(),
            &spec,
            &p,
            QuadratureRule::default_rule(),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
        let r = pmf_1factor(
            &[0, 2, 0],
            &cut3(),
            &spec,
            &p,
            QuadratureRule::default_rule(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::uniform(3, 0, CopulaFamily::Bvn, CopulaFamily::Bvn, None).is_err());
        let t = EdgeSet::path(4).unwrap();
        assert!(ModelSpec::uniform(
            3,
            1,
            CopulaFamily::Bvn,
            CopulaFamily::Bvn,
            Some((t, CopulaFamily::Bvn))
        )
        .is_err());
        let s = ModelSpec::uniform(4, 2, CopulaFamily::Bvn, CopulaFamily::Bvn, None).unwrap();
        assert!(s.needs_identification());
        let s = s.with_identification(3).unwrap();
        assert_eq!(s.n_params(), 7);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn identical_rows_scale_loglik() {
        let spec = ModelSpec::one_factor(3, CopulaFamily::Gumbel).unwrap();
        let p = ParamVector {
            theta1: vec![1.5, 2.0, 1.2],
            theta2: vec![],
            delta: vec![],
        };
        let cut = cut3();
        let rows = vec![vec![1, 0, 2]; 7];
        let data = ResponseMatrix::new(&rows, Some(vec![2, 2, 3]), None).unwrap();
        let rule = QuadratureRule::default_rule();
        let ll = loglik(&data, &cut, &spec, &p, rule).unwrap();
        let one = pmf(&[1, 0, 2], &cut, &spec, &p, rule).unwrap();
        assert!((ll - 7.0 * one.ln()).abs() < 1e-12);
    }
}
