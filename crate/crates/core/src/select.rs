//! Tree and copula-family selection.

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::copula::{bvn_cdf, Copula, CopulaFamily};
use crate::data::{CutpointSet, ResponseMatrix};
use crate::error::{Error, Result};
use crate::estimate::{default_start, fit_with_cutpoints, FitOptions, FitResult};
use crate::likelihood::{ModelSpec, ParamVector, Slot};
use crate::par;
use crate::quadrature::QuadratureRule;
use crate::special::{brent_min, brent_root, norm_cdf, norm_pdf, norm_quantile};
use crate::tree::{EdgeSet, TreeSource};

/// Bound applied to polychoric and partial correlations.
pub const CORR_CLAMP: f64 = 0.999;

/// Symmetric unit-diagonal correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(
                "correlation matrix must be square".into(),
            ));
        }
        let d = m.nrows();
        for i in 0..d {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {i} is {}",
                    m[(i, i)]
                )));
            }
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 || m[(i, j)].abs() > 1.0 {
                    return Err(Error::InvalidInput(format!("entry ({i}, {j}) invalid")));
                }
            }
        }
        Ok(CorrelationMatrix(m))
    }

    pub fn identity(d: usize) -> Self {
        CorrelationMatrix(DMatrix::identity(d, d))
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.d())
            .map(|i| (0..self.d()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}

/// Pairwise rectangle log-likelihood of a K_j × K_k table under a bivariate
/// normal with the given cutpoints.
fn polychoric_loglik(table: &[Vec<usize>], aj: &[f64], ak: &[f64], rho: f64) -> f64 {
    let (mj, mk) = (aj.len(), ak.len());
    let mut grid = vec![0.0; mj * mk];
    for a in 0..mj {
        for b in 0..mk {
            grid[a * mk + b] = bvn_cdf(aj[a], ak[b], rho);
        }
    }
    let mut ll = 0.0;
    for (a, row) in table.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let p = grid[(a + 1) * mk + b + 1] - grid[a * mk + b + 1] - grid[(a + 1) * mk + b]
                + grid[a * mk + b];
            ll += n as f64 * p.max(1e-300).ln();
        }
    }
    ll
}

/// Polychoric correlation from a contingency table and normal-scale
/// cutpoints (including the infinite end points).
pub fn polychoric_from_table(table: &[Vec<usize>], alpha_j: &[f64], alpha_k: &[f64]) -> f64 {
    let (rho, _) = brent_min(
        |r| -polychoric_loglik(table, alpha_j, alpha_k, r),
        -0.9999,
        0.9999,
        1e-10,
    );
    if rho.abs() > CORR_CLAMP {
        warn!("polychoric correlation {rho:.5} clamped to ±{CORR_CLAMP}");
        return rho.signum() * CORR_CLAMP;
    }
    rho
}

/// Maximum-likelihood polychoric correlation of items `j` and `k`.
pub fn polychoric(data: &ResponseMatrix, cut: &CutpointSet, j: usize, k: usize) -> Result<f64> {
    cut.check_matches(data)?;
    if j >= data.d() || k >= data.d() || j == k {
        return Err(Error::InvalidInput(format!("invalid item pair ({j}, {k})")));
    }
    let table = data.crosstab(j, k);
    Ok(polychoric_from_table(&table, cut.alpha(j), cut.alpha(k)))
}

pub fn polychoric_matrix(data: &ResponseMatrix, cut: &CutpointSet) -> Result<CorrelationMatrix> {
    cut.check_matches(data)?;
    let d = data.d();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
        .collect();
    let vals = crate::par::map(&pairs, |&(j, k)| {
        polychoric_from_table(&data.crosstab(j, k), cut.alpha(j), cut.alpha(k))
    });
    let mut m = CorrelationMatrix::identity(d);
    for (&(j, k), v) in pairs.iter().zip(vals) {
        m.set(j, k, v);
    }
    Ok(m)
}

/// Partial correlation of two items given a factor with loadings `lj`, `lk`.
pub fn partial_corr(rho: f64, lj: f64, lk: f64) -> f64 {
    let r = (rho - lj * lk) / ((1.0 - lj * lj) * (1.0 - lk * lk)).sqrt();
    if !r.is_finite() || r.abs() >= 1.0 {
        warn!("partial correlation {r} outside (-1, 1), clamped");
        let s = if r.is_nan() {
            0.0
        } else {
            r.signum() * CORR_CLAMP
        };
        return s;
    }
    r
}

/// Partial correlation given two factors: first level with `l1`, then the
/// second-level loadings `l2` on the already partialled value.
pub fn partial_corr2(rho: f64, l1: (f64, f64), l2: (f64, f64)) -> f64 {
    partial_corr(partial_corr(rho, l1.0, l1.1), l2.0, l2.1)
}

/// Factor loadings of the normal ogive (all-BVN factor) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    pub theta1: Vec<f64>,
    /// Empty for one factor. The identified item's entry is 0.
    pub theta2: Vec<f64>,
}

/// Fits the one- or two-factor normal ogive model and returns its loadings.
pub fn loadings_normal_ogive(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    p: usize,
    rule: &QuadratureRule,
) -> Result<Loadings> {
    if !(1..=2).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "normal ogive loadings need 1 or 2 factors, got {p}"
        )));
    }
    let b = CopulaFamily::Bvn;
    let spec = ModelSpec::uniform(data.d(), p, b, b, None)?;
    let opts = FitOptions {
        standard_errors: false,
        ..FitOptions::default()
    };
    let fit = fit_with_cutpoints(data, cut, &spec, rule, &opts)?;
    Ok(Loadings {
        theta1: fit.params.theta1,
        theta2: fit.params.theta2,
    })
}

/// Prim's minimum spanning tree. Ties go to the lexicographically smallest
/// (min-index, max-index) edge.
pub fn mst(weights: &DMatrix<f64>) -> Result<EdgeSet> {
    let d = weights.nrows();
    if weights.ncols() != d || d < 2 {
        return Err(Error::InvalidInput(
            "weights must be a square matrix of size at least 2".into(),
        ));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite".into()));
    }
    let mut in_tree = vec![false; d];
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(d - 1);
    for _ in 1..d {
        let mut best: Option<(f64, (usize, usize))> = None;
        for a in (0..d).filter(|&a| in_tree[a]) {
            for b in (0..d).filter(|&b| !in_tree[b]) {
                let w = weights[(a, b)];
                let key = (a.min(b), a.max(b));
                let better = match best {
                    None => true,
                    Some((bw, bk)) => w < bw || (w == bw && key < bk),
                };
                if better {
                    best = Some((w, key));
                }
            }
        }
        let (_, (a, b)) = best.expect("a crossing edge exists");
        let new = if in_tree[a] { b } else { a };
        in_tree[new] = true;
        edges.push((a, b));
    }
    EdgeSet::new(d, edges)
}

/// Which correlations feed the spanning-tree weights log(1 − ρ²).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeVariant {
    Polychoric,
    /// Partial correlations given the one-factor normal ogive factor.
    #[serde(rename = "partial-1f")]
    Partial1F,
    /// Partial correlations given both two-factor normal ogive factors.
    #[serde(rename = "partial-2f")]
    Partial2F,
}

impl TreeVariant {
    /// The partial variant matching a factor count.
    pub fn partial(factors: usize) -> Option<Self> {
        match factors {
            1 => Some(TreeVariant::Partial1F),
            2 => Some(TreeVariant::Partial2F),
            _ => None,
        }
    }

    fn source(self) -> TreeSource {
        match self {
            TreeVariant::Polychoric => TreeSource::Polychoric,
            TreeVariant::Partial1F => TreeSource::Partial1F,
            TreeVariant::Partial2F => TreeSource::Partial2F,
        }
    }
}

/// Correlations used as tree weights by `variant`.
pub fn tree_correlations(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    variant: TreeVariant,
    rule: &QuadratureRule,
) -> Result<CorrelationMatrix> {
    let rho = polychoric_matrix(data, cut)?;
    let p = match variant {
        TreeVariant::Polychoric => return Ok(rho),
        TreeVariant::Partial1F => 1,
        TreeVariant::Partial2F => 2,
    };
    let l = loadings_normal_ogive(data, cut, p, rule)?;
    let d = rho.d();
    let mut out = CorrelationMatrix::identity(d);
    for j in 0..d {
        for k in j + 1..d {
            let mut r = partial_corr(rho.get(j, k), l.theta1[j], l.theta1[k]);
            if p == 2 {
                r = partial_corr(r, l.theta2[j], l.theta2[k]);
            }
            out.set(j, k, r);
        }
    }
    Ok(out)
}

/// Spanning tree minimising Σ log(1 − ρ²) over its edges.
pub fn tree_from_correlations(rho: &CorrelationMatrix) -> Result<EdgeSet> {
    let w = rho
        .matrix()
        .map(|r| (1.0 - r * r).max(f64::MIN_POSITIVE).ln());
    mst(&w)
}

pub fn select_tree(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    variant: TreeVariant,
    rule: &QuadratureRule,
) -> Result<EdgeSet> {
    let rho = tree_correlations(data, cut, variant, rule)?;
    Ok(tree_from_correlations(&rho)?.with_source(variant.source()))
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    /// Number of factors, 0 to 2.
    pub factors: usize,
    /// Whether the model has a residual tree.
    pub tree: bool,
    pub factor_candidates: Vec<CopulaFamily>,
    pub tree_candidates: Vec<CopulaFamily>,
    pub fit: FitOptions,
}

impl SelectOptions {
    pub fn new(factors: usize, tree: bool) -> Self {
        SelectOptions {
            factors,
            tree,
            factor_candidates: CopulaFamily::factor_candidates(),
            tree_candidates: CopulaFamily::tree_candidates(),
            fit: FitOptions {
                standard_errors: false,
                ..FitOptions::default()
            },
        }
    }
}

/// One candidate family's refit within a selection step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateFit {
    pub family: CopulaFamily,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionStep {
    /// `factor1`, `factor2`, or `tree-` followed by the tree variant.
    pub name: String,
    pub candidates: Vec<CandidateFit>,
    pub chosen: CopulaFamily,
}

/// Final model for one tree-selection variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeChoice {
    pub variant: TreeVariant,
    pub tree: EdgeSet,
    pub family: CopulaFamily,
    pub loglik: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub spec: ModelSpec,
    pub fit: FitResult,
    /// Log-likelihood of the all-BVN factor model the search starts from.
    pub start_loglik: f64,
    pub steps: Vec<SelectionStep>,
    pub trees: Vec<TreeChoice>,
}

/// Sequential family selection: factor 1, then factor 2, then for each tree
/// variant the residual tree and its family. Each step refits the model under
/// every candidate (applied to the whole tree) and keeps the best
/// log-likelihood; the incumbent family is always a candidate, so the
/// log-likelihood never drops below the starting all-BVN factor model.
pub fn select_families(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    opts: &SelectOptions,
    rule: &QuadratureRule,
) -> Result<Selection> {
    let d = data.d();
    let p = opts.factors;
    if p > 2 {
        return Err(Error::InvalidInput(format!("at most two factors, got {p}")));
    }
    if p == 0 && !opts.tree {
        return Err(Error::InvalidInput(
            "a model needs factors or a tree".into(),
        ));
    }
    let b = CopulaFamily::Bvn;
    let mut steps = Vec::new();
    let (mut spec, mut fit) = if p > 0 {
        let spec = ModelSpec::uniform(d, p, b, b, None)?;
        let fit = fit_candidate(data, cut, &spec, None, rule, &opts.fit)?;
        (spec, fit)
    } else {
        let ind = CopulaFamily::Independence;
        let spec = ModelSpec::uniform(d, 0, b, b, Some((EdgeSet::path(d)?, ind)))?;
        let fit = fit_candidate(data, cut, &spec, None, rule, &opts.fit)?;
        (spec, fit)
    };
    let start_loglik = fit.loglik;

    for level in 1..=p {
        let name = format!("factor{level}");
        let base = spec.clone();
        let make = |f: CopulaFamily| {
            let mut s = ModelSpec::uniform(
                d,
                p,
                base.factor1[0],
                base.factor2.first().copied().unwrap_or(b),
                None,
            )
            .expect("factor-only spec");
            if level == 1 {
                s.factor1 = vec![f; d];
            } else {
                s.factor2 = vec![f; d];
            }
            s
        };
        let incumbent = if level == 1 {
            spec.factor1[0]
        } else {
            first_param_family(&spec.factor2)
        };
        let (step, best) = run_step(
            data,
            cut,
            &name,
            &opts.factor_candidates,
            incumbent,
            &fit,
            make,
            rule,
            &opts.fit,
        );
        steps.push(step);
        if let Some((s, f)) = best {
            spec = s;
            fit = f;
        }
    }

    let mut trees = Vec::new();
    if opts.tree {
        let mut variants = vec![TreeVariant::Polychoric];
        variants.extend(TreeVariant::partial(p));
        let factor_spec = spec.clone();
        let factor_fit = fit.clone();
        let mut best: Option<(ModelSpec, FitResult)> = None;
        for variant in variants {
            let tree = match select_tree(data, cut, variant, rule) {
                Ok(t) => t,
                Err(e) => {
                    warn!("tree selection ({variant:?}) failed: {e}");
                    continue;
                }
            };
            info!("{variant:?} tree: {:?}", tree.edges());
            let name = format!("tree-{}", variant_name(variant));
            let ind = CopulaFamily::Independence;
            let incumbent_spec = with_tree(&factor_spec, tree.clone(), ind);
            let mut incumbent_fit = factor_fit.clone();
            incumbent_fit.spec = incumbent_spec.clone();
            incumbent_fit.params.delta = vec![0.0; tree.len()];
            incumbent_fit.taus = incumbent_fit.params.taus(&incumbent_spec);
            let make = |f: CopulaFamily| with_tree(&factor_spec, tree.clone(), f);
            let (step, chosen) = run_step(
                data,
                cut,
                &name,
                &opts.tree_candidates,
                ind,
                &incumbent_fit,
                make,
                rule,
                &opts.fit,
            );
            let (s, f) = chosen.unwrap_or((incumbent_spec, incumbent_fit));
            trees.push(TreeChoice {
                variant,
                tree: tree.clone(),
                family: step.chosen,
                loglik: f.loglik,
                aic: f.aic,
            });
            steps.push(step);
            if best.as_ref().is_none_or(|(_, bf)| f.loglik > bf.loglik) {
                best = Some((s, f));
            }
        }
        if let Some((s, f)) = best {
            spec = s;
            fit = f;
        }
    }
    Ok(Selection {
        spec,
        fit,
        start_loglik,
        steps,
        trees,
    })
}

fn variant_name(v: TreeVariant) -> &'static str {
    match v {
        TreeVariant::Polychoric => "polychoric",
        TreeVariant::Partial1F => "partial-1f",
        TreeVariant::Partial2F => "partial-2f",
    }
}

fn first_param_family(f: &[CopulaFamily]) -> CopulaFamily {
    f.iter()
        .copied()
        .find(|f| f.has_parameter())
        .unwrap_or(CopulaFamily::Bvn)
}

fn with_tree(spec: &ModelSpec, tree: EdgeSet, f: CopulaFamily) -> ModelSpec {
    let mut s = spec.clone();
    s.identified_item = None;
    if s.factors == 2 {
        let f2 = first_param_family(&s.factor2);
        s.factor2 = vec![f2; s.d];
    }
    s.with_tree(tree, f)
}

/// Refits every candidate in parallel. Returns the step record and, when a
/// candidate beats the incumbent fit, the new model.
#[allow(clippy::too_many_arguments)]
fn run_step(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    name: &str,
    candidates: &[CopulaFamily],
    incumbent: CopulaFamily,
    incumbent_fit: &FitResult,
    make: impl Fn(CopulaFamily) -> ModelSpec + Sync,
    rule: &QuadratureRule,
    fit_opts: &FitOptions,
) -> (SelectionStep, Option<(ModelSpec, FitResult)>) {
    let mut fams: Vec<CopulaFamily> = candidates.to_vec();
    if !fams.contains(&incumbent) {
        fams.insert(0, incumbent);
    }
    let results = par::map(&fams, |&f| {
        if f == incumbent {
            return Ok(incumbent_fit.clone());
        }
        let spec = make(f);
        fit_candidate(data, cut, &spec, Some(incumbent_fit), rule, fit_opts)
    });
    let mut records = Vec::with_capacity(fams.len());
    let mut best: Option<(CopulaFamily, FitResult)> = None;
    for (&f, r) in fams.iter().zip(results) {
        match r {
            Ok(fit) => {
                if !fit.converged {
                    warn!("{name}: {f} fit did not converge ({:?})", fit.termination);
                }
                records.push(CandidateFit {
                    family: f,
                    loglik: Some(fit.loglik),
                    aic: Some(fit.aic),
                    converged: fit.converged,
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((bf, b)) => {
                        fit.loglik > b.loglik
                            || (fit.loglik == b.loglik && f == incumbent && *bf != incumbent)
                    }
                };
                if better {
                    best = Some((f, fit));
                }
            }
            Err(e) => {
                warn!("{name}: skipping {f}: {e}");
                records.push(CandidateFit {
                    family: f,
                    loglik: None,
                    aic: None,
                    converged: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((f, fit)) if fit.loglik >= incumbent_fit.loglik => {
            info!("{name}: chose {f} (loglik {:.4})", fit.loglik);
            let spec = fit.spec.clone();
            (
                SelectionStep {
                    name: name.to_string(),
                    candidates: records,
                    chosen: f,
                },
                Some((spec, fit)),
            )
        }
        _ => (
            SelectionStep {
                name: name.to_string(),
                candidates: records,
                chosen: incumbent,
            },
            None,
        ),
    }
}

/// Fits `spec`, starting from the previous fit where the two share slots.
fn fit_candidate(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    spec: &ModelSpec,
    prev: Option<&FitResult>,
    rule: &QuadratureRule,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut start = default_start(data, cut, spec)?;
    if let Some(prev) = prev {
        warm_start(&mut start, spec, prev);
    }
    let opts = FitOptions {
        start: Some(start),
        ..opts.clone()
    };
    fit_with_cutpoints(data, cut, spec, rule, &opts)
}

fn warm_start(start: &mut ParamVector, spec: &ModelSpec, prev: &FitResult) {
    let same_tree = spec.edges() == prev.spec.edges();
    for slot in spec.slots() {
        let usable = match slot {
            Slot::Theta1(_) => prev.spec.factors >= 1,
            Slot::Theta2(_) => prev.spec.factors == 2,
            Slot::Delta(_) => same_tree && prev.spec.tree.is_some(),
        };
        if !usable {
            continue;
        }
        let old = prev.spec.family(slot);
        if !old.has_parameter() {
            continue;
        }
        let tau = old.tau_unchecked(prev.params.get(slot));
        start.set(slot, spec.family(slot).theta_for_tau_clamped(tau));
    }
}

/// Lower and upper semi-correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiCorrelations {
    pub lower: f64,
    pub upper: f64,
}

const Z_MAX: f64 = 8.3;

/// Composite 20-point Gauss–Legendre rule on `[a, b]` with panels of width
/// at most 0.4 (normal-score integrands are smooth; the tails beyond ±8.3
/// carry less than 1e-15 of the mass).
fn panel_rule(a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = crate::quadrature::gauss_legendre_unit(20).expect("valid rule");
    let panels = (2.5 * (b - a)).ceil() as usize;
    let h = (b - a) / panels as f64;
    let mut x = Vec::with_capacity(panels * 20);
    let mut w = Vec::with_capacity(panels * 20);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (&t, &wt) in rule.nodes().iter().zip(rule.weights()) {
            x.push(lo + h * t);
            w.push(h * wt);
        }
    }
    (x, w)
}

struct ScoreGrid {
    neg: (Vec<f64>, Vec<f64>),
    pos: (Vec<f64>, Vec<f64>),
    neg_u: Vec<f64>,
    pos_u: Vec<f64>,
}

impl ScoreGrid {
    fn new() -> Self {
        let neg = panel_rule(-Z_MAX, 0.0);
        let pos = panel_rule(0.0, Z_MAX);
        let neg_u = neg.0.iter().map(|&z| norm_cdf(z)).collect();
        let pos_u = pos.0.iter().map(|&z| norm_cdf(z)).collect();
        ScoreGrid {
            neg,
            pos,
            neg_u,
            pos_u,
        }
    }
}

/// Normal-scores correlation of a copula.
pub fn normal_scores_corr(c: &Copula) -> f64 {
    match c.family() {
        CopulaFamily::Independence => return 0.0,
        CopulaFamily::Bvn => return c.theta(),
        _ => {}
    }
    let g = ScoreGrid::new();
    let mut outer = g.neg.clone();
    outer.0.extend(&g.pos.0);
    outer.1.extend(&g.pos.1);
    let vals = par::map(&outer.0, |&z1| {
        let u1 = norm_cdf(z1);
        let mut fneg = vec![0.0; g.neg_u.len()];
        let mut fpos = vec![0.0; g.pos_u.len()];
        c.cond_cdf_many(&g.neg_u, u1, &mut fneg);
        c.cond_cdf_many(&g.pos_u, u1, &mut fpos);
        // E[Z2 | Z1 = z1] by parts
        let up: f64 = fpos.iter().zip(&g.pos.1).map(|(f, w)| (1.0 - f) * w).sum();
        let down: f64 = fneg.iter().zip(&g.neg.1).map(|(f, w)| f * w).sum();
        z1 * norm_pdf(z1) * (up - down)
    });
    vals.iter().zip(&outer.1).map(|(v, w)| v * w).sum()
}

/// Correlation of (Z1, Z2) given both negative, where `cond(v, u)` fills the
/// conditional cdf of U2 at each `v` given U1 = `u`.
type CondFill<'a> = &'a (dyn Fn(&[f64], f64, &mut [f64]) + Sync);

fn lower_semi_corr(cond: CondFill) -> f64 {
    let g = ScoreGrid::new();
    let (zs, ws) = (&g.neg.0, &g.neg.1);
    let vals = par::map(zs, |&z1| {
        let u1 = norm_cdf(z1);
        let mut f = vec![0.0; zs.len()];
        cond(&g.neg_u, u1, &mut f);
        let mut half = [0.0];
        cond(&[0.5], u1, &mut half);
        let i1: f64 = f.iter().zip(ws).map(|(f, w)| f * w).sum();
        let i2: f64 = f.iter().zip(zs).zip(ws).map(|((f, z), w)| f * z * w).sum();
        // ∫ dG, ∫ z dG, ∫ z² dG over (−∞, 0]
        (half[0], -i1, -2.0 * i2)
    });
    let (mut m0, mut e1, mut e11, mut e2, mut e22, mut e12) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&z1, &w), (g0, a1, a2)) in zs.iter().zip(ws).zip(vals) {
        let w = w * norm_pdf(z1);
        m0 += w * g0;
        e1 += w * z1 * g0;
        e11 += w * z1 * z1 * g0;
        e2 += w * a1;
        e22 += w * a2;
        e12 += w * z1 * a1;
    }
    let (e1, e11, e2, e22, e12) = (e1 / m0, e11 / m0, e2 / m0, e22 / m0, e12 / m0);
    (e12 - e1 * e2) / ((e11 - e1 * e1) * (e22 - e2 * e2)).sqrt()
}

/// Semi-correlations of a copula from its normal scores.
pub fn semi_correlations_of(c: &Copula) -> SemiCorrelations {
    if c.family() == CopulaFamily::Independence {
        return SemiCorrelations {
            lower: 0.0,
            upper: 0.0,
        };
    }
    let lower = lower_semi_corr(&|v, u, out| c.cond_cdf_many(v, u, out));
    // upper tail of C is the lower tail of its survival copula
    let upper = lower_semi_corr(&|v, u, out| {
        let flipped: Vec<f64> = v.iter().map(|x| 1.0 - x).collect();
        c.cond_cdf_many(&flipped, 1.0 - u, out);
        out.iter_mut().for_each(|x| *x = 1.0 - *x);
    });
    SemiCorrelations { lower, upper }
}

/// Parameter at which the family's normal-scores correlation equals `rho_n`.
pub fn calibrate_to_normal_scores(family: CopulaFamily, rho_n: f64) -> Result<f64> {
    match family {
        CopulaFamily::Independence => return Ok(0.0),
        CopulaFamily::Bvn => return Ok(rho_n),
        _ => {}
    }
    if !(rho_n > 0.0 && rho_n < 0.95) {
        return Err(Error::Domain(format!(
            "calibration supports 0 < ρ_N < 0.95, got {rho_n}"
        )));
    }
    let (lo, hi) = match family {
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => (1.0 + 1e-6, 20.0),
        CopulaFamily::Frank => (1e-3, 60.0),
        _ => (1e-6, 0.999),
    };
    let f = |th: f64| normal_scores_corr(&Copula::new_unchecked(family, th)) - rho_n;
    brent_root(f, lo, hi, 1e-9)
        .ok_or_else(|| Error::Numeric(format!("no {family} parameter reaches ρ_N = {rho_n}")))
}

/// Semi-correlations of `family` calibrated to normal-scores correlation `rho_n`.
pub fn theoretical_semi_corr(family: CopulaFamily, rho_n: f64) -> Result<SemiCorrelations> {
    let th = calibrate_to_normal_scores(family, rho_n)?;
    Ok(semi_correlations_of(&Copula::new(family, th)?))
}

/// Averages over item pairs of the polychoric correlation and of the lower
/// and upper observed semi-correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedSemiCorrelations {
    pub rho_n: f64,
    pub lower: f64,
    pub upper: f64,
    /// Pairs whose half-tables had enough categories to be used.
    pub pairs_lower: usize,
    pub pairs_upper: usize,
}

/// Experimental observed semi-correlations. For each pair, the rows where
/// both items sit in their lower (upper) halves are kept, the halves running
/// from the first (last) category up to and including the category that
/// contains the median; the polychoric correlation is then re-estimated on
/// that sub-sample with its own cutpoints.
pub fn semi_correlations(
    data: &ResponseMatrix,
    cut: &CutpointSet,
) -> Result<ObservedSemiCorrelations> {
    let rho = polychoric_matrix(data, cut)?;
    let d = data.d();
    let median: Vec<usize> = (0..d)
        .map(|j| {
            let a = cut.item(j);
            (0..a.len() - 1)
                .find(|&y| a[y + 1] >= 0.5)
                .unwrap_or(a.len() - 2)
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
        .collect();
    let half = |j: usize, k: usize, upper: bool| -> Option<f64> {
        let keep = |y: usize, m: usize| if upper { y >= m } else { y <= m };
        let (kj, kk) = (data.categories()[j], data.categories()[k]);
        let mut table = vec![vec![0usize; kk]; kj];
        let mut n = 0usize;
        for row in data.rows() {
            let (a, b) = (row[j] as usize, row[k] as usize);
            if keep(a, median[j]) && keep(b, median[k]) {
                table[a][b] += 1;
                n += 1;
            }
        }
        let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<usize> = (0..kk).map(|b| table.iter().map(|r| r[b]).sum()).collect();
        let spread = |m: &[usize]| m.iter().filter(|&&c| c > 0).count() >= 2;
        if n < 10 || !spread(&rows) || !spread(&cols) {
            return None;
        }
        let alpha = |m: &[usize]| {
            let mut acc = 0usize;
            let mut a = vec![f64::NEG_INFINITY];
            for &c in &m[..m.len() - 1] {
                acc += c;
                a.push(norm_quantile(acc as f64 / n as f64));
            }
            a.push(f64::INFINITY);
            a
        };
        Some(polychoric_from_table(&table, &alpha(&rows), &alpha(&cols)))
    };
    let vals = par::map(&pairs, |&(j, k)| (half(j, k, false), half(j, k, true)));
    let mean = |xs: Vec<f64>| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let lows: Vec<f64> = vals.iter().filter_map(|v| v.0).collect();
    let highs: Vec<f64> = vals.iter().filter_map(|v| v.1).collect();
    let rho_n = mean(pairs.iter().map(|&(j, k)| rho.get(j, k)).collect());
    Ok(ObservedSemiCorrelations {
        rho_n,
        pairs_lower: lows.len(),
        pairs_upper: highs.len(),
        lower: mean(lows),
        upper: mean(highs),
    })
}
