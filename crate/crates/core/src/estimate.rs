//! Two-step IFM estimation: cutpoints from sample proportions, then
//! quasi-Newton maximisation of the log-likelihood over the copula
//! parameters on an unconstrained scale.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::copula::CopulaFamily;
use crate::data::{estimate_cutpoints_with, CutpointSet, EmptyCategoryPolicy, ResponseMatrix};
use crate::error::{Error, Result};
use crate::likelihood::{LoglikEvaluator, ModelSpec, ParamVector, Slot, Tables};
use crate::par;
use crate::quadrature::QuadratureRule;
use crate::select::{partial_corr, polychoric};

/// Frank parameters closer to zero than this are pushed out to ±`FRANK_EPS`.
pub const FRANK_EPS: f64 = 1e-5;

/// Gradient size below which a stalled line search still counts as converged.
const NOISE_GRADIENT: f64 = 1e-3;

const HESSIAN_STEP: f64 = 1e-4;

/// θ as a function of the unconstrained γ.
pub fn from_gamma(family: CopulaFamily, gamma: f64) -> f64 {
    match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => gamma.clamp(-15.0, 15.0).tanh(),
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0 + gamma.clamp(-30.0, 8.0).exp(),
        CopulaFamily::Frank => {
            let g = gamma.clamp(-200.0, 200.0);
            if g.abs() < FRANK_EPS {
                FRANK_EPS.copysign(if g == 0.0 { 1.0 } else { g })
            } else {
                g
            }
        }
    }
}

pub fn to_gamma(family: CopulaFamily, theta: f64) -> f64 {
    match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => theta.atanh(),
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => (theta - 1.0).max(1e-13).ln(),
        CopulaFamily::Frank => theta,
    }
}

pub fn dtheta_dgamma(family: CopulaFamily, gamma: f64) -> f64 {
    match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => {
            let t = gamma.tanh();
            1.0 - t * t
        }
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => gamma.exp(),
        CopulaFamily::Frank => 1.0,
    }
}

/// Free parameters on the unconstrained scale, in [`ModelSpec::slots`] order.
pub fn transform(spec: &ModelSpec, params: &ParamVector) -> Vec<f64> {
    spec.slots()
        .iter()
        .map(|&s| to_gamma(spec.family(s), params.get(s)))
        .collect()
}

pub fn untransform(spec: &ModelSpec, gamma: &[f64]) -> ParamVector {
    let mut p = ParamVector {
        theta1: vec![0.0; spec.factor1.len()],
        theta2: vec![0.0; spec.factor2.len()],
        delta: vec![0.0; spec.tree_families.len()],
    };
    for (&s, &g) in spec.slots().iter().zip(gamma) {
        p.set(s, from_gamma(spec.family(s), g));
    }
    p
}

/// Why the optimiser stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    NoProgress,
    LineSearchFailure,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Largest move of a single coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            max_step: 3.0,
        }
    }
}

/// Minimises a function with the BFGS inverse-Hessian update and Armijo
/// backtracking, so accepted steps never increase the objective. `value`
/// returns the objective with any state `grad` can reuse.
pub fn bfgs<S>(
    x0: &[f64],
    value: impl Fn(&[f64]) -> (f64, S),
    grad: impl Fn(&[f64], &S) -> Vec<f64>,
    opts: BfgsOptions,
) -> Result<BfgsOutcome> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, state0) = value(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Numeric(format!(
            "objective not finite at the starting point ({fx})"
        )));
    }
    if n == 0 {
        return Ok(BfgsOutcome {
            x: vec![],
            fx,
            grad: vec![],
            iterations: 0,
            termination: Termination::GradientTolerance,
            converged: true,
            history: vec![fx],
        });
    }
    let mut g = DVector::from_vec(grad(x.as_slice(), &state0));
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "gradient not finite at the starting point".into(),
        ));
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut stalls = 0;
    let mut history = vec![fx];
    let max_abs = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for it in 0..opts.max_iter {
        if max_abs(&g) < opts.grad_tol {
            return Ok(done(
                x,
                fx,
                g,
                it,
                Termination::GradientTolerance,
                true,
                history,
            ));
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if slope.is_nan() || slope >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let biggest = max_abs(&p);
        if biggest > opts.max_step {
            p *= opts.max_step / biggest;
            slope = g.dot(&p);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + alpha * &p;
            let (fnew, sn) = value(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                let gn = DVector::from_vec(grad(xn.as_slice(), &sn));
                if gn.iter().all(|v| v.is_finite()) {
                    accepted = Some((xn, fnew, gn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if !fresh {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            let ok = max_abs(&g) < NOISE_GRADIENT;
            return Ok(done(
                x,
                fx,
                g,
                it,
                Termination::LineSearchFailure,
                ok,
                history,
            ));
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h -= rho * (&s * hy.transpose() + &hy * s.transpose());
            h += (rho * rho * yhy + rho) * (&s * s.transpose());
            fresh = false;
        }
        let progress = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        history.push(fx);
        debug!("bfgs iter {it}: f = {fx:.10}, |g|max = {:.3e}", max_abs(&g));
        if progress <= 1e-12 * (fx.abs() + 1e-8) {
            stalls += 1;
            if stalls >= 3 {
                let ok = max_abs(&g) < NOISE_GRADIENT;
                return Ok(done(x, fx, g, it + 1, Termination::NoProgress, ok, history));
            }
        } else {
            stalls = 0;
        }
    }
    let ok = max_abs(&g) < opts.grad_tol;
    Ok(done(
        x,
        fx,
        g,
        opts.max_iter,
        Termination::MaxIterations,
        ok,
        history,
    ))
}

fn done(
    x: DVector<f64>,
    fx: f64,
    g: DVector<f64>,
    iterations: usize,
    termination: Termination,
    converged: bool,
    history: Vec<f64>,
) -> BfgsOutcome {
    BfgsOutcome {
        x: x.as_slice().to_vec(),
        fx,
        grad: g.as_slice().to_vec(),
        iterations,
        termination,
        converged,
        history,
    }
}

/// How the second-factor identification link is chosen when both factor
/// trees are Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identification {
    #[default]
    LastItem,
    /// Fit once with the last item fixed, then fix the item with the smallest
    /// second-factor |θ̂| and refit.
    Pilot,
    Item(usize),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Central-difference step on the unconstrained scale.
    pub fd_step: f64,
    pub empty_categories: EmptyCategoryPolicy,
    pub identification: Identification,
    pub standard_errors: bool,
    pub start: Option<ParamVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            fd_step: 1e-6,
            empty_categories: EmptyCategoryPolicy::Reject,
            identification: Identification::LastItem,
            standard_errors: true,
            start: None,
        }
    }
}

/// Naive inverse-Hessian standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    /// NaN where the variance estimate is negative; written as `null`.
    #[serde(with = "nan_as_null")]
    pub theta: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub tau: Vec<f64>,
    /// False when the observed information was not positive definite and a
    /// pseudo-inverse was used.
    pub positive_definite: bool,
    pub method: String,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|x| x.unwrap_or(f64::NAN))
            .collect())
    }
}

/// Label recorded with every set of standard errors.
pub const SE_METHOD: &str = "naive inverse observed information (cutpoints treated as known)";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub cutpoints: CutpointSet,
    pub params: ParamVector,
    pub slots: Vec<Slot>,
    pub taus: Vec<f64>,
    pub se: Option<StandardErrors>,
    pub loglik: f64,
    pub aic: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
    pub max_gradient: f64,
    /// Log-likelihood at the start and after each accepted step.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Estimates cutpoints, then the copula parameters.
pub fn fit_ifm(
    data: &ResponseMatrix,
    spec: &ModelSpec,
    rule: &QuadratureRule,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (data, cut, _) = estimate_cutpoints_with(data, opts.empty_categories)?;
    fit_with_cutpoints(&data, &cut, spec, rule, opts)
}

/// Step two of IFM with the cutpoints held fixed.
pub fn fit_with_cutpoints(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    spec: &ModelSpec,
    rule: &QuadratureRule,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    if spec.needs_identification() && spec.identified_item.is_none() {
        return fit_identified(data, cut, spec, rule, opts);
    }
    let ev = LoglikEvaluator::new(data, cut, spec, rule)?;
    let start = match &opts.start {
        Some(s) => {
            let mut s = s.clone();
            if let Some(j) = spec.identified_item {
                s.theta2[j] = 0.0;
            }
            s.validate(spec)?;
            s
        }
        None => default_start(data, cut, spec)?,
    };
    fit_evaluator(&ev, &start, opts)
}

fn fit_identified(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    spec: &ModelSpec,
    rule: &QuadratureRule,
    opts: &FitOptions,
) -> Result<FitResult> {
    let last = spec.d - 1;
    match opts.identification {
        Identification::LastItem => fit_with_cutpoints(
            data,
            cut,
            &spec.clone().with_identification(last)?,
            rule,
            opts,
        ),
        Identification::Item(j) => {
            fit_with_cutpoints(data, cut, &spec.clone().with_identification(j)?, rule, opts)
        }
        Identification::Pilot => {
            let pilot_opts = FitOptions {
                standard_errors: false,
                ..opts.clone()
            };
            let pilot = fit_with_cutpoints(
                data,
                cut,
                &spec.clone().with_identification(last)?,
                rule,
                &pilot_opts,
            )?;
            let j = (0..last)
                .min_by(|&a, &b| {
                    pilot.params.theta2[a]
                        .abs()
                        .total_cmp(&pilot.params.theta2[b].abs())
                })
                .unwrap_or(last);
            let mut start = pilot.params.clone();
            start.theta2[last] = CopulaFamily::Bvn.tau_to_theta(0.1)?;
            let opts = FitOptions {
                start: Some(start),
                ..opts.clone()
            };
            fit_with_cutpoints(
                data,
                cut,
                &spec.clone().with_identification(j)?,
                rule,
                &opts,
            )
        }
    }
}

/// Runs the optimiser from `start` on a prepared evaluator.
pub fn fit_evaluator(
    ev: &LoglikEvaluator,
    start: &ParamVector,
    opts: &FitOptions,
) -> Result<FitResult> {
    let spec = ev.spec();
    start.validate(spec)?;
    let slots = spec.slots();
    let g0 = transform(spec, start);
    let h = opts.fd_step;
    let value = |g: &[f64]| {
        let p = untransform(spec, g);
        let t = ev.tables(&p);
        (-ev.sum_rows(&t), t)
    };
    let grad = |g: &[f64], base: &Tables| gradient_from(ev, &slots, g, base, h);
    let bopts = BfgsOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        ..BfgsOptions::default()
    };
    let out = bfgs(&g0, value, grad, bopts)?;
    let params = untransform(spec, &out.x);
    let loglik = -out.fx;
    let n_params = spec.n_params();
    let max_gradient = out.grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !out.converged {
        warn!(
            "optimiser stopped without converging ({:?}, max gradient {max_gradient:.3e})",
            out.termination
        );
    }
    let se = if opts.standard_errors && out.converged {
        Some(standard_errors_at(ev, &params)?)
    } else {
        None
    };
    Ok(FitResult {
        spec: spec.clone(),
        cutpoints: ev.cutpoints().clone(),
        taus: params.taus(spec),
        params,
        slots,
        se,
        loglik,
        aic: -2.0 * loglik + 2.0 * n_params as f64,
        n_params,
        n_obs: ev.n_obs(),
        converged: out.converged,
        iterations: out.iterations,
        termination: out.termination,
        max_gradient,
        history: out.history.iter().map(|f| -f).collect(),
    })
}

/// Central-difference gradient of −loglik in γ, one slot at a time with
/// partial table refreshes.
fn gradient_from(
    ev: &LoglikEvaluator,
    slots: &[Slot],
    g: &[f64],
    base: &Tables,
    h: f64,
) -> Vec<f64> {
    let spec = ev.spec();
    let idx: Vec<usize> = (0..slots.len()).collect();
    par::map(&idx, |&i| {
        let mut gp = g.to_vec();
        gp[i] = g[i] + h;
        let up = ev.loglik_after(base, &untransform(spec, &gp), slots[i]);
        gp[i] = g[i] - h;
        let down = ev.loglik_after(base, &untransform(spec, &gp), slots[i]);
        -(up - down) / (2.0 * h)
    })
}

/// Gradient of the log-likelihood with respect to the unconstrained
/// parameters, as used by the optimiser.
pub fn loglik_gradient(ev: &LoglikEvaluator, params: &ParamVector, h: f64) -> Vec<f64> {
    let spec = ev.spec();
    let g = transform(spec, params);
    let base = ev.tables(params);
    gradient_from(ev, &spec.slots(), &g, &base, h)
        .into_iter()
        .map(|v| -v)
        .collect()
}

/// Default starting values: first factor at τ = 0.5, second at τ = 0.1,
/// tree edges at the partial polychoric τ of the edge.
pub fn default_start(
    data: &ResponseMatrix,
    cut: &CutpointSet,
    spec: &ModelSpec,
) -> Result<ParamVector> {
    let mut p = ParamVector {
        theta1: vec![0.0; spec.factor1.len()],
        theta2: vec![0.0; spec.factor2.len()],
        delta: vec![0.0; spec.tree_families.len()],
    };
    for s in spec.slots() {
        let f = spec.family(s);
        let v = match s {
            Slot::Theta1(_) => f.theta_for_tau_clamped(0.5),
            Slot::Theta2(_) => f.theta_for_tau_clamped(0.1),
            Slot::Delta(e) => {
                let (j, k) = spec.edges()[e];
                let mut r = polychoric(data, cut, j, k)?;
                let gauss = |tau: f64| (std::f64::consts::FRAC_PI_2 * tau).sin();
                if spec.factors >= 1 {
                    r = partial_corr(r, gauss(0.5), gauss(0.5));
                }
                if spec.factors == 2 {
                    r = partial_corr(r, gauss(0.1), gauss(0.1));
                }
                f.theta_for_tau_clamped(std::f64::consts::FRAC_2_PI * r.asin())
            }
        };
        p.set(s, v);
    }
    Ok(p)
}

/// Second-difference Hessian of `f`. `moves` lists (coordinate, offset) pairs
/// applied to the base point.
fn hessian_with(
    n: usize,
    h: f64,
    f: impl Fn(&[(usize, f64)]) -> f64 + Sync + Send,
) -> DMatrix<f64> {
    let f0 = f(&[]);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let vals = par::map(&pairs, |&(i, j)| {
        if i == j {
            (f(&[(i, h)]) - 2.0 * f0 + f(&[(i, -h)])) / (h * h)
        } else {
            (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)])
                + f(&[(i, -h), (j, -h)]))
                / (4.0 * h * h)
        }
    });
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// Central-difference Hessian of a function of several variables.
pub fn numerical_hessian(
    f: impl Fn(&[f64]) -> f64 + Sync + Send,
    x: &[f64],
    h: f64,
) -> DMatrix<f64> {
    hessian_with(x.len(), h, |moves| {
        let mut y = x.to_vec();
        for &(i, d) in moves {
            y[i] += d;
        }
        f(&y)
    })
}

/// Standard errors from the inverse of the observed information of the
/// step-two log-likelihood (cutpoint uncertainty ignored), mapped to θ and τ
/// by the delta method.
pub fn standard_errors(
    data: &ResponseMatrix,
    fit: &FitResult,
    rule: &QuadratureRule,
) -> Result<StandardErrors> {
    if !fit.converged {
        return Err(Error::Numeric(
            "standard errors need a converged fit".into(),
        ));
    }
    let ev = LoglikEvaluator::new(data, &fit.cutpoints, &fit.spec, rule)?;
    standard_errors_at(&ev, &fit.params)
}

fn standard_errors_at(ev: &LoglikEvaluator, params: &ParamVector) -> Result<StandardErrors> {
    let spec = ev.spec();
    let slots = spec.slots();
    let g = transform(spec, params);
    let base = ev.tables(params);
    let hess = hessian_with(slots.len(), HESSIAN_STEP, |moves| {
        if moves.is_empty() {
            return ev.sum_rows(&base);
        }
        let mut gp = g.clone();
        for &(i, d) in moves {
            gp[i] += d;
        }
        let p = untransform(spec, &gp);
        let mut t = base.clone();
        for &(i, _) in moves {
            ev.update(&mut t, &p, slots[i]);
        }
        ev.sum_rows(&t)
    });
    let info = -hess;
    let (cov, pd) = match info.clone().cholesky() {
        Some(ch) => (ch.inverse(), true),
        None => {
            warn!("observed information not positive definite; using a pseudo-inverse");
            let pinv = info
                .pseudo_inverse(1e-10)
                .map_err(|e| Error::Numeric(e.to_string()))?;
            (pinv, false)
        }
    };
    let mut theta = Vec::with_capacity(slots.len());
    let mut tau = Vec::with_capacity(slots.len());
    for (i, &s) in slots.iter().enumerate() {
        let f = spec.family(s);
        let var = cov[(i, i)];
        let se_g = if var > 0.0 { var.sqrt() } else { f64::NAN };
        let se_t = dtheta_dgamma(f, g[i]).abs() * se_g;
        theta.push(se_t);
        tau.push(f.dtau_dtheta(params.get(s)).abs() * se_t);
    }
    Ok(StandardErrors {
        theta,
        tau,
        positive_definite: pd,
        method: SE_METHOD.to_string(),
    })
}
