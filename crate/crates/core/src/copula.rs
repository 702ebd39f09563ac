//! Bivariate copula kernels.
//!
//! Every family exposes its cdf `C(u1, u2)`, the conditional cdf
//! `C_{2|1}(u2 | u1) = ∂C/∂u1`, the inverse of that conditional in `u2`, and
//! the Kendall's τ map. All families used here are exchangeable, so
//! `C_{1|2}` equals `C_{2|1}` with the arguments swapped.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{self, brent_root, debye1, norm_cdf, norm_quantile, t_cdf, t_quantile};

pub use crate::special::{bvn_cdf, bvt_cdf};

/// Arguments of cdf and quantile transforms are clamped into `[U_EPS, 1 − U_EPS]`.
pub const U_EPS: f64 = 1e-12;

/// Inside this band Frank is evaluated as the independence copula.
const FRANK_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CopulaFamily {
    Independence,
    Bvn,
    Frank,
    Gumbel,
    SurvivalGumbel,
    StudentT { dof: f64 },
}

impl CopulaFamily {
    pub fn t(dof: f64) -> Self {
        CopulaFamily::StudentT { dof }
    }

    pub fn has_parameter(&self) -> bool {
        !matches!(self, CopulaFamily::Independence)
    }

    /// Whether the copula is invariant under `(u1, u2) → (1 − u1, 1 − u2)`.
    pub fn is_reflection_symmetric(&self) -> bool {
        !matches!(self, CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel)
    }

    /// Candidate families for the links between items and a latent factor.
    pub fn factor_candidates() -> Vec<CopulaFamily> {
        vec![
            CopulaFamily::Bvn,
            CopulaFamily::Gumbel,
            CopulaFamily::SurvivalGumbel,
            CopulaFamily::t(2.0),
            CopulaFamily::t(5.0),
        ]
    }

    /// Candidate families for the residual tree; Frank is only offered here.
    pub fn tree_candidates() -> Vec<CopulaFamily> {
        let mut c = Self::factor_candidates();
        c.push(CopulaFamily::Frank);
        c
    }

    pub fn validate(&self, theta: f64) -> Result<()> {
        if let CopulaFamily::StudentT { dof } = self {
            if !(dof.is_finite() && *dof > 0.0) {
                return Err(Error::Domain(format!(
                    "Student-t degrees of freedom must be positive, got {dof}"
                )));
            }
        }
        if !self.has_parameter() {
            return Ok(());
        }
        if theta.is_nan() {
            return Err(Error::InvalidInput(format!("{self} parameter is NaN")));
        }
        let ok = match self {
            CopulaFamily::Independence => true,
            CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => theta > -1.0 && theta < 1.0,
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => {
                theta >= 1.0 && theta.is_finite()
            }
            CopulaFamily::Frank => theta != 0.0 && theta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{self} parameter {theta} outside family domain"
            )))
        }
    }

    /// Kendall's τ for parameter `theta`.
    pub fn theta_to_tau(&self, theta: f64) -> Result<f64> {
        self.validate(theta)?;
        Ok(self.tau_unchecked(theta))
    }

    pub(crate) fn tau_unchecked(&self, theta: f64) -> f64 {
        match self {
            CopulaFamily::Independence => 0.0,
            CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => 2.0 / PI * theta.asin(),
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0 - 1.0 / theta,
            CopulaFamily::Frank => frank_tau(theta),
        }
    }

    /// Inverse of [`theta_to_tau`](Self::theta_to_tau).
    pub fn tau_to_theta(&self, tau: f64) -> Result<f64> {
        if tau.is_nan() {
            return Err(Error::InvalidInput("tau is NaN".into()));
        }
        let unattainable = || Error::Domain(format!("tau {tau} not attainable by {self}"));
        match self {
            CopulaFamily::Independence => {
                if tau == 0.0 {
                    Ok(0.0)
                } else {
                    Err(unattainable())
                }
            }
            CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => {
                if tau.abs() < 1.0 {
                    Ok((PI * tau / 2.0).sin())
                } else {
                    Err(unattainable())
                }
            }
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => {
                if (0.0..1.0).contains(&tau) {
                    Ok(1.0 / (1.0 - tau))
                } else {
                    Err(unattainable())
                }
            }
            CopulaFamily::Frank => {
                if tau == 0.0 || tau.abs() >= 1.0 {
                    return Err(unattainable());
                }
                frank_theta_from_tau(tau)
                    .ok_or_else(|| Error::Numeric(format!("Frank tau inversion failed at {tau}")))
            }
        }
    }

    /// dτ/dθ, used for delta-method standard errors.
    pub fn dtau_dtheta(&self, theta: f64) -> f64 {
        match self {
            CopulaFamily::Independence => 0.0,
            CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => {
                2.0 / (PI * (1.0 - theta * theta).sqrt())
            }
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0 / (theta * theta),
            CopulaFamily::Frank => {
                if theta.abs() < 1e-4 {
                    // τ ≈ θ/9 near the origin
                    return 1.0 / 9.0;
                }
                let d1 = debye1(theta);
                4.0 / (theta * theta) + 4.0 / (theta * theta.exp_m1()) - 8.0 * d1 / (theta * theta)
            }
        }
    }

    /// A parameter value inside the family domain for the requested τ, with τ
    /// clamped into what the family can attain.
    pub fn theta_for_tau_clamped(&self, tau: f64) -> f64 {
        let tau = match self {
            CopulaFamily::Independence => return 0.0,
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => tau.clamp(0.01, 0.95),
            CopulaFamily::Frank => {
                let t = tau.clamp(-0.95, 0.95);
                if t.abs() < 1e-3 {
                    1e-3f64.copysign(if t == 0.0 { 1.0 } else { t })
                } else {
                    t
                }
            }
            _ => tau.clamp(-0.95, 0.95),
        };
        self.tau_to_theta(tau).unwrap_or(match self {
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0,
            _ => 0.0,
        })
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CopulaFamily::Independence => write!(f, "indep"),
            CopulaFamily::Bvn => write!(f, "bvn"),
            CopulaFamily::Frank => write!(f, "frank"),
            CopulaFamily::Gumbel => write!(f, "gumbel"),
            CopulaFamily::SurvivalGumbel => write!(f, "sgumbel"),
            CopulaFamily::StudentT { dof } => write!(f, "t{dof}"),
        }
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let fam = match lower.as_str() {
            "indep" | "independence" | "i" => CopulaFamily::Independence,
            "bvn" | "normal" | "gaussian" | "n" => CopulaFamily::Bvn,
            "frank" | "f" => CopulaFamily::Frank,
            "gumbel" | "g" => CopulaFamily::Gumbel,
            "sgumbel" | "s.gumbel" | "survival-gumbel" | "survivalgumbel" | "sg" => {
                CopulaFamily::SurvivalGumbel
            }
            other => {
                let dof = other
                    .strip_prefix('t')
                    .map(|r| r.trim_start_matches(['_', '(']).trim_end_matches(')'))
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown copula family '{s}'")))?;
                let fam = CopulaFamily::t(dof);
                fam.validate(0.0)?;
                fam
            }
        };
        Ok(fam)
    }
}

impl TryFrom<String> for CopulaFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CopulaFamily> for String {
    fn from(f: CopulaFamily) -> String {
        f.to_string()
    }
}

/// A family together with a parameter already checked against its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Copula {
    family: CopulaFamily,
    theta: f64,
}

impl Copula {
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self> {
        family.validate(theta)?;
        Ok(Copula { family, theta })
    }

    pub fn independence() -> Self {
        Copula {
            family: CopulaFamily::Independence,
            theta: 0.0,
        }
    }

    /// Construct without the domain check. Frank at θ = 0 is evaluated as
    /// its independence limit.
    pub(crate) fn new_unchecked(family: CopulaFamily, theta: f64) -> Self {
        Copula { family, theta }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tau(&self) -> f64 {
        self.family.tau_unchecked(self.theta)
    }

    /// `C(u1, u2)`. Exact on the boundary of the unit square.
    pub fn cdf(&self, u1: f64, u2: f64) -> f64 {
        if u1 <= 0.0 || u2 <= 0.0 {
            return 0.0;
        }
        if u1 >= 1.0 {
            return u2.min(1.0);
        }
        if u2 >= 1.0 {
            return u1;
        }
        let a = u1.clamp(U_EPS, 1.0 - U_EPS);
        let b = u2.clamp(U_EPS, 1.0 - U_EPS);
        let th = self.theta;
        let c = match self.family {
            CopulaFamily::Independence => return u1 * u2,
            CopulaFamily::Bvn => bvn_cdf(norm_quantile(a), norm_quantile(b), th),
            CopulaFamily::StudentT { dof } => {
                bvt_cdf(t_quantile(a, dof), t_quantile(b, dof), th, dof)
            }
            CopulaFamily::Frank => {
                if th.abs() < FRANK_ZERO {
                    return u1 * u2;
                }
                frank_cdf(a, b, th)
            }
            CopulaFamily::Gumbel => gumbel_cdf(a, b, th),
            CopulaFamily::SurvivalGumbel => a + b - 1.0 + gumbel_cdf(1.0 - a, 1.0 - b, th),
        };
        // Fréchet bounds
        c.clamp((a + b - 1.0).max(0.0), a.min(b))
    }

    /// `C_{2|1}(u2 | u1) = ∂C(u1, u2)/∂u1`. The conditioning value is clamped
    /// away from 0 and 1.
    pub fn cond_cdf(&self, u2: f64, u1: f64) -> f64 {
        if u2 <= 0.0 {
            return 0.0;
        }
        if u2 >= 1.0 {
            return 1.0;
        }
        let u = u1.clamp(U_EPS, 1.0 - U_EPS);
        let v = u2.clamp(U_EPS, 1.0 - U_EPS);
        let th = self.theta;
        let h = match self.family {
            CopulaFamily::Independence => return u2,
            CopulaFamily::Bvn => {
                let z1 = norm_quantile(u);
                let z2 = norm_quantile(v);
                norm_cdf((z2 - th * z1) / (1.0 - th * th).sqrt())
            }
            CopulaFamily::StudentT { dof } => {
                special::bvt_conditional(t_quantile(u, dof), t_quantile(v, dof), th, dof)
            }
            CopulaFamily::Frank => {
                if th.abs() < FRANK_ZERO {
                    return u2;
                }
                frank_cond(v, u, th)
            }
            CopulaFamily::Gumbel => gumbel_cond(v, u, th),
            CopulaFamily::SurvivalGumbel => 1.0 - gumbel_cond(1.0 - v, 1.0 - u, th),
        };
        h.clamp(0.0, 1.0)
    }

    /// Solves `cond_cdf(u2 | u1) = w` for `u2`.
    pub fn inv_cond_cdf(&self, w: f64, u1: f64) -> Result<f64> {
        if w <= 0.0 {
            return Ok(0.0);
        }
        if w >= 1.0 {
            return Ok(1.0);
        }
        let u = u1.clamp(U_EPS, 1.0 - U_EPS);
        let th = self.theta;
        let v = match self.family {
            CopulaFamily::Independence => w,
            CopulaFamily::Bvn => {
                norm_cdf(th * norm_quantile(u) + (1.0 - th * th).sqrt() * norm_quantile(w))
            }
            CopulaFamily::StudentT { dof } => {
                let x1 = t_quantile(u, dof);
                let scale = ((dof + x1 * x1) * (1.0 - th * th) / (dof + 1.0)).sqrt();
                t_cdf(th * x1 + scale * t_quantile(w, dof + 1.0), dof)
            }
            CopulaFamily::Frank => {
                if th.abs() < FRANK_ZERO {
                    w
                } else {
                    frank_inv_cond(w, u, th)
                }
            }
            CopulaFamily::Gumbel => gumbel_inv_cond(w, u, th)?,
            CopulaFamily::SurvivalGumbel => 1.0 - gumbel_inv_cond(1.0 - w, 1.0 - u, th)?,
        };
        Ok(v.clamp(0.0, 1.0))
    }
}

impl Copula {
    /// Fills `out[a * v.len() + b] = C(u[a], v[b])`, transforming each argument
    /// only once for the elliptical families.
    pub fn cdf_grid(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), u.len() * v.len());
        let nv = v.len();
        let quantile: Option<Box<dyn Fn(f64) -> f64>> = match self.family {
            CopulaFamily::Bvn => Some(Box::new(norm_quantile)),
            CopulaFamily::StudentT { dof } => Some(Box::new(move |p| t_quantile(p, dof))),
            _ => None,
        };
        let Some(q) = quantile else {
            for (a, &ua) in u.iter().enumerate() {
                for (b, &vb) in v.iter().enumerate() {
                    out[a * nv + b] = self.cdf(ua, vb);
                }
            }
            return;
        };
        let interior = |x: f64| x > 0.0 && x < 1.0;
        let zu: Vec<f64> = u
            .iter()
            .map(|&x| {
                if interior(x) {
                    q(x.clamp(U_EPS, 1.0 - U_EPS))
                } else {
                    0.0
                }
            })
            .collect();
        let zv: Vec<f64> = v
            .iter()
            .map(|&x| {
                if interior(x) {
                    q(x.clamp(U_EPS, 1.0 - U_EPS))
                } else {
                    0.0
                }
            })
            .collect();
        let th = self.theta;
        for (a, &ua) in u.iter().enumerate() {
            for (b, &vb) in v.iter().enumerate() {
                out[a * nv + b] = if interior(ua) && interior(vb) {
                    let c = match self.family {
                        CopulaFamily::StudentT { dof } => bvt_cdf(zu[a], zv[b], th, dof),
                        _ => bvn_cdf(zu[a], zv[b], th),
                    };
                    let a1 = ua.clamp(U_EPS, 1.0 - U_EPS);
                    let b1 = vb.clamp(U_EPS, 1.0 - U_EPS);
                    c.clamp((a1 + b1 - 1.0).max(0.0), a1.min(b1))
                } else {
                    self.cdf(ua, vb)
                };
            }
        }
    }

    /// `out[i] = C_{2|1}(u2[i] | u1)`, transforming `u1` once.
    pub fn cond_cdf_many(&self, u2: &[f64], u1: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), u2.len());
        let u = u1.clamp(U_EPS, 1.0 - U_EPS);
        let th = self.theta;
        match self.family {
            CopulaFamily::Bvn => {
                let m = th * norm_quantile(u);
                let s = (1.0 - th * th).sqrt();
                for (o, &v) in out.iter_mut().zip(u2) {
                    *o = if v <= 0.0 {
                        0.0
                    } else if v >= 1.0 {
                        1.0
                    } else {
                        norm_cdf((norm_quantile(v.clamp(U_EPS, 1.0 - U_EPS)) - m) / s)
                            .clamp(0.0, 1.0)
                    };
                }
            }
            CopulaFamily::StudentT { dof } => {
                let x1 = t_quantile(u, dof);
                for (o, &v) in out.iter_mut().zip(u2) {
                    *o = if v <= 0.0 {
                        0.0
                    } else if v >= 1.0 {
                        1.0
                    } else {
                        let z2 = t_quantile(v.clamp(U_EPS, 1.0 - U_EPS), dof);
                        special::bvt_conditional(x1, z2, th, dof).clamp(0.0, 1.0)
                    };
                }
            }
            _ => {
                for (o, &v) in out.iter_mut().zip(u2) {
                    *o = self.cond_cdf(v, u1);
                }
            }
        }
    }
}

/// `C(u1, u2; θ)` with the family-domain and input checks.
pub fn cdf(family: CopulaFamily, theta: f64, u1: f64, u2: f64) -> Result<f64> {
    check_unit("u1", u1)?;
    check_unit("u2", u2)?;
    Ok(Copula::new(family, theta)?.cdf(u1, u2))
}

/// `C_{2|1}(u2 | u1; θ)`; a conditioning value of exactly 0 or 1 is rejected.
pub fn cond_cdf(family: CopulaFamily, theta: f64, u2: f64, u1: f64) -> Result<f64> {
    check_unit("u1", u1)?;
    check_unit("u2", u2)?;
    if u1 <= 0.0 || u1 >= 1.0 {
        return Err(Error::Boundary(u1));
    }
    Ok(Copula::new(family, theta)?.cond_cdf(u2, u1))
}

pub fn inv_cond_cdf(family: CopulaFamily, theta: f64, w: f64, u1: f64) -> Result<f64> {
    check_unit("w", w)?;
    check_unit("u1", u1)?;
    if u1 <= 0.0 || u1 >= 1.0 {
        return Err(Error::Boundary(u1));
    }
    Copula::new(family, theta)?.inv_cond_cdf(w, u1)
}

pub fn theta_to_tau(family: CopulaFamily, theta: f64) -> Result<f64> {
    family.theta_to_tau(theta)
}

pub fn tau_to_theta(family: CopulaFamily, tau: f64) -> Result<f64> {
    family.tau_to_theta(tau)
}

fn check_unit(name: &str, u: f64) -> Result<()> {
    if u.is_nan() {
        return Err(Error::InvalidInput(format!("{name} is NaN")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!("{name} = {u} outside [0, 1]")));
    }
    Ok(())
}

#[inline]
fn gumbel_a(x: f64, y: f64, th: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi == 0.0 {
        return 0.0;
    }
    hi * (1.0 + (lo / hi).powf(th)).powf(1.0 / th)
}

#[inline]
fn gumbel_cdf(u: f64, v: f64, th: f64) -> f64 {
    (-gumbel_a(-u.ln(), -v.ln(), th)).exp()
}

/// `exp(x − A) (x/A)^{θ−1}` with x = −log u, y = −log v.
#[inline]
fn gumbel_cond(v: f64, u: f64, th: f64) -> f64 {
    let x = -u.ln();
    let y = -v.ln();
    let a = gumbel_a(x, y, th);
    ((x - a) + (th - 1.0) * (x / a).ln()).exp()
}

/// Copula density of the Gumbel family, used as the Newton derivative of
/// the conditional cdf in `u2`.
fn gumbel_density(u: f64, v: f64, th: f64) -> f64 {
    let x = -u.ln();
    let y = -v.ln();
    let a = gumbel_a(x, y, th);
    let ln_c = x + y - a + (th - 1.0) * (x * y).ln() + (2.0 - 2.0 * th) * a.ln();
    ln_c.exp() * (a + th - 1.0)
}

/// Inverts the Gumbel conditional cdf. Newton on
/// g(A) = x − A + (θ−1) log(x/A) − log w, which is convex and decreasing in
/// A ≥ x, approaches the root monotonically from the left; a bisection bracket
/// guards the iteration and a final Newton polish in u2 uses the density.
fn gumbel_inv_cond(w: f64, u: f64, th: f64) -> Result<f64> {
    let x = -u.ln();
    let lw = w.ln();
    let g = |a: f64| x - a + (th - 1.0) * (x / a).ln() - lw;
    let mut lo = x;
    let mut hi = x - lw + 1.0;
    while g(hi) > 0.0 {
        hi = 2.0 * hi + 1.0;
        if !hi.is_finite() {
            return Err(Error::Numeric(format!(
                "Gumbel inverse bracket failed (w={w}, u={u}, θ={th})"
            )));
        }
    }
    let mut a = x;
    let mut converged = false;
    for _ in 0..200 {
        let ga = g(a);
        if ga > 0.0 {
            lo = lo.max(a);
        } else {
            hi = hi.min(a);
        }
        let dg = -1.0 - (th - 1.0) / a;
        let mut next = a - ga / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() <= 1e-15 * a.max(1.0) {
            a = next;
            converged = true;
            break;
        }
        a = next;
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Gumbel inverse did not converge (w={w}, u={u}, θ={th}, bracket=[{lo}, {hi}])"
        )));
    }
    let ratio = (x / a).powf(th);
    let y = a * (1.0 - ratio).max(0.0).powf(1.0 / th);
    let mut v = (-y).exp();
    // polish in u2 on the original scale
    let (mut vlo, mut vhi) = (0.0f64, 1.0f64);
    for _ in 0..8 {
        let vc = v.clamp(U_EPS, 1.0 - U_EPS);
        let f = gumbel_cond(vc, u, th) - w;
        if f.abs() < 1e-14 {
            break;
        }
        if f > 0.0 {
            vhi = vhi.min(vc);
        } else {
            vlo = vlo.max(vc);
        }
        let d = gumbel_density(u, vc, th);
        let mut next = vc - f / d;
        if !(next > vlo && next < vhi) || !next.is_finite() {
            next = 0.5 * (vlo + vhi);
        }
        v = next;
    }
    Ok(v)
}

fn frank_cdf(u: f64, v: f64, th: f64) -> f64 {
    if th.abs() < 1.0 {
        let num = (-th * u).exp_m1() * (-th * v).exp_m1();
        return -(num / (-th).exp_m1()).ln_1p() / th;
    }
    if th < 0.0 {
        return u - frank_cdf(u, 1.0 - v, -th);
    }
    // exp(-θC) = [e^{-θu}(1 - e^{-θ(1-u)}) + e^{-θv}(1 - e^{-θu})] / (1 - e^{-θ}) for u ≤ v,
    // a sum of nonnegative terms
    let (u, v) = if u <= v { (u, v) } else { (v, u) };
    let l1 = -th * u + (-(-th * (1.0 - u)).exp_m1()).ln();
    let l2 = -th * v + (-(-th * u).exp_m1()).ln();
    let (hi, lo) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
    let ln_num = hi + (lo - hi).exp().ln_1p();
    -(ln_num - (-(-th).exp_m1()).ln()) / th
}

fn frank_cond(v: f64, u: f64, th: f64) -> f64 {
    // both denominator terms share the sign of the numerator
    let a = (-th * v).exp_m1();
    let b = (th * (u - v)).exp() * (-th * (1.0 - v)).exp_m1();
    a / (a + b)
}

fn frank_inv_cond(w: f64, u: f64, th: f64) -> f64 {
    if th.abs() < 1.0 {
        let d = (-th).exp_m1();
        let b = w * d / (w + (1.0 - w) * (-th * u).exp());
        return -b.ln_1p() / th;
    }
    // exp(-θv) = (w e^{-θ} + (1-w) e^{-θu}) / (w + (1-w) e^{-θu}), in log space
    let lse = |x: f64, y: f64| {
        let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
        hi + (lo - hi).exp().ln_1p()
    };
    let lw = w.ln();
    let l1w = (-w).ln_1p();
    let num = lse(lw - th, l1w - th * u);
    let den = lse(lw, l1w - th * u);
    -(num - den) / th
}

fn frank_tau(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        return theta / 9.0;
    }
    1.0 - 4.0 / theta * (1.0 - debye1(theta))
}

fn frank_theta_from_tau(tau: f64) -> Option<f64> {
    let sign = tau.signum();
    let target = tau.abs();
    let mut hi = 1.0;
    while frank_tau(hi) < target {
        hi *= 2.0;
        if hi > 1e8 {
            return None;
        }
    }
    let root = brent_root(|t| frank_tau(t) - target, 0.0, hi, 1e-15)?;
    Some(sign * root)
}
