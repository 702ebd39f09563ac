//! Univariate and bivariate distribution functions used by the copula kernels.
//!
//! The bivariate normal cdf follows Genz's refinement of the
//! Drezner–Wesolowsky method (double-precision accuracy). The bivariate
//! Student-t cdf uses the Dunnett–Sobel closed form for integer degrees of
//! freedom and otherwise integrates the exact conditional cdf over the first
//! coordinate.

#![allow(clippy::excessive_precision)]

use std::f64::consts::{PI, SQRT_2};

use statrs::function::beta::{beta_reg, inv_beta_reg};
use statrs::function::gamma::ln_gamma;

/// Standard normal cdf.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
/// Returns ±∞ at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Student-t cdf with real degrees of freedom `nu > 0`.
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    if x == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn t_pdf(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
}

/// Student-t quantile. The incomplete-beta inversion gives the starting point,
/// Newton steps on the lower tail polish it to near machine precision.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let q = p.min(1.0 - p);
    let x = if nu == 2.0 {
        // closed form for two degrees of freedom
        (2.0 * q - 1.0) / (2.0 * q * (1.0 - q)).sqrt()
    } else {
        let y = inv_beta_reg(0.5 * nu, 0.5, 2.0 * q);
        let mut x = -(nu * (1.0 - y) / y).sqrt();
        for _ in 0..60 {
            let f = t_cdf(x, nu) - q;
            let d = t_pdf(x, nu);
            if d <= 0.0 || !d.is_finite() {
                break;
            }
            let step = f / d;
            let next = x - step;
            if !next.is_finite() || next >= 0.0 {
                break;
            }
            x = next;
            if step.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        x
    };
    if p > 0.5 {
        -x
    } else {
        x
    }
}

// Gauss–Legendre abscissae (negative half) and weights for 6, 12 and 20 points.
const GL_W: [[f64; 10]; 3] = [
    [
        0.1713244923791705,
        0.3607615730481384,
        0.4679139345726904,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.04717533638651177,
        0.1069393259953183,
        0.1600783285433464,
        0.2031674267230659,
        0.2334925365383547,
        0.2491470458134029,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410906,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183821,
        0.1491729864726037,
        0.1527533871307259,
    ],
];
const GL_X: [[f64; 10]; 3] = [
    [
        -0.9324695142031522,
        -0.6612093864662647,
        -0.2386191860831970,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.9815606342467191,
        -0.9041172563704750,
        -0.7699026741943050,
        -0.5873179542866171,
        -0.3678314989981802,
        -0.1252334085114692,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.9931285991850949,
        -0.9639719272779138,
        -0.9122344282513259,
        -0.8391169718222188,
        -0.7463319064601508,
        -0.6360536807265150,
        -0.5108670019508271,
        -0.3737060887154196,
        -0.2277858511416451,
        -0.07652652113349733,
    ],
];

/// Upper orthant probability P(X > h, Y > k) for a standard bivariate normal.
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    const TWOPI: f64 = 2.0 * PI;
    let (ng, lg) = if r.abs() < 0.3 {
        (0, 3)
    } else if r.abs() < 0.75 {
        (1, 6)
    } else {
        (2, 10)
    };
    let w = &GL_W[ng];
    let x = &GL_X[ng];
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for i in 0..lg {
            let sn = (asr * (x[i] + 1.0) / 2.0).sin();
            bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            let sn = (asr * (-x[i] + 1.0) / 2.0).sin();
            bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn * asr / (2.0 * TWOPI) + norm_cdf(-h) * norm_cdf(-k)
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            bvn = a
                * (-(bs / as_ + hk) / 2.0).exp()
                * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            if hk > -160.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * TWOPI.sqrt()
                    * norm_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for i in 0..lg {
                let xs = (a * (x[i] + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                bvn += a
                    * w[i]
                    * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                        - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
                let xs = as_ * (-x[i] + 1.0).powi(2) / 4.0;
                let rs = (1.0 - xs).sqrt();
                bvn += a
                    * w[i]
                    * (-(bs / xs + hk) / 2.0).exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
            bvn = -bvn / TWOPI;
        }
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k));
        } else if r < 0.0 {
            bvn = -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(0.0);
        }
        bvn
    }
}

/// Standard bivariate normal cdf Φ₂(z1, z2; ρ).
pub fn bvn_cdf(z1: f64, z2: f64, rho: f64) -> f64 {
    if z1 == f64::NEG_INFINITY || z2 == f64::NEG_INFINITY {
        return 0.0;
    }
    if z1 == f64::INFINITY {
        return norm_cdf(z2);
    }
    if z2 == f64::INFINITY {
        return norm_cdf(z1);
    }
    bvn_upper(-z1, -z2, rho).clamp(0.0, 1.0)
}

/// Standard bivariate Student-t cdf with correlation `rho` and `nu` degrees of freedom.
pub fn bvt_cdf(z1: f64, z2: f64, rho: f64, nu: f64) -> f64 {
    if z1 == f64::NEG_INFINITY || z2 == f64::NEG_INFINITY {
        return 0.0;
    }
    if z1 == f64::INFINITY {
        return t_cdf(z2, nu);
    }
    if z2 == f64::INFINITY {
        return t_cdf(z1, nu);
    }
    let p = if nu >= 1.0 && nu.fract() == 0.0 && nu <= 1000.0 {
        bvt_integer(nu as u32, z1, z2, rho)
    } else {
        bvt_by_integration(z1, z2, rho, nu)
    };
    p.clamp(0.0, 1.0)
}

/// Dunnett–Sobel series for integer `nu` (Genz's BVTL).
fn bvt_integer(nu: u32, dh: f64, dk: f64, r: f64) -> f64 {
    const EPS: f64 = 1e-15;
    let snu_f = nu as f64;
    if 1.0 - r <= EPS {
        return t_cdf(dh.min(dk), snu_f);
    }
    if r + 1.0 <= EPS {
        return if dh > -dk {
            t_cdf(dh, snu_f) - t_cdf(-dk, snu_f)
        } else {
            0.0
        };
    }
    let tpi = 2.0 * PI;
    let snu = snu_f.sqrt();
    let ors = 1.0 - r * r;
    let hrk = dh - r * dk;
    let krh = dk - r * dh;
    let (xnhk, xnkh) = if hrk.abs() + ors > 0.0 {
        (
            hrk * hrk / (hrk * hrk + ors * (snu_f + dk * dk)),
            krh * krh / (krh * krh + ors * (snu_f + dh * dh)),
        )
    } else {
        (0.0, 0.0)
    };
    let hs = if dh - r * dk >= 0.0 { 1.0 } else { -1.0 };
    let ks = if dk - r * dh >= 0.0 { 1.0 } else { -1.0 };
    let mut bvt;
    if nu.is_multiple_of(2) {
        bvt = ors.sqrt().atan2(-r) / tpi;
        let mut gmph = dh / (16.0 * (snu_f + dh * dh)).sqrt();
        let mut gmpk = dk / (16.0 * (snu_f + dk * dk)).sqrt();
        let mut btnckh = 2.0 * xnkh.sqrt().atan2((1.0 - xnkh).sqrt()) / PI;
        let mut btpdkh = 2.0 * (xnkh * (1.0 - xnkh)).sqrt() / PI;
        let mut btnchk = 2.0 * xnhk.sqrt().atan2((1.0 - xnhk).sqrt()) / PI;
        let mut btpdhk = 2.0 * (xnhk * (1.0 - xnhk)).sqrt() / PI;
        for j in 1..=(nu / 2) {
            let jf = j as f64;
            bvt += gmph * (1.0 + ks * btnckh);
            bvt += gmpk * (1.0 + hs * btnchk);
            btnckh += btpdkh;
            btpdkh = 2.0 * jf * btpdkh * (1.0 - xnkh) / (2.0 * jf + 1.0);
            btnchk += btpdhk;
            btpdhk = 2.0 * jf * btpdhk * (1.0 - xnhk) / (2.0 * jf + 1.0);
            gmph = gmph * (2.0 * jf - 1.0) / (2.0 * jf * (1.0 + dh * dh / snu_f));
            gmpk = gmpk * (2.0 * jf - 1.0) / (2.0 * jf * (1.0 + dk * dk / snu_f));
        }
    } else {
        let qhrk = (dh * dh + dk * dk - 2.0 * r * dh * dk + snu_f * ors).sqrt();
        let hkrn = dh * dk + r * snu_f;
        let hkn = dh * dk - snu_f;
        let hpk = dh + dk;
        bvt = (-snu * (hkn * qhrk + hpk * hkrn)).atan2(hkn * hkrn - snu_f * hpk * qhrk) / tpi;
        if bvt < -EPS {
            bvt += 1.0;
        }
        let mut gmph = dh / (tpi * snu * (1.0 + dh * dh / snu_f));
        let mut gmpk = dk / (tpi * snu * (1.0 + dk * dk / snu_f));
        let mut btnckh = xnkh.sqrt();
        let mut btpdkh = btnckh;
        let mut btnchk = xnhk.sqrt();
        let mut btpdhk = btnchk;
        for j in 1..=((nu - 1) / 2) {
            let jf = j as f64;
            bvt += gmph * (1.0 + ks * btnckh);
            bvt += gmpk * (1.0 + hs * btnchk);
            btpdkh = (2.0 * jf - 1.0) * btpdkh * (1.0 - xnkh) / (2.0 * jf);
            btnckh += btpdkh;
            btpdhk = (2.0 * jf - 1.0) * btpdhk * (1.0 - xnhk) / (2.0 * jf);
            btnchk += btpdhk;
            gmph = 2.0 * jf * gmph / ((2.0 * jf + 1.0) * (1.0 + dh * dh / snu_f));
            gmpk = 2.0 * jf * gmpk / ((2.0 * jf + 1.0) * (1.0 + dk * dk / snu_f));
        }
    }
    bvt
}

/// Conditional cdf of the second coordinate of a bivariate t given the first.
#[inline]
pub(crate) fn bvt_conditional(x1: f64, z2: f64, rho: f64, nu: f64) -> f64 {
    let scale = ((nu + x1 * x1) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
    t_cdf((z2 - rho * x1) / scale, nu + 1.0)
}

/// P(X1 ≤ z1, X2 ≤ z2) = ∫_{-∞}^{z1} t_ν(x) T_{ν+1}(...) dx, integrated after the
/// substitution x = z1 − s/(1−s).
pub(crate) fn bvt_by_integration(z1: f64, z2: f64, rho: f64, nu: f64) -> f64 {
    let f = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - s;
        let x = z1 - s / om;
        t_pdf(x, nu) * bvt_conditional(x, z2, rho, nu) / (om * om)
    };
    integrate::adaptive(&f, 0.0, 1.0, 1e-12, 1e-10)
}

/// Debye function of order one, D₁(x) = x⁻¹ ∫₀ˣ t/(eᵗ−1) dt, for any real x.
pub fn debye1(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x < 0.0 {
        return debye1(-x) - x / 2.0;
    }
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    integrate::adaptive(&f, 0.0, x, 1e-15, 1e-14) / x
}

/// Brent's root finder on a bracketing interval `[a, b]`.
pub(crate) fn brent_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1 * xm.signum()
        };
        fb = f(b);
    }
    Some(b)
}

/// Brent's derivative-free minimizer on `[a, b]`. Returns `(argmin, min)`.
pub(crate) fn brent_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

pub(crate) mod integrate {
    //! Adaptive Gauss–Kronrod (7/15) integration for smooth one-dimensional integrands.

    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kron = fc * WGK[7];
        let mut gauss = fc * WG[3];
        for j in 0..7 {
            let dx = h * XGK[j];
            let s = f(c - dx) + f(c + dx);
            kron += WGK[j] * s;
            if j % 2 == 1 {
                gauss += WG[j / 2] * s;
            }
        }
        (kron * h, ((kron - gauss) * h).abs())
    }

    /// Integrates `f` over `[a, b]` by recursive bisection until the Kronrod error
    /// estimate meets `max(abs_tol, rel_tol·|I|)`.
    pub fn adaptive<F: Fn(f64) -> f64 + ?Sized>(
        f: &F,
        a: f64,
        b: f64,
        abs_tol: f64,
        rel_tol: f64,
    ) -> f64 {
        let (whole, err) = gk15(f, a, b);
        let mut stack = vec![(a, b, whole, err)];
        let mut total = 0.0;
        let mut evaluations = 0usize;
        let global_tol = abs_tol.max(rel_tol * whole.abs());
        while let Some((lo, hi, est, err)) = stack.pop() {
            let width = hi - lo;
            let local_tol = global_tol * width / (b - a).abs().max(f64::MIN_POSITIVE);
            if err <= local_tol.max(1e-300)
                || evaluations > 200_000
                || width.abs() < 1e-14 * (b - a).abs()
            {
                total += est;
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let left = gk15(f, lo, mid);
            let right = gk15(f, mid, hi);
            evaluations += 30;
            stack.push((lo, mid, left.0, left.1));
            stack.push((mid, hi, right.0, right.1));
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-10] {
            let x = norm_quantile(p);
            let q = p.min(1.0 - p);
            let back = if p < 0.5 {
                norm_cdf(x)
            } else {
                1.0 - norm_cdf(x)
            };
            assert!((back - q).abs() < 1e-12 * q, "p={p}");
        }
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for &nu in &[1.0, 2.0, 2.5, 5.0, 30.0] {
            for &p in &[1e-10, 1e-4, 0.05, 0.3, 0.5, 0.8, 0.999999] {
                let x = t_quantile(p, nu);
                let back = t_cdf(x, nu);
                assert!(
                    (back - p).abs() < 1e-11 * p.min(1.0 - p),
                    "nu={nu} p={p} back={back}"
                );
            }
        }
    }

    #[test]
    fn t_cdf_known_values() {
        // ν = 1 is Cauchy, ν = 2 has a closed form
        assert!((t_cdf(1.0, 1.0) - 0.75).abs() < 1e-14);
        let x: f64 = 1.3;
        let closed = 0.5 + x / (2.0 * (2.0 + x * x).sqrt());
        assert!((t_cdf(x, 2.0) - closed).abs() < 1e-14);
    }

    #[test]
    fn bvn_orthant_identity() {
        for &r in &[-0.99, -0.8, -0.5, 0.0, 0.2, 0.5, 0.8, 0.95, 0.999] {
            let want = 0.25 + f64::asin(r) / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, r) - want).abs() < 1e-14, "r={r}");
        }
    }

    #[test]
    fn bvn_independent_product() {
        for &(a, b) in &[(-1.0, 2.0), (0.3, 0.4), (-3.0, -2.5)] {
            assert!((bvn_cdf(a, b, 0.0) - norm_cdf(a) * norm_cdf(b)).abs() < 1e-15);
        }
    }

    #[test]
    fn bvt_integer_matches_integration() {
        for &nu in &[1.0, 2.0, 3.0, 5.0, 8.0] {
            for &(a, b, r) in &[
                (0.5, -0.2, 0.4),
                (-1.0, 1.5, -0.7),
                (2.0, 2.0, 0.95),
                (-0.3, -2.0, 0.1),
            ] {
                let closed = bvt_cdf(a, b, r, nu);
                let integ = bvt_by_integration(a, b, r, nu);
                assert!(
                    (closed - integ).abs() < 1e-9,
                    "nu={nu} ({a},{b},{r}) {closed} vs {integ}"
                );
            }
        }
    }

    #[test]
    fn debye_limits() {
        assert!((debye1(1e-8) - 1.0).abs() < 1e-8);
        // D1(x) + x/2 is even
        assert!((debye1(-3.0) - (debye1(3.0) + 1.5)).abs() < 1e-14);
    }

    #[test]
    fn brent_helpers() {
        let r = brent_root(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        let (m, _) = brent_min(|x| (x - 0.3).powi(2) + 1.0, -1.0, 1.0, 1e-10);
        assert!((m - 0.3).abs() < 1e-8);
    }
}
