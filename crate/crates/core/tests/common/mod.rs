#![allow(dead_code)]

//! Independent numerical oracles shared by the integration tests.

/// Adaptive Simpson on a finite interval.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // pre-split so the first error estimate cannot be fooled by a coarse sample
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == PANELS { b } else { lo + h };
            let fa = f(lo);
            let fb = f(hi);
            let fm = f(0.5 * (lo + hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

/// ∫_{-∞}^{z} f(x) dx via x = z − s/(1−s).
pub fn lower_tail<F: Fn(f64) -> f64>(f: &F, z: f64, tol: f64) -> f64 {
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - s;
        f(z - s / om) / (om * om)
    };
    simpson(&g, 0.0, 1.0, tol)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn bvn_density(x: f64, y: f64, r: f64) -> f64 {
    let om = 1.0 - r * r;
    (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * om)).exp()
        / (2.0 * std::f64::consts::PI * om.sqrt())
}

pub fn bvt_density(x: f64, y: f64, r: f64, nu: f64) -> f64 {
    let om = 1.0 - r * r;
    let q = (x * x - 2.0 * r * x * y + y * y) / (nu * om);
    (1.0 + q).powf(-(nu + 2.0) / 2.0) / (2.0 * std::f64::consts::PI * om.sqrt())
}

/// Every vector in {0..k_j-1}^d, in lexicographic order.
pub fn all_outcomes(k: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &kj in k {
        let mut next = Vec::with_capacity(out.len() * kj);
        for prefix in &out {
            for y in 0..kj {
                let mut v = prefix.clone();
                v.push(y);
                next.push(v);
            }
        }
        out = next;
    }
    out
}
