use fctree::data::estimate_cutpoints;
use fctree::diagnose::{discrepancies, model_corr_matrix, vuong, vuong_from_logpmf, Verdict};
use fctree::estimate::{fit_with_cutpoints, FitOptions};
use fctree::select::CorrelationMatrix;
use fctree::simulate::sample;
use fctree::{CopulaFamily, CutpointSet, EdgeSet, ModelSpec, ParamVector, QuadratureRule};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const B: CopulaFamily = CopulaFamily::Bvn;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * rng.random::<f64>()).cos()
}

/// Sample correlation matrix of the latent normals, generated from the factor
/// structure with Markov-tree residuals drawn parent-to-child.
fn monte_carlo_corr(
    d: usize,
    th1: &[f64],
    th2: &[f64],
    edges: &[(usize, usize)],
    delta: &[f64],
    n: usize,
    seed: u64,
) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = DMatrix::<f64>::zeros(d, d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        let (x1, x2) = (gauss(&mut rng), gauss(&mut rng));
        let mut e = vec![f64::NAN; d];
        e[0] = gauss(&mut rng);
        // edges are listed so that each one touches an item already drawn
        for (&(a, b), &r) in edges.iter().zip(delta) {
            let (from, to) = if e[a].is_nan() { (b, a) } else { (a, b) };
            e[to] = r * e[from] + (1.0 - r * r).sqrt() * gauss(&mut rng);
        }
        for j in 0..d {
            if e[j].is_nan() {
                e[j] = gauss(&mut rng);
            }
            let (a, b) = (
                th1.get(j).copied().unwrap_or(0.0),
                th2.get(j).copied().unwrap_or(0.0),
            );
            z[j] = a * x1 + (1.0 - a * a).sqrt() * (b * x2 + (1.0 - b * b).sqrt() * e[j]);
        }
        for j in 0..d {
            for k in 0..d {
                sum[(j, k)] += z[j] * z[k];
            }
        }
    }
    sum / n as f64
}

#[test]
fn one_factor_products() {
    let spec = ModelSpec::one_factor(3, B).unwrap();
    let p = ParamVector {
        theta1: vec![0.6, 0.7, 0.8],
        theta2: vec![],
        delta: vec![],
    };
    let r = model_corr_matrix(&spec, &p).unwrap();
    for ((j, k), want) in [((0, 1), 0.42), ((0, 2), 0.48), ((1, 2), 0.56)] {
        assert!((r.get(j, k) - want).abs() < 1e-12);
    }
}

#[test]
fn one_factor_tree_edge() {
    let spec = ModelSpec::uniform(
        3,
        1,
        B,
        B,
        Some((EdgeSet::new(3, vec![(0, 1), (1, 2)]).unwrap(), B)),
    )
    .unwrap();
    let p = ParamVector {
        theta1: vec![0.6, 0.6, 0.6],
        theta2: vec![],
        delta: vec![0.5, 0.0],
    };
    let r = model_corr_matrix(&spec, &p).unwrap();
    assert!((r.get(0, 1) - 0.68).abs() < 1e-12);
    let mc = monte_carlo_corr(3, &p.theta1, &[], spec.edges(), &p.delta, 1_000_000, 1);
    assert!((mc[(0, 1)] - 0.68).abs() < 0.003, "{}", mc[(0, 1)]);
}

#[test]
fn path_product_across_the_tree() {
    let spec = ModelSpec::new(
        3,
        0,
        vec![],
        vec![],
        Some((EdgeSet::path(3).unwrap(), vec![B, B])),
    )
    .unwrap();
    let p = ParamVector {
        theta1: vec![],
        theta2: vec![],
        delta: vec![0.5, 0.4],
    };
    let r = model_corr_matrix(&spec, &p).unwrap();
    assert!((r.get(0, 2) - 0.20).abs() < 1e-12);
    let mc = monte_carlo_corr(3, &[], &[], spec.edges(), &p.delta, 1_000_000, 2);
    assert!((mc[(0, 2)] - 0.20).abs() < 0.003, "{}", mc[(0, 2)]);
}

#[test]
fn two_factor_tree_matches_monte_carlo() {
    let tree = EdgeSet::new(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
    let spec = ModelSpec::uniform(5, 2, B, B, Some((tree, B))).unwrap();
    let p = ParamVector {
        theta1: vec![0.7, 0.6, 0.5, 0.65, 0.4],
        theta2: vec![0.3, -0.2, 0.4, 0.25, 0.5],
        delta: vec![0.4, -0.3, 0.5, 0.35],
    };
    let r = model_corr_matrix(&spec, &p).unwrap();
    let mc = monte_carlo_corr(
        5,
        &p.theta1,
        &p.theta2,
        spec.edges(),
        &p.delta,
        1_000_000,
        3,
    );
    for j in 0..5 {
        for k in j + 1..5 {
            assert!(
                (r.get(j, k) - mc[(j, k)]).abs() < 0.004,
                "({j},{k}): {} vs {}",
                r.get(j, k),
                mc[(j, k)]
            );
        }
    }
    assert!(r.matrix().clone().cholesky().is_some());
}

#[test]
fn non_gaussian_links_are_rejected() {
    let spec = ModelSpec::one_factor(3, CopulaFamily::Gumbel).unwrap();
    let p = ParamVector {
        theta1: vec![1.5; 3],
        theta2: vec![],
        delta: vec![],
    };
    assert!(matches!(
        model_corr_matrix(&spec, &p),
        Err(fctree::Error::Unsupported(_))
    ));
}

proptest! {
    #[test]
    fn zero_edges_reduce_to_factor_formula(a in proptest::collection::vec(-0.95f64..0.95, 5), b in proptest::collection::vec(-0.95f64..0.95, 5)) {
        let tree = EdgeSet::path(5).unwrap();
        let with_tree = ModelSpec::uniform(5, 2, B, B, Some((tree, B))).unwrap();
        let plain = ModelSpec::uniform(5, 2, B, B, None).unwrap();
        let p = ParamVector { theta1: a.clone(), theta2: b.clone(), delta: vec![0.0; 4] };
        let q = ParamVector { theta1: a.clone(), theta2: b.clone(), delta: vec![] };
        let (r1, r2) = (model_corr_matrix(&with_tree, &p).unwrap(), model_corr_matrix(&plain, &q).unwrap());
        prop_assert_eq!(r1.matrix(), r2.matrix());
        for j in 0..5 {
            for k in j + 1..5 {
                let want = a[j] * a[k] + b[j] * b[k] * ((1.0 - a[j] * a[j]) * (1.0 - a[k] * a[k])).sqrt();
                prop_assert!((r2.get(j, k) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vuong_swap_negates(log1 in proptest::collection::vec(-5.0f64..-0.1, 2..40), shift in proptest::collection::vec(-1.0f64..1.0, 40), dim1 in 1usize..20, dim2 in 1usize..20) {
        let log2: Vec<f64> = log1.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let ab = vuong_from_logpmf(&log1, &log2, dim1, dim2).unwrap();
        let ba = vuong_from_logpmf(&log2, &log1, dim2, dim1).unwrap();
        prop_assert!((ab.dbar + ba.dbar).abs() < 1e-12);
        prop_assert!((ab.s - ba.s).abs() < 1e-12);
        prop_assert!((ab.ci_low + ba.ci_high).abs() < 1e-12);
        prop_assert!((ab.ci_high + ba.ci_low).abs() < 1e-12);
        prop_assert!(ab.ci_low <= ab.ci_high);
    }
}

#[test]
fn discrepancy_arithmetic() {
    let m =
        |r: f64| CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0])).unwrap();
    let dd = discrepancies(&m(0.5), &m(0.3)).unwrap();
    assert!((dd.d1 - 0.2).abs() < 1e-15 && (dd.d2 - 0.2).abs() < 1e-15);
    // tr(R_m⁻¹ R_o) = 2(1 − 0.5·0.3)/(1 − 0.25)
    let want = 0.75f64.ln() - 0.91f64.ln() + 2.0 * 0.85 / 0.75 - 2.0;
    assert!((dd.d3 - want).abs() < 1e-12, "{} vs {want}", dd.d3);

    let spec = ModelSpec::uniform(4, 1, B, B, Some((EdgeSet::path(4).unwrap(), B))).unwrap();
    let p = ParamVector {
        theta1: vec![0.7, 0.5, 0.6, 0.4],
        theta2: vec![],
        delta: vec![0.3, 0.2, 0.1],
    };
    let r = model_corr_matrix(&spec, &p).unwrap();
    let zero = discrepancies(&r, &r).unwrap();
    assert_eq!((zero.d1, zero.d2), (0.0, 0.0));
    assert!(zero.d3.abs() < 1e-12);

    let singular = m(1.0);
    assert!(matches!(
        discrepancies(&singular, &m(0.3)),
        Err(fctree::Error::Numeric(_))
    ));
}

#[test]
fn identical_fits_are_indistinguishable() {
    let g = CopulaFamily::Gumbel;
    let spec = ModelSpec::one_factor(4, g).unwrap();
    let truth = ParamVector::from_taus(&spec, &[0.5; 4], &[], &[]).unwrap();
    let cut = CutpointSet::uniform(4, 3).unwrap();
    let data = sample(&spec, &truth, &cut, 300, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let cut = estimate_cutpoints(&data).unwrap();
    let rule = QuadratureRule::default_rule();
    let fit = fit_with_cutpoints(&data, &cut, &spec, rule, &FitOptions::default()).unwrap();
    let v = vuong(&data, &fit, &fit, rule).unwrap();
    assert_eq!(v.dbar, 0.0);
    assert!(v.ci_low <= 0.0 && v.ci_high >= 0.0);
    assert_eq!(v.verdict, Verdict::Indistinguishable);
}

#[test]
fn true_tree_beats_independence_tree() {
    let g = CopulaFamily::Gumbel;
    let tree = EdgeSet::path(5).unwrap();
    let truth_spec = ModelSpec::uniform(5, 1, g, g, Some((tree.clone(), g))).unwrap();
    let null_spec = ModelSpec::one_factor(5, g).unwrap();
    let truth = ParamVector::from_taus(
        &truth_spec,
        &[0.6, 0.55, 0.5, 0.45, 0.4],
        &[],
        &[0.4, 0.35, 0.3, 0.25],
    )
    .unwrap();
    let rule = QuadratureRule::default_rule();
    let opts = FitOptions {
        standard_errors: false,
        ..FitOptions::default()
    };
    let reps = 20;
    let mut above = 0;
    for r in 0..reps {
        let data = sample(
            &truth_spec,
            &truth,
            &CutpointSet::uniform(5, 4).unwrap(),
            2000,
            &mut ChaCha8Rng::seed_from_u64(50 + r),
        )
        .unwrap();
        let cut = estimate_cutpoints(&data).unwrap();
        let null = fit_with_cutpoints(&data, &cut, &null_spec, rule, &opts).unwrap();
        let alt = fit_with_cutpoints(&data, &cut, &truth_spec, rule, &opts).unwrap();
        let v = vuong(&data, &null, &alt, rule).unwrap();
        if v.ci_low > 0.0 {
            above += 1;
        }
    }
    assert!(above as f64 >= 0.95 * reps as f64, "{above}/{reps}");
}
