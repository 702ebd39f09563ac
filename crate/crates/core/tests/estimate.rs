use fctree::data::estimate_cutpoints;
use fctree::estimate::{
    fit_ifm, fit_with_cutpoints, from_gamma, loglik_gradient, transform, untransform, FitOptions,
    Identification, FRANK_EPS,
};
use fctree::likelihood::{loglik, LoglikEvaluator};
use fctree::quadrature::QuadratureRule;
use fctree::simulate::sample;
use fctree::{CopulaFamily, CutpointSet, EdgeSet, ModelSpec, ParamVector, ResponseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rule() -> &'static QuadratureRule {
    QuadratureRule::default_rule()
}

fn simulate(
    spec: &ModelSpec,
    params: &ParamVector,
    k: usize,
    n: usize,
    seed: u64,
) -> ResponseMatrix {
    let cut = CutpointSet::uniform(spec.d, k).unwrap();
    sample(spec, params, &cut, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn mixed_tree_spec() -> ModelSpec {
    let tree = EdgeSet::new(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
    ModelSpec::new(
        5,
        1,
        vec![
            CopulaFamily::Gumbel,
            CopulaFamily::Bvn,
            CopulaFamily::t(5.0),
            CopulaFamily::SurvivalGumbel,
            CopulaFamily::t(2.0),
        ],
        vec![],
        Some((
            tree,
            vec![
                CopulaFamily::Frank,
                CopulaFamily::Bvn,
                CopulaFamily::Gumbel,
                CopulaFamily::t(5.0),
            ],
        )),
    )
    .unwrap()
}

#[test]
fn transform_round_trip() {
    let spec = mixed_tree_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let mut p = ParamVector {
            theta1: vec![0.0; 5],
            theta2: vec![],
            delta: vec![0.0; 4],
        };
        for s in spec.slots() {
            let v = match spec.family(s) {
                CopulaFamily::Bvn | CopulaFamily::StudentT { .. } => rng.random_range(-0.99..0.99),
                CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => {
                    rng.random_range(1.0001..20.0)
                }
                _ => {
                    let t: f64 = rng.random_range(-30.0..30.0);
                    if t.abs() < FRANK_EPS {
                        FRANK_EPS
                    } else {
                        t
                    }
                }
            };
            p.set(s, v);
        }
        let back = untransform(&spec, &transform(&spec, &p));
        for s in spec.slots() {
            worst = worst.max((back.get(s) - p.get(s)).abs());
        }
    }
    assert!(worst <= 1e-12, "max round-trip error {worst:e}");
}

#[test]
fn transform_reference_points() {
    assert_eq!(from_gamma(CopulaFamily::Bvn, 0.0), 0.0);
    let g = from_gamma(CopulaFamily::Gumbel, 0.0);
    assert_eq!(g, 2.0);
    assert_eq!(CopulaFamily::Gumbel.theta_to_tau(g).unwrap(), 0.5);
}

#[test]
fn gradient_matches_independent_finite_difference() {
    let spec = mixed_tree_spec();
    let truth = ParamVector::from_taus(
        &spec,
        &[0.6, 0.5, 0.45, 0.4, 0.5],
        &[],
        &[0.3, 0.2, 0.25, -0.2],
    )
    .unwrap();
    let data = simulate(&spec, &truth, 3, 400, 8);
    let cut = estimate_cutpoints(&data).unwrap();
    let ev = LoglikEvaluator::new(&data, &cut, &spec, rule()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let g0: Vec<f64> = transform(&spec, &truth)
            .iter()
            .map(|g| g + rng.random_range(-0.3..0.3))
            .collect();
        let p = untransform(&spec, &g0);
        let internal = loglik_gradient(&ev, &p, 1e-6);
        let h = 1e-5;
        let scale = internal.iter().fold(1.0f64, |m, g| m.max(g.abs()));
        for i in 0..g0.len() {
            let mut up = g0.clone();
            up[i] += h;
            let mut dn = g0.clone();
            dn[i] -= h;
            let fu = loglik(&data, &cut, &spec, &untransform(&spec, &up), rule()).unwrap();
            let fd = loglik(&data, &cut, &spec, &untransform(&spec, &dn), rule()).unwrap();
            let oracle = (fu - fd) / (2.0 * h);
            let err = (internal[i] - oracle).abs() / oracle.abs().max(1e-2 * scale);
            assert!(
                err < 1e-4,
                "component {i}: {} vs {oracle} (rel {err:e})",
                internal[i]
            );
        }
    }
}

#[test]
fn accepted_steps_never_decrease_loglik() {
    let spec = mixed_tree_spec();
    let truth = ParamVector::from_taus(
        &spec,
        &[0.6, 0.5, 0.45, 0.4, 0.5],
        &[],
        &[0.3, 0.2, 0.25, -0.2],
    )
    .unwrap();
    let data = simulate(&spec, &truth, 3, 500, 9);
    let fit = fit_ifm(&data, &spec, rule(), &FitOptions::default()).unwrap();
    assert!(fit.converged, "{:?}", fit.termination);
    assert!(fit.history.len() > 2);
    for w in fit.history.windows(2) {
        assert!(w[1] >= w[0], "{} then {}", w[0], w[1]);
    }
    assert_eq!(*fit.history.last().unwrap(), fit.loglik);
}

#[test]
fn identification_fixes_one_link() {
    let b = CopulaFamily::Bvn;
    let spec = ModelSpec::uniform(5, 2, b, b, None).unwrap();
    let truth = ParamVector::from_taus(
        &spec,
        &[0.6, 0.55, 0.5, 0.45, 0.4],
        &[0.3, 0.25, 0.2, 0.15, 0.0],
        &[],
    )
    .unwrap();
    let data = simulate(&spec, &truth, 3, 500, 10);
    let fit = fit_ifm(&data, &spec, rule(), &FitOptions::default()).unwrap();
    assert_eq!(fit.n_params, 9);
    assert_eq!(fit.spec.identified_item, Some(4));
    assert_eq!(fit.spec.factor2[4], CopulaFamily::Independence);
    assert_eq!(fit.aic, -2.0 * fit.loglik + 18.0);

    let opts = FitOptions {
        identification: Identification::Pilot,
        standard_errors: false,
        ..FitOptions::default()
    };
    let pilot = fit_ifm(&data, &spec, rule(), &opts).unwrap();
    assert_eq!(pilot.n_params, 9);
    assert!(pilot.spec.identified_item.is_some());

    let gumbel = spec.with_factor2_family(CopulaFamily::Gumbel);
    assert!(!gumbel.needs_identification());
    assert_eq!(gumbel.n_params(), 10);
}

#[test]
fn starting_values_do_not_move_cutpoints() {
    let spec = ModelSpec::one_factor(4, CopulaFamily::Gumbel).unwrap();
    let truth = ParamVector::from_taus(&spec, &[0.6, 0.5, 0.4, 0.3], &[], &[]).unwrap();
    let data = simulate(&spec, &truth, 4, 300, 11);
    let a = fit_ifm(
        &data,
        &spec,
        rule(),
        &FitOptions {
            standard_errors: false,
            ..FitOptions::default()
        },
    )
    .unwrap();
    let start = ParamVector::from_taus(&spec, &[0.2, 0.8, 0.1, 0.7], &[], &[]).unwrap();
    let b = fit_ifm(
        &data,
        &spec,
        rule(),
        &FitOptions {
            start: Some(start),
            standard_errors: false,
            ..FitOptions::default()
        },
    )
    .unwrap();
    assert_eq!(a.cutpoints, b.cutpoints);
    assert_eq!(a.cutpoints, estimate_cutpoints(&data).unwrap());
    assert!((a.loglik - b.loglik).abs() < 1e-6);
}

#[test]
fn fits_are_deterministic() {
    let spec = mixed_tree_spec();
    let truth = ParamVector::from_taus(
        &spec,
        &[0.6, 0.5, 0.45, 0.4, 0.5],
        &[],
        &[0.3, 0.2, 0.25, -0.2],
    )
    .unwrap();
    let data = simulate(&spec, &truth, 3, 300, 12);
    let a = fit_ifm(&data, &spec, rule(), &FitOptions::default()).unwrap();
    let b = fit_ifm(&data, &spec, rule(), &FitOptions::default()).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.se, b.se);
}

#[test]
fn gumbel_delta_method() {
    let spec = ModelSpec::one_factor(5, CopulaFamily::Gumbel).unwrap();
    let truth = ParamVector::from_taus(&spec, &[0.6, 0.5, 0.4, 0.5, 0.6], &[], &[]).unwrap();
    let data = simulate(&spec, &truth, 3, 600, 13);
    let fit = fit_ifm(&data, &spec, rule(), &FitOptions::default()).unwrap();
    let se = fit.se.expect("standard errors");
    assert!(se.positive_definite);
    for j in 0..5 {
        let th = fit.params.theta1[j];
        assert!(se.theta[j] > 0.0);
        assert!((se.tau[j] - se.theta[j] / (th * th)).abs() < 1e-14 * se.tau[j].max(1.0));
    }
}

#[test]
fn mle_dominates_truth() {
    let spec = mixed_tree_spec();
    let truth = ParamVector::from_taus(
        &spec,
        &[0.6, 0.5, 0.45, 0.4, 0.5],
        &[],
        &[0.3, 0.2, 0.25, -0.2],
    )
    .unwrap();
    let reps = 20;
    let mut wins = 0;
    for r in 0..reps {
        let data = simulate(&spec, &truth, 3, 300, 100 + r);
        let opts = FitOptions {
            standard_errors: false,
            ..FitOptions::default()
        };
        let fit = fit_ifm(&data, &spec, rule(), &opts).unwrap();
        let at_truth = loglik(&data, &fit.cutpoints, &spec, &truth, rule()).unwrap();
        if fit.loglik >= at_truth {
            wins += 1;
        }
    }
    assert!(wins as f64 >= 0.95 * reps as f64, "{wins}/{reps}");
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let b = CopulaFamily::Bvn;
    let spec = ModelSpec::one_factor(5, b).unwrap();
    let truth = ParamVector::from_taus(&spec, &[0.5; 5], &[], &[]).unwrap();
    let se_at = |n: usize| {
        let data = simulate(&spec, &truth, 3, n, 14);
        let fit = fit_ifm(&data, &spec, rule(), &FitOptions::default()).unwrap();
        fit.se.unwrap().tau
    };
    let small = se_at(500);
    let large = se_at(2000);
    let ratio: f64 = small.iter().zip(&large).map(|(s, l)| l / s).sum::<f64>() / 5.0;
    assert!((ratio - 0.5).abs() < 0.075, "ratio {ratio}");
}

#[test]
fn fixed_cutpoints_are_respected() {
    let spec = ModelSpec::one_factor(4, CopulaFamily::Bvn).unwrap();
    let truth = ParamVector::from_taus(&spec, &[0.5; 4], &[], &[]).unwrap();
    let data = simulate(&spec, &truth, 3, 300, 15);
    let cut = CutpointSet::uniform(4, 3).unwrap();
    let fit = fit_with_cutpoints(&data, &cut, &spec, rule(), &FitOptions::default()).unwrap();
    assert_eq!(fit.cutpoints, cut);
    assert!(fit.converged);
}

// Under independence the one-factor loadings are not identified at the
// √n rate (the likelihood depends on products θ_j θ_k, and single loadings
// often run to ±1), so the check is made on the implied correlations.
#[test]
fn independent_data_gives_small_implied_correlations() {
    let ind = CopulaFamily::Independence;
    let gen = ModelSpec::one_factor(5, ind).unwrap();
    let zero = ParamVector::from_taus(&gen, &[0.0; 5], &[], &[]).unwrap();
    let spec = ModelSpec::one_factor(5, CopulaFamily::Bvn).unwrap();
    let n = 500;
    let bound = 2.5 / (n as f64).sqrt();
    let (mut outside, mut pairs) = (0, 0);
    for r in 0..200 {
        let data = simulate(&gen, &zero, 3, n, 1000 + r);
        let opts = FitOptions {
            standard_errors: false,
            ..FitOptions::default()
        };
        let th = fit_ifm(&data, &spec, rule(), &opts).unwrap().params.theta1;
        for j in 0..5 {
            for k in j + 1..5 {
                pairs += 1;
                if (th[j] * th[k]).abs() >= bound {
                    outside += 1;
                }
            }
        }
    }
    assert!((outside as f64) < 0.1 * pairs as f64, "{outside}/{pairs}");
}
