mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umtslab::algo::{
    estimate_potential, exponent_for, f_ratio, f_ratio_symmetric, rho_variant, OddExponent, PotentialEstimate, PotentialOptions,
    Trivial, TwoStable,
};
use umtslab::harness::{adversary_run, generate_sequence, AdversaryConfig, AdversaryKind};
use umtslab::runner::{Runner, StableRunner};
use umtslab::algo::ProbabilityRule;
use umtslab::{FiniteMetric, OnlineAlgorithm, Umts, UmtsError, WeightVector};

fn uniform(b: usize, d: f64, r: &[f64], s: f64) -> Umts {
    Umts::new(FiniteMetric::uniform(b, d).unwrap(), r.to_vec(), s).unwrap()
}

fn arc<A: OnlineAlgorithm + 'static>(a: A) -> Arc<dyn OnlineAlgorithm> {
    Arc::new(a)
}

#[test]
fn odd_exponent_examples() {
    let a = OddExponent::new(&uniform(2, 1.0, &[1.0, 1.0], 1.0)).unwrap();
    assert_eq!(a.exponent(), 1);
    assert_eq!(&*a.probabilities(&[0.0, 0.0]), &[0.5, 0.5]);
    assert_eq!(&*a.probabilities(&[0.5, 0.0]), &[0.25, 0.75]);
    assert_eq!(&*a.probabilities(&[1.0, 0.0]), &[0.0, 1.0]);

    let a = OddExponent::new(&uniform(5, 2.0, &[1.0; 5], 1.0)).unwrap();
    let p = a.probabilities(&[0.7; 5]);
    assert!(p.iter().all(|x| (x - 0.2).abs() < 1e-15));
}

#[test]
fn odd_exponent_parameters() {
    assert_eq!(exponent_for(2), 1);
    assert_eq!(exponent_for(3), 3);
    assert_eq!(exponent_for(8), 3);
    assert_eq!(exponent_for(20), 3);
    assert_eq!(exponent_for(21), 5);
    for b in 2..200 {
        let t = exponent_for(b) as f64;
        let l = (b as f64).ln();
        assert!(t % 2.0 == 1.0 && t >= l && t < l + 2.0);
    }
    let u = uniform(8, 1.0, &[1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0], 0.5);
    let a = OddExponent::new(&u).unwrap();
    assert!((a.declared_ratio() - (3.0 + 3.0 * 8f64.ln())).abs() < 1e-12);
    assert!((a.sharp_eta() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!((a.constraints().beta, a.constraints().eta), (1.0, 1.0));

    let line = Umts::fair(FiniteMetric::line(3, 1.0).unwrap());
    assert!(OddExponent::new(&line).is_err());
    assert!(OddExponent::new(&uniform(1, 1.0, &[1.0], 1.0)).is_err());
    assert!(OddExponent::new(&uniform(10, 1.0, &[1.0; 10], 1.0)).unwrap().potential(&[0.0; 10]).is_none());
}

#[test]
fn odd_exponent_potential_holds_on_random_runs() {
    for b in 2..=9 {
        let r: Vec<f64> = (0..b).map(|i| 0.5 + (i % 3) as f64).collect();
        let a = arc(OddExponent::new(&uniform(b, 1.5, &r, 0.8)).unwrap());
        for kind in [AdversaryKind::UniformRandom, AdversaryKind::SupportRaiser] {
            let rep = adversary_run(&a, &AdversaryConfig::new(kind, b as u64, 400));
            assert!(rep.has_potential);
            assert!(rep.passed(), "b={b} {kind:?}: {:?}", rep.checks);
            assert!(rep.check("sensible").evaluations > 0);
        }
        let sup = a.potential_sup().unwrap();
        assert!(sup <= a.constraints().eta * a.declared_ratio() * 1.5 + 1e-12);
    }
}

#[test]
fn odd_exponent_sharp_eta_for_unit_ratios() {
    for b in 2..=9 {
        let a = OddExponent::new(&uniform(b, 1.0, &vec![1.0; b], 1.0)).unwrap();
        let sup = a.potential_sup().unwrap();
        assert!(sup <= a.sharp_eta() * a.declared_ratio(), "b={b}");
    }
}

#[test]
fn odd_exponent_closed_form_dominates_minimal_potential() {
    let u = uniform(3, 1.0, &[1.0, 1.0, 1.0], 1.0);
    let a = OddExponent::new(&u).unwrap();
    let opts = PotentialOptions {
        grid_step: 1.0 / 40.0,
        substeps: 2,
        ..Default::default()
    };
    let est = estimate_potential(&a, a.declared_ratio(), a.weights(), &opts).unwrap();
    assert!(matches!(est, PotentialEstimate::Grid(_)));
    // the value-iteration potential is the least one, up to discretization
    assert!(est.sup() <= a.potential_sup().unwrap() + 0.05);
}

#[test]
fn two_stable_examples() {
    assert!((f_ratio(1.0, 2.0, 0.0) - (2.0 + 2.0 / (2f64.exp() - 1.0))).abs() < 1e-12);
    assert!((f_ratio(1.0, 2.0, 0.0) - 2.313).abs() < 1e-3);
    assert_eq!(f_ratio(0.7, 3.0, 3.0), 3.7);
    assert!((f_ratio(1.0, 1.0 + 1e-10, 1.0) - 2.0).abs() < 1e-9);

    let a = TwoStable::new(&uniform(2, 1.0, &[1.0, 1.0], 1.0)).unwrap();
    assert_eq!(a.declared_ratio(), 2.0);
    assert_eq!(&*a.probabilities(&[0.0, 0.0]), &[0.5, 0.5]);
    assert!(a.probabilities(&[1.0, 0.0])[0].abs() < 1e-15);
    assert!((a.probabilities(&[0.0, 1.0])[0] - 1.0).abs() < 1e-15);
    assert!((a.probabilities(&[0.25, 0.0])[0] - 0.375).abs() < 1e-12);
    assert_eq!(a.constraints().beta, 1.0);
    let sup = a.potential_sup().unwrap();
    assert!(sup <= 4.0 * a.declared_ratio() + 1e-9);
    assert!(sup <= a.constraints().eta * a.declared_ratio() + 1e-9);

    assert!(TwoStable::new(&uniform(3, 1.0, &[1.0; 3], 1.0)).is_err());
}

#[test]
fn two_stable_matches_exponential_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let r1 = rng.gen_range(0.0..5.0);
        let r2 = rng.gen_range(0.0..5.0);
        let s = rng.gen_range(0.2..3.0);
        let d = rng.gen_range(0.5..2.0);
        let opts = PotentialOptions::coarse(1.0 / 200.0);
        let a = TwoStable::with_options(&uniform(2, d, &[r1, r2], s), &opts).unwrap();
        for _ in 0..50 {
            let y = rng.gen_range(-d..d);
            let want = common::two_point_p1(r1, r2, s, d, y);
            assert!((a.probabilities(&[y, 0.0])[0] - want).abs() < 1e-9);
        }
        assert!((a.declared_ratio() - common::f_literal(s, r1, r2)).abs() < 1e-9 * a.declared_ratio());
    }
}

#[test]
fn two_stable_audits_clean() {
    let u = uniform(2, 1.0, &[3.0, 0.5], 0.7);
    let a = arc(TwoStable::new(&u).unwrap());
    for seed in 0..5 {
        for kind in [AdversaryKind::UniformRandom, AdversaryKind::GreedyPressure, AdversaryKind::SupportRaiser] {
            let rep = adversary_run(&a, &AdversaryConfig::new(kind, seed, 500));
            assert!(rep.passed(), "{kind:?}: {:?}", rep.checks);
            assert!(rep.check("sensible").worst_slack >= -1e-6);
        }
    }
}

proptest! {
    #[test]
    fn f_ratio_forms_agree(r1 in 0.0f64..50.0, r2 in 0.0f64..50.0, s in 0.05f64..20.0) {
        let a = f_ratio(s, r1, r2);
        let b = f_ratio_symmetric(s, r1, r2);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        prop_assert!(a >= r1.max(r2) - 1e-9);
        prop_assert!(a <= r1.max(r2) + s + 1e-9);
    }

    #[test]
    fn f_ratio_is_monotone(r1 in 0.0f64..30.0, r2 in 0.0f64..30.0, dr in 0.0f64..5.0, s in 0.1f64..10.0) {
        prop_assert!(f_ratio(s, r1 + dr, r2) >= f_ratio(s, r1, r2) - 1e-9);
        prop_assert!(f_ratio(s, r1, r2 + dr) >= f_ratio(s, r1, r2) - 1e-9);
    }

    #[test]
    fn f_bound(lx1 in 0.0f64..14.0, lx2 in 0.0f64..14.0, s in 0.1f64..10.0) {
        let r1 = 2.0 * s * (lx1 + 1.0);
        let r2 = 2.0 * s * (lx2 + 1.0);
        let sum = lx1.max(lx2) + (-(lx1 - lx2).abs()).exp().ln_1p();
        prop_assert!(f_ratio(s, r1, r2) <= 2.0 * s * (sum + 1.0) + 1e-9);
    }
}

#[test]
fn trivial_algorithm() {
    let u = uniform(1, 1.0, &[7.0], 2.0);
    let a = arc(Trivial::new(&u).unwrap());
    assert_eq!(a.declared_ratio(), 7.0);
    assert_eq!((a.constraints().beta, a.constraints().eta), (0.0, 0.0));
    assert_eq!(a.potential(&[3.0]), Some(0.0));
    let est = estimate_potential(a.as_ref(), 7.0, a.weights(), &PotentialOptions::default()).unwrap();
    assert!(matches!(est, PotentialEstimate::Zero));
    let mut run = StableRunner::new(a.clone());
    let c = run.step(umtslab::ElementaryTask::new(0, 0.4));
    assert!((c.total() - 2.8).abs() < 1e-12);
    assert_eq!(run.work_function(), &[0.4]);
    assert!(Trivial::new(&uniform(2, 1.0, &[1.0, 1.0], 1.0)).is_err());
}

#[test]
fn variant_examples() {
    let b = 4;
    let u = uniform(b, 2.0, &[1.5; 4], 1.0);
    let base = arc(OddExponent::new(&u).unwrap());
    assert!(Arc::ptr_eq(&rho_variant(&base, 1.0).unwrap(), &base));
    let v = rho_variant(&base, 0.1).unwrap();
    assert!((v.declared_ratio() - (1.5 + 60.0 * (b as f64).ln())).abs() < 1e-9);
    let c = v.constraints();
    assert!((c.beta - 0.1).abs() < 1e-15 && (c.eta - 0.1).abs() < 1e-15);
    assert!(matches!(rho_variant(&base, 2.0), Err(UmtsError::BetaTooLarge { .. })));
    assert!(rho_variant(&base, 0.0).is_err());

    let u2 = uniform(2, 1.0, &[2.0, 0.5], 1.0);
    let ts = arc(TwoStable::with_options(&u2, &PotentialOptions::coarse(1.0 / 500.0)).unwrap());
    let v = rho_variant(&ts, 0.1).unwrap();
    assert!((v.declared_ratio() - f_ratio(10.0, 2.0, 0.5)).abs() < 1e-12);
    let c = v.constraints();
    assert!((c.beta - 0.1).abs() < 1e-15 && (c.eta - 0.2).abs() < 1e-12);
}

#[test]
fn variant_costs_match_scaled_simulation() {
    let u = uniform(3, 1.0, &[1.0, 2.0, 1.0], 1.0);
    let base = arc(OddExponent::new(&u).unwrap());
    let rho = 0.2;
    let v = rho_variant(&base, rho).unwrap();
    let scaled = arc(OddExponent::new(&u.scaled(rho)).unwrap());
    for seed in 0..5 {
        let sigma = generate_sequence(&AdversaryConfig::new(AdversaryKind::UniformRandom, seed, 300), &v);
        let mut a = StableRunner::new(v.clone());
        let mut b = StableRunner::new(scaled.clone());
        for t in &sigma {
            let ca = a.step(*t);
            let cb = b.step(*t);
            assert!((ca.total() - cb.total()).abs() <= 1e-9 * (1.0 + ca.total()));
            for (x, y) in a.work_function().iter().zip(b.work_function()) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn probabilities_sum_to_one_along_runs() {
    let algs = [
        arc(OddExponent::new(&uniform(6, 1.0, &[1.0; 6], 2.0)).unwrap()),
        arc(TwoStable::with_options(&uniform(2, 3.0, &[0.0, 4.0], 1.0), &PotentialOptions::coarse(1.0 / 400.0)).unwrap()),
    ];
    for a in &algs {
        let rep = adversary_run(a, &AdversaryConfig::new(AdversaryKind::UniformRandom, 9, 500));
        let c = rep.check("probability");
        assert_eq!(c.evaluations, 500);
        assert_eq!(c.violations, 0);
        assert_eq!(rep.check("reasonable").violations, 0);
        assert_eq!(rep.check("constrained").violations, 0);
    }
}

#[test]
fn weight_vector_validation() {
    assert!(WeightVector::new(vec![0.25, 0.75]).is_ok());
    assert!(WeightVector::new(vec![-0.25, 1.25]).is_err());
}
