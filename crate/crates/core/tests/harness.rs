use std::sync::Arc;

use umtslab::algo::{OddExponent, ProbabilityRule, Trivial, TwoStable};
use umtslab::harness::{
    adversary_run, audit_run, empirical_ratio, generate_sequence, headroom, offline_opt_elementary, transfer_run,
    AdversaryConfig, AdversaryKind,
};
use umtslab::{FiniteMetric, OnlineAlgorithm, Umts};

fn uniform(b: usize, d: f64, r: &[f64], s: f64) -> Umts {
    Umts::new(FiniteMetric::uniform(b, d).unwrap(), r.to_vec(), s).unwrap()
}

fn two_stable(r: [f64; 2]) -> Arc<dyn OnlineAlgorithm> {
    Arc::new(TwoStable::new(&uniform(2, 1.0, &r, 1.0)).unwrap())
}

const KINDS: [AdversaryKind; 3] = [AdversaryKind::UniformRandom, AdversaryKind::GreedyPressure, AdversaryKind::SupportRaiser];

#[test]
fn sequences_are_deterministic_in_the_seed() {
    let a: Arc<dyn OnlineAlgorithm> = Arc::new(OddExponent::new(&uniform(4, 1.0, &[1.0; 4], 1.0)).unwrap());
    for kind in KINDS {
        let cfg = AdversaryConfig::new(kind, 11, 120);
        let x = generate_sequence(&cfg, &a);
        assert_eq!(x.len(), 120);
        assert_eq!(x, generate_sequence(&cfg, &a));
        if kind != AdversaryKind::SupportRaiser {
            let other = generate_sequence(&AdversaryConfig::new(kind, 12, 120), &a);
            assert_ne!(x, other, "{}", kind.name());
        }
    }
}

#[test]
fn replayed_sequences_are_reasonable() {
    let algs: Vec<Arc<dyn OnlineAlgorithm>> = vec![
        two_stable([1.0, 3.0]),
        Arc::new(OddExponent::new(&uniform(3, 2.0, &[1.0, 2.0, 1.0], 0.5)).unwrap()),
    ];
    for a in &algs {
        for kind in KINDS {
            let sigma = generate_sequence(&AdversaryConfig::new(kind, 5, 200), a);
            assert!(sigma.iter().all(|t| t.charge >= 0.0));
            let rep = audit_run(a, &sigma);
            assert_eq!(rep.check("reasonable").violations, 0, "{} {}", a.name(), kind.name());
            assert!(rep.passed());
            // the live adversary and the replay agree
            let live = adversary_run(a, &AdversaryConfig::new(kind, 5, 200));
            assert_eq!(live.cost, rep.cost);
            assert_eq!(live.opt, rep.opt);
        }
    }
}

#[test]
fn greedy_charges_the_heavier_state() {
    // equal ratios: ties break to the lower index
    let a = two_stable([1.0, 1.0]);
    let t = generate_sequence(&AdversaryConfig::new(AdversaryKind::GreedyPressure, 0, 1), &a)[0];
    assert_eq!(t.state, 0);
    assert!(t.charge >= 0.5 * (1.0 - 1e-6) && t.charge <= 1.0);

    // a cheaper state carries more mass, so greedy aims at it
    let a = two_stable([1.0, 5.0]);
    let p = a.probabilities(&[0.0, 0.0]);
    let heavy = if p[0] > p[1] { 0 } else { 1 };
    let t = generate_sequence(&AdversaryConfig::new(AdversaryKind::GreedyPressure, 3, 1), &a)[0];
    assert_eq!(t.state, heavy);
}

#[test]
fn headroom_examples() {
    let a = two_stable([1.0, 2.0]);
    assert!((headroom(a.as_ref(), &[0.0, 0.0], 0) - 1.0).abs() < 1e-9);
    assert_eq!(headroom(a.as_ref(), &[1.0, 0.0], 0), 0.0);

    let b = OddExponent::new(&uniform(2, 1.0, &[1.0, 1.0], 1.0)).unwrap();
    assert!((headroom(&b, &[0.0, 0.0], 1) - 1.0).abs() < 1e-9);

    let single = Trivial::new(&uniform(1, 1.0, &[3.0], 1.0)).unwrap();
    assert_eq!(headroom(&single, &[0.0], 0), 1.0);
    let far = Trivial::new(&Umts::new(FiniteMetric::star(&[5.0]).unwrap(), vec![1.0], 1.0).unwrap()).unwrap();
    assert_eq!(headroom(&far, &[0.0], 0), far.umts().diameter().max(1.0));
}

#[test]
fn trivial_ratio_is_its_cost_ratio() {
    let a: Arc<dyn OnlineAlgorithm> = Arc::new(Trivial::new(&uniform(1, 1.0, &[7.0], 1.0)).unwrap());
    let rep = adversary_run(&a, &AdversaryConfig::new(AdversaryKind::UniformRandom, 9, 50));
    assert!(rep.passed());
    assert_eq!(rep.additive, 0.0);
    assert!((rep.ratio.unwrap() - 7.0).abs() < 1e-9);
    assert!(rep.ratio_ok);
}

#[test]
fn transfer_onto_own_space_matches_the_audit() {
    let a = two_stable([2.0, 1.0]);
    let sigma = generate_sequence(&AdversaryConfig::new(AdversaryKind::UniformRandom, 21, 150), &a);
    let rep = audit_run(&a, &sigma);
    let tr = transfer_run(&a, a.umts(), &sigma);
    assert!((tr.cost - rep.cost).abs() <= 1e-9 * rep.cost.max(1.0));
    assert!((tr.opt - rep.opt).abs() <= 1e-9);
    assert!((tr.opt - offline_opt_elementary(a.umts(), &sigma)).abs() <= 1e-9);
}

#[test]
fn empirical_ratio_keeps_config_order() {
    let a = two_stable([1.0, 4.0]);
    let cfgs: Vec<AdversaryConfig> = (0..6)
        .map(|s| AdversaryConfig::new(KINDS[s as usize % 3], s, 80))
        .collect();
    let sum = empirical_ratio(&a, &cfgs);
    assert_eq!(sum.runs, 6);
    assert_eq!(sum.reports.len(), 6);
    assert!(sum.all_passed);
    for (r, c) in sum.reports.iter().zip(&cfgs) {
        assert_eq!(r.cost, adversary_run(&a, c).cost);
    }
    let worst = sum.reports.iter().filter_map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(sum.worst_ratio, Some(worst));
    assert_eq!(sum.skipped, sum.reports.iter().filter(|r| r.ratio.is_none()).count());
}
