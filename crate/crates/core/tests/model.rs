mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umtslab::harness::{elementarize, offline_opt, offline_opt_elementary};
use umtslab::metric::{validate, Partition, QuotientMetric, Structure, Violation};
use umtslab::transport::{
    enumeration_cost, line_cost, ssp_cost, transport_cost, transport_cost_generic, tree_cost, uniform_cost,
};
use umtslab::umts::{
    alpha_opt_cost, apply_elementary, apply_task, initial_work_function, is_supported, moving_cost,
    online_step_cost, tasks_from_jsonl, tasks_to_jsonl,
};
use umtslab::{ElementaryTask, FiniteMetric, GeneralTask, Umts, UmtsError, WeightVector};

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{}", i + 1)).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn uniform_examples() {
    let m = FiniteMetric::uniform(2, 1.0).unwrap();
    assert_eq!(m.matrix(), &[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let one = FiniteMetric::uniform(1, 5.0).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one.diameter(), 0.0);
    let four = FiniteMetric::uniform(4, 2.0).unwrap();
    assert!(four.validate().is_empty());
    assert_eq!(four.uniform_distance(), Some(2.0));
    assert!(FiniteMetric::uniform(0, 1.0).is_err());
    assert!(FiniteMetric::uniform(3, 0.0).is_err());
}

#[test]
fn line_examples() {
    let m = FiniteMetric::line(3, 1.0).unwrap();
    assert_eq!(m.d(0, 2), 2.0);
    assert_eq!(FiniteMetric::line(2, 0.5).unwrap().diameter(), 0.5);
    let m = FiniteMetric::line(8, 1.0).unwrap();
    for i in 0..8 {
        for j in i..8 {
            for k in j..8 {
                assert_eq!(m.d(i, k), m.d(i, j) + m.d(j, k));
            }
        }
    }
    assert!(m.validate().is_empty());
}

#[test]
fn star_examples() {
    assert_eq!(FiniteMetric::star(&[2.0, 2.0]).unwrap().d(0, 1), 2.0);
    let m = FiniteMetric::star(&[2.0, 4.0, 6.0]).unwrap();
    assert_eq!((m.d(0, 1), m.d(0, 2), m.d(1, 2)), (3.0, 4.0, 5.0));
    assert!(m.validate().is_empty());
    assert_eq!(FiniteMetric::star(&[1.0]).unwrap().len(), 1);
    assert!(FiniteMetric::star(&[1.0, -1.0]).is_err());
}

#[test]
fn validation_reports() {
    assert!(validate(FiniteMetric::uniform(3, 1.0).unwrap().matrix()).is_empty());
    let tri = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
    let v = validate(&tri);
    assert_eq!(v.len(), 1);
    assert!(matches!(v[0], Violation::Triangle { i: 0, j: 1, k: 2, .. }));
    let asym = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.5, 0.0]];
    let v = validate(&asym);
    assert_eq!(v.iter().filter(|x| matches!(x, Violation::Asymmetric { .. })).count(), 1);
    let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    assert!(matches!(validate(&zero)[0], Violation::NonPositive { .. }));
    let ragged = vec![vec![0.0, 1.0], vec![1.0]];
    assert!(matches!(validate(&ragged)[0], Violation::NotSquare { row: 1, .. }));
    assert!(matches!(FiniteMetric::new(labels(3), tri), Err(UmtsError::InvalidMetric(_))));
}

#[test]
fn metric_json_roundtrip() {
    let m = FiniteMetric::star(&[2.0, 4.0, 6.0]).unwrap();
    let back = FiniteMetric::from_json(&m.to_json()).unwrap();
    assert_eq!(m, back);
    assert!(FiniteMetric::from_json(r#"{"labels":["a","b"],"dist":[[0,1],[2,0]]}"#).is_err());
}

#[test]
fn partitions_and_quotients() {
    let m = FiniteMetric::line(4, 1.0).unwrap();
    assert!(Partition::new(4, vec![vec![0, 1], vec![1, 2, 3]]).is_err());
    assert!(Partition::new(4, vec![vec![0, 1], vec![2]]).is_err());
    assert!(Partition::new(4, vec![vec![0, 1], vec![], vec![2, 3]]).is_err());
    let p = Partition::from_labels(&m, &[vec!["v3".into(), "v4".into()], vec!["v1".into(), "v2".into()]]).unwrap();
    assert_eq!(p.block_of(0), 1);
    assert_eq!(p.slot_of(3), 1);
    let q = QuotientMetric::tight(&m, &p).unwrap();
    assert_eq!(q.metric.d(0, 1), 3.0);
    for i in 0..2 {
        for j in 0..2 {
            if i != j {
                assert!(q.metric.d(i, j) >= p.max_cross(&m, i, j));
            }
        }
    }
    let low = FiniteMetric::uniform(2, 2.0).unwrap();
    assert!(QuotientMetric::custom(&m, &p, low).is_err());
    let high = FiniteMetric::uniform(2, 10.0).unwrap();
    assert!(QuotientMetric::custom(&m, &p, high).is_ok());
}

#[test]
fn transport_examples() {
    let u = Umts::new(FiniteMetric::uniform(2, 2.0).unwrap(), vec![1.0, 1.0], 3.0).unwrap();
    assert_eq!(moving_cost(&u, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 6.0);
    assert_eq!(moving_cost(&u, &[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    let line = FiniteMetric::line(3, 1.0).unwrap();
    let (p, q) = ([1.0, 0.0, 0.0], [0.0, 0.5, 0.5]);
    assert!(close(transport_cost(&line, &p, &q), 1.5));
    assert!(close(common::lp_transport(line.matrix(), &p, &q), 1.5));
    assert!(close(common::cdf_line(&[0.0, 1.0, 2.0], &p, &q), 1.5));
    assert!(moving_cost(&u, &[1.0], &[1.0]).is_err());
}

#[test]
fn transport_kernels_match_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let n = rng.gen_range(2..=4);
        let d = common::random_metric(&mut rng, n);
        let m = FiniteMetric::new(labels(n), d.clone()).unwrap();
        let p = common::random_distribution(&mut rng, n);
        let q = common::random_distribution(&mut rng, n);
        let want = common::lp_transport(&d, &p, &q);
        assert!(close(transport_cost(&m, &p, &q), want));
        assert!(close(transport_cost_generic(&m, &p, &q), want));
        assert!(close(enumeration_cost(&m, &p, &q), want));
        assert!(close(ssp_cost(&m, &p, &q), want));
    }
}

#[test]
fn structured_kernels_match_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.gen_range(2..=4);
        let p = common::random_distribution(&mut rng, n);
        let q = common::random_distribution(&mut rng, n);
        let u = FiniteMetric::uniform(n, 1.5).unwrap();
        assert!(close(uniform_cost(1.5, &p, &q), common::lp_transport(u.matrix(), &p, &q)));
        let line = FiniteMetric::line(n, 0.7).unwrap();
        let pos: Vec<f64> = (0..n).map(|i| 0.7 * i as f64).collect();
        let want = common::cdf_line(&pos, &p, &q);
        assert!(close(line_cost(&pos, &p, &q), want));
        assert!(close(common::lp_transport(line.matrix(), &p, &q), want));
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        let star = FiniteMetric::star(&costs).unwrap();
        // two-point stars are uniform and carry no tree
        if let Structure::Tree(shape) = star.structure() {
            assert!(close(tree_cost(shape, &p, &q), common::lp_transport(star.matrix(), &p, &q)));
        } else {
            assert_eq!(n, 2);
        }
    }
}

proptest! {
    #[test]
    fn transport_is_a_metric(seed in 0u64..10_000, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = FiniteMetric::new(labels(n), common::random_metric(&mut rng, n)).unwrap();
        let p = common::random_distribution(&mut rng, n);
        let q = common::random_distribution(&mut rng, n);
        let r = common::random_distribution(&mut rng, n);
        let pq = transport_cost(&m, &p, &q);
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - transport_cost(&m, &q, &p)).abs() <= 1e-9);
        prop_assert!(transport_cost(&m, &p, &r) <= pq + transport_cost(&m, &q, &r) + 1e-9);
        prop_assert!(transport_cost(&m, &p, &p).abs() <= 1e-12);
    }

    #[test]
    fn random_metrics_validate(seed in 0u64..10_000, n in 1usize..7, rho in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = FiniteMetric::new(labels(n), common::random_metric(&mut rng, n)).unwrap();
        prop_assert!(m.validate().is_empty());
        let s = m.scaled(rho);
        let sub = m.restrict(&[n - 1, 0]);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((s.d(i, j) - rho * m.d(i, j)).abs() <= 1e-9 * (1.0 + s.d(i, j)));
            }
        }
        prop_assert_eq!(sub.d(0, 1), m.d(n - 1, 0));
    }

    #[test]
    fn work_functions_stay_lipschitz(seed in 0u64..10_000, n in 2usize..6, steps in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = FiniteMetric::new(labels(n), common::random_metric(&mut rng, n)).unwrap();
        let u = Umts::fair(m.clone());
        let mut w = initial_work_function(&u);
        for _ in 0..steps {
            let before = w.clone();
            let t = ElementaryTask::new(rng.gen_range(0..n), rng.gen_range(0.0..3.0));
            apply_elementary(&m, &mut w, t);
            let general = apply_task(&m, &before, &t.to_general(n));
            for v in 0..n {
                prop_assert!((w[v] - general[v]).abs() <= 1e-9);
                prop_assert!(w[v] >= before[v] - 1e-12);
                for x in 0..n {
                    prop_assert!(w[v] - w[x] <= m.d(v, x) + 1e-9);
                }
            }
        }
    }
}

#[test]
fn work_function_examples() {
    let u2 = Umts::fair(FiniteMetric::uniform(2, 1.0).unwrap());
    assert_eq!(initial_work_function(&u2), vec![0.0, 1.0]);
    let u3 = Umts::with_initial(FiniteMetric::line(3, 1.0).unwrap(), vec![1.0; 3], 1.0, 1).unwrap();
    assert_eq!(initial_work_function(&u3), vec![1.0, 0.0, 1.0]);
    let us = Umts::fair(FiniteMetric::star(&[2.0, 4.0]).unwrap());
    assert_eq!(initial_work_function(&us), vec![0.0, 3.0]);

    let m = &u2.metric;
    let t = GeneralTask::new(vec![0.0, 0.7]).unwrap();
    assert_eq!(apply_task(m, &[0.0, 1.0], &t), vec![0.0, 1.0]);
    assert_eq!(apply_task(m, &[0.2, 0.9], &GeneralTask::zero(2)), vec![0.2, 0.9]);
    let mut w = vec![0.0, 0.0];
    apply_elementary(m, &mut w, ElementaryTask::new(1, 0.4));
    assert_eq!(w, vec![0.0, 0.4]);

    assert!(is_supported(m, &[0.0, 1.0], 1));
    assert!(!is_supported(m, &[0.0, 1.0], 0));
    assert!(!is_supported(m, &[0.0, 0.4], 1));
    assert!(GeneralTask::new(vec![0.0, -1.0]).is_err());
}

#[test]
fn step_cost_examples() {
    let u = Umts::new(FiniteMetric::uniform(2, 1.0).unwrap(), vec![3.0, 3.0], 1.0).unwrap();
    let t = GeneralTask::new(vec![0.2, 0.0]).unwrap();
    assert!(close(online_step_cost(&u, &[0.5, 0.5], &[0.5, 0.5], &t).unwrap(), 0.3));
    assert_eq!(online_step_cost(&u, &[0.5, 0.5], &[0.5, 0.5], &GeneralTask::zero(2)).unwrap(), 0.0);
    let u2 = Umts::fair(FiniteMetric::uniform(2, 2.0).unwrap());
    assert_eq!(online_step_cost(&u2, &[1.0, 0.0], &[0.0, 1.0], &GeneralTask::zero(2)).unwrap(), 2.0);

    assert_eq!(alpha_opt_cost(&WeightVector::new(vec![1.0, 0.0]).unwrap(), &[0.0, 1.0]), 0.0);
    assert_eq!(alpha_opt_cost(&WeightVector::uniform(2), &[0.0, 1.0]), 0.5);
    assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
}

#[test]
fn alpha_cost_is_within_a_diameter_of_opt() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.gen_range(2..=5);
        let m = FiniteMetric::new(labels(n), common::random_metric(&mut rng, n)).unwrap();
        let u = Umts::fair(m.clone());
        let mut w = initial_work_function(&u);
        for _ in 0..10 {
            apply_elementary(&m, &mut w, ElementaryTask::new(rng.gen_range(0..n), rng.gen_range(0.0..2.0)));
        }
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: f64 = a.iter().sum();
        a.iter_mut().for_each(|x| *x /= s);
        let c = alpha_opt_cost(&WeightVector::new(a).unwrap(), &w);
        let opt = w.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(c >= opt - 1e-9 && c <= opt + m.diameter() + 1e-9);
    }
}

#[test]
fn offline_opt_examples() {
    let u = Umts::fair(FiniteMetric::uniform(2, 1.0).unwrap());
    assert_eq!(offline_opt(&u, &[]), 0.0);
    assert_eq!(offline_opt(&u, &[GeneralTask::zero(2), GeneralTask::zero(2)]), 0.0);
    assert_eq!(offline_opt_elementary(&u, &[ElementaryTask::new(0, 10.0)]), 1.0);
}

#[test]
fn offline_opt_matches_path_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let d = common::random_metric(&mut rng, n);
        let init = rng.gen_range(0..n);
        let u = Umts::with_initial(FiniteMetric::new(labels(n), d.clone()).unwrap(), vec![1.0; n], 1.0, init).unwrap();
        let len = rng.gen_range(0..=6);
        let tasks: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..4.0) }).collect())
            .collect();
        let sigma: Vec<GeneralTask> = tasks.iter().map(|c| GeneralTask::new(c.clone()).unwrap()).collect();
        let want = common::exhaustive_opt(&d, init, &tasks);
        assert!((offline_opt(&u, &sigma) - want).abs() <= 1e-9);
    }
}

#[test]
fn elementarize_example() {
    let e = 0.25;
    let sigma = [GeneralTask::new(vec![3.0 * e, e]).unwrap()];
    let out = elementarize(&sigma, e).unwrap();
    let want = [(0, e), (1, e), (0, e), (0, e)];
    assert_eq!(out.len(), want.len());
    for (t, (v, c)) in out.iter().zip(want) {
        assert_eq!((t.state, t.charge), (v, c));
    }
    assert!(elementarize(&sigma, 0.0).is_err());
}

#[test]
fn elementarize_never_raises_opt() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let u = Umts::fair(FiniteMetric::new(labels(n), common::random_metric(&mut rng, n)).unwrap());
        let sigma: Vec<GeneralTask> = (0..rng.gen_range(1..5))
            .map(|_| GeneralTask::new((0..n).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap())
            .collect();
        let eps = rng.gen_range(0.01..0.3);
        let hat = elementarize(&sigma, eps).unwrap();
        assert!(offline_opt_elementary(&u, &hat) <= offline_opt(&u, &sigma) + 1e-9);
    }
}

#[test]
fn task_jsonl_roundtrip() {
    let m = FiniteMetric::uniform(3, 1.0).unwrap();
    let tasks = vec![ElementaryTask::new(2, 0.5), ElementaryTask::new(0, 1.25)];
    let text = tasks_to_jsonl(&m, &tasks);
    let back = tasks_from_jsonl(&m, &text).unwrap();
    assert_eq!(back, tasks.iter().map(|t| t.to_general(3)).collect::<Vec<_>>());
    assert!(tasks_from_jsonl(&m, r#"{"v":"nope","delta":1}"#).is_err());
}
