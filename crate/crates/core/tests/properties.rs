//! Property tests for the structural invariants of filters, bases, fields and IPMs.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use wavegan::basis::{BasisSpec, Domain, WaveletIndex};
use wavegan::besov::{besov_norm, gamma_op, BoundSchedule, CoefficientField};
use wavegan::config::RunConfig;
use wavegan::experiments::fit_slope;
use wavegan::filters::daubechies_filter;
use wavegan::ipm::{box_ipm, empirical_moments, EmpiricalMeasure};
use wavegan::models::{numerical_regularity_check, DEFAULT_GRID_CAP};
use wavegan::wavelet::Wavelet;

fn wavelet() -> Arc<Wavelet> {
    static W: OnceLock<Arc<Wavelet>> = OnceLock::new();
    W.get_or_init(|| Arc::new(Wavelet::new(3, 10, 1).unwrap())).clone()
}

fn measure(dim: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1usize..8).prop_flat_map(move |n| {
        (prop::collection::vec(-0.8f64..0.8, n * dim), prop::collection::vec(0.05f64..1.0, n)).prop_map(move |(x, w)| {
            let total: f64 = w.iter().sum();
            let mut w: Vec<f64> = w.iter().map(|v| v / total).collect();
            let rest: f64 = w[1..].iter().sum();
            w[0] = 1.0 - rest;
            EmpiricalMeasure::new(dim, x, w).unwrap()
        })
    })
}

/// A field on the periodic torus with a handful of entries at levels `≤ 4`.
fn field(dim: usize) -> impl Strategy<Value = CoefficientField> {
    prop::collection::vec((0u32..=4, 1u32..(1 << dim), 0i64..16, 0i64..16, -2.0f64..2.0), 1..12).prop_map(move |entries| {
        let mut cf = CoefficientField::new(dim, Domain::Periodic, 4, 1.0, 1.0);
        for (j, l, a, b, v) in entries {
            let w: Vec<i64> = [a, b][..dim].iter().map(|z| z.rem_euclid(1 << j)).collect();
            cf.set(WaveletIndex::new(j, l, &w), v).unwrap();
        }
        cf
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filters_satisfy_their_defining_identities(nv in 1usize..=20) {
        let fb = daubechies_filter(nv).unwrap();
        let h = fb.coeffs();
        prop_assert!((h.iter().sum::<f64>() - 2.0).abs() <= 1e-12);
        for m in 1..h.len() / 2 {
            let s: f64 = (0..h.len() - 2 * m).map(|k| h[k] * h[k + 2 * m]).sum();
            prop_assert!(s.abs() <= 1e-12, "shift {m}: {s}");
        }
        prop_assert!(fb.invariant_residual() <= 1e-12);
    }

    #[test]
    fn periodic_basis_is_one_periodic(j in 0u32..=6, l in 1u32..4, z in 0i64..64, a in 0u32..(1 << 20), b in 0u32..(1 << 20)) {
        let spec = BasisSpec::periodic(2, wavelet()).unwrap();
        let w = [z.rem_euclid(1 << j), (3 * z).rem_euclid(1 << j)];
        let idx = WaveletIndex::new(j, l, &w);
        // Dyadic points make the unit shifts exact in floating point.
        let u = [a as f64 / (1u64 << 20) as f64, b as f64 / (1u64 << 20) as f64];
        let v = spec.eval_basis(&idx, &u);
        prop_assert_eq!(v, spec.eval_basis(&idx, &[u[0] + 1.0, u[1]]));
        prop_assert_eq!(v, spec.eval_basis(&idx, &[u[0], u[1] - 1.0]));
    }

    #[test]
    fn moments_are_antisymmetric(mu in measure(2), nu in measure(2)) {
        let spec = BasisSpec::ambient(2, 1.25, wavelet()).unwrap();
        let a = empirical_moments(&mu, &nu, &spec, 3).unwrap();
        let b = empirical_moments(&nu, &mu, &spec, 3).unwrap();
        let (mut va, mut vb) = (Vec::new(), Vec::new());
        a.for_each(|j, l, w, v| va.push((j, l, w.to_vec(), v)));
        b.for_each(|j, l, w, v| vb.push((j, l, w.to_vec(), -v)));
        prop_assert_eq!(va, vb);
    }

    #[test]
    fn box_ipm_is_a_pseudometric(mu in measure(1), nu in measure(1), xi in measure(1), c in 0.25f64..4.0) {
        let spec = BasisSpec::ambient(1, 1.25, wavelet()).unwrap();
        let sched = BoundSchedule::new(1.0, 1.0, 1.0, 1).unwrap();
        let d = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| box_ipm(a, b, &spec, &sched, 4).unwrap();
        prop_assert_eq!(d(&mu, &nu), d(&nu, &mu));
        prop_assert_eq!(d(&mu, &mu), 0.0);
        prop_assert!(d(&mu, &xi) <= d(&mu, &nu) + d(&nu, &xi) + 1e-15);
        let scaled = box_ipm(&mu, &nu, &spec, &sched.scaled(c), 4).unwrap();
        prop_assert!((scaled - c * d(&mu, &nu)).abs() <= 1e-14 * scaled.max(1.0));
    }

    #[test]
    fn besov_norm_is_a_norm(f in field(2), g in field(2), a in -3.0f64..3.0, s in 0.0f64..2.0, b in 0.0f64..2.0) {
        let nf = besov_norm(&f, s, b);
        let sum = f.axpy(1.0, &g).unwrap();
        prop_assert!(besov_norm(&sum, s, b) <= (nf + besov_norm(&g, s, b)) * (1.0 + 1e-14));
        let scaled = f.axpy(a, &f.empty_like()).unwrap();
        prop_assert!((besov_norm(&scaled, s, b) - a.abs() * nf).abs() <= 1e-14 * nf.max(1e-300));
    }

    #[test]
    fn gamma_operator_composes(f in field(1), g1 in -1.0f64..1.0, g2 in -1.0f64..1.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let twice = gamma_op(&gamma_op(&f, g1, c1), g2, c2);
        let once = gamma_op(&f, g1 + g2, c1 + c2);
        for ((ia, a), (ib, b)) in twice.iter().zip(once.iter()) {
            prop_assert_eq!(ia, ib);
            prop_assert!((a - b).abs() <= 8.0 * f64::EPSILON * b.abs());
        }
        let lhs = besov_norm(&gamma_op(&f, g1, c1), 0.5, 1.0);
        let rhs = besov_norm(&f, 0.5 + g1, 1.0 + c1);
        prop_assert!((lhs - rhs).abs() <= 8.0 * f64::EPSILON * rhs);
    }

    #[test]
    fn box_projection_is_idempotent(f in field(2), eta in 0.25f64..2.0, c in 0.1f64..2.0) {
        let sched = BoundSchedule::new(eta, 1.0, c, 2).unwrap();
        let p = f.project_box(&sched);
        prop_assert!(p.in_box(&sched));
        prop_assert_eq!(p.project_box(&sched), p.clone());
        for ((_, a), (idx, v)) in f.iter().zip(p.iter()) {
            if a.abs() <= sched.bound(idx.j) {
                prop_assert_eq!(*a, *v);
            }
        }
    }

    #[test]
    fn bound_schedules_decrease(eta in 0.0f64..3.0, k in 0.5f64..3.0, c in 0.1f64..4.0, dim in 1usize..4) {
        let s = BoundSchedule::new(eta, k, c, dim).unwrap();
        for j in 0..12 {
            prop_assert!(s.bound(j) > 0.0);
            prop_assert!(s.bound(j + 1) < s.bound(j));
        }
    }

    #[test]
    fn penalty_vanishes_exactly_when_regular(amp in 0.0f64..0.9, freq in 1u32..5, phase in 0.0f64..1.0) {
        // Circles with a radial wobble; large wobbles pinch the curve.
        let g = |u: &[f64]| {
            let t = 2.0 * std::f64::consts::PI * u[0];
            let r = 0.6 * (1.0 + amp * (freq as f64 * t + 2.0 * std::f64::consts::PI * phase).sin());
            vec![r * t.cos(), r * t.sin()]
        };
        let out = numerical_regularity_check(g, 1, 2, 1.25, 1.5, DEFAULT_GRID_CAP, false).unwrap();
        prop_assert_eq!(out.passed, out.penalty == 0.0);
        prop_assert_eq!(out.passed, out.witness.is_none());
        prop_assert_eq!(out.passed, out.violating_pairs == 0);
    }

    #[test]
    fn measures_round_trip_through_csv(mu in measure(3)) {
        prop_assert_eq!(EmpiricalMeasure::from_csv(&mu.to_csv()).unwrap(), mu);
    }

    #[test]
    fn fields_round_trip_through_text(f in field(2)) {
        prop_assert_eq!(CoefficientField::from_text(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn configs_round_trip_through_toml(n in 1usize..10_000, beta in 0.5f64..3.0, trials in 3usize..9, seed in 0..=i64::MAX as u64) {
        let mut cfg = RunConfig::default();
        cfg.train.n = n;
        cfg.train.beta = beta;
        cfg.train.seed = seed;
        cfg.trials = trials;
        prop_assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn slope_fit_recovers_lines(slope in -2.0f64..2.0, icpt in -5.0f64..5.0, k in 3usize..10) {
        let x: Vec<f64> = (0..k).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = x.iter().map(|v| icpt + slope * v).collect();
        let fit = fit_slope(&x, &y).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-12);
        prop_assert!((fit.intercept - icpt).abs() <= 1e-11);
    }
}
