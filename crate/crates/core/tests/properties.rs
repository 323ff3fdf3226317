use driftflow::driftfield::{group_drift, grouped_drift, DriftConfig};
use driftflow::evalkit::{check_action_bound, check_w2_interval_bound, exact_w2};
use driftflow::kernelops::{gibbs_logits, pairwise_cost, row_softmax, sinkhorn_from_logits, uniform_marginal, CostKind};
use driftflow::netcore::{embed_time, transport, NetArch, TimeEmbedSpec, TransportNet};
use driftflow::sampler::{generate, TimeGrid};
use driftflow::synthdata::{
    sample_source, sample_target, sample_target_for_labels, DatasetName, DatasetSpec, PointBatch, SourceSpec,
};
use driftflow::timepath::{build_grouped_batch, interpolate, sample_time_pairs, Schedule, TimeSamplerSpec};
use driftflow::trainer::class_cell_drift;
use driftflow::{seeded_rng, SeededRng};
use ndarray::{concatenate, s, Array1, Array2, Array3, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const DATASETS: [DatasetName; 5] = [
    DatasetName::LetterF,
    DatasetName::LetterM,
    DatasetName::TwoMoons,
    DatasetName::Checkerboard,
    DatasetName::GaussianIso,
];

fn cloud(rng: &mut SeededRng, n: usize, d: usize, spread: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-spread..spread))
}

fn cube(rng: &mut SeededRng, g: usize, b: usize, d: usize) -> Array3<f64> {
    Array3::from_shape_fn((g, b, d), |_| rng.random_range(-3.0..3.0))
}

fn drift_cfg(tau: f64, iters: usize) -> DriftConfig {
    let mut cfg = DriftConfig::default();
    cfg.kernel.tau = tau;
    cfg.sinkhorn_iters = iters;
    cfg
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>(), n in 1usize..200, which in 0usize..5) {
        let spec = DatasetSpec::new(DATASETS[which]);
        prop_assert_eq!(sample_target(&spec, n, seed), sample_target(&spec, n, seed));
        let src = SourceSpec::default();
        prop_assert_eq!(sample_source(&src, n, seed), sample_source(&src, n, seed));
    }

    #[test]
    fn noise_free_samples_lie_on_support(seed in any::<u64>(), which in 0usize..5, scale in 0.5f64..3.0) {
        let spec = DatasetSpec::new(DATASETS[which]).with_noise(0.0).with_scale(scale);
        let pts = sample_target(&spec, 300, seed);
        for p in pts.data().rows() {
            prop_assert!(spec.contains(p.as_slice().unwrap()), "{:?} off support: {}", DATASETS[which], p);
        }
    }

    #[test]
    fn labels_rederive_from_coordinates(seed in any::<u64>(), which in 0usize..4) {
        let spec = [
            DatasetSpec::new(DatasetName::TwoMoons).with_classes(2),
            DatasetSpec::new(DatasetName::Checkerboard).with_classes(2),
            DatasetSpec::new(DatasetName::Checkerboard).with_classes(4),
            DatasetSpec::new(DatasetName::Checkerboard).with_classes(8),
        ][which]
        .with_noise(0.0);
        let pts = sample_target(&spec, 300, seed);
        let labels = pts.labels().expect("conditional dataset");
        for (p, &l) in pts.data().rows().into_iter().zip(labels) {
            prop_assert_eq!(spec.label_of(p.as_slice().unwrap()), Some(l));
        }
    }

    #[test]
    fn linear_path_displacement(seed in any::<u64>(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (t, r) = (a.min(b), a.max(b));
        let mut rng = seeded_rng(seed);
        let x0 = PointBatch::new(cloud(&mut rng, 16, 2, 5.0)).unwrap();
        let x1 = PointBatch::new(cloud(&mut rng, 16, 2, 5.0)).unwrap();
        let xt = interpolate(&x0, &x1, t, Schedule::Linear).unwrap();
        let xr = interpolate(&x0, &x1, r, Schedule::Linear).unwrap();
        let lhs = &xr.data() - &xt.data();
        let rhs = (&x1.data() - &x0.data()) * (r - t);
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn interpolation_commutes_with_scaling(seed in any::<u64>(), t in 0.0f64..=1.0, a in -10.0f64..10.0) {
        let mut rng = seeded_rng(seed);
        let x0 = cloud(&mut rng, 16, 2, 5.0);
        let x1 = cloud(&mut rng, 16, 2, 5.0);
        let scaled = interpolate(
            &PointBatch::new(&x0 * a).unwrap(),
            &PointBatch::new(&x1 * a).unwrap(),
            t,
            Schedule::Linear,
        )
        .unwrap();
        let base = interpolate(&PointBatch::new(x0).unwrap(), &PointBatch::new(x1).unwrap(), t, Schedule::Linear).unwrap();
        let expected = &base.data() * a;
        prop_assert!(max_abs_diff(&scaled.data(), &expected) <= 1e-12 * a.abs().max(1.0) * 10.0);
    }

    #[test]
    fn time_pairs_are_ordered(seed in any::<u64>(), mu in -2.0f64..2.0, sigma in 0.1f64..3.0) {
        for spec in [TimeSamplerSpec::Uniform, TimeSamplerSpec::Lognorm { mu, sigma }] {
            for p in sample_time_pairs(&spec, 10_000, seed) {
                prop_assert!(0.0 <= p.t && p.t <= p.r && p.r <= 1.0);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), n in 1usize..20, m in 1usize..40, spread in 0.1f64..200.0) {
        let mut rng = seeded_rng(seed);
        let logits = cloud(&mut rng, n, m, spread);
        let w = row_softmax(logits.view());
        for row in w.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_row_shift(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = seeded_rng(seed);
        let logits = cloud(&mut rng, 6, 9, 5.0);
        let mut shifted = logits.clone();
        shifted.row_mut(2).mapv_inplace(|v| v + shift);
        let a = row_softmax(logits.view());
        let b = row_softmax(shifted.view());
        prop_assert!(max_abs_diff(a.row(2), b.row(2)) <= 1e-12);
    }

    #[test]
    fn sinkhorn_error_never_grows(seed in any::<u64>(), tau in 0.1f64..2.0) {
        let mut rng = seeded_rng(seed);
        let x = cloud(&mut rng, 24, 2, 2.0);
        let y = cloud(&mut rng, 24, 2, 2.0);
        let logits = gibbs_logits(pairwise_cost(x.view(), y.view(), CostKind::SqEuclidHalf).unwrap().view(), tau);
        let a = uniform_marginal(24);
        let errs: Vec<f64> = [1, 5, 25, 125]
            .iter()
            .map(|&k| sinkhorn_from_logits(logits.view(), a.view(), a.view(), k).unwrap().marginal_err())
            .collect();
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", errs);
        }
    }

    #[test]
    fn converged_plan_transposes(seed in any::<u64>(), n in 2usize..12, m in 2usize..12) {
        let mut rng = seeded_rng(seed);
        let logits = cloud(&mut rng, n, m, 1.5);
        let mut a = Array1::from_shape_fn(n, |_| rng.random_range(0.5..1.5));
        let mut b = Array1::from_shape_fn(m, |_| rng.random_range(0.5..1.5));
        a /= a.sum();
        b /= b.sum();
        let p = sinkhorn_from_logits(logits.view(), a.view(), b.view(), 2000).unwrap();
        let q = sinkhorn_from_logits(logits.t(), b.view(), a.view(), 2000).unwrap();
        prop_assert!(max_abs_diff(&p.plan.t().to_owned(), &q.plan) < 1e-12);
    }

    #[test]
    fn drift_groups_are_isolated(seed in any::<u64>(), g in 2usize..5, b in 1usize..8, iters in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let cfg = drift_cfg(rng.random_range(0.2..2.0), iters);
        let (q, p, n) = (cube(&mut rng, g, b, 2), cube(&mut rng, g, b, 2), cube(&mut rng, g, b, 2));
        let v = grouped_drift(q.view(), p.view(), n.view(), &cfg).unwrap().v;

        let mut order: Vec<usize> = (0..g).collect();
        order.shuffle(&mut rng);
        let perm = |x: &Array3<f64>| x.select(Axis(0), &order);
        let vp = grouped_drift(perm(&q).view(), perm(&p).view(), perm(&n).view(), &cfg).unwrap().v;
        prop_assert_eq!(vp, v.select(Axis(0), &order));

        // two problems solved together equal each solved alone
        let split = g / 2;
        let part = |lo: usize, hi: usize| {
            grouped_drift(q.slice(s![lo..hi, .., ..]), p.slice(s![lo..hi, .., ..]), n.slice(s![lo..hi, .., ..]), &cfg)
                .unwrap()
                .v
        };
        let joined = concatenate(Axis(0), &[part(0, split).view(), part(split, g).view()]).unwrap();
        prop_assert_eq!(joined, v);
    }

    #[test]
    fn drift_is_translation_invariant(seed in any::<u64>(), cx in -5.0f64..5.0, cy in -5.0f64..5.0) {
        let mut rng = seeded_rng(seed);
        let cfg = drift_cfg(1.0, 1 + seed as usize % 3);
        let (q, p, n) = (cube(&mut rng, 2, 6, 2), cube(&mut rng, 2, 6, 2), cube(&mut rng, 2, 6, 2));
        let c = ndarray::array![cx, cy];
        let v = grouped_drift(q.view(), p.view(), n.view(), &cfg).unwrap().v;
        let w = grouped_drift((&q + &c).view(), (&p + &c).view(), (&n + &c).view(), &cfg).unwrap().v;
        prop_assert!(max_abs_diff(&v, &w) < 1e-12);
    }

    #[test]
    fn equal_positives_and_negatives_cancel(seed in any::<u64>(), b in 1usize..16) {
        let mut rng = seeded_rng(seed);
        let cfg = drift_cfg(rng.random_range(0.1..3.0), 1);
        let q = cube(&mut rng, 3, b, 2);
        let p = cube(&mut rng, 3, b, 2);
        let v = grouped_drift(q.view(), p.view(), p.view(), &cfg).unwrap().v;
        prop_assert!(v.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn attraction_stays_in_positive_hull(seed in any::<u64>(), b in 1usize..16, iters in 1usize..6) {
        let mut rng = seeded_rng(seed);
        let cfg = drift_cfg(rng.random_range(0.1..3.0), iters);
        let q = cloud(&mut rng, b, 2, 3.0);
        let pos = cloud(&mut rng, b, 2, 3.0);
        // a single negative at the origin makes V⁻ vanish
        let origin = Array2::zeros((1, 2));
        let (v, _, _) = group_drift(q.view(), pos.view(), origin.view(), &cfg).unwrap();
        for c in 0..2 {
            let col = pos.column(c);
            let (lo, hi) = (col.fold(f64::INFINITY, |m, &x| m.min(x)), col.fold(f64::NEG_INFINITY, |m, &x| m.max(x)));
            for &x in v.column(c) {
                prop_assert!(lo - 1e-12 <= x && x <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn class_cells_do_not_interact(seed in any::<u64>(), k in 2usize..5) {
        let mut rng = seeded_rng(seed);
        let (g, per) = (2, 3);
        let b = k * per;
        let q = cube(&mut rng, g, b, 2);
        let p = cube(&mut rng, g, b, 2);
        let labels = Array2::from_shape_fn((g, b), |(_, i)| i % k);
        let cfg = DriftConfig::default();
        let v = class_cell_drift(&q, &p, &labels, &cfg).unwrap().v;

        // shuffle and perturb every class-0 sample
        let (mut q2, mut p2) = (q.clone(), p.clone());
        for grp in 0..g {
            let mut idx: Vec<usize> = (0..b).filter(|i| i % k == 0).collect();
            let orig = idx.clone();
            idx.shuffle(&mut rng);
            for (&dst, &src) in orig.iter().zip(&idx) {
                q2.slice_mut(s![grp, dst, ..]).assign(&(&q.slice(s![grp, src, ..]) * 1.5));
                p2.slice_mut(s![grp, dst, ..]).assign(&p.slice(s![grp, src, ..]));
            }
        }
        let v2 = class_cell_drift(&q2, &p2, &labels, &cfg).unwrap().v;
        for grp in 0..g {
            for i in (0..b).filter(|i| i % k != 0) {
                prop_assert_eq!(v.slice(s![grp, i, ..]), v2.slice(s![grp, i, ..]));
            }
        }
    }

    #[test]
    fn zero_interval_transport_is_identity(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let mut rng = seeded_rng(seed);
        let net = TransportNet::init(NetArch::new(2, 16, TimeEmbedSpec::default()), &mut rng).unwrap();
        let x = cloud(&mut rng, 10, 2, 4.0);
        prop_assert_eq!(transport(&net, x.view(), t, t).unwrap(), x);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), nfe in 1usize..8) {
        let mut rng = seeded_rng(seed);
        let net = TransportNet::init(NetArch::new(2, 16, TimeEmbedSpec::default()), &mut rng).unwrap();
        let x = sample_source(&SourceSpec::default(), 32, seed);
        let grid = TimeGrid::uniform(nfe).unwrap();
        prop_assert_eq!(
            generate(&net, &x, &grid, true, None).unwrap(),
            generate(&net, &x, &grid, true, None).unwrap()
        );
    }

    #[test]
    fn w2_is_symmetric(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = seeded_rng(seed);
        let a = cloud(&mut rng, n, 2, 3.0);
        let b = cloud(&mut rng, n, 2, 3.0);
        let ab = exact_w2(a.view(), b.view()).unwrap().w2_squared;
        let ba = exact_w2(b.view(), a.view()).unwrap().w2_squared;
        prop_assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn bounds_hold_on_generated_paths(seed in any::<u64>(), n in 2usize..40, nfe in 1usize..6) {
        let x0 = sample_source(&SourceSpec::default(), n, seed);
        let x1 = sample_target(&DatasetSpec::new(DatasetName::TwoMoons), n, seed ^ 1);
        let pair = sample_time_pairs(&TimeSamplerSpec::default(), 1, seed)[0];
        let batch = build_grouped_batch(&x0, &x1, &[pair], n, Schedule::Linear).unwrap();
        prop_assert_eq!(batch.groups(), 1);
        let b = check_w2_interval_bound(x0.data(), x1.data(), pair.t, pair.r).unwrap();
        prop_assert!(b.holds, "{:?}", b);
        let b = check_action_bound(x0.data(), x1.data(), &TimeGrid::uniform(nfe).unwrap()).unwrap();
        prop_assert!(b.holds, "{:?}", b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn w2_root_satisfies_triangle_inequality(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = seeded_rng(seed);
        let sets: Vec<Array2<f64>> = (0..3).map(|_| cloud(&mut rng, n, 2, 3.0)).collect();
        let d = |i: usize, j: usize| exact_w2(sets[i].view(), sets[j].view()).unwrap().w2_squared.sqrt();
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
    }
}

#[test]
fn grid_pairs_embed_injectively() {
    let spec = TimeEmbedSpec::default();
    for n in 1..=64 {
        let grid = TimeGrid::uniform(n).unwrap();
        let pts = grid.points();
        let mut embeds = Vec::new();
        for i in 0..pts.len() {
            for j in i..pts.len() {
                embeds.push(embed_time(pts[i], pts[j], &spec));
            }
        }
        for a in 0..embeds.len() {
            for b in a + 1..embeds.len() {
                let dist: f64 = embeds[a].iter().zip(&embeds[b]).map(|(x, y)| (x - y).powi(2)).sum();
                assert!(dist > 1e-12, "grid {n}: pairs {a} and {b} alias");
            }
        }
    }
}

#[test]
fn labeled_targets_keep_requested_labels() {
    let spec = DatasetSpec::new(DatasetName::Checkerboard).with_classes(4).with_noise(0.0);
    let labels: Vec<usize> = (0..64).map(|i| (i * 7) % 4).collect();
    let pts = sample_target_for_labels(&spec, &labels, &mut seeded_rng(4)).unwrap();
    assert_eq!(pts.labels().unwrap(), labels.as_slice());
    for (p, &l) in pts.data().rows().into_iter().zip(&labels) {
        assert_eq!(spec.label_of(p.as_slice().unwrap()), Some(l));
    }
}
