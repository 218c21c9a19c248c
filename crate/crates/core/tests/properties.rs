use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swlab_core::config::ExperimentConfig;
use swlab_core::fiber::{
    build_projectors, fiber_inner, symmetrize, trace, tracefree_project, FiberTensor, FullTensor, MetricAtPoint,
};
use swlab_core::spectral::{kernel_count, symbol_eval, OperatorKind, SymbolKind};
use swlab_core::{
    sym_dim, tracefree_dim, Bundle, CheckRecord, Field, GeometryCache, Gradients, GridSpec, KernelPolicy, Method,
    MetricPreset, OperatorHandle, PointwiseMaps, Status, SuiteReport, SymIndex, TrigPoly,
};

fn spd(n: usize) -> impl Strategy<Value = MetricAtPoint> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        let g = &a * a.transpose() + DMatrix::identity(n, n) * 0.3;
        MetricAtPoint::new((&g + g.transpose()) * 0.5).unwrap()
    })
}

fn np() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((2, 1)), Just((2, 2)), Just((2, 3)), Just((3, 1)), Just((3, 2)), Just((4, 2))]
}

fn metric_and_rank() -> impl Strategy<Value = (MetricAtPoint, usize)> {
    np().prop_flat_map(|(n, p)| (spd(n), Just(p)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sym_index_enumeration(n in 1usize..6, p in 0usize..6) {
        let all = SymIndex::enumerate(n, p);
        prop_assert_eq!(all.len(), sym_dim(n, p));
        for ix in &all {
            prop_assert_eq!(ix.rank(), p);
            prop_assert!(ix.entries().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn fiber_norm_is_positive_definite(
        (g, p) in metric_and_rank(),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let n = g.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = FiberTensor::zeros(n, p);
        prop_assert_eq!(t.coeffs.len(), sym_dim(n, p));
        prop_assert_eq!(fiber_inner(&t, &t, &g), 0.0);
        t.coeffs.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
        prop_assert!(fiber_inner(&t, &t, &g) > 0.0);
    }

    #[test]
    fn metric_inverse_and_spectrum(g in (2usize..5).prop_flat_map(spd)) {
        let n = g.dim();
        prop_assert!((&g.g * &g.g_inv - DMatrix::identity(n, n)).amax() < 1e-12 * g.g.amax().max(1.0) * 10.0);
        prop_assert!(g.g.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn tracefree_projection_is_traceless((g, p) in metric_and_rank(), seed in any::<u64>()) {
        use rand::Rng;
        let n = g.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = FullTensor::from_data(n, p, (0..n.pow(p as u32)).map(|_| rng.random_range(-1.0..1.0)).collect());
        let phi = tracefree_project(&symmetrize(&raw), &g);
        if p >= 2 {
            prop_assert!(trace(&phi, &g).norm_max() < 1e-10 * phi.norm_max().max(1.0));
        }
        let twice = tracefree_project(&phi, &g);
        prop_assert!(twice.sub(&phi).norm_max() < 1e-10 * phi.norm_max().max(1.0));
    }

    #[test]
    fn projectors_split_the_fiber((g, p) in metric_and_rank()) {
        let pr = build_projectors(g.dim(), p, &g).unwrap();
        let id = DMatrix::<f64>::identity(pr.dim(), pr.dim());
        for pi in [&pr.pi_a, &pr.pi_b, &pr.pi_c] {
            prop_assert!((pi * pi - pi).amax() < 1e-10);
            prop_assert!((pi - pi.transpose()).amax() < 1e-10);
        }
        prop_assert!((&pr.pi_a + &pr.pi_b + &pr.pi_c - id).amax() < 1e-10);
        prop_assert!((&pr.pi_a * &pr.pi_b).amax() < 1e-10);
        prop_assert!((&pr.pi_b * &pr.pi_c).amax() < 1e-10);
        prop_assert_eq!(pr.rank_a(), tracefree_dim(g.dim(), p + 1));
        prop_assert_eq!(pr.rank_b(), tracefree_dim(g.dim(), p - 1));
    }

    #[test]
    fn principal_symbol_is_elliptic_and_homogeneous(
        (g, p) in np().prop_filter("p <= 2", |(_, p)| *p <= 2).prop_flat_map(|(n, p)| (spd(n), Just(p))),
        xi in prop::collection::vec(-1.0..1.0f64, 4),
        scale in 0.1..10.0f64,
    ) {
        let n = g.dim();
        let xi = &xi[..n];
        prop_assume!(xi.iter().map(|v| v * v).sum::<f64>() > 1e-4);
        let maps = PointwiseMaps::new(n, p).unwrap();
        let s = symbol_eval(SymbolKind::D1Normal, &maps, &g, xi).unwrap();
        prop_assert!(s.min_ratio > 0.0);
        let xs: Vec<f64> = xi.iter().map(|v| v * scale).collect();
        let t = symbol_eval(SymbolKind::D1Normal, &maps, &g, &xs).unwrap();
        prop_assert!((&t.matrix - &s.matrix * (scale * scale)).amax() < 1e-9 * t.matrix.amax());
    }

    #[test]
    fn kernel_count_is_scale_invariant(
        zeros in 0usize..6,
        rest in prop::collection::vec(0.5..100.0f64, 1..20),
        scale in 1e-3..1e3f64,
    ) {
        let mut vals: Vec<f64> = (0..zeros).map(|i| i as f64 * 1e-14).chain(rest).collect();
        vals.sort_by(f64::total_cmp);
        let policy = KernelPolicy::default();
        let a = kernel_count(&vals, &policy);
        let b = kernel_count(&vals.iter().map(|v| v * scale).collect::<Vec<_>>(), &policy);
        prop_assert_eq!(a.count, Some(zeros));
        prop_assert_eq!(b.count, Some(zeros));
    }

    #[test]
    fn config_round_trips(
        n in 2usize..4,
        sizes in prop::collection::btree_set(4usize..12, 1..4),
        ranks in prop::collection::btree_set(1usize..4, 1..3),
        seed in any::<u64>(),
        conformal in any::<bool>(),
        fd4 in any::<bool>(),
    ) {
        let sizes: Vec<usize> = sizes.into_iter().map(|s| 2 * s).collect();
        let mut text = format!(
            "grid.n = {n}\ngrid.sizes = {sizes:?}\nranks = {:?}\nseed = {seed}\nmethod = {}\n",
            ranks.iter().collect::<Vec<_>>(),
            if fd4 { "fd4" } else { "spectral" },
        );
        if conformal {
            text.push_str("metric.preset = conformal\nmetric.f_expression = 0.1*cos(x1) - 0.02*sin(x1+x2)\n");
        }
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_config_string()).unwrap();
        prop_assert_eq!(cfg.to_config_string(), again.to_config_string());
        prop_assert_eq!(again.seed, seed);
        prop_assert_eq!(again.sizes, sizes);
    }

    #[test]
    fn overall_status_tracks_mandatory_failures(statuses in prop::collection::vec((0u8..3, any::<bool>()), 1..12)) {
        let checks: Vec<CheckRecord> = statuses
            .iter()
            .enumerate()
            .map(|(i, &(s, mandatory))| {
                let id = format!("c{i:02}");
                let rec = match s {
                    0 => CheckRecord::at_most(id, "plumbing", 0.0, 0.5),
                    1 => CheckRecord::at_most(id, "plumbing", f64::NAN, 0.5),
                    _ => CheckRecord::count(id, "plumbing", None, 2),
                };
                if mandatory { rec } else { rec.optional() }
            })
            .collect();
        let failing = checks.iter().any(|c| c.mandatory && c.status == Status::Fail);
        let report = SuiteReport::new("prop", String::new(), checks);
        prop_assert_eq!(report.status == Status::Fail, failing);
        prop_assert_eq!(report.exit_code() == 1, failing);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decomposition_reconstructs_and_separates(
        p in 1usize..4,
        conformal in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let metric = if conformal {
            MetricPreset::ConformallyFlat(TrigPoly::parse("0.1*cos(x1) + 0.05*sin(x2)").unwrap())
        } else {
            MetricPreset::Flat
        };
        let cache = GeometryCache::new(GridSpec::cube(2, 12), metric, Method::Spectral).unwrap();
        let g = Gradients::new(&cache, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = Field::random(&cache, Bundle::TraceFree(p), 3, &mut rng);
        let out = g.decompose(&phi).unwrap();
        prop_assert!(out.diagnostics.reconstruction < 1e-10);
        prop_assert!(out.diagnostics.d1_max_trace < 1e-9);
        for o in [out.diagnostics.orth_12, out.diagnostics.orth_13, out.diagnostics.orth_23] {
            prop_assert!(o < 1e-8, "{o}");
        }
        prop_assert!(phi.max_trace(&cache) < 1e-10);
    }

    #[test]
    fn operator_handles_are_linear(p in 1usize..3, a in -3.0..3.0f64, seed in any::<u64>()) {
        let f = TrigPoly::parse("0.1*cos(x1)").unwrap();
        let cache = GeometryCache::new(GridSpec::cube(2, 8), MetricPreset::ConformallyFlat(f), Method::Spectral).unwrap();
        let op = OperatorHandle::normal(&cache, p, OperatorKind::Codazzi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Field::random(&cache, op.domain, 2, &mut rng);
        let y = Field::random(&cache, op.domain, 2, &mut rng);
        let lhs = op.apply(&x.axpy(a, &y)).unwrap();
        let rhs = op.apply(&x).unwrap().axpy(a, &op.apply(&y).unwrap());
        prop_assert!(lhs.axpy(-1.0, &rhs).max_abs() < 1e-12 * lhs.max_abs().max(1.0));
    }
}
