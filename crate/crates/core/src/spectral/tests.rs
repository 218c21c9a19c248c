use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fiber::MetricAtPoint;
use crate::geometry::{GridSpec, Method, MetricPreset, TrigPoly};

fn flat(size: usize, method: Method) -> GeometryCache {
    GeometryCache::new(GridSpec::cube(2, size), MetricPreset::Flat, method).unwrap()
}

fn conformal(size: usize) -> GeometryCache {
    let f = TrigPoly::parse("0.1*cos(x1) + 0.05*sin(x1+x2)").unwrap();
    GeometryCache::new(GridSpec::cube(2, size), MetricPreset::ConformallyFlat(f), Method::Spectral)
        .unwrap()
}

fn spectrum(op: &OperatorHandle, c: &GeometryCache) -> (Assembled, Eigen) {
    let a = assemble(op, c, DofBasis::Fourier).unwrap();
    let e = eigensolve(&a.stiffness, &a.mass, None).unwrap();
    (a, e)
}

#[test]
fn identity_handle_assembles_to_identity() {
    let c = flat(8, Method::Spectral);
    let id = OperatorHandle::identity(&c, Bundle::TraceFree(2));
    let a = assemble_matrix(&id, &c).unwrap();
    assert_eq!(a.nrows(), 128);
    assert!((&a - DMatrix::identity(128, 128)).amax() < 1e-15);
    let f = assemble(&id, &c, DofBasis::Fourier).unwrap();
    assert!((&f.stiffness - &f.mass).amax() < 1e-14);
}

#[test]
fn assembled_matrix_reproduces_apply() {
    let c = conformal(8);
    let op = OperatorHandle::normal(&c, 1, OperatorKind::ConformalKilling).unwrap();
    let a = assemble_matrix(&op, &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut f = Field::zeros_on(&c, op.domain);
        f.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let direct = op.apply(&f).unwrap();
        let via = &a * DVector::from_column_slice(&f.data);
        let scale = direct.max_abs().max(1.0);
        let diff = direct.data.iter().zip(via.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff / scale < 1e-10, "{diff}");
    }
    // linearity
    let x = Field::random(&c, op.domain, 2, &mut rng);
    let y = Field::random(&c, op.domain, 2, &mut rng);
    let lhs = op.apply(&x.axpy(2.5, &y)).unwrap();
    let rhs = op.apply(&x).unwrap().axpy(2.5, &op.apply(&y).unwrap());
    assert!(lhs.axpy(-1.0, &rhs).max_abs() < 1e-12 * lhs.max_abs().max(1.0));
}

#[test]
fn weighted_symmetry_of_normal_operators() {
    let c = conformal(8);
    for kind in [OperatorKind::ConformalKilling, OperatorKind::Killing, OperatorKind::Codazzi] {
        let op = OperatorHandle::normal(&c, 2, kind).unwrap();
        let nodal = assemble(&op, &c, DofBasis::Nodal).unwrap();
        assert!(nodal.asymmetry < 1e-10, "{kind:?} {}", nodal.asymmetry);
    }
}

#[test]
fn flat_rough_laplacian_spectrum_is_wave_numbers() {
    let c = flat(16, Method::Spectral);
    let op = OperatorHandle::rough_laplacian(&c, 1).unwrap();
    let (_, e) = spectrum(&op, &c);
    let mut expect: Vec<f64> = half_wave_vectors(&[16, 16])
        .iter()
        .flat_map(|k| {
            let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
            let mult = if k2 == 0.0 { 2 } else { 4 };
            std::iter::repeat_n(k2, mult)
        })
        .collect();
    expect.sort_by(f64::total_cmp);
    assert_eq!(e.values.len(), expect.len());
    for (a, b) in e.values.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} vs {b}");
    }
    assert!(e.orthonormality < 1e-10);
    let k = kernel_count(&e.values, &KernelPolicy::default());
    assert_eq!(k.count, Some(2));
}

#[test]
fn eigensolve_diagonal() {
    let k = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0, 0.5]));
    let m = DMatrix::identity(4, 4);
    let e = eigensolve(&k, &m, Some(3)).unwrap();
    assert_eq!(e.values, vec![-1.0, 0.5, 2.0]);
    assert!(e.orthonormality < 1e-14);
}

#[test]
fn synthetic_kernel_count() {
    let p = KernelPolicy::default();
    let k = kernel_count(&[1e-12, 1e-11, 0.97, 2.1], &p);
    assert_eq!(k.count, Some(2));
    let gap = k.gap_ratio.unwrap();
    assert!((gap / 0.97e11 - 1.0).abs() < 1e-12);
    // a value stranded between the relative cut and the absolute floor
    let k = kernel_count(&[1e-13, 5e-9, 5e-8, 1.0], &p);
    assert!(k.is_indeterminate());
    // a loose threshold leaves too small a gap
    let k = kernel_count(&[5e-9, 2e-8, 1.0], &KernelPolicy { theta: 0.5, ..p });
    assert_eq!(k.raw_count, 1);
    assert!(k.is_indeterminate());
    assert_eq!(confirm_counts(&kernel_count(&[0.0, 0.0, 1.0], &p), &kernel_count(&[0.0, 1e-14, 3.0], &p)), Some(2));
}

#[test]
fn flat_conformal_killing_counts_match_mode_oracle() {
    for p in [1, 2] {
        for (size, method) in [(8, Method::Spectral), (16, Method::Spectral), (8, Method::Fd4)] {
            let c = flat(size, method);
            let maps = PointwiseMaps::new(2, p).unwrap();
            let op = OperatorHandle::normal(&c, p, OperatorKind::ConformalKilling).unwrap();
            let (a, e) = spectrum(&op, &c);
            assert!(a.asymmetry < 1e-10);
            let k = kernel_count(&e.values, &KernelPolicy::default());
            let oracle = mode_kernel_oracle(
                OperatorKind::ConformalKilling,
                &maps,
                &c.grid.sizes,
                &c.grid.lengths,
                method,
            )
            .unwrap();
            assert_eq!(k.count, Some(2), "p={p} size={size} {method}");
            assert_eq!(oracle.count, 2);
            let sv = singular_values(&c, p, OperatorKind::D1, DofBasis::Fourier).unwrap();
            let kd1 = kernel_count(&sv.iter().map(|s| s * s).collect::<Vec<_>>(), &KernelPolicy::default());
            assert_eq!(kd1.count, Some(2));
            assert!(*e.values.first().unwrap() >= -1e-9 * e.values.last().unwrap());
        }
    }
}

#[test]
fn singular_values_match_normal_operator() {
    let c = conformal(8);
    let sv = singular_values(&c, 1, OperatorKind::D1, DofBasis::Fourier).unwrap();
    let op = OperatorHandle::normal(&c, 1, OperatorKind::ConformalKilling).unwrap();
    let (_, e) = spectrum(&op, &c);
    for (s, l) in sv.iter().zip(&e.values).skip(4) {
        assert!((s * s - l).abs() < 1e-8 * l.max(1.0), "{s} {l}");
    }
}

#[test]
fn symbols() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n, p) in [(2, 1), (2, 2), (3, 1), (3, 2), (4, 2)] {
        let maps = PointwiseMaps::new(n, p).unwrap();
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
        let g = MetricAtPoint::new(&a * a.transpose() + DMatrix::identity(n, n)).unwrap();
        let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = symbol_eval(SymbolKind::D1Normal, &maps, &g, &xi).unwrap();
        assert!(s.min_ratio > 1e-3, "n={n} p={p} {}", s.min_ratio);
        let sw = symbol_eval(SymbolKind::SteinWeissForm, &maps, &g, &xi).unwrap();
        assert!((&s.matrix - &sw.matrix).amax() < 1e-12 * s.matrix.amax());
        let xi3: Vec<f64> = xi.iter().map(|v| 3.0 * v).collect();
        let s3 = symbol_eval(SymbolKind::D1Normal, &maps, &g, &xi3).unwrap();
        assert!((&s3.matrix - &s.matrix * 9.0).amax() < 1e-10 * s3.matrix.amax());
        let r = symbol_eval(SymbolKind::RoughLaplacian, &maps, &g, &xi).unwrap();
        assert!(r.distance_to_scalar.unwrap() < 1e-12);
        assert!((r.scalar.unwrap() - 1.0).abs() < 1e-12);
        let d1 = symbol_eval(SymbolKind::D1, &maps, &g, &xi).unwrap();
        assert!(d1.min_value > 0.0);
        assert!((d1.min_value.powi(2) - s.min_value).abs() < 1e-10 * s.matrix.amax());
    }
}

#[test]
fn spectrum_csv() {
    let report = SpectrumReport {
        operator: "x".into(),
        sizes: vec![8, 8],
        method: "spectral".into(),
        dofs: 3,
        eigenvalues: vec![0.0, 1.0, 2.0],
        largest: 2.0,
        kernel: kernel_count(&[0.0, 1.0, 2.0], &KernelPolicy::default()),
        policy: KernelPolicy::default(),
        asymmetry: 0.0,
        max_residual: 0.0,
        orthonormality: 0.0,
    };
    let dir = std::env::temp_dir().join("swlab_spectrum_csv");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.csv");
    write_spectrum_csv(&report, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("index,eigenvalue"));
}

#[test]
fn divergence_of_one_forms_mode_oracle_is_exact() {
    // flat T²: one divergence-free direction per nonzero mode, plus constants
    let maps = PointwiseMaps::new(2, 1).unwrap();
    for size in [8, 16, 32] {
        let g = GridSpec::cube(2, size);
        let o = mode_kernel_oracle(OperatorKind::TransverseTraceless, &maps, &g.sizes, &g.lengths, Method::Spectral)
            .unwrap();
        assert_eq!(o.count, 2 + (size - 1) * (size - 1) - 1, "N={size}");
    }
}
