use nalgebra::{DMatrix, DVector};

use super::{npow, tracefree_project, unflatten, Algebra, Bundle, FiberTensor, FullTensor, MetricAtPoint, SymIndex};
use crate::error::{Error, Result};

/// Orthogonal projectors onto the three irreducible summands of `T* ⊗ S₀ᵖ`
/// at a point: `S₀ᵖ⁺¹` (A), the trace-type insertions of `S₀ᵖ⁻¹` (B) and the
/// remainder (C).
///
/// The matrices act on coordinates in a `g`-orthonormal basis of `T* ⊗ S₀ᵖ`;
/// [`FiberProjectors::coords`] maps a coordinate-component tensor into it.
#[derive(Debug, Clone)]
pub struct FiberProjectors {
    pub n: usize,
    pub p: usize,
    pub pi_a: DMatrix<f64>,
    pub pi_b: DMatrix<f64>,
    pub pi_c: DMatrix<f64>,
    /// Inverse coframe: `F = E⁻¹` with `g = Eᵀ E`.
    frame: DMatrix<f64>,
    basis: DMatrix<f64>,
}

impl FiberProjectors {
    pub fn dim(&self) -> usize {
        self.pi_a.nrows()
    }

    /// Coordinates of a rank-`p+1` coordinate-component tensor in the
    /// orthonormal fiber basis (orthogonal projection onto `T* ⊗ S₀ᵖ`).
    pub fn coords(&self, t: &FullTensor) -> DVector<f64> {
        let hat = to_frame(t, &self.frame);
        self.basis.transpose() * DVector::from_vec(hat.data)
    }

    pub fn rank_a(&self) -> usize {
        self.pi_a.trace().round() as usize
    }

    pub fn rank_b(&self) -> usize {
        self.pi_b.trace().round() as usize
    }

    pub fn rank_c(&self) -> usize {
        self.pi_c.trace().round() as usize
    }
}

/// Coordinate components → orthonormal-frame components, slot by slot.
fn to_frame(t: &FullTensor, f: &DMatrix<f64>) -> FullTensor {
    let n = t.n;
    let mut cur = t.clone();
    let mut idx = vec![0; t.rank];
    for s in 0..t.rank {
        let mut next = FullTensor::zeros(n, t.rank);
        for k in 0..cur.data.len() {
            unflatten(k, n, t.rank, &mut idx);
            let b = idx[s];
            let mut acc = 0.0;
            for i in 0..n {
                idx[s] = i;
                acc += f[(i, b)] * cur.get(&idx);
            }
            next.data[k] = acc;
        }
        cur = next;
    }
    cur
}

fn range(cols: &[DVector<f64>], m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_columns(cols);
    let eig = (&a * a.transpose()).symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..m)
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * lmax.max(1e-300))
        .collect();
    DMatrix::from_fn(m, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

/// Build the irreducible projectors of `T* ⊗ S₀ᵖ` for the metric `g`.
pub fn build_projectors(n: usize, p: usize, g: &MetricAtPoint) -> Result<FiberProjectors> {
    if n < 2 || p < 1 || g.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "projectors need n >= 2, p >= 1 and a metric of size n (n={n}, p={p})"
        )));
    }
    let chol = g.g.clone().cholesky().ok_or(Error::NotPositiveDefinite { point: 0 })?;
    let e = chol.l().transpose();
    let frame = e.try_inverse().ok_or(Error::NotPositiveDefinite { point: 0 })?;

    let alg = Algebra::new(n);
    let basis = alg.basis(Bundle::CotTraceFree(p)).to_matrix();
    let m = basis.ncols();
    let into_v = |t: &FullTensor| -> DVector<f64> {
        let hat = DVector::from_vec(to_frame(t, &frame).data);
        basis.transpose() * hat
    };

    // A: S₀ᵖ⁺¹ sits inside T* ⊗ S₀ᵖ
    let cols_a: Vec<DVector<f64>> = SymIndex::enumerate(n, p + 1)
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let mut e = FiberTensor::zeros(n, p + 1);
            e.coeffs[j] = 1.0;
            into_v(&tracefree_project(&e, g).to_full())
        })
        .collect();

    // B: Σₐ g_{i₀ iₐ} ψ_{rest} for ψ ∈ S₀ᵖ⁻¹, projected to T* ⊗ S₀ᵖ
    let gt = FullTensor::from_metric(g);
    let cols_b: Vec<DVector<f64>> = (0..super::sym_dim(n, p - 1))
        .map(|j| {
            let mut e = FiberTensor::zeros(n, p - 1);
            e.coeffs[j] = 1.0;
            let psi = tracefree_project(&e, g).to_full();
            let mut x = FullTensor::zeros(n, p + 1);
            let mut idx = vec![0; p + 1];
            let mut rest = vec![0; p - 1];
            for k in 0..npow(n, p + 1) {
                unflatten(k, n, p + 1, &mut idx);
                let mut v = 0.0;
                for a in 1..=p {
                    let mut r = 0;
                    for (s, &i) in idx.iter().enumerate().skip(1) {
                        if s != a {
                            rest[r] = i;
                            r += 1;
                        }
                    }
                    v += gt.get(&[idx[0], idx[a]]) * psi.get(&rest);
                }
                x.data[k] = v;
            }
            into_v(&x)
        })
        .collect();

    let ua = range(&cols_a, m);
    let ub = range(&cols_b, m);
    let overlap = (ua.transpose() * &ub).amax();
    if overlap > 1e-8 {
        return Err(Error::ProjectorOverlap { overlap });
    }
    let pi_a = &ua * ua.transpose();
    let pi_b = &ub * ub.transpose();
    let pi_c = DMatrix::identity(m, m) - &pi_a - &pi_b;
    Ok(FiberProjectors {
        n,
        p,
        pi_a,
        pi_b,
        pi_c,
        frame,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{symmetrize, tracefree_dim};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> MetricAtPoint {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        MetricAtPoint::new((&g + g.transpose()) * 0.5).unwrap()
    }

    fn check_invariants(pr: &FiberProjectors) {
        let m = pr.dim();
        let id = DMatrix::<f64>::identity(m, m);
        for pi in [&pr.pi_a, &pr.pi_b, &pr.pi_c] {
            assert!((pi * pi - pi).amax() < 1e-10, "idempotent");
            assert!((pi - pi.transpose()).amax() < 1e-10, "self-adjoint");
        }
        assert!((&pr.pi_a + &pr.pi_b + &pr.pi_c - id).amax() < 1e-10);
        assert!((&pr.pi_a * &pr.pi_b).amax() < 1e-10);
        assert!((&pr.pi_a * &pr.pi_c).amax() < 1e-10);
        assert!((&pr.pi_b * &pr.pi_c).amax() < 1e-10);
        assert_eq!(pr.rank_a(), tracefree_dim(pr.n, pr.p + 1));
        assert_eq!(pr.rank_b(), tracefree_dim(pr.n, pr.p - 1));
    }

    #[test]
    fn ranks_for_n3_p2() {
        let pr = build_projectors(3, 2, &MetricAtPoint::identity(3)).unwrap();
        assert_eq!(pr.dim(), 15);
        assert_eq!(pr.rank_a(), 7);
        assert_eq!(pr.rank_b(), 3);
        assert_eq!(pr.rank_c(), 5);
        check_invariants(&pr);
    }

    #[test]
    fn invariants_for_random_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..100 {
            let (n, p) = [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3), (4, 2)][k % 6];
            let g = random_spd(n, &mut rng);
            check_invariants(&build_projectors(n, p, &g).unwrap());
        }
    }

    #[test]
    fn pi_a_reproduces_symmetric_tracefree_elements() {
        // Sym₀(ξ ⊗ φ) with φ ∈ S₀ᵖ lies in the A summand
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (n, p) in [(3, 2), (4, 2), (3, 3)] {
            let g = random_spd(n, &mut rng);
            let pr = build_projectors(n, p, &g).unwrap();
            let xi = FullTensor::from_data(n, 1, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
            let raw = FullTensor::from_data(n, p, (0..npow(n, p)).map(|_| rng.random_range(-1.0..1.0)).collect());
            let phi = tracefree_project(&symmetrize(&raw), &g);
            let elem = tracefree_project(&symmetrize(&xi.outer(&phi.to_full())), &g).to_full();
            let c = pr.coords(&elem);
            assert!((&pr.pi_a * &c - &c).norm() < 1e-10 * c.norm());
            assert!((&pr.pi_b * &c).norm() < 1e-10 * c.norm());
        }
    }
}
