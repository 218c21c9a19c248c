use nalgebra::{DMatrix, DVector};

use super::{flatten, npow, unflatten, IndexTable, SymIndex};
use crate::error::{Error, Result};

/// Metric at a single point, with cached inverse and volume factor.
#[derive(Debug, Clone)]
pub struct MetricAtPoint {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sqrt_det: f64,
}

impl MetricAtPoint {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        if n == 0 || g.ncols() != n {
            return Err(Error::InvalidArgument("metric must be a square matrix".into()));
        }
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 * g.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("metric not symmetric ({asym:e})")));
        }
        let chol = g
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { point: 0 })?;
        let g_inv = chol.inverse();
        let sqrt_det = chol.l().diagonal().product();
        Ok(Self { g, g_inv, sqrt_det })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            g: DMatrix::identity(n, n),
            g_inv: DMatrix::identity(n, n),
            sqrt_det: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// Covariant tensor with all `n^q` components stored, slot 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct FullTensor {
    pub n: usize,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl FullTensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        Self {
            n,
            rank,
            data: vec![0.0; npow(n, rank)],
        }
    }

    pub fn from_data(n: usize, rank: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), npow(n, rank));
        Self { n, rank, data }
    }

    /// The metric itself as a rank-2 tensor.
    pub fn from_metric(g: &MetricAtPoint) -> Self {
        let n = g.dim();
        let mut t = Self::zeros(n, 2);
        for i in 0..n {
            for j in 0..n {
                t.data[i * n + j] = g.g[(i, j)];
            }
        }
        t
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flatten(idx, self.n)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let f = flatten(idx, self.n);
        self.data[f] = v;
    }

    pub fn outer(&self, other: &FullTensor) -> FullTensor {
        assert_eq!(self.n, other.n);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            data.extend(other.data.iter().map(|b| a * b));
        }
        FullTensor {
            n: self.n,
            rank: self.rank + other.rank,
            data,
        }
    }

    /// Contract slots `a < b` with the inverse metric.
    pub fn contract(&self, a: usize, b: usize, g_inv: &DMatrix<f64>) -> FullTensor {
        assert!(a < b && b < self.rank);
        let n = self.n;
        let mut out = FullTensor::zeros(n, self.rank - 2);
        let mut idx = vec![0; self.rank];
        for (f, &v) in self.data.iter().enumerate() {
            unflatten(f, n, self.rank, &mut idx);
            let w = g_inv[(idx[a], idx[b])];
            if w == 0.0 {
                continue;
            }
            let rest: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != a && s != b)
                .map(|(_, &i)| i)
                .collect();
            out.data[flatten(&rest, n)] += w * v;
        }
        out
    }

    /// Average over all slot permutations.
    pub fn symmetrized(&self) -> FullTensor {
        let table = IndexTable::new(self.n, self.rank);
        let mut out = FullTensor::zeros(self.n, self.rank);
        table.symmetrize_into(&self.data, &mut out.data);
        out
    }

    /// Permute slots: output slot `s` takes input slot `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> FullTensor {
        let mut out = FullTensor::zeros(self.n, self.rank);
        let mut idx = vec![0; self.rank];
        let mut src = vec![0; self.rank];
        for f in 0..self.data.len() {
            unflatten(f, self.n, self.rank, &mut idx);
            for s in 0..self.rank {
                src[perm[s]] = idx[s];
            }
            out.data[f] = self.get(&src);
        }
        out
    }
}

/// Symmetric tensor stored by one coefficient per [`SymIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiberTensor {
    pub n: usize,
    pub rank: usize,
    pub coeffs: Vec<f64>,
}

impl FiberTensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        Self {
            n,
            rank,
            coeffs: vec![0.0; super::sym_dim(n, rank)],
        }
    }

    pub fn indices(&self) -> Vec<SymIndex> {
        SymIndex::enumerate(self.n, self.rank)
    }

    /// Multiplicities of the monomials, i.e. the weights of the induced
    /// (identity-metric) inner product on coefficient vectors.
    pub fn weights(&self) -> Vec<f64> {
        self.indices().iter().map(|s| s.multiplicity() as f64).collect()
    }

    /// Read the coefficients off a tensor that is already symmetric.
    pub fn from_symmetric_full(t: &FullTensor) -> Self {
        let idx = SymIndex::enumerate(t.n, t.rank);
        let coeffs = idx.iter().map(|s| t.get(s.entries())).collect();
        Self {
            n: t.n,
            rank: t.rank,
            coeffs,
        }
    }

    pub fn to_full(&self) -> FullTensor {
        let table = IndexTable::new(self.n, self.rank);
        let data = table.class_of.iter().map(|&c| self.coeffs[c]).collect();
        FullTensor {
            n: self.n,
            rank: self.rank,
            data,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.rank, other.rank);
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }

    pub fn norm_max(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Average of `t` over all slot permutations.
pub fn symmetrize(t: &FullTensor) -> FiberTensor {
    FiberTensor::from_symmetric_full(&t.symmetrized())
}

/// Contraction of the first two slots with `g⁻¹`.
///
/// # Panics
/// If `phi.rank < 2`.
pub fn trace(phi: &FiberTensor, g: &MetricAtPoint) -> FiberTensor {
    assert!(phi.rank >= 2, "trace needs rank >= 2");
    FiberTensor::from_symmetric_full(&phi.to_full().contract(0, 1, &g.g_inv))
}

/// `Sym(g ⊗ ψ)`.
pub fn metric_insert(psi: &FiberTensor, g: &MetricAtPoint) -> FiberTensor {
    symmetrize(&FullTensor::from_metric(g).outer(&psi.to_full()))
}

/// Full contraction of every slot with `g⁻¹`.
pub fn fiber_inner(phi: &FiberTensor, psi: &FiberTensor, g: &MetricAtPoint) -> f64 {
    assert_eq!(phi.rank, psi.rank, "fiber_inner rank mismatch");
    let n = phi.n;
    let r = phi.rank;
    // raise every slot of psi, then pair monomials with their multiplicities
    let mut raised = psi.to_full();
    for s in 0..r {
        raised = raise_slot(&raised, s, &g.g_inv);
    }
    let raised = FiberTensor::from_symmetric_full(&raised);
    let idx = SymIndex::enumerate(n, r);
    idx.iter()
        .zip(phi.coeffs.iter().zip(&raised.coeffs))
        .map(|(s, (a, b))| s.multiplicity() as f64 * a * b)
        .sum()
}

fn raise_slot(t: &FullTensor, slot: usize, g_inv: &DMatrix<f64>) -> FullTensor {
    let n = t.n;
    let mut out = FullTensor::zeros(n, t.rank);
    let mut idx = vec![0; t.rank];
    for f in 0..t.data.len() {
        unflatten(f, n, t.rank, &mut idx);
        let i = idx[slot];
        let mut acc = 0.0;
        for k in 0..n {
            idx[slot] = k;
            acc += g_inv[(i, k)] * t.get(&idx);
        }
        out.data[f] = acc;
    }
    out
}

/// Orthogonal projection onto the trace-free part: `φ − Sym(g ⊗ ψ)` where
/// `ψ ∈ Sᵖ⁻²` solves `tr Sym(g ⊗ ψ) = tr φ`.
pub fn tracefree_project(phi: &FiberTensor, g: &MetricAtPoint) -> FiberTensor {
    if phi.rank < 2 {
        return phi.clone();
    }
    let n = phi.n;
    let q = phi.rank - 2;
    let dim_q = super::sym_dim(n, q);
    let mut k = DMatrix::zeros(dim_q, dim_q);
    for j in 0..dim_q {
        let mut e = FiberTensor::zeros(n, q);
        e.coeffs[j] = 1.0;
        let col = trace(&metric_insert(&e, g), g);
        k.set_column(j, &DVector::from_vec(col.coeffs));
    }
    let rhs = DVector::from_vec(trace(phi, g).coeffs);
    let psi = k
        .lu()
        .solve(&rhs)
        .expect("trace of metric insertion is invertible");
    let psi = FiberTensor {
        n,
        rank: q,
        coeffs: psi.iter().copied().collect(),
    };
    phi.sub(&metric_insert(&psi, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(n: usize, rng: &mut impl Rng) -> MetricAtPoint {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let g = (&g + g.transpose()) * 0.5;
        MetricAtPoint::new(g).unwrap()
    }

    fn random_full(n: usize, r: usize, rng: &mut impl Rng) -> FullTensor {
        FullTensor::from_data(n, r, (0..npow(n, r)).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn random_sym(n: usize, r: usize, rng: &mut impl Rng) -> FiberTensor {
        symmetrize(&random_full(n, r, rng))
    }

    /// Naive full index loop: Σ φ_{i..} ψ_{j..} Π g^{i_s j_s}.
    fn inner_oracle(phi: &FullTensor, psi: &FullTensor, g_inv: &DMatrix<f64>) -> f64 {
        let (n, r) = (phi.n, phi.rank);
        let mut ii = vec![0; r];
        let mut jj = vec![0; r];
        let mut acc = 0.0;
        for a in 0..npow(n, r) {
            unflatten(a, n, r, &mut ii);
            for b in 0..npow(n, r) {
                unflatten(b, n, r, &mut jj);
                let w: f64 = (0..r).map(|s| g_inv[(ii[s], jj[s])]).product();
                acc += w * phi.data[a] * psi.data[b];
            }
        }
        acc
    }

    #[test]
    fn symmetrize_transposition_average() {
        let mut t = FullTensor::zeros(2, 2);
        t.set(&[0, 1], 1.0);
        let s = symmetrize(&t).to_full();
        assert_eq!(s.get(&[0, 1]), 0.5);
        assert_eq!(s.get(&[1, 0]), 0.5);
        assert_eq!(s.get(&[0, 0]), 0.0);
    }

    #[test]
    fn symmetrize_is_idempotent_and_slot_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_full(3, 3, &mut rng);
        let s = symmetrize(&t).to_full();
        let s2 = symmetrize(&s).to_full();
        for (a, b) in s.data.iter().zip(&s2.data) {
            assert!((a - b).abs() < 1e-15);
        }
        // brute-force check over all 6 permutations
        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let p = s.permuted(&perm);
            for (a, b) in s.data.iter().zip(&p.data) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trace_of_metric_is_dimension() {
        let g = MetricAtPoint::identity(3);
        let gt = FiberTensor::from_symmetric_full(&FullTensor::from_metric(&g));
        assert!((trace(&gt, &g).coeffs[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn trace_matches_index_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let g = random_spd(3, &mut rng);
            let phi = random_sym(3, 2, &mut rng);
            let full = phi.to_full();
            let mut direct = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    direct += g.g_inv[(i, j)] * full.get(&[i, j]);
                }
            }
            assert!((trace(&phi, &g).coeffs[0] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn tracefree_projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, p) in [(2, 2), (3, 2), (3, 3), (4, 3), (3, 4)] {
            let g = random_spd(n, &mut rng);
            let phi = random_sym(n, p, &mut rng);
            let t = tracefree_project(&phi, &g);
            assert!(trace(&t, &g).norm_max() < 1e-12, "trace-free (n={n},p={p})");
            let tt = tracefree_project(&t, &g);
            assert!(tt.sub(&t).norm_max() < 1e-12, "idempotent");
            // orthogonal to pure-trace tensors
            let psi = random_sym(n, p - 2, &mut rng);
            let pure = metric_insert(&psi, &g);
            assert!(fiber_inner(&t, &pure, &g).abs() < 1e-12);
            // self-adjoint
            let chi = random_sym(n, p, &mut rng);
            let lhs = fiber_inner(&t, &chi, &g);
            let rhs = fiber_inner(&phi, &tracefree_project(&chi, &g), &g);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn tracefree_of_metric_vanishes() {
        let g = MetricAtPoint::identity(4);
        let gt = FiberTensor::from_symmetric_full(&FullTensor::from_metric(&g));
        assert!(tracefree_project(&gt, &g).norm_max() < 1e-14);
    }

    #[test]
    fn metric_insert_rank_two_example() {
        // p = 2 cyclic display: (1/3)(g_ij ψ_k + g_jk ψ_i + g_ki ψ_j) with ψ = e¹
        let g = MetricAtPoint::identity(2);
        let mut psi = FiberTensor::zeros(2, 1);
        psi.coeffs[0] = 1.0;
        let out = metric_insert(&psi, &g).to_full();
        assert!((out.get(&[0, 0, 0]) - 1.0).abs() < 1e-15);
        assert!((out.get(&[0, 1, 1]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((out.get(&[1, 0, 1]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.get(&[1, 1, 1]), 0.0);
        assert!(metric_insert(&FiberTensor::zeros(2, 1), &g).norm_max() == 0.0);
    }

    #[test]
    fn metric_insert_is_fully_symmetric_and_differs_from_cyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_spd(3, &mut rng);
        let psi = random_sym(3, 2, &mut rng);
        let out = metric_insert(&psi, &g).to_full();
        for perm in [[1, 0, 2, 3], [3, 1, 2, 0], [2, 3, 0, 1], [1, 2, 3, 0]] {
            let p = out.permuted(&perm);
            for (a, b) in out.data.iter().zip(&p.data) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        // the (p+1)-term adjacent-pair sum is not symmetric for p = 3
        let gt = FullTensor::from_metric(&g);
        let pf = psi.to_full();
        let mut cyc = FullTensor::zeros(3, 4);
        let mut idx = [0usize; 4];
        for f in 0..81 {
            unflatten(f, 3, 4, &mut idx);
            let mut v = 0.0;
            for s in 0..4 {
                let (a, b) = (idx[s], idx[(s + 1) % 4]);
                let rest = [idx[(s + 2) % 4], idx[(s + 3) % 4]];
                v += gt.get(&[a, b]) * pf.get(&rest);
            }
            cyc.data[f] = v / 4.0;
        }
        let swapped = cyc.permuted(&[0, 2, 1, 3]);
        let asym = cyc.data.iter().zip(&swapped.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(asym > 1e-3);
    }

    #[test]
    fn fiber_inner_examples() {
        let g = MetricAtPoint::identity(3);
        let gt = FiberTensor::from_symmetric_full(&FullTensor::from_metric(&g));
        assert!((fiber_inner(&gt, &gt, &g) - 3.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let g = random_spd(3, &mut rng);
            let phi = random_sym(3, 2, &mut rng);
            assert!(fiber_inner(&phi, &phi, &g) >= 0.0);
        }
        for (n, r) in [(2, 3), (3, 2), (3, 3), (4, 2)] {
            let g = random_spd(n, &mut rng);
            let phi = random_sym(n, r, &mut rng);
            let psi = random_sym(n, r, &mut rng);
            let oracle = inner_oracle(&phi.to_full(), &psi.to_full(), &g.g_inv);
            let got = fiber_inner(&phi, &psi, &g);
            assert!((got - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{got} vs {oracle}");
            let sym = fiber_inner(&psi, &phi, &g);
            assert!((got - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplicity_weights_match_euclidean_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = MetricAtPoint::identity(3);
        let phi = random_sym(3, 3, &mut rng);
        let w = phi.weights();
        let weighted: f64 = phi.coeffs.iter().zip(&w).map(|(c, w)| w * c * c).sum();
        let full: f64 = phi.to_full().data.iter().map(|c| c * c).sum();
        assert!((weighted - full).abs() < 1e-13);
        assert!((fiber_inner(&phi, &phi, &g) - full).abs() < 1e-13);
    }
}
