use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use super::{npow, sym_dim, tracefree_dim, unflatten, FiberTensor, MetricAtPoint, SymIndex};

/// Maps every full multi-index of rank `r` to its symmetric monomial class.
#[derive(Debug)]
pub struct IndexTable {
    pub n: usize,
    pub rank: usize,
    pub classes: Vec<SymIndex>,
    pub class_of: Vec<usize>,
    pub class_size: Vec<usize>,
}

impl IndexTable {
    pub fn new(n: usize, rank: usize) -> Self {
        let classes = SymIndex::enumerate(n, rank);
        let lookup: HashMap<&[usize], usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.entries(), i))
            .collect();
        let mut class_of = Vec::with_capacity(npow(n, rank));
        let mut class_size = vec![0; classes.len()];
        let mut idx = vec![0; rank];
        for f in 0..npow(n, rank) {
            unflatten(f, n, rank, &mut idx);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            let c = lookup[sorted.as_slice()];
            class_of.push(c);
            class_size[c] += 1;
        }
        Self {
            n,
            rank,
            classes,
            class_of,
            class_size,
        }
    }

    pub fn full_len(&self) -> usize {
        self.class_of.len()
    }

    /// `dst = Sym(src)`; `dst` may not alias `src`.
    pub fn symmetrize_into(&self, src: &[f64], dst: &mut [f64]) {
        let mut acc = vec![0.0; self.classes.len()];
        for (f, &c) in self.class_of.iter().enumerate() {
            acc[c] += src[f];
        }
        for (c, a) in acc.iter_mut().enumerate() {
            *a /= self.class_size[c] as f64;
        }
        for (f, &c) in self.class_of.iter().enumerate() {
            dst[f] = acc[c];
        }
    }
}

/// Vector bundles over the torus, described by their fiber at a point in
/// orthonormal-frame components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bundle {
    /// All covariant `r`-tensors.
    Full(usize),
    /// Symmetric `r`-tensors `Sʳ`.
    Sym(usize),
    /// Trace-free symmetric `r`-tensors `S₀ʳ`.
    TraceFree(usize),
    /// `T* ⊗ S₀ᵖ`, tensors of rank `p + 1` that are symmetric and trace-free in
    /// their last `p` slots.
    CotTraceFree(usize),
}

impl Bundle {
    /// Rank of the underlying full tensors.
    pub fn rank(self) -> usize {
        match self {
            Bundle::Full(r) | Bundle::Sym(r) | Bundle::TraceFree(r) => r,
            Bundle::CotTraceFree(p) => p + 1,
        }
    }

    pub fn dim(self, n: usize) -> usize {
        match self {
            Bundle::Full(r) => npow(n, r),
            Bundle::Sym(r) => sym_dim(n, r),
            Bundle::TraceFree(r) => tracefree_dim(n, r),
            Bundle::CotTraceFree(p) => n * tracefree_dim(n, p),
        }
    }

    pub fn label(self) -> String {
        match self {
            Bundle::Full(r) => format!("T{r}"),
            Bundle::Sym(r) => format!("S{r}"),
            Bundle::TraceFree(r) => format!("S0_{r}"),
            Bundle::CotTraceFree(p) => format!("T*xS0_{p}"),
        }
    }
}

impl std::fmt::Display for Bundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Orthonormal basis of a bundle fiber inside the full tensor space, stored
/// row-major as a `full_len × dim` matrix.
#[derive(Debug)]
pub struct Basis {
    pub full_len: usize,
    pub dim: usize,
    identity: bool,
    mat: Vec<f64>,
}

impl Basis {
    fn identity(len: usize) -> Self {
        Self {
            full_len: len,
            dim: len,
            identity: true,
            mat: Vec::new(),
        }
    }

    fn from_columns(full_len: usize, cols: &[Vec<f64>]) -> Self {
        let dim = cols.len();
        let mut mat = vec![0.0; full_len * dim];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..full_len {
                mat[i * dim + j] = c[i];
            }
        }
        Self {
            full_len,
            dim,
            identity: false,
            mat,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.identity {
            if i == j {
                1.0
            } else {
                0.0
            }
        } else {
            self.mat[i * self.dim + j]
        }
    }

    /// `full = B · coords`.
    pub fn expand(&self, coords: &[f64], full: &mut [f64]) {
        if self.identity {
            full.copy_from_slice(coords);
            return;
        }
        for (i, out) in full.iter_mut().enumerate() {
            let row = &self.mat[i * self.dim..(i + 1) * self.dim];
            *out = row.iter().zip(coords).map(|(a, b)| a * b).sum();
        }
    }

    /// `coords = Bᵀ · full`, the orthogonal projection onto the fiber.
    pub fn project(&self, full: &[f64], coords: &mut [f64]) {
        if self.identity {
            coords.copy_from_slice(full);
            return;
        }
        coords.iter_mut().for_each(|c| *c = 0.0);
        for (i, &v) in full.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.mat[i * self.dim..(i + 1) * self.dim];
            for (c, a) in coords.iter_mut().zip(row) {
                *c += a * v;
            }
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.full_len, self.dim, |i, j| self.entry(i, j))
    }
}

/// Identity-metric tensor algebra in dimension `n`, with lazily built index
/// tables and fiber bases shared across threads.
#[derive(Debug)]
pub struct Algebra {
    n: usize,
    tables: Mutex<HashMap<usize, Arc<IndexTable>>>,
    bases: Mutex<HashMap<Bundle, Arc<Basis>>>,
    transfers: Mutex<HashMap<(Bundle, Bundle), Arc<DMatrix<f64>>>>,
}

impl Algebra {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            tables: Mutex::new(HashMap::new()),
            bases: Mutex::new(HashMap::new()),
            transfers: Mutex::new(HashMap::new()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn table(&self, rank: usize) -> Arc<IndexTable> {
        let mut t = self.tables.lock().unwrap();
        t.entry(rank)
            .or_insert_with(|| Arc::new(IndexTable::new(self.n, rank)))
            .clone()
    }

    pub fn basis(&self, bundle: Bundle) -> Arc<Basis> {
        if let Some(b) = self.bases.lock().unwrap().get(&bundle) {
            return b.clone();
        }
        let b = Arc::new(self.build_basis(bundle));
        self.bases.lock().unwrap().insert(bundle, b.clone());
        b
    }

    fn build_basis(&self, bundle: Bundle) -> Basis {
        let n = self.n;
        match bundle {
            Bundle::Full(r) => Basis::identity(npow(n, r)),
            Bundle::Sym(r) => {
                let t = self.table(r);
                let cols: Vec<Vec<f64>> = (0..t.classes.len())
                    .map(|c| {
                        let s = 1.0 / (t.class_size[c] as f64).sqrt();
                        t.class_of.iter().map(|&k| if k == c { s } else { 0.0 }).collect()
                    })
                    .collect();
                Basis::from_columns(t.full_len(), &cols)
            }
            Bundle::TraceFree(r) if r < 2 => self.build_basis(Bundle::Sym(r)),
            Bundle::TraceFree(r) => {
                let g = MetricAtPoint::identity(n);
                let sym = self.basis(Bundle::Sym(r));
                let mut cols: Vec<Vec<f64>> = Vec::new();
                for j in 0..sym.dim {
                    let full: Vec<f64> = (0..sym.full_len).map(|i| sym.entry(i, j)).collect();
                    let ft = FiberTensor::from_symmetric_full(&super::FullTensor::from_data(n, r, full));
                    let mut v = super::tracefree_project(&ft, &g).to_full().data;
                    // modified Gram-Schmidt, two passes
                    for _ in 0..2 {
                        for c in &cols {
                            let d: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                            v.iter_mut().zip(c).for_each(|(x, a)| *x -= d * a);
                        }
                    }
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-8 {
                        v.iter_mut().for_each(|x| *x /= norm);
                        cols.push(v);
                    }
                }
                assert_eq!(cols.len(), tracefree_dim(n, r), "trace-free basis size");
                Basis::from_columns(npow(n, r), &cols)
            }
            Bundle::CotTraceFree(p) => {
                let tf = self.basis(Bundle::TraceFree(p));
                let inner = npow(n, p);
                let mut cols = Vec::with_capacity(n * tf.dim);
                for b in 0..n {
                    for j in 0..tf.dim {
                        let mut c = vec![0.0; n * inner];
                        for i in 0..inner {
                            c[b * inner + i] = tf.entry(i, j);
                        }
                        cols.push(c);
                    }
                }
                Basis::from_columns(n * inner, &cols)
            }
        }
    }

    /// Pointwise matrix `B_toᵀ B_from` (orthogonal projection of one fiber onto another).
    pub fn transfer(&self, from: Bundle, to: Bundle) -> Arc<DMatrix<f64>> {
        assert_eq!(from.rank(), to.rank(), "transfer between different ranks");
        if let Some(m) = self.transfers.lock().unwrap().get(&(from, to)) {
            return m.clone();
        }
        let m = Arc::new(self.basis(to).to_matrix().transpose() * self.basis(from).to_matrix());
        self.transfers.lock().unwrap().insert((from, to), m.clone());
        m
    }

    /// `y = Sym(x)` on full arrays of rank `r`.
    pub fn sym(&self, r: usize, x: &[f64], y: &mut [f64]) {
        self.table(r).symmetrize_into(x, y);
    }

    /// Contraction of slots 0 and 1 with the identity: rank `r` → `r − 2`.
    pub fn trace01(&self, r: usize, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let inner = npow(n, r - 2);
        y.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..n {
            let off = (a * n + a) * inner;
            for (yv, xv) in y.iter_mut().zip(&x[off..off + inner]) {
                *yv += xv;
            }
        }
    }

    /// `Sym(g ⊗ ψ)` with `g` the identity; `psi` has rank `q`, output rank `q + 2`.
    pub fn metric_insert(&self, q: usize, psi: &[f64], out: &mut [f64]) {
        let n = self.n;
        let inner = npow(n, q);
        let mut tmp = vec![0.0; n * n * inner];
        for a in 0..n {
            let off = (a * n + a) * inner;
            tmp[off..off + inner].copy_from_slice(psi);
        }
        self.sym(q + 2, &tmp, out);
    }
}
