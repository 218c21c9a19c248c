//! Pointwise multilinear algebra of symmetric and trace-free symmetric tensors.
//!
//! Two layers live here. [`FullTensor`], [`FiberTensor`] and [`MetricAtPoint`]
//! implement the operations for an arbitrary inner product `g` and are what the
//! public API and the oracle tests use. [`Algebra`] holds the identity-metric
//! kernels used on the grid: field values are stored in orthonormal-frame
//! components, where `g` is the identity, so all pointwise maps are constant
//! matrices.

mod algebra;
mod projectors;
mod tensor;

pub use algebra::{Algebra, Basis, Bundle, IndexTable};
pub use projectors::{build_projectors, FiberProjectors};
pub use tensor::{
    fiber_inner, metric_insert, symmetrize, trace, tracefree_project, FiberTensor, FullTensor,
    MetricAtPoint,
};

use crate::error::{Error, Result};

/// Binomial coefficient in exact arithmetic; `C(n, k) = 0` for `k < 0` or `k > n`.
pub fn binomial(n: i64, k: i64) -> u128 {
    if k < 0 || n < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of symmetric monomials of degree `p` in `n` variables, `C(n+p-1, p)`.
pub fn sym_dim(n: usize, p: usize) -> usize {
    binomial((n + p) as i64 - 1, p as i64) as usize
}

/// Fiber dimension of `S₀ᵖ` in dimension `n`: `C(n+p-1, p) - C(n+p-3, p-2)`.
pub fn tracefree_dim(n: usize, p: usize) -> usize {
    let (n, p) = (n as i64, p as i64);
    (binomial(n + p - 1, p) - binomial(n + p - 3, p - 2)) as usize
}

/// Upper bound on the dimension of trace-free conformal Killing `p`-tensors,
/// attained on conformally flat manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CkBound {
    pub value: u128,
    /// The closed form is stated for `n ≥ 3`; for `n = 2` it is evaluated anyway.
    pub extrapolated: bool,
}

fn factorial(k: u128) -> Result<u128> {
    (1..=k).try_fold(1u128, |acc, i| acc.checked_mul(i).ok_or(Error::Overflow("factorial")))
}

/// `(n+p-3)!(n+p-2)!(n+2p-2)(n+2p-1)(n+2p) / (p!(p+1)!(n-2)!n!)`.
pub fn ck_dim_bound(n: usize, p: usize) -> Result<CkBound> {
    if n < 2 || p < 1 {
        return Err(Error::InvalidArgument(format!(
            "ck_dim_bound needs n >= 2 and p >= 1 (got n={n}, p={p})"
        )));
    }
    let (n, p) = (n as u128, p as u128);
    let mul = |a: u128, b: u128| a.checked_mul(b).ok_or(Error::Overflow("ck_dim_bound"));
    let mut num = mul(factorial(n + p - 3)?, factorial(n + p - 2)?)?;
    for f in [n + 2 * p - 2, n + 2 * p - 1, n + 2 * p] {
        num = mul(num, f)?;
    }
    let den = mul(
        mul(factorial(p)?, factorial(p + 1)?)?,
        mul(factorial(n - 2)?, factorial(n)?)?,
    )?;
    debug_assert_eq!(num % den, 0);
    Ok(CkBound {
        value: num / den,
        extrapolated: n == 2,
    })
}

/// Nondecreasing index string `i₁ ≤ … ≤ i_p` labelling one symmetric monomial.
/// Entries are zero-based axis labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymIndex {
    entries: Vec<usize>,
}

impl SymIndex {
    pub fn new(mut entries: Vec<usize>) -> Self {
        entries.sort_unstable();
        Self { entries }
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn rank(&self) -> usize {
        self.entries.len()
    }

    /// Number of distinct index orderings, `p! / Π mₐ!`.
    pub fn multiplicity(&self) -> usize {
        let p = self.entries.len();
        let mut m = (1..=p).product::<usize>();
        let mut i = 0;
        while i < p {
            let mut j = i;
            while j < p && self.entries[j] == self.entries[i] {
                j += 1;
            }
            m /= (1..=(j - i)).product::<usize>();
            i = j;
        }
        m
    }

    /// All rank-`p` index strings over `n` axes in lexicographic order.
    pub fn enumerate(n: usize, p: usize) -> Vec<SymIndex> {
        fn rec(n: usize, p: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<SymIndex>) {
            if cur.len() == p {
                out.push(SymIndex { entries: cur.clone() });
                return;
            }
            for a in start..n {
                cur.push(a);
                rec(n, p, a, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::with_capacity(sym_dim(n, p));
        rec(n, p, 0, &mut Vec::with_capacity(p), &mut out);
        out
    }
}

impl std::fmt::Display for SymIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            write!(f, "{}", e + 1)?;
        }
        Ok(())
    }
}

/// `n^r` as usize.
pub(crate) fn npow(n: usize, r: usize) -> usize {
    n.pow(r as u32)
}

/// Decode a row-major flat index (slot 0 most significant).
pub(crate) fn unflatten(mut flat: usize, n: usize, r: usize, out: &mut [usize]) {
    for s in (0..r).rev() {
        out[s] = flat % n;
        flat /= n;
    }
}

pub(crate) fn flatten(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}
