//! Benchmark fixtures shared by the criterion targets.

use swlab_core::{GeometryCache, GridSpec, Method, MetricPreset, Result, TrigPoly};

/// Conformally flat 2-torus with `f = 0.1 cos x₁`, the workhorse geometry.
pub fn conformal_torus(size: usize) -> Result<GeometryCache> {
    let f = TrigPoly::parse("0.1*cos(x1)")?;
    GeometryCache::new(GridSpec::cube(2, size), MetricPreset::ConformallyFlat(f), Method::Spectral)
}
