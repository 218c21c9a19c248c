use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Grid;

/// Derivative discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fourier pseudo-spectral; the Nyquist mode is differentiated to zero, so
    /// the operator is a real antisymmetric circulant.
    Spectral,
    /// Fourth-order centered stencil with periodic wraparound.
    Fd4,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectral" => Ok(Method::Spectral),
            "fd4" => Ok(Method::Fd4),
            other => Err(format!("unknown method '{other}' (spectral | fd4)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Spectral => "spectral",
            Method::Fd4 => "fd4",
        })
    }
}

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `i k` multipliers, scaled by `1/N` for the unnormalized inverse.
    multipliers: Vec<Complex64>,
}

/// Periodic differentiation along grid axes.
pub struct Differentiator {
    grid: Grid,
    method: Method,
    plans: Vec<AxisPlan>,
}

impl std::fmt::Debug for Differentiator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Differentiator").field("method", &self.method).finish()
    }
}

impl Differentiator {
    pub fn new(grid: &Grid, method: Method) -> Self {
        let mut planner = FftPlanner::new();
        let plans = (0..grid.n)
            .map(|a| {
                let m = grid.sizes[a];
                let scale = 2.0 * PI / grid.lengths[a];
                let multipliers = (0..m)
                    .map(|j| {
                        let k = if 2 * j < m {
                            j as f64
                        } else if 2 * j == m {
                            0.0
                        } else {
                            j as f64 - m as f64
                        };
                        Complex64::new(0.0, k * scale / m as f64)
                    })
                    .collect();
                AxisPlan {
                    forward: planner.plan_fft_forward(m),
                    inverse: planner.plan_fft_inverse(m),
                    multipliers,
                }
            })
            .collect();
        Self {
            grid: grid.clone(),
            method,
            plans,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// `out = ∂_axis u` for one scalar grid function.
    pub fn diff(&self, axis: usize, u: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let m = g.sizes[axis];
        let stride = g.strides[axis];
        let block = stride * m;
        match self.method {
            Method::Spectral => {
                let plan = &self.plans[axis];
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                let mut scratch =
                    vec![Complex64::new(0.0, 0.0); plan.forward.get_inplace_scratch_len().max(plan.inverse.get_inplace_scratch_len())];
                for outer in (0..g.npts).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        for (j, b) in buf.iter_mut().enumerate() {
                            *b = Complex64::new(u[base + j * stride], 0.0);
                        }
                        plan.forward.process_with_scratch(&mut buf, &mut scratch);
                        for (b, k) in buf.iter_mut().zip(&plan.multipliers) {
                            *b *= k;
                        }
                        plan.inverse.process_with_scratch(&mut buf, &mut scratch);
                        for (j, b) in buf.iter().enumerate() {
                            out[base + j * stride] = b.re;
                        }
                    }
                }
            }
            Method::Fd4 => {
                let h = g.spacing[axis];
                let c = 1.0 / (12.0 * h);
                for outer in (0..g.npts).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        let at = |j: isize| u[base + (j.rem_euclid(m as isize) as usize) * stride];
                        for j in 0..m as isize {
                            out[base + j as usize * stride] =
                                c * (-at(j + 2) + 8.0 * at(j + 1) - 8.0 * at(j - 1) + at(j - 2));
                        }
                    }
                }
            }
        }
    }

    pub fn diffed(&self, axis: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.diff(axis, u, &mut out);
        out
    }
}
