use serde::Serialize;

use super::{sw_coefficient, sw_coefficient_alt, weitzenbock_c, Gradients};
use crate::error::{Error, Result};
use crate::fiber::{npow, Bundle};
use crate::fields::{delta_star, divergence, l2_inner, nabla, nabla_adjoint, Field};

/// `D₁*D₁φ` by the closed form and by the discrete adjoint.
#[derive(Debug, Clone)]
pub struct SteinWeiss {
    /// `tf(δδ*φ − c δ*δφ)`.
    pub closed_form: Field,
    /// `D₁†D₁φ`.
    pub adjoint_route: Field,
    /// Max difference between the two, relative to the adjoint route.
    pub residual: f64,
    /// Same comparison with the `4/((p+1)(n+2(p−1)))` coefficient.
    pub alt_coefficient_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Weitzenbock {
    /// `∇†∇φ − tf Δ_Sφ`.
    pub k: Field,
    /// `Σ Ric·φ − Σ_{a≠b} R·φ`.
    pub oracle: Field,
    pub oracle_residual: f64,
    /// Largest trace of `Δ_Sφ` relative to its size.
    pub sampson_trace: f64,
    /// `Q_p(φ, φ)` at each grid point.
    pub q_form: Vec<f64>,
}

/// Residuals of the Weitzenböck identities. Operator residuals are max-norm
/// differences relative to `max |∇†∇φ|`; integral residuals are relative to
/// `‖∇φ‖²`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentityResiduals {
    pub sampson_form: f64,
    pub weitzenbock_operational: f64,
    pub weitzenbock_oracle: f64,
    pub three_gradient: f64,
    pub weitzenbock_split: f64,
    pub integral_sum: f64,
    pub integral_split: f64,
    pub integral_sampson: f64,
    /// The integral Sampson form with a minus sign on the `‖δφ‖²` term.
    pub integral_sampson_minus: f64,
    /// `‖δ(δφ)‖ / ‖∇φ‖`.
    pub double_divergence: f64,
    /// Smallest value of `⟨D₁†D₁φ, φ⟩ / ‖∇φ‖²`.
    pub d1_energy: f64,
}

fn rel_max(a: &Field, b: &Field, scale: f64) -> f64 {
    a.axpy(-1.0, b).max_abs() / scale.max(1e-300)
}

impl Gradients<'_> {
    fn tf(&self) -> Bundle {
        Bundle::TraceFree(self.p)
    }

    /// `δ*δφ` in `Sᵖ`.
    pub fn delta_star_delta(&self, phi: &Field) -> Field {
        delta_star(self.cache, &divergence(self.cache, phi))
    }

    /// `δδ*φ` in `Sᵖ`.
    pub fn delta_delta_star(&self, phi: &Field) -> Field {
        divergence(self.cache, &delta_star(self.cache, phi))
    }

    /// `Δ_Sφ = (p+1)δδ*φ − pδ*δφ`, a section of `Sᵖ`.
    pub fn sampson(&self, phi: &Field) -> Result<Field> {
        self.check_input(phi)?;
        let p = self.p as f64;
        Ok(self
            .delta_delta_star(phi)
            .scaled(p + 1.0)
            .axpy(-p, &self.delta_star_delta(phi)))
    }

    pub fn stein_weiss_d1(&self, phi: &Field) -> Result<SteinWeiss> {
        self.check_input(phi)?;
        let (n, p) = (self.n(), self.p);
        let c = self.cache;
        let dds = self.delta_delta_star(phi);
        let sdd = self.delta_star_delta(phi);
        let closed = dds.axpy(-sw_coefficient(n, p), &sdd).transfer(c, self.tf());
        let alt = dds.axpy(-sw_coefficient_alt(n, p), &sdd).transfer(c, self.tf());
        let adj = self.normal_operator(1, phi)?;
        let scale = adj.max_abs().max(closed.max_abs());
        Ok(SteinWeiss {
            residual: rel_max(&closed, &adj, scale),
            alt_coefficient_residual: rel_max(&alt, &adj, scale),
            closed_form: closed,
            adjoint_route: adj,
        })
    }

    /// Closed form of `D₁*D₁`, failing when it drifts from the adjoint route.
    pub fn stein_weiss_checked(&self, phi: &Field, limit: f64) -> Result<Field> {
        let sw = self.stein_weiss_d1(phi)?;
        if sw.residual > limit {
            return Err(Error::ConventionBreach {
                check: "D1*D1 closed form vs adjoint",
                residual: sw.residual,
                limit,
            });
        }
        Ok(sw.closed_form)
    }

    /// `Σ_a Ric_{j_a}^k φ_{…k…} − Σ_{a≠b} R_{j_a}^k_{j_b}^l φ_{…k…l…}`.
    pub fn curvature_action(&self, phi: &Field) -> Result<Field> {
        self.check_input(phi)?;
        let c = self.cache;
        let (n, p) = (self.n(), self.p);
        let len = npow(n, p);
        let basis = c.algebra.basis(self.tf());
        let mut out = Field::zeros_on(c, self.tf());
        let d = out.dim();
        let mut t = vec![0.0; len];
        let stride = |a: usize| npow(n, p - 1 - a);
        for pt in 0..c.npts() {
            let ph = phi.frame_full(c, pt);
            let ric = c.ricci_frame(pt);
            let rm = c.riemann_frame(pt);
            for (idx, tv) in t.iter_mut().enumerate() {
                let mut acc = 0.0;
                for a in 0..p {
                    let sa = stride(a);
                    let ja = (idx / sa) % n;
                    let base = idx - ja * sa;
                    for k in 0..n {
                        acc += ric[ja * n + k] * ph[base + k * sa];
                    }
                    for b in 0..p {
                        if b == a {
                            continue;
                        }
                        let sb = stride(b);
                        let jb = (idx / sb) % n;
                        let base2 = base - jb * sb;
                        for k in 0..n {
                            for l in 0..n {
                                acc -= rm[((ja * n + k) * n + jb) * n + l]
                                    * ph[base2 + k * sa + l * sb];
                            }
                        }
                    }
                }
                *tv = acc;
            }
            basis.project(&t, &mut out.data[pt * d..(pt + 1) * d]);
        }
        Ok(out)
    }

    pub fn weitzenbock_k(&self, phi: &Field) -> Result<Weitzenbock> {
        self.check_input(phi)?;
        let c = self.cache;
        let rough = nabla_adjoint(c, &nabla(c, phi), self.tf())?;
        let s = self.sampson(phi)?;
        let sampson_trace = s.max_trace(c) / s.max_abs().max(1e-300);
        let k = rough.axpy(-1.0, &s.transfer(c, self.tf()));
        let oracle = self.curvature_action(phi)?;
        let scale = rough.max_abs().max(1e-300);
        let d = k.dim();
        let q_form = k
            .data
            .chunks(d)
            .zip(phi.data.chunks(d))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
            .collect();
        Ok(Weitzenbock {
            oracle_residual: rel_max(&k, &oracle, scale),
            k,
            oracle,
            sampson_trace,
            q_form,
        })
    }

    pub fn weitzenbock_identity(&self, phi: &Field) -> Result<IdentityResiduals> {
        self.check_input(phi)?;
        let c = self.cache;
        let (n, p) = (self.n(), self.p);
        let pf = p as f64;
        let cw = weitzenbock_c(n, p);
        let tf = self.tf();
        let ip = |a: &Field, b: &Field| l2_inner(c, a, b);

        let y = nabla(c, phi);
        let rough = nabla_adjoint(c, &y, tf)?;
        let scale = rough.max_abs().max(1e-300);
        let n1 = self.normal_operator(1, phi)?;
        let n2 = self.normal_operator(2, phi)?;
        let n3 = self.normal_operator(3, phi)?;
        let w = self.weitzenbock_k(phi)?;
        let sdd = self.delta_star_delta(phi).transfer(c, tf);
        let sw = self.stein_weiss_d1(phi)?;
        let sampson = self.sampson(phi)?.transfer(c, tf);

        let sampson_form = sampson
            .scaled(1.0 / (pf + 1.0))
            .axpy(pf / (pf + 1.0) * (1.0 - 2.0 / (n + 2 * p - 2) as f64), &sdd);

        let lhs41 = n1.scaled(pf + 1.0);
        let rhs41 = |k: &Field| rough.axpy(-1.0, k).axpy(cw, &sdd);
        let lhs43 = n1.scaled(pf).axpy(-1.0, &n2).axpy(-1.0, &n3);
        let rhs43 = w.oracle.scaled(-1.0).axpy(cw, &sdd);
        let sum = n1.axpy(1.0, &n2).axpy(1.0, &n3);

        let out = self.decompose(phi)?;
        let e1 = ip(&out.d1, &out.d1)?;
        let e2 = ip(&out.d2, &out.d2)?;
        let e3 = ip(&out.d3, &out.d3)?;
        let grad = ip(&y, &y)?.max(1e-300);
        let kphi = ip(&w.k, phi)?;
        let dphi = divergence(c, phi);
        let ddiv = ip(&dphi, &dphi)?;
        let s_phi = ip(&self.sampson(phi)?.transfer(c, tf), phi)?;
        let coef34 = pf * (n as f64 + 2.0 * (pf - 2.0)) / ((pf + 1.0) * (n as f64 + 2.0 * (pf - 1.0)));
        let dd = if p >= 2 {
            let v = divergence(c, &dphi);
            ip(&v, &v)?.sqrt() / grad.sqrt()
        } else {
            0.0
        };

        Ok(IdentityResiduals {
            sampson_form: rel_max(&sampson_form, &sw.closed_form, scale),
            weitzenbock_operational: rel_max(&lhs41, &rhs41(&w.k), scale),
            weitzenbock_oracle: rel_max(&lhs41, &rhs41(&w.oracle), scale),
            three_gradient: rel_max(&rough, &sum, scale),
            weitzenbock_split: rel_max(&lhs43, &rhs43, scale),
            integral_sum: ((pf + 1.0) * e1 - (-kphi + grad + cw * ddiv)).abs() / grad,
            integral_split: (pf * e1 - e2 - e3 - (-kphi + cw * ddiv)).abs() / grad,
            integral_sampson: (e1 - (s_phi / (pf + 1.0) + coef34 * ddiv)).abs() / grad,
            integral_sampson_minus: (e1 - (s_phi / (pf + 1.0) - coef34 * ddiv)).abs() / grad,
            double_divergence: dd,
            d1_energy: ip(&n1, phi)? / grad,
        })
    }

    /// Least-squares `λ` with `S*S ≈ λ D₁*D₁` for one-forms, where
    /// `S*S = 2δd + (4(n−1)/n) dδ − 4 Ric`.
    pub fn ahlfors_ratio(&self, phi: &Field) -> Result<(f64, f64)> {
        if self.p != 1 {
            return Err(Error::InvalidArgument("Ahlfors comparison needs p = 1".into()));
        }
        self.check_input(phi)?;
        let c = self.cache;
        let n = self.n();
        let full = crate::fields::nabla_to(c, phi, Bundle::Full(2));
        let mut dphi = full.clone();
        for pt in 0..c.npts() {
            let g = full.at(pt);
            let o = dphi.at_mut(pt);
            for i in 0..n {
                for j in 0..n {
                    o[i * n + j] = g[i * n + j] - g[j * n + i];
                }
            }
        }
        let delta_d = divergence(c, &dphi).transfer(c, self.tf());
        let d_delta = self.delta_star_delta(phi).transfer(c, self.tf());
        let ric = self.curvature_action(phi)?;
        let ss = delta_d
            .scaled(2.0)
            .axpy(4.0 * (n as f64 - 1.0) / n as f64, &d_delta)
            .axpy(-4.0, &ric);
        let dd = self.normal_operator(1, phi)?;
        let lambda = l2_inner(c, &ss, &dd)? / l2_inner(c, &dd, &dd)?.max(1e-300);
        let misfit = rel_max(&ss, &dd.scaled(lambda), ss.max_abs());
        Ok((lambda, misfit))
    }
}
