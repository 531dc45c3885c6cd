//! Pointwise spacetime geometry decoded from a 55-component state.

use nalgebra::Matrix4;

use super::{dg_slot, G_PAIRS};
use crate::fluid::{pair_index, PAIRS};

/// ∂_γ g_{αβ} stored as `d[γ][α][β]`.
pub type MetricDerivative = [[[f64; 4]; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGeometry {
    pub g: Matrix4<f64>,
    pub ginv: Matrix4<f64>,
    pub dg: MetricDerivative,
}

/// Minkowski metric η = diag(−1, 1, 1, 1) in pair storage order.
pub const ETA_PAIRS: [f64; 10] = [-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];

/// Metric derivative block of a state as a full tensor.
pub fn metric_derivative(u: &[f64]) -> MetricDerivative {
    let mut d = [[[0.0; 4]; 4]; 4];
    for (c, dc) in d.iter_mut().enumerate() {
        for (a, row) in dc.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = u[dg_slot(c, pair_index(a, b))];
            }
        }
    }
    d
}

impl PointGeometry {
    /// `None` when the metric is singular.
    pub fn from_state(u: &[f64]) -> Option<Self> {
        let g = Matrix4::from_fn(|a, b| ETA_PAIRS[pair_index(a, b)] + u[pair_index(a, b)]);
        let inv = g.try_inverse()?;
        if !inv.iter().all(|x| x.is_finite()) {
            return None;
        }
        // Exact symmetry keeps every assembled A^α exactly symmetric.
        let ginv = (inv + inv.transpose()) * 0.5;
        Some(PointGeometry { g, ginv, dg: metric_derivative(u) })
    }

    pub fn minkowski() -> Self {
        let g = Matrix4::from_fn(|a, b| ETA_PAIRS[pair_index(a, b)]);
        PointGeometry { g, ginv: g, dg: [[[0.0; 4]; 4]; 4] }
    }

    /// Γ_{μνλ} = ½(∂_ν g_{μλ} + ∂_λ g_{μν} − ∂_μ g_{νλ}).
    pub fn christoffel_lower(&self) -> [[[f64; 4]; 4]; 4] {
        christoffel_lower(&self.dg)
    }

    /// Γ^β_{νλ}.
    pub fn christoffel(&self) -> [[[f64; 4]; 4]; 4] {
        let low = self.christoffel_lower();
        let mut up = [[[0.0; 4]; 4]; 4];
        for (b, ub) in up.iter_mut().enumerate() {
            for (m, lm) in low.iter().enumerate() {
                let w = self.ginv[(b, m)];
                for n in 0..4 {
                    for l in 0..4 {
                        ub[n][l] += w * lm[n][l];
                    }
                }
            }
        }
        up
    }

    /// Γ_β = g^{γδ}(∂_γ g_{βδ} − ½∂_β g_{γδ}).
    pub fn harmonic_lower(&self) -> [f64; 4] {
        harmonic_lower(&self.ginv, &self.dg)
    }

    /// H^α = g^{αβ}Γ_β.
    pub fn harmonic(&self) -> [f64; 4] {
        let low = self.harmonic_lower();
        std::array::from_fn(|a| (0..4).map(|b| self.ginv[(a, b)] * low[b]).sum())
    }
}

pub fn christoffel_lower(d: &MetricDerivative) -> [[[f64; 4]; 4]; 4] {
    let mut out = [[[0.0; 4]; 4]; 4];
    for (m, om) in out.iter_mut().enumerate() {
        for n in 0..4 {
            for l in 0..4 {
                om[n][l] = 0.5 * (d[n][m][l] + d[l][m][n] - d[m][n][l]);
            }
        }
    }
    out
}

pub fn harmonic_lower(ginv: &Matrix4<f64>, d: &MetricDerivative) -> [f64; 4] {
    std::array::from_fn(|b| {
        let mut s = 0.0;
        for c in 0..4 {
            for e in 0..4 {
                s += ginv[(c, e)] * (d[c][b][e] - 0.5 * d[b][c][e]);
            }
        }
        s
    })
}

/// Q_{ab}(p, q) = g^{cd}g^{ef}(p_{ca,e}q_{db,f} − Γ[p]_{ace}Γ[q]_{bdf}), where
/// p_{ca,e} = ∂_e g_{ca}. For p = q this is the quadratic part of the reduced
/// Ricci tensor, R_{ab} = −½g^{cd}∂_c∂_d g_{ab} + ∇_{(a}Γ_{b)} + Q_{ab}.
pub fn quadratic_form(ginv: &Matrix4<f64>, p: &MetricDerivative, q: &MetricDerivative) -> [[f64; 4]; 4] {
    let gp = christoffel_lower(p);
    let gq = christoffel_lower(q);
    // Index a fixed: X_a(c, e) = ∂_e g_{ca}, raised on both slots as g⁻¹ X_a g⁻¹.
    let raised_p: [Matrix4<f64>; 4] = std::array::from_fn(|a| ginv * Matrix4::from_fn(|c, e| p[e][c][a]) * ginv);
    let raised_gp: [Matrix4<f64>; 4] = std::array::from_fn(|a| ginv * Matrix4::from(gp[a]).transpose() * ginv);
    let yq: [Matrix4<f64>; 4] = std::array::from_fn(|b| Matrix4::from_fn(|d, f| q[f][d][b]));
    let gq_m: [Matrix4<f64>; 4] = std::array::from_fn(|b| Matrix4::from(gq[b]).transpose());
    let mut out = [[0.0; 4]; 4];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = raised_p[a].dot(&yq[b]) - raised_gp[a].dot(&gq_m[b]);
        }
    }
    out
}

/// Symmetrised H_{ab}(p, q) = Q_{ab}(p, q) + Q_{ba}(p, q) in pair storage; H(p, p) is the
/// harmonic-gauge quadratic source H_{αβ}(g, ∂g) = 2Q_{αβ}.
pub fn quadratic_source(ginv: &Matrix4<f64>, p: &MetricDerivative, q: &MetricDerivative) -> [f64; G_PAIRS] {
    let m = quadratic_form(ginv, p, q);
    std::array::from_fn(|k| {
        let (a, b) = PAIRS[k];
        m[a][b] + m[b][a]
    })
}
