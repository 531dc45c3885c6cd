//! Polytropic equation of state, Makino variable and the symmetric 5×5 Euler
//! matrices with their characteristic analysis.

use nalgebra::{Matrix4, Matrix5, SymmetricEigen, Vector4};

use crate::error::{EekError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquationOfState {
    pub k: f64,
    pub gamma: f64,
}

impl EquationOfState {
    pub fn new(k: f64, gamma: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(EekError::invalid(format!("K must be positive, got {k}")));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(EekError::invalid(format!("gamma must exceed 1, got {gamma}")));
        }
        Ok(EquationOfState { k, gamma })
    }

    /// Largest causal Makino variable, (γK)^{−1/2}.
    pub fn w_max(&self) -> f64 {
        1.0 / (self.gamma * self.k).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EosQuantities {
    pub epsilon: f64,
    pub p: f64,
    pub sigma2: f64,
    pub kappa: f64,
}

/// ε = w^{2/(γ−1)}, p = Kε^γ, σ² = γKw², κ = (γ−1)/2·√(Kγ)/(1+Kw²).
pub fn eos_quantities(eos: &EquationOfState, w: f64) -> Result<EosQuantities> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(EekError::invalid(format!("Makino variable must be >= 0, got {w}")));
    }
    Ok(eos_unchecked(eos, w))
}

#[inline]
pub(crate) fn eos_unchecked(eos: &EquationOfState, w: f64) -> EosQuantities {
    let EquationOfState { k, gamma } = *eos;
    let w = w.max(0.0);
    let epsilon = w.powf(2.0 / (gamma - 1.0));
    EosQuantities {
        epsilon,
        p: k * epsilon.powf(gamma),
        sigma2: gamma * k * w * w,
        kappa: 0.5 * (gamma - 1.0) * (k * gamma).sqrt() / (1.0 + k * w * w),
    }
}

/// Open interval of Sobolev orders for which the evolution theory applies.
pub fn admissible_s_range(gamma: f64) -> (f64, f64) {
    (3.5, 2.0 / (gamma - 1.0) + 1.5)
}

pub fn check_s_admissible(gamma: f64, s: f64) -> Result<()> {
    let (lo, hi) = admissible_s_range(gamma);
    if s > lo && s < hi {
        Ok(())
    } else if lo >= hi {
        Err(EekError::invalid(format!(
            "no admissible Sobolev order for gamma = {gamma}: ({lo}, {hi}) is empty"
        )))
    } else {
        Err(EekError::invalid(format!("s = {s} lies outside the admissible interval ({lo}, {hi})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidState {
    pub w: f64,
    /// Contravariant four-velocity u^α.
    pub u: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeMetric {
    g: Matrix4<f64>,
    g_inv: Matrix4<f64>,
}

impl SpacetimeMetric {
    /// Validates symmetry, invertibility and Lorentzian signature.
    pub fn new(g: Matrix4<f64>) -> Result<Self> {
        let scale = g.amax().max(1.0);
        if (g - g.transpose()).amax() > 1e-12 * scale {
            return Err(EekError::invalid("metric is not symmetric"));
        }
        let g_inv = g
            .try_inverse()
            .ok_or_else(|| EekError::invalid("metric is singular"))?;
        let eig = SymmetricEigen::new(g).eigenvalues;
        let negatives = eig.iter().filter(|&&e| e < 0.0).count();
        if negatives != 1 || eig.iter().any(|e| e.abs() < 1e-14 * scale) {
            return Err(EekError::invalid(format!(
                "metric signature is not (-,+,+,+): eigenvalues {:?}",
                eig.as_slice()
            )));
        }
        Ok(SpacetimeMetric { g, g_inv })
    }

    pub fn minkowski() -> Self {
        let g = Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0));
        SpacetimeMetric { g, g_inv: g }
    }

    /// From the ten independent components in the order 00,01,02,03,11,12,13,22,23,33.
    pub fn from_pairs(c: &[f64; 10]) -> Result<Self> {
        SpacetimeMetric::new(pairs_to_matrix(c))
    }

    pub fn g(&self) -> &Matrix4<f64> {
        &self.g
    }

    pub fn g_inv(&self) -> &Matrix4<f64> {
        &self.g_inv
    }

    pub fn lower(&self, u: &[f64; 4]) -> [f64; 4] {
        let v = self.g * Vector4::from_column_slice(u);
        [v[0], v[1], v[2], v[3]]
    }

    pub fn dot(&self, u: &[f64; 4], v: &[f64; 4]) -> f64 {
        (Vector4::from_column_slice(u).transpose() * self.g * Vector4::from_column_slice(v))[0]
    }

    /// g^{αβ}ξ_αξ_β for a covector ξ.
    pub fn co_norm(&self, xi: &[f64; 4]) -> f64 {
        let x = Vector4::from_column_slice(xi);
        (x.transpose() * self.g_inv * x)[0]
    }
}

/// Symmetric index pairs (α, β), α ≤ β, in storage order.
pub const PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Storage slot of the symmetric pair (α, β).
#[inline]
pub fn pair_index(a: usize, b: usize) -> usize {
    const MAP: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];
    MAP[a][b]
}

pub fn pairs_to_matrix(c: &[f64; 10]) -> Matrix4<f64> {
    Matrix4::from_fn(|a, b| c[pair_index(a, b)])
}

/// g(u,u) + 1.
pub fn normalization_residual(g: &SpacetimeMetric, u: &[f64; 4]) -> f64 {
    g.dot(u, u) + 1.0
}

fn require_timelike(g: &SpacetimeMetric, u: &[f64; 4]) -> Result<f64> {
    let uu = g.dot(u, u);
    if uu.is_nan() || uu >= 0.0 {
        return Err(EekError::invalid(format!("four-velocity is not timelike: g(u,u) = {uu}")));
    }
    Ok(uu)
}

/// Lowered projector P_{αβ} = g_{αβ} + u_αu_β and Γ_{αβ} = g_{αβ} + 2u_αu_β.
pub fn projection_and_reflection(g: &SpacetimeMetric, u: &[f64; 4]) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
    require_timelike(g, u)?;
    let ul = Vector4::from(g.lower(u));
    let uu = ul * ul.transpose();
    Ok((g.g() + uu, g.g() + 2.0 * uu))
}

/// A^0..A^3 of the symmetric Euler system in the unknowns (w, u^α).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerMatrices {
    pub a: [Matrix5<f64>; 4],
}

impl EulerMatrices {
    /// ξ_νA^ν.
    pub fn contract(&self, xi: &[f64; 4]) -> Matrix5<f64> {
        self.a[0] * xi[0] + self.a[1] * xi[1] + self.a[2] * xi[2] + self.a[3] * xi[3]
    }
}

/// Builds A^ν from κ, σ, u^α, u_α and g_{αβ}. No validation.
#[inline]
pub fn euler_matrix(nu: usize, kappa: f64, sigma: f64, u: &[f64; 4], ul: &[f64; 4], g: &Matrix4<f64>) -> Matrix5<f64> {
    let mut m = Matrix5::zeros();
    m[(0, 0)] = kappa * kappa * u[nu];
    for b in 0..4 {
        let p = if b == nu { 1.0 } else { 0.0 } + u[nu] * ul[b];
        m[(0, b + 1)] = sigma * kappa * p;
        m[(b + 1, 0)] = sigma * kappa * p;
        for c in 0..4 {
            m[(b + 1, c + 1)] = (g[(b, c)] + 2.0 * ul[b] * ul[c]) * u[nu];
        }
    }
    m
}

pub fn euler_matrices(eos: &EquationOfState, g: &SpacetimeMetric, state: &FluidState) -> Result<EulerMatrices> {
    let q = eos_quantities(eos, state.w)?;
    if q.sigma2 >= 1.0 {
        return Err(EekError::Hyperbolicity { sigma2: q.sigma2 });
    }
    require_timelike(g, &state.u)?;
    let ul = g.lower(&state.u);
    let sigma = q.sigma2.sqrt();
    Ok(EulerMatrices {
        a: std::array::from_fn(|nu| euler_matrix(nu, q.kappa, sigma, &state.u, &ul, g.g())),
    })
}

/// −κ² det(g) (u·ξ)³ {(u·ξ)² − σ² P^{αβ}ξ_αξ_β}.
pub fn q_closed_form(kappa: f64, sigma2: f64, g: &SpacetimeMetric, u: &[f64; 4], xi: &[f64; 4]) -> f64 {
    let ux: f64 = (0..4).map(|a| u[a] * xi[a]).sum();
    let pxx = g.co_norm(xi) + ux * ux;
    -kappa * kappa * g.g().determinant() * ux.powi(3) * (ux * ux - sigma2 * pxx)
}

/// Numerical det(ξ·A) and the closed form Q(ξ).
pub fn characteristic_det(eos: &EquationOfState, g: &SpacetimeMetric, state: &FluidState, xi: &[f64; 4]) -> Result<(f64, f64)> {
    let m = euler_matrices(eos, g, state)?;
    let q = eos_quantities(eos, state.w)?;
    Ok((m.contract(xi).determinant(), q_closed_form(q.kappa, q.sigma2, g, &state.u, xi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Hyperplane,
    SoundCone,
    NonCharacteristic,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Hyperplane => "hyperplane",
            Classification::SoundCone => "sound-cone",
            Classification::NonCharacteristic => "non-characteristic",
        }
    }
}

/// Which factor of Q(ξ) vanishes, with a relative tolerance.
pub fn classify(sigma2: f64, g: &SpacetimeMetric, u: &[f64; 4], xi: &[f64; 4], tol: f64) -> Classification {
    let ux: f64 = (0..4).map(|a| u[a] * xi[a]).sum();
    let scale = xi.iter().map(|x| x * x).sum::<f64>() * u.iter().map(|x| x * x).sum::<f64>();
    let cone = sound_cone_margin(g, u, sigma2, xi);
    if ux * ux <= tol * scale.max(1e-300) {
        Classification::Hyperplane
    } else if cone.abs() <= tol * scale.max(1e-300) {
        Classification::SoundCone
    } else {
        Classification::NonCharacteristic
    }
}

/// (u·ξ)² − σ²P^{αβ}ξ_αξ_β.
pub fn sound_cone_margin(g: &SpacetimeMetric, u: &[f64; 4], sigma2: f64, xi: &[f64; 4]) -> f64 {
    let ux: f64 = (0..4).map(|a| u[a] * xi[a]).sum();
    ux * ux - sigma2 * (g.co_norm(xi) + ux * ux)
}

/// Evaluates the sound-cone margin at `t_covector`; positive means the covector
/// is spacelike for the fluid cone.
pub fn spacelike_check(eos: &EquationOfState, g: &SpacetimeMetric, state: &FluidState, t_covector: &[f64; 4]) -> Result<(bool, f64)> {
    let q = eos_quantities(eos, state.w)?;
    let m = sound_cone_margin(g, &state.u, q.sigma2, t_covector);
    Ok((m > 0.0, m))
}

/// Eigenvalues of A⁰, ascending.
pub fn a0_spectrum(m: &EulerMatrices) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(m.a[0]).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    e
}

/// Future-directed unit four-velocity with spatial part `spatial` for metric `g`.
pub fn unit_velocity(g: &SpacetimeMetric, spatial: [f64; 3]) -> Result<[f64; 4]> {
    let m = g.g();
    let a = m[(0, 0)];
    let b: f64 = 2.0 * (0..3).map(|i| m[(0, i + 1)] * spatial[i]).sum::<f64>();
    let c: f64 = 1.0
        + (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| m[(i + 1, j + 1)] * spatial[i] * spatial[j])
            .sum::<f64>();
    let disc = b * b - 4.0 * a * c;
    if a >= 0.0 || disc < 0.0 {
        return Err(EekError::invalid("no timelike completion of the spatial velocity"));
    }
    let u0 = (-b - disc.sqrt()) / (2.0 * a);
    if u0 <= 0.0 {
        return Err(EekError::invalid("no future-directed completion of the spatial velocity"));
    }
    Ok([u0, spatial[0], spatial[1], spatial[2]])
}
