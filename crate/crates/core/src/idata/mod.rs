//! Reconstruction of fluid data (w, ū) from matter sources (z, j): the map Φ,
//! its two-dimensional reduction Θ, the admissible region Ω and a Newton inverse.

use nalgebra::{Matrix3, Vector3};

use crate::error::{EekError, Result};
use crate::fields::GridField;
use crate::fluid::EquationOfState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatterData {
    pub z: f64,
    pub j: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMatter {
    pub y: f64,
    pub v: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidDataPoint {
    pub w: f64,
    pub ubar: [f64; 3],
}

impl MatterData {
    /// y = z^{(γ−1)/2}, v = j/z, with v = 0 where z = 0.
    pub fn scaled(&self, eos: &EquationOfState) -> Result<ScaledMatter> {
        if !(self.z.is_finite() && self.z >= 0.0) {
            return Err(EekError::invalid(format!("energy density must be >= 0, got {}", self.z)));
        }
        let v = if self.z == 0.0 {
            [0.0; 3]
        } else {
            [self.j[0] / self.z, self.j[1] / self.z, self.j[2] / self.z]
        };
        Ok(ScaledMatter {
            y: self.z.powf(0.5 * (eos.gamma - 1.0)),
            v,
        })
    }
}

/// Validated spatial metric h_{ab}.
pub fn spatial_metric(h: Matrix3<f64>) -> Result<Matrix3<f64>> {
    if (h - h.transpose()).amax() > 1e-12 * h.amax().max(1.0) || h.cholesky().is_none() {
        return Err(EekError::invalid("spatial metric is not symmetric positive definite"));
    }
    Ok(h)
}

fn h_norm(h: &Matrix3<f64>, v: &[f64; 3]) -> f64 {
    let v = Vector3::from_column_slice(v);
    (v.transpose() * h * v)[0].max(0.0).sqrt()
}

/// Θ(w, ρ) = (y, x), the map Φ restricted to one velocity direction.
pub fn theta(eos: &EquationOfState, w: f64, rho: f64) -> (f64, f64) {
    let m = 0.5 * (eos.gamma - 1.0);
    let a = 1.0 + eos.k * w * w;
    let b = a * rho * rho;
    (w * (1.0 + b).powf(m), a * rho * (1.0 + rho * rho).sqrt() / (1.0 + b))
}

/// Jacobian of Θ with respect to (w, ρ), rows (y, x).
fn theta_derivatives(eos: &EquationOfState, w: f64, rho: f64) -> [[f64; 2]; 2] {
    let m = 0.5 * (eos.gamma - 1.0);
    let k = eos.k;
    let a = 1.0 + k * w * w;
    let r2 = rho * rho;
    let b = a * r2;
    let s = (1.0 + r2).sqrt();
    let pm = (1.0 + b).powf(m);
    let pm1 = (1.0 + b).powf(m - 1.0);
    let d2 = (1.0 + b) * (1.0 + b);
    [
        [pm + w * m * pm1 * 2.0 * k * w * r2, w * m * pm1 * 2.0 * a * rho],
        [2.0 * k * w * rho * s / d2, a * (1.0 + (2.0 - a) * r2) / (s * d2)],
    ]
}

pub fn phi_forward(eos: &EquationOfState, h: &Matrix3<f64>, point: &FluidDataPoint) -> Result<ScaledMatter> {
    if !(point.w >= 0.0 && point.w < eos.w_max()) {
        return Err(EekError::invalid(format!(
            "w = {} lies outside the causal strip [0, {})",
            point.w,
            eos.w_max()
        )));
    }
    let rho = h_norm(h, &point.ubar);
    let (y, x) = theta(eos, point.w, rho);
    // x/ρ → 1+Kw² as ρ → 0.
    let scale = if rho > 0.0 { x / rho } else { 1.0 + eos.k * point.w * point.w };
    Ok(ScaledMatter {
        y,
        v: [scale * point.ubar[0], scale * point.ubar[1], scale * point.ubar[2]],
    })
}

/// Middle map G(ε, ρ) = (ε + (ε+p)ρ², (ε+p)ρ√(1+ρ²)) = (z, |j|).
pub fn g_map(eos: &EquationOfState, epsilon: f64, rho: f64) -> (f64, f64) {
    let p = eos.k * epsilon.powf(eos.gamma);
    (epsilon + (epsilon + p) * rho * rho, (epsilon + p) * rho * (1.0 + rho * rho).sqrt())
}

/// det DG = (ε+p)(1 + ρ²(1−σ²))/√(1+ρ²); the flag marks the vacuum boundary ε = 0.
pub fn theta_jacobian(eos: &EquationOfState, epsilon: f64, rho: f64) -> (f64, bool) {
    if epsilon <= 0.0 {
        return (0.0, true);
    }
    let p = eos.k * epsilon.powf(eos.gamma);
    let sigma2 = eos.gamma * eos.k * epsilon.powf(eos.gamma - 1.0);
    ((epsilon + p) * (1.0 + rho * rho * (1.0 - sigma2)) / (1.0 + rho * rho).sqrt(), false)
}

/// Image of the strip edge w = (γK)^{−1/2} under Θ, as ρ ↦ (x(ρ), y(ρ)).
fn edge_point(eos: &EquationOfState, rho: f64) -> (f64, f64) {
    let (y, x) = theta(eos, eos.w_max(), rho);
    (x, y)
}

/// Graph of the boundary curve y = s(x) sampled at `count` parameter values
/// ρ ∈ [0, ρ_max] spaced so that x covers [0, 1).
pub fn boundary_curve(eos: &EquationOfState, count: usize) -> Vec<(f64, f64)> {
    let count = count.max(2);
    (0..count)
        .map(|i| {
            // ρ = tan θ spreads the samples over the whole range of x.
            let th = 0.5 * std::f64::consts::PI * i as f64 / count as f64;
            edge_point(eos, th.tan())
        })
        .collect()
}

/// s(x): the largest admissible y at |v|_h = x, from the closed-form inverse of x(ρ).
pub fn boundary_s(eos: &EquationOfState, x: f64) -> f64 {
    let c = 1.0 + eos.k * eos.w_max() * eos.w_max();
    let m = 0.5 * (eos.gamma - 1.0);
    let x2 = x * x;
    let a = c * c * (1.0 - x2);
    let b = c * c - 2.0 * c * x2;
    let disc = (b * b + 4.0 * a * x2).sqrt();
    let t = if b >= 0.0 { 2.0 * x2 / (b + disc) } else { (disc - b) / (2.0 * a) };
    eos.w_max() * (1.0 + c * t).powf(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseOptions {
    /// Relative distance from ∂Ω below which inputs are rejected.
    pub margin: f64,
    pub max_iterations: usize,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            margin: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Checks membership of Ω with margin, naming the violated inequality.
pub fn check_omega(eos: &EquationOfState, h: &Matrix3<f64>, sm: &ScaledMatter, margin: f64) -> Result<f64> {
    let q = h_norm(h, &sm.v);
    if !(sm.y >= 0.0) {
        return Err(EekError::RegionViolation(format!("y = {} is negative", sm.y)));
    }
    if q > 1.0 - margin {
        return Err(EekError::RegionViolation(format!("|v|_h = {q} is not below 1 - {margin:e}")));
    }
    let s = boundary_s(eos, q);
    if sm.y > (1.0 - margin) * s {
        return Err(EekError::RegionViolation(format!(
            "y = {} is not below (1 - {margin:e}) s(|v|_h) = {}",
            sm.y,
            (1.0 - margin) * s
        )));
    }
    Ok(q)
}

pub fn phi_inverse(eos: &EquationOfState, h: &Matrix3<f64>, sm: &ScaledMatter) -> Result<FluidDataPoint> {
    phi_inverse_with(eos, h, sm, InverseOptions::default())
}

pub fn phi_inverse_with(eos: &EquationOfState, h: &Matrix3<f64>, sm: &ScaledMatter, opts: InverseOptions) -> Result<FluidDataPoint> {
    let q = check_omega(eos, h, sm, opts.margin)?;
    let (w, rho) = invert_theta(eos, sm.y, q, opts.max_iterations)?;
    let scale = if q > 0.0 { rho / q } else { 0.0 };
    Ok(FluidDataPoint {
        w,
        ubar: [scale * sm.v[0], scale * sm.v[1], scale * sm.v[2]],
    })
}

/// Newton iteration safeguarded by a sign bracket [lo, hi] of an increasing f.
fn bracketed_root(mut f: impl FnMut(f64) -> (f64, f64), mut lo: f64, mut hi: f64, max_iterations: usize) -> (f64, f64) {
    let mut t = 0.5 * (lo + hi);
    let mut best = (t, f64::INFINITY);
    for _ in 0..max_iterations {
        let (v, dv) = f(t);
        if v.abs() < best.1 {
            best = (t, v.abs());
        }
        if v == 0.0 {
            break;
        }
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let step = t - v / dv;
        let next = if dv > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 1e-16 * t.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            t = next;
            let (v, _) = f(t);
            if v.abs() < best.1 {
                best = (t, v.abs());
            }
            break;
        }
        t = next;
    }
    best
}

/// Solves Θ(w, ρ) = (y, q) on the strip. For fixed w the second component is increasing
/// in ρ, and along its level set the first is increasing in w, so both solves are bracketed.
fn invert_theta(eos: &EquationOfState, y: f64, q: f64, max_iterations: usize) -> Result<(f64, f64)> {
    let rho0 = q / (1.0 - q * q).sqrt();
    if y == 0.0 {
        return Ok((0.0, rho0));
    }
    if q == 0.0 {
        return Ok((y, 0.0));
    }
    let rho_of = |w: f64| {
        let mut hi = rho0.max(1.0);
        while theta(eos, w, hi).1 < q {
            hi *= 2.0;
        }
        let f = |rho: f64| (theta(eos, w, rho).1 - q, theta_derivatives(eos, w, rho)[1][1]);
        bracketed_root(f, 0.0, hi, max_iterations).0
    };
    let outer = |w: f64| {
        let rho = rho_of(w);
        let jm = theta_derivatives(eos, w, rho);
        // dy/dw along the level set of x.
        let slope = jm[0][0] - jm[0][1] * jm[1][0] / jm[1][1];
        (theta(eos, w, rho).0 - y, slope)
    };
    let (w, _) = bracketed_root(outer, 0.0, eos.w_max(), max_iterations);
    let rho = rho_of(w);
    let (ty, tx) = theta(eos, w, rho);
    let size = ((ty - y) / y).abs().max(((tx - q) / q).abs());
    if size <= 1e-12 {
        Ok((w, rho))
    } else {
        Err(EekError::Convergence {
            stage: "phi_inverse".into(),
            iterations: max_iterations,
            residual: size,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum U0Convention {
    /// ū⁰ = 1 + h_{ab}ūᵃūᵇ.
    Linear,
    /// ū⁰ = √(1 + h_{ab}ūᵃūᵇ), the value that makes g(u, u) = −1.
    #[default]
    Sqrt,
}

impl std::str::FromStr for U0Convention {
    type Err = EekError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(U0Convention::Linear),
            "sqrt" => Ok(U0Convention::Sqrt),
            other => Err(EekError::invalid(format!("unknown u0 convention `{other}` (linear|sqrt)"))),
        }
    }
}

/// (ū⁰, ū¹, ū², ū³).
pub fn full_velocity(h: &Matrix3<f64>, point: &FluidDataPoint, convention: U0Convention) -> [f64; 4] {
    let r2 = h_norm(h, &point.ubar).powi(2);
    let u0 = match convention {
        U0Convention::Linear => 1.0 + r2,
        U0Convention::Sqrt => (1.0 + r2).sqrt(),
    };
    [u0, point.ubar[0], point.ubar[1], point.ubar[2]]
}

/// Symmetric 3×3 matrix from components xx, xy, xz, yy, yz, zz at a grid node.
pub fn sym3_at(f: &GridField, idx: usize) -> Matrix3<f64> {
    let c = |k| f.at(k, idx);
    Matrix3::new(c(0), c(1), c(2), c(1), c(3), c(4), c(2), c(4), c(5))
}

/// Grid-wide reconstruction of (w, ū¹, ū², ū³, ū⁰) from (z, j¹, j², j³).
///
/// `j` carries the sign of the momentum constraint D_bK^{ab} − D^a trK = −8πj^a,
/// so the fluid momentum (ε+p)ū⁰ūᵃ equals −jᵃ and Φ is inverted at v = −j/z.
pub fn reconstruct_fluid(eos: &EquationOfState, matter: &GridField, h: &GridField, convention: U0Convention, opts: InverseOptions) -> Result<GridField> {
    if matter.components() != 4 || h.components() != 6 || matter.grid() != h.grid() {
        return Err(EekError::ShapeMismatch(
            "reconstruction needs 4 matter and 6 metric components on one grid".into(),
        ));
    }
    let grid = *matter.grid();
    let n3 = grid.len();
    let mut out = vec![0.0; 5 * n3];
    for idx in 0..n3 {
        let hm = spatial_metric(sym3_at(h, idx)).map_err(|_| EekError::NotPositiveDefinite {
            location: grid.unravel(idx),
        })?;
        let md = MatterData {
            z: matter.at(0, idx),
            j: [-matter.at(1, idx), -matter.at(2, idx), -matter.at(3, idx)],
        };
        let sm = md.scaled(eos)?;
        let pt = phi_inverse_with(eos, &hm, &sm, opts).map_err(|e| match e {
            EekError::RegionViolation(m) => EekError::RegionViolation(format!("at grid point {:?}: {m}", grid.unravel(idx))),
            other => other,
        })?;
        let u = full_velocity(&hm, &pt, convention);
        out[idx] = pt.w;
        for a in 0..3 {
            out[(1 + a) * n3 + idx] = pt.ubar[a];
        }
        out[4 * n3 + idx] = u[0];
    }
    GridField::new(grid, 5, out)
}
