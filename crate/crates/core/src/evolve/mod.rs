//! Coupled Einstein–Euler evolution: the 55-component first-order state, a
//! fourth-order method-of-lines RK4 stepper with Kreiss–Oliger dissipation,
//! A⁰-weighted energy monitors and the frozen-coefficient Picard iteration.

pub mod geometry;
mod system;

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector4};

pub use geometry::{christoffel_lower, harmonic_lower, metric_derivative, quadratic_form, quadratic_source, PointGeometry, ETA_PAIRS};
pub use system::{assemble_einstein_system, default_mu, EinsteinEuler, FirstOrderSystem, LinearWave, SystemRegistry};

use crate::constraints::{constraint_residuals, GravitationalData, RESIDUAL_MARGIN};
use crate::error::{EekError, Result};
use crate::fields::{stencil, Grid, GridField, SobolevIndex, Spectral};
use crate::fluid::{check_s_admissible, eos_unchecked, pair_index, EquationOfState, PAIRS};
use crate::idata::{reconstruct_fluid, InverseOptions, U0Convention};
use crate::spaces::{weighted_norm, DyadicPartition};

pub const STATE_COMPONENTS: usize = 55;
/// Independent components of a symmetric 4-tensor.
pub const G_PAIRS: usize = 10;
pub const DG_OFFSET: usize = 10;
pub const FLUID_OFFSET: usize = 50;

/// Slot of ∂_γ g_{pair}; γ = 0 is the time derivative, stored after the three spatial ones.
#[inline]
pub fn dg_slot(gamma: usize, pair: usize) -> usize {
    if gamma == 0 {
        40 + pair
    } else {
        DG_OFFSET + 10 * (gamma - 1) + pair
    }
}

/// U = (g_{αβ} − η_{αβ}, ∂_a g_{αβ}, ∂_0 g_{αβ}, w, uᵃ, u⁰ − 1) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    field: GridField,
}

impl StateVector {
    pub fn new(field: GridField) -> Result<Self> {
        if field.components() != STATE_COMPONENTS {
            return Err(EekError::ShapeMismatch(format!(
                "evolution state needs {STATE_COMPONENTS} components, got {}",
                field.components()
            )));
        }
        Ok(StateVector { field })
    }

    pub fn zeros(grid: Grid) -> Self {
        StateVector { field: GridField::zeros(grid, STATE_COMPONENTS) }
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn into_field(self) -> GridField {
        self.field
    }

    pub fn g_dev(&self) -> GridField {
        self.field.extract_range(0, G_PAIRS)
    }

    pub fn dg(&self) -> GridField {
        self.field.extract_range(DG_OFFSET, 40)
    }

    pub fn fluid(&self) -> GridField {
        self.field.extract_range(FLUID_OFFSET, 5)
    }

    /// All components at one node.
    pub fn point(&self, idx: usize) -> [f64; STATE_COMPONENTS] {
        let n3 = self.grid().len();
        let d = self.field.data();
        std::array::from_fn(|c| d[c * n3 + idx])
    }

    /// Checks that g is Lorentzian with spacelike slices t = const at every node.
    pub fn check_lorentzian(&self) -> Result<()> {
        let grid = *self.grid();
        for idx in 0..grid.len() {
            let u = self.point(idx);
            let geo = PointGeometry::from_state(&u).ok_or(EekError::SingularMetric { location: grid.unravel(idx) })?;
            let spatial: Matrix3<f64> = geo.g.fixed_view::<3, 3>(1, 1).into_owned();
            if geo.ginv[(0, 0)] >= 0.0 || spatial.cholesky().is_none() {
                return Err(EekError::NotPositiveDefinite { location: grid.unravel(idx) });
            }
        }
        Ok(())
    }
}

fn locate(err: EekError, grid: &Grid, idx: usize) -> EekError {
    let location = grid.unravel(idx);
    match err {
        EekError::SingularMetric { .. } => EekError::SingularMetric { location },
        EekError::NotPositiveDefinite { .. } => EekError::NotPositiveDefinite { location },
        EekError::Numerical { stage, detail } => EekError::Numerical {
            stage,
            detail: format!("{detail} at grid point {location:?}"),
        },
        other => other,
    }
}

/// Reconstructs the fluid from the matter of `gd` and builds the initial state; returns
/// the fluid field (w, ū¹, ū², ū³, ū⁰) alongside the state.
pub fn state_from_data(gd: &GravitationalData, eos: &EquationOfState) -> Result<(GridField, StateVector)> {
    let fluid0 = reconstruct_fluid(eos, &gd.matter(), &gd.h, U0Convention::default(), InverseOptions::default())?;
    let state = initial_state(gd, &fluid0)?;
    Ok((fluid0, state))
}

/// Evolution data on the initial slice: g_{ab} = h_{ab}, g_{0a} = 0, g_{00} = −1,
/// ∂_0g_{ab} = −2K_{ab}, spatial derivatives by fourth-order differences and
/// ∂_0g_{0α} chosen so that the harmonic condition holds pointwise.
///
/// `fluid0` holds (w, ū¹, ū², ū³, ū⁰) as produced by the reconstruction.
pub fn initial_state(gd: &GravitationalData, fluid0: &GridField) -> Result<StateVector> {
    let grid = *gd.grid();
    if fluid0.grid() != &grid || fluid0.components() != 5 {
        return Err(EekError::ShapeMismatch(format!(
            "fluid data must have 5 components on the gravitational data grid (n = {}, L = {}), got {} components on n = {}, L = {}",
            grid.n(),
            grid.half_width(),
            fluid0.components(),
            fluid0.grid().n(),
            fluid0.grid().half_width()
        )));
    }
    let n3 = grid.len();
    let mut data = vec![0.0; STATE_COMPONENTS * n3];
    // Spatial metric pairs 4..9 share the xx, xy, xz, yy, yz, zz order of 3×3 fields.
    for s in 0..6 {
        let (a, b) = PAIRS[4 + s];
        let delta = if a == b { 1.0 } else { 0.0 };
        let h = gd.h.component(s);
        let k = gd.kext.component(s);
        let pair = 4 + s;
        for i in 0..n3 {
            data[pair * n3 + i] = h[i] - delta;
            data[dg_slot(0, pair) * n3 + i] = -2.0 * k[i];
        }
        for axis in 0..3 {
            let d = stencil::diff1_order4(&data[pair * n3..(pair + 1) * n3].to_vec(), &grid, axis);
            data[dg_slot(axis + 1, pair) * n3..][..n3].copy_from_slice(&d);
        }
    }
    for c in 0..4 {
        let f = fluid0.component(c);
        data[(FLUID_OFFSET + c) * n3..][..n3].copy_from_slice(f);
    }
    let u0 = fluid0.component(4);
    for i in 0..n3 {
        data[(FLUID_OFFSET + 4) * n3 + i] = u0[i] - 1.0;
    }
    let mut state = StateVector::new(GridField::new(grid, STATE_COMPONENTS, data)?)?;
    impose_harmonic_time_derivatives(&mut state)?;
    Ok(state)
}

/// Solves the four linear equations Γ_β = 0 for ∂_0g_{0α} at every node.
fn impose_harmonic_time_derivatives(state: &mut StateVector) -> Result<()> {
    let grid = *state.grid();
    let n3 = grid.len();
    for idx in 0..n3 {
        let mut u = state.point(idx);
        for a in 0..4 {
            u[dg_slot(0, pair_index(0, a))] = 0.0;
        }
        let geo = PointGeometry::from_state(&u).ok_or(EekError::SingularMetric { location: grid.unravel(idx) })?;
        let base = Vector4::from(geo.harmonic_lower());
        let mut m = Matrix4::zeros();
        for a in 0..4 {
            let mut d = geo.dg;
            d[0][0][a] += 1.0;
            if a != 0 {
                d[0][a][0] += 1.0;
            }
            let col = Vector4::from(harmonic_lower(&geo.ginv, &d)) - base;
            m.set_column(a, &col);
        }
        let x = m.lu().solve(&(-base)).ok_or_else(|| EekError::Numerical {
            stage: "initial-state".into(),
            detail: format!("harmonic gauge system is singular at grid point {:?}", grid.unravel(idx)),
        })?;
        let data = state.field.data_mut();
        for a in 0..4 {
            data[dg_slot(0, pair_index(0, a)) * n3 + idx] = x[a];
        }
    }
    Ok(())
}

/// Fluid at rest in vacuum: w = 0, ū = 0, ū⁰ = 1.
pub fn flat_fluid(grid: Grid) -> GridField {
    GridField::from_fn(grid, 5, |_, out| {
        out.fill(0.0);
        out[4] = 1.0;
    })
}

fn zero_margin(values: &mut [f64], components: usize, grid: &Grid) {
    let n = grid.n();
    let n3 = grid.len();
    for i in 0..n3 {
        if grid.unravel(i).iter().any(|&c| c < RESIDUAL_MARGIN || c + RESIDUAL_MARGIN >= n) {
            for c in 0..components {
                values[c * n3 + i] = 0.0;
            }
        }
    }
}

/// H^α = g^{αβ}g^{γδ}(∂_γg_{βδ} − ½∂_βg_{γδ}) with spatial derivatives re-taken from the
/// evolved metric by centred second-order differences and time derivatives from the
/// ∂_0g block. Face layers of width [`RESIDUAL_MARGIN`] are zeroed.
pub fn harmonic_residual(state: &StateVector) -> Result<GridField> {
    let grid = *state.grid();
    let n3 = grid.len();
    let dspat: Vec<[Vec<f64>; 3]> = (0..G_PAIRS)
        .map(|p| std::array::from_fn(|a| stencil::diff1(state.field.component(p), &grid, a)))
        .collect();
    let mut out = vec![0.0; 4 * n3];
    for idx in 0..n3 {
        let mut u = state.point(idx);
        for p in 0..G_PAIRS {
            for a in 0..3 {
                u[dg_slot(a + 1, p)] = dspat[p][a][idx];
            }
        }
        let geo = PointGeometry::from_state(&u).ok_or(EekError::SingularMetric { location: grid.unravel(idx) })?;
        let h = geo.harmonic();
        for a in 0..4 {
            out[a * n3 + idx] = h[a];
        }
    }
    zero_margin(&mut out, 4, &grid);
    GridField::new(grid, 4, out)
}

/// g(u, u) + 1 at every node, face layers zeroed.
pub fn normalization_field(state: &StateVector) -> Result<GridField> {
    let grid = *state.grid();
    let n3 = grid.len();
    let mut out = vec![0.0; n3];
    for (idx, o) in out.iter_mut().enumerate() {
        let p = state.point(idx);
        let u = [1.0 + p[FLUID_OFFSET + 4], p[FLUID_OFFSET + 1], p[FLUID_OFFSET + 2], p[FLUID_OFFSET + 3]];
        let mut s = 1.0;
        for a in 0..4 {
            for b in 0..4 {
                s += (ETA_PAIRS[pair_index(a, b)] + p[pair_index(a, b)]) * u[a] * u[b];
            }
        }
        *o = s;
    }
    zero_margin(&mut out, 1, &grid);
    GridField::new(grid, 1, out)
}

/// Induced data on the slice t = const: h_{ab} = g_{ab}, K_{ab} = −(∂_tg_{ab} − D_aβ_b − D_bβ_a)/2N
/// with β_a = g_{0a}, z = T(n, n), jᵃ = hᵃᵇT(e_b, n), lapse N stored in `alpha`. The sign of j
/// matches the constraint module, where the fluid momentum is −j.
pub fn slice_data(state: &StateVector, eos: &EquationOfState) -> Result<GravitationalData> {
    let grid = *state.grid();
    let n3 = grid.len();
    let mut h = vec![0.0; 6 * n3];
    let mut k = vec![0.0; 6 * n3];
    let mut z = vec![0.0; n3];
    let mut j = vec![0.0; 3 * n3];
    let mut lapse = vec![0.0; n3];
    for idx in 0..n3 {
        let u = state.point(idx);
        let geo = PointGeometry::from_state(&u).ok_or(EekError::SingularMetric { location: grid.unravel(idx) })?;
        let spatial: Matrix3<f64> = geo.g.fixed_view::<3, 3>(1, 1).into_owned();
        let hinv = spatial.try_inverse().ok_or(EekError::NotPositiveDefinite { location: grid.unravel(idx) })?;
        let g00 = geo.ginv[(0, 0)];
        if g00 >= 0.0 {
            return Err(EekError::NotPositiveDefinite { location: grid.unravel(idx) });
        }
        let n = 1.0 / (-g00).sqrt();
        lapse[idx] = n;
        let d = &geo.dg;
        // Γ^c_{ab} of the spatial metric from the evolved derivative block.
        let gam3 = |c: usize, a: usize, b: usize| -> f64 {
            (0..3)
                .map(|e| 0.5 * hinv[(c, e)] * (d[a + 1][e + 1][b + 1] + d[b + 1][e + 1][a + 1] - d[e + 1][a + 1][b + 1]))
                .sum()
        };
        for (s, &(a4, b4)) in PAIRS[4..].iter().enumerate() {
            let (a, b) = (a4 - 1, b4 - 1);
            h[s * n3 + idx] = geo.g[(a4, b4)];
            let dbeta = |x: usize, y: usize| -> f64 {
                d[x + 1][0][y + 1] - (0..3).map(|c| gam3(c, x, y) * geo.g[(0, c + 1)]).sum::<f64>()
            };
            k[s * n3 + idx] = -(d[0][a4][b4] - dbeta(a, b) - dbeta(b, a)) / (2.0 * n);
        }
        let q = eos_unchecked(eos, u[FLUID_OFFSET]);
        if q.epsilon > 0.0 || q.p > 0.0 {
            let uu = [1.0 + u[FLUID_OFFSET + 4], u[FLUID_OFFSET + 1], u[FLUID_OFFSET + 2], u[FLUID_OFFSET + 3]];
            let ul: [f64; 4] = std::array::from_fn(|a| (0..4).map(|b| geo.g[(a, b)] * uu[b]).sum());
            // u·n with n_μ = (−N, 0, 0, 0).
            let un = -n * uu[0];
            z[idx] = (q.epsilon + q.p) * un * un - q.p;
            for a in 0..3 {
                j[a * n3 + idx] = (q.epsilon + q.p) * un * (0..3).map(|b| hinv[(a, b)] * ul[b + 1]).sum::<f64>();
            }
        }
    }
    Ok(GravitationalData {
        h: GridField::new(grid, 6, h)?,
        kext: GridField::new(grid, 6, k)?,
        z: GridField::new(grid, 1, z)?,
        j: GridField::new(grid, 3, j)?,
        alpha: GridField::new(grid, 1, lapse)?,
        phi: GridField::scalar_fn(grid, |_| 1.0),
        w: GridField::zeros(grid, 3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub cfl: f64,
    /// Kreiss–Oliger coefficient σ of −σ h³/16 (D₊D₋)² per axis.
    pub dissipation: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { cfl: 0.25, dissipation: 0.05 }
    }
}

/// Width of the copy-filled boundary layer; the fourth-order stencils reach two nodes.
const GHOST: usize = 2;

/// Largest admissible step cfl·h/λ_max over the current state.
pub fn cfl_limit(sys: &dyn FirstOrderSystem, state: &StateVector, cfl: f64) -> Result<f64> {
    let grid = *state.grid();
    let mut speed: f64 = 0.0;
    for idx in 0..grid.len() {
        let u = state.point(idx);
        speed = speed.max(sys.max_speed(&u).map_err(|e| locate(e, &grid, idx))?);
    }
    Ok(if speed > 0.0 { cfl * grid.spacing() / speed } else { f64::INFINITY })
}

/// ∂_tU at every interior node with coefficients frozen at `frozen` (the state itself when `None`).
fn rhs_field(sys: &dyn FirstOrderSystem, y: &GridField, frozen: Option<&GridField>, dissipation: f64) -> Result<Vec<f64>> {
    const C: usize = STATE_COMPONENTS;
    let grid = *y.grid();
    let n = grid.n();
    let n3 = grid.len();
    let h = grid.spacing();
    if n < 2 * GHOST + 1 {
        return Err(EekError::invalid(format!("evolution needs n >= {}, got {n}", 2 * GHOST + 1)));
    }
    // Point-major copy so every stencil neighbour is one contiguous block.
    let data = y.data();
    let mut pts = vec![0.0; C * n3];
    for c in 0..C {
        for (idx, &v) in data[c * n3..(c + 1) * n3].iter().enumerate() {
            pts[idx * C + c] = v;
        }
    }
    let fdata = frozen.map(|f| f.data());
    let strides = [C, n * C, n * n * C];
    let mut out = vec![0.0; C * n3];
    let mut fz = [0.0; C];
    let mut du = [[0.0; C]; 3];
    let mut r = [0.0; C];
    let ko = dissipation / (16.0 * h);
    let inv12h = 1.0 / (12.0 * h);
    for k in GHOST..n - GHOST {
        for j in GHOST..n - GHOST {
            for i in GHOST..n - GHOST {
                let idx = (k * n + j) * n + i;
                let base = idx * C;
                let u = &pts[base..base + C];
                for (a, &s) in strides.iter().enumerate() {
                    let (m2, m1, p1, p2) = (&pts[base - 2 * s..], &pts[base - s..], &pts[base + s..], &pts[base + 2 * s..]);
                    for c in 0..C {
                        du[a][c] = (m2[c] - 8.0 * m1[c] + 8.0 * p1[c] - p2[c]) * inv12h;
                    }
                }
                match fdata {
                    Some(fd) => {
                        for (c, v) in fz.iter_mut().enumerate() {
                            *v = fd[c * n3 + idx];
                        }
                        sys.rhs(&fz, u, [&du[0], &du[1], &du[2]], &mut r)
                    }
                    None => sys.rhs(u, u, [&du[0], &du[1], &du[2]], &mut r),
                }
                .map_err(|e| locate(e, &grid, idx))?;
                if ko != 0.0 {
                    for &s in &strides {
                        let (m2, m1, p1, p2) = (&pts[base - 2 * s..], &pts[base - s..], &pts[base + s..], &pts[base + 2 * s..]);
                        for c in 0..C {
                            r[c] -= ko * (p2[c] - 4.0 * p1[c] + 6.0 * u[c] - 4.0 * m1[c] + m2[c]);
                        }
                    }
                }
                for c in 0..C {
                    out[c * n3 + idx] = r[c];
                }
            }
        }
    }
    Ok(out)
}

/// Outflow closure: every node in the ghost layer copies the nearest interior node.
fn copy_boundary(data: &mut [f64], grid: &Grid) {
    let n = grid.n();
    let n3 = grid.len();
    let clamp = |c: usize| c.clamp(GHOST, n - 1 - GHOST);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let (ci, cj, ck) = (clamp(i), clamp(j), clamp(k));
                if (ci, cj, ck) == (i, j, k) {
                    continue;
                }
                let dst = (k * n + j) * n + i;
                let src = (ck * n + cj) * n + ci;
                for c in 0..STATE_COMPONENTS {
                    data[c * n3 + dst] = data[c * n3 + src];
                }
            }
        }
    }
}

fn axpy(base: &[f64], k: &[f64], a: f64) -> Vec<f64> {
    base.iter().zip(k).map(|(b, k)| b + a * k).collect()
}

/// One RK4 step; stage i freezes coefficients at `frozen[i]` when given. Returns the new
/// state and the four stage states.
fn rk4(sys: &dyn FirstOrderSystem, u: &GridField, t: f64, dt: f64, opts: &StepOptions, frozen: Option<&[GridField]>, keep_stages: bool) -> Result<(GridField, Vec<GridField>)> {
    let grid = *u.grid();
    let sigma = opts.dissipation;
    let fz = |i: usize| frozen.map(|f| &f[i]);
    let mut stages = Vec::new();
    let k1 = rhs_field(sys, u, fz(0), sigma)?;
    let mut y2 = axpy(u.data(), &k1, 0.5 * dt);
    copy_boundary(&mut y2, &grid);
    let y2 = finite_field(&grid, y2, t + 0.5 * dt)?;
    let k2 = rhs_field(sys, &y2, fz(1), sigma)?;
    let mut y3 = axpy(u.data(), &k2, 0.5 * dt);
    copy_boundary(&mut y3, &grid);
    let y3 = finite_field(&grid, y3, t + 0.5 * dt)?;
    let k3 = rhs_field(sys, &y3, fz(2), sigma)?;
    let mut y4 = axpy(u.data(), &k3, dt);
    copy_boundary(&mut y4, &grid);
    let y4 = finite_field(&grid, y4, t + dt)?;
    let k4 = rhs_field(sys, &y4, fz(3), sigma)?;
    let mut next: Vec<f64> = u
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    copy_boundary(&mut next, &grid);
    if keep_stages {
        stages = vec![u.clone(), y2, y3, y4];
    }
    Ok((finite_field(&grid, next, t + dt)?, stages))
}

fn finite_field(grid: &Grid, data: Vec<f64>, time: f64) -> Result<GridField> {
    let n3 = grid.len();
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        return Err(EekError::NonFinite { time, location: grid.unravel(pos % n3), component: pos / n3 });
    }
    GridField::new(*grid, STATE_COMPONENTS, data)
}

/// One explicit RK4 method-of-lines step from time `t` to `t + dt`.
pub fn step(sys: &dyn FirstOrderSystem, state: &StateVector, t: f64, dt: f64, opts: &StepOptions) -> Result<StateVector> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(EekError::invalid(format!("time step must be positive, got {dt}")));
    }
    let limit = cfl_limit(sys, state, opts.cfl)?;
    if dt > limit * (1.0 + 1e-12) {
        return Err(EekError::Cfl { dt, limit });
    }
    let (next, _) = rk4(sys, &state.field, t, dt, opts, None, false)?;
    StateVector::new(next)
}

/// Uniform step count and size reaching `t_final` with steps no larger than `dt` or the CFL limit.
pub fn plan_steps(sys: &dyn FirstOrderSystem, state0: &StateVector, t_final: f64, dt: f64, cfl: f64) -> Result<(usize, f64)> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(EekError::invalid(format!("final time must be positive, got {t_final}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(EekError::invalid(format!("time step must be positive, got {dt}")));
    }
    let cap = dt.min(cfl_limit(sys, state0, cfl)?);
    let steps = (t_final / cap - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

/// Direct quasilinear run; returns the final state.
pub fn evolve(sys: &dyn FirstOrderSystem, state0: &StateVector, t_final: f64, dt: f64, opts: &StepOptions) -> Result<StateVector> {
    let (steps, dt) = plan_steps(sys, state0, t_final, dt, opts.cfl)?;
    let mut state = state0.clone();
    for s in 0..steps {
        state = step(sys, &state, s as f64 * dt, dt, opts)?;
    }
    Ok(state)
}

/// Subsamples a field onto the grid with `factor` times the spacing; nodes coincide.
pub fn restrict(field: &GridField, factor: usize) -> Result<GridField> {
    let grid = *field.grid();
    let n = grid.n();
    if factor == 0 || n % factor != 0 {
        return Err(EekError::invalid(format!("restriction factor {factor} must divide n = {n}")));
    }
    let coarse = Grid::new(n / factor, grid.half_width())?;
    let nc = coarse.n();
    let mut out = Vec::with_capacity(field.components() * coarse.len());
    for c in 0..field.components() {
        let src = field.component(c);
        for k in 0..nc {
            for j in 0..nc {
                for i in 0..nc {
                    out.push(src[grid.index(factor * i, factor * j, factor * k)]);
                }
            }
        }
    }
    GridField::new(coarse, field.components(), out)
}

/// Coefficient weighting used by [`energy_norm`].
#[derive(Clone, Copy)]
pub enum A0Weight<'a> {
    Identity,
    System(&'a dyn FirstOrderSystem),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// ‖U‖²_{s−1,δ,A⁰}.
    pub weighted: f64,
    /// The same sum with A⁰ replaced by the identity.
    pub unweighted: f64,
    pub blocks_weighted: [f64; 3],
    pub blocks_unweighted: [f64; 3],
}

/// Squared block-weighted dyadic norm of order s − 1: the metric, derivative and fluid
/// blocks carry weights 2^{(3/2+δ)2j}, 2^{(3/2+δ+1)2j} and 2^{(3/2+δ+2)2j}, every shell is
/// localised by ψ_j², and the A⁰ quadratic form is applied pointwise to Λ^{s−1} of the shell.
pub fn energy_report(state: &StateVector, idx: SobolevIndex, a0: A0Weight) -> Result<EnergyReport> {
    let grid = *state.grid();
    let n3 = grid.len();
    let h = grid.spacing();
    let spec = Spectral::for_grid(&grid);
    let p = DyadicPartition::for_grid(&grid);
    let order = idx.s - 1.0;
    let mut report = EnergyReport { weighted: 0.0, unweighted: 0.0, blocks_weighted: [0.0; 3], blocks_unweighted: [0.0; 3] };
    let points: Vec<[f64; STATE_COMPONENTS]> = match a0 {
        A0Weight::Identity => Vec::new(),
        A0Weight::System(_) => (0..n3).map(|i| state.point(i)).collect(),
    };
    let mut shell = vec![0.0; STATE_COMPONENTS * n3];
    for j in 0..=p.j_max() {
        let psi = p.sample(j, &grid);
        if psi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let eps = 2f64.powi(j as i32);
        let e2 = eps * eps;
        let mult = |i: usize| num_complex::Complex64::new((1.0 + e2 * spec.k2(i)).powf(0.5 * order), 0.0);
        let localise = |c: usize| -> Vec<f64> { state.field.component(c).iter().zip(&psi).map(|(u, s)| u * s * s).collect() };
        for c in (0..STATE_COMPONENTS).step_by(2) {
            let f = localise(c);
            let g = (c + 1 < STATE_COMPONENTS).then(|| localise(c + 1));
            let (re, im) = spec.apply_multiplier(&f, g.as_deref(), true, mult);
            shell[c * n3..(c + 1) * n3].copy_from_slice(&re);
            if let Some(im) = im {
                shell[(c + 1) * n3..(c + 2) * n3].copy_from_slice(&im);
            }
        }
        let scale = h * h * h / (e2 * eps);
        let weights: [f64; 3] = std::array::from_fn(|b| 2f64.powf((1.5 + idx.delta + b as f64) * 2.0 * j as f64));
        let mut wsum = [0.0; 3];
        let mut usum = [0.0; 3];
        let mut v = [0.0; STATE_COMPONENTS];
        for i in 0..n3 {
            for (c, vc) in v.iter_mut().enumerate() {
                *vc = shell[c * n3 + i];
            }
            let plain = [
                v[..G_PAIRS].iter().map(|x| x * x).sum::<f64>(),
                v[G_PAIRS..FLUID_OFFSET].iter().map(|x| x * x).sum::<f64>(),
                v[FLUID_OFFSET..].iter().map(|x| x * x).sum::<f64>(),
            ];
            let weighted = match a0 {
                A0Weight::Identity => plain,
                A0Weight::System(sys) => sys.a0_blocks(&points[i], &v).map_err(|e| locate(e, &grid, i))?,
            };
            for b in 0..3 {
                usum[b] += plain[b];
                wsum[b] += weighted[b];
            }
        }
        for b in 0..3 {
            report.blocks_weighted[b] += weights[b] * scale * wsum[b];
            report.blocks_unweighted[b] += weights[b] * scale * usum[b];
        }
    }
    report.weighted = report.blocks_weighted.iter().sum();
    report.unweighted = report.blocks_unweighted.iter().sum();
    Ok(report)
}

/// ‖U‖²_{s−1,δ,A⁰}.
pub fn energy_norm(state: &StateVector, idx: SobolevIndex, a0: A0Weight) -> Result<f64> {
    Ok(energy_report(state, idx, a0)?.weighted)
}

/// |||U|||_{0,δ}: the metric, derivative and fluid blocks in H_{0,δ}, H_{0,δ+1} and H_{0,δ+2}.
pub fn block_norm(field: &GridField, delta: f64) -> Result<f64> {
    if field.components() != STATE_COMPONENTS {
        return Err(EekError::ShapeMismatch(format!("block norm needs {STATE_COMPONENTS} components")));
    }
    let p = DyadicPartition::for_grid(field.grid());
    let mut total = 0.0;
    for (b, (start, count)) in [(0, G_PAIRS), (DG_OFFSET, 40), (FLUID_OFFSET, 5)].into_iter().enumerate() {
        let part = field.extract_range(start, count);
        total += weighted_norm(&part, SobolevIndex::new(0.0, delta + b as f64)?, &p, 1)?.dyadic.powi(2);
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorOptions {
    pub index: SobolevIndex,
    pub step: StepOptions,
    /// Record every this many steps (the final time is always recorded).
    pub record_every: usize,
    /// Restrict the residual series to nodes the copy boundary cannot have reached yet.
    pub boundary_cone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRecord {
    pub t: f64,
    pub energy: f64,
    pub energy_unweighted: f64,
    pub h_norm: f64,
    pub norm_residual: f64,
    pub ham_residual: f64,
    pub mom_residual: f64,
    pub a0_min: f64,
    pub a0_max: f64,
    /// max |ΔA⁰/Δt| since the previous record; informational only.
    pub da0_dt: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyMonitor {
    pub index: SobolevIndex,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub records: Vec<MonitorRecord>,
    /// Smallest C ≥ 0 with E(t) ≤ e^{Ct}(E(0) + Ct) at every record.
    pub fitted_c: f64,
    pub final_state: StateVector,
}

impl EnergyMonitor {
    /// Largest weighted/unweighted energy ratio spread, max(ratio, 1/ratio), over the records.
    pub fn equivalence_constant(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.energy_unweighted > 0.0)
            .map(|r| {
                let q = r.energy / r.energy_unweighted;
                q.max(1.0 / q)
            })
            .fold(1.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["t", "energy", "H_norm", "norm_residual", "ham_residual", "mom_residual", "energy_unweighted", "a0_min", "a0_max", "da0_dt"])
            .map_err(csv_error)?;
        for r in &self.records {
            let row = [r.t, r.energy, r.h_norm, r.norm_residual, r.ham_residual, r.mom_residual, r.energy_unweighted, r.a0_min, r.a0_max, r.da0_dt];
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> EekError {
    EekError::Io(std::io::Error::other(e))
}

/// Smallest C ≥ 0 such that e^{Ct}(E₀ + Ct) ≥ E(t) at every sample.
pub fn fit_energy_constant(times: &[f64], energies: &[f64]) -> f64 {
    let (Some(&t0), Some(&e0)) = (times.first(), energies.first()) else {
        return 0.0;
    };
    let mut c_max: f64 = 0.0;
    for (&t, &e) in times.iter().zip(energies).skip(1) {
        let dt = t - t0;
        if dt <= 0.0 || e <= e0 {
            continue;
        }
        let envelope = |c: f64| (c * dt).exp() * (e0 + c * dt);
        let mut hi = 1.0;
        while envelope(hi) < e && hi < 1e12 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if envelope(mid) < e {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c_max = c_max.max(hi);
    }
    c_max
}

fn a0_extent(sys: &dyn FirstOrderSystem, state: &StateVector) -> Result<(f64, f64)> {
    let grid = *state.grid();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for idx in 0..grid.len() {
        let (a, b) = sys.a0_bounds(&state.point(idx)).map_err(|e| locate(e, &grid, idx))?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok((lo, hi))
}

/// Pointwise coefficient snapshot for max |ΔA⁰/Δt|: the diagonal quadratic forms on unit vectors.
fn a0_snapshot(sys: &dyn FirstOrderSystem, state: &StateVector) -> Result<Vec<f64>> {
    let grid = *state.grid();
    let mut out = Vec::with_capacity(grid.len() * STATE_COMPONENTS);
    let mut e = [0.0; STATE_COMPONENTS];
    for idx in 0..grid.len() {
        let u = state.point(idx);
        for c in G_PAIRS..STATE_COMPONENTS {
            e[c] = 1.0;
            let b = sys.a0_blocks(&u, &e).map_err(|err| locate(err, &grid, idx))?;
            out.push(b[1] + b[2]);
            e[c] = 0.0;
        }
    }
    Ok(out)
}

/// Zeroes every node whose distance to the nearest face is below `reach`.
fn mask_faces(field: &GridField, reach: f64) -> Result<GridField> {
    let grid = *field.grid();
    let n = grid.n();
    let h = grid.spacing();
    let n3 = grid.len();
    let mut data = field.data().to_vec();
    for i in 0..n3 {
        let d = grid.unravel(i).iter().map(|&c| c.min(n - 1 - c)).min().unwrap_or(0) as f64 * h;
        if d < reach {
            for c in 0..field.components() {
                data[c * n3 + i] = 0.0;
            }
        }
    }
    GridField::new(grid, field.components(), data)
}

fn record(sys: &dyn FirstOrderSystem, eos: &EquationOfState, state: &StateVector, t: f64, idx: SobolevIndex, reach: f64) -> Result<MonitorRecord> {
    let energy = energy_report(state, idx, A0Weight::System(sys))?;
    let p = DyadicPartition::for_grid(state.grid());
    let i1 = SobolevIndex::new(0.0, idx.delta + 1.0)?;
    let i2 = SobolevIndex::new(0.0, idx.delta + 2.0)?;
    let hnorm = weighted_norm(&mask_faces(&harmonic_residual(state)?, reach)?, i1, &p, 1)?.dyadic;
    let nnorm = weighted_norm(&mask_faces(&normalization_field(state)?, reach)?, i2, &p, 1)?.dyadic;
    let res = constraint_residuals(&slice_data(state, eos)?, idx.delta)?;
    let (ham, mom) = if reach > 0.0 {
        (
            weighted_norm(&mask_faces(&res.ham, reach)?, i2, &p, 1)?.dyadic,
            weighted_norm(&mask_faces(&res.mom, reach)?, i2, &p, 1)?.dyadic,
        )
    } else {
        (res.ham_norm, res.mom_norm)
    };
    let (a0_min, a0_max) = a0_extent(sys, state)?;
    if !(a0_min > 0.0) {
        return Err(EekError::Numerical {
            stage: "evolve".into(),
            detail: format!("A0 lost positivity at t = {t}: smallest eigenvalue {a0_min:e}"),
        });
    }
    Ok(MonitorRecord {
        t,
        energy: energy.weighted,
        energy_unweighted: energy.unweighted,
        h_norm: hnorm,
        norm_residual: nnorm,
        ham_residual: ham,
        mom_residual: mom,
        a0_min,
        a0_max,
        da0_dt: 0.0,
    })
}

/// Evolves to `t_final`, recording the A⁰-weighted energy and constraint drift series.
pub fn monitor_run(
    sys: &dyn FirstOrderSystem,
    eos: &EquationOfState,
    state0: &StateVector,
    t_final: f64,
    dt: f64,
    opts: &MonitorOptions,
) -> Result<EnergyMonitor> {
    check_s_admissible(eos.gamma, opts.index.s)?;
    let (steps, dt) = plan_steps(sys, state0, t_final, dt, opts.step.cfl)?;
    let every = opts.record_every.max(1);
    // Boundary data travel inward at most at the light-cone speed of the initial state,
    // widened by 10%, starting from the copied layers and the residual stencil margin.
    let grid = *state0.grid();
    let speed = 1.1 * opts.step.cfl * grid.spacing() / cfl_limit(sys, state0, opts.step.cfl)?;
    let base = (GHOST + RESIDUAL_MARGIN) as f64 * grid.spacing();
    let reach = |t: f64| if opts.boundary_cone { base + speed * t } else { 0.0 };
    let mut records = vec![record(sys, eos, state0, 0.0, opts.index, reach(0.0))?];
    let mut snapshot = a0_snapshot(sys, state0)?;
    let mut t_snap = 0.0;
    let mut state = state0.clone();
    for s in 0..steps {
        let t = s as f64 * dt;
        state = step(sys, &state, t, dt, &opts.step)?;
        if (s + 1) % every == 0 || s + 1 == steps {
            let t_now = (s + 1) as f64 * dt;
            let mut r = record(sys, eos, &state, t_now, opts.index, reach(t_now))?;
            let next = a0_snapshot(sys, &state)?;
            r.da0_dt = next.iter().zip(&snapshot).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / (t_now - t_snap);
            snapshot = next;
            t_snap = t_now;
            log::info!("t = {t_now:.4}: energy {:.6e}, H {:.3e}, ham {:.3e}, mom {:.3e}", r.energy, r.h_norm, r.ham_residual, r.mom_residual);
            records.push(r);
        }
    }
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let energies: Vec<f64> = records.iter().map(|r| r.energy).collect();
    Ok(EnergyMonitor {
        index: opts.index,
        mu: sys.mu(),
        dt,
        steps,
        fitted_c: fit_energy_constant(&times, &energies),
        records,
        final_state: state,
    })
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    /// |||u^{k+1} − u^k|||_{0,δ}, maximised over the step times.
    pub differences: Vec<f64>,
    /// Λ_k = differences[k] / differences[k − 1] for k ≥ 1.
    pub ratios: Vec<f64>,
    /// Λ_k < 1 for every k ≥ 2 that was measured.
    pub contraction: bool,
    pub converged: bool,
    /// |||u^limit(T) − u^direct(T)|||_{0,δ} against the quasilinear RK4 run.
    pub limit_vs_direct: f64,
    pub final_iterate: StateVector,
    pub suggestion: Option<String>,
}

/// Majda iteration: u^{k+1} solves the linear system with coefficients frozen at u^k. Stage i
/// of RK step n uses u^k's own stage-i state, so the discrete fixed point is the direct run.
#[allow(clippy::too_many_arguments)]
pub fn picard_iteration(
    sys: &dyn FirstOrderSystem,
    state0: &StateVector,
    t_final: f64,
    dt: f64,
    k_max: usize,
    delta: f64,
    opts: &StepOptions,
) -> Result<PicardReport> {
    let (steps, dt) = plan_steps(sys, state0, t_final, dt, opts.cfl)?;
    // u⁰(t) ≡ U₀ at every stage.
    let mut frozen: Vec<Vec<GridField>> = (0..steps).map(|_| vec![state0.field.clone(); 4]).collect();
    let mut previous: Option<Vec<GridField>> = None;
    let mut differences = Vec::new();
    let mut final_iterate = state0.clone();
    let scale = block_norm(state0.field(), delta)?.max(1e-300);
    let mut converged = false;
    for k in 0..k_max.max(1) {
        let mut u = state0.field.clone();
        let mut ends = Vec::with_capacity(steps);
        let mut stages = Vec::with_capacity(steps);
        for (n, fz) in frozen.iter().enumerate() {
            let (next, st) = rk4(sys, &u, n as f64 * dt, dt, opts, Some(fz), true)?;
            stages.push(st);
            ends.push(next.clone());
            u = next;
        }
        // The initial iterate is constant in time.
        let prev_ends: Vec<GridField> = previous.take().unwrap_or_else(|| vec![state0.field.clone(); steps]);
        let mut diff: f64 = 0.0;
        for (a, b) in ends.iter().zip(&prev_ends) {
            diff = diff.max(block_norm(&a.zip_map(b, |x, y| x - y)?, delta)?);
        }
        differences.push(diff);
        final_iterate = StateVector::new(u)?;
        log::info!("picard iterate {}: difference {diff:.3e}", k + 1);
        previous = Some(ends);
        frozen = stages;
        if diff <= 1e-14 * scale {
            converged = true;
            break;
        }
    }
    let ratios: Vec<f64> = differences.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let contraction = ratios.iter().skip(1).all(|&r| r < 1.0);
    let direct = evolve(sys, state0, t_final, dt, opts)?;
    let limit_vs_direct = block_norm(&final_iterate.field.zip_map(direct.field(), |x, y| x - y)?, delta)?;
    let last = differences.last().copied().unwrap_or(0.0);
    converged = converged || last <= 1e-10 * scale;
    let suggestion = (!contraction).then(|| format!("contraction ratios {ratios:?} are not all below 1; retry with a smaller final time than T = {t_final}"));
    Ok(PicardReport { differences, ratios, contraction, converged, limit_vs_direct, final_iterate, suggestion })
}
