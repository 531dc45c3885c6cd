//! Conformal-method constraint pipeline: α from the scalar-curvature equation,
//! W from the Lichnerowicz vector Laplacian, φ from the Lichnerowicz equation,
//! and assembly of (h, K, z, j) with residual checks.

pub mod elliptic;
pub mod geometry;
mod presets;

use std::time::Instant;

use nalgebra::Matrix3;

pub use elliptic::{killing_lowered, lichnerowicz_symbol, Boundary, Interior, ScalarOperator, VectorOperator};
pub use geometry::{scalar_curvature, sym, sym3, sym_at, sym_field, Metric, SYM3};
pub use presets::{FreeDataPreset, PresetParams, PresetRegistry};

use crate::error::{EekError, Result};
use crate::fields::{stencil, Grid, GridField, SobolevIndex};
use crate::fluid::EquationOfState;
use crate::idata::{boundary_s, check_omega, ScaledMatter};
use crate::linalg::KrylovOptions;
use crate::spaces::{weighted_norm, DyadicPartition};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFreeData {
    /// h̄_{ab}, full components.
    pub hbar: GridField,
    /// Ā_{ab}, trace- and divergence-free with respect to h̄.
    pub abar: GridField,
    pub yhat: GridField,
    pub vhat: GridField,
}

/// Layout of a free-data file: h̄ (6), Ā (6), ŷ (1), v̂ (3).
pub const FREE_DATA_COMPONENTS: usize = 16;
/// Layout of a gravitational-data file: h (6), K (6), z, j (3), α, φ, W (3).
pub const GRAVITATIONAL_DATA_COMPONENTS: usize = 21;

impl ConstraintFreeData {
    pub fn grid(&self) -> &Grid {
        self.hbar.grid()
    }

    pub fn to_field(&self) -> GridField {
        GridField::stack(&[&self.hbar, &self.abar, &self.yhat, &self.vhat]).expect("consistent free data")
    }

    pub fn from_field(f: &GridField) -> Result<Self> {
        if f.components() != FREE_DATA_COMPONENTS {
            return Err(EekError::ShapeMismatch(format!(
                "free data needs {FREE_DATA_COMPONENTS} components (hbar 6, Abar 6, yhat 1, vhat 3), got {}",
                f.components()
            )));
        }
        Ok(ConstraintFreeData {
            hbar: f.extract_range(0, 6),
            abar: f.extract_range(6, 6),
            yhat: f.extract(12),
            vhat: f.extract_range(13, 3),
        })
    }

    /// Max over the grid of |h̄^{ab}Ā_{ab}|.
    pub fn trace_defect(&self) -> Result<f64> {
        let metric = Metric::from_field(&self.hbar)?;
        Ok((0..self.grid().len())
            .map(|idx| (metric.inv[idx].component_mul(&sym_at(&self.abar, 0, idx))).sum().abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GravitationalData {
    pub h: GridField,
    pub kext: GridField,
    pub z: GridField,
    pub j: GridField,
    pub alpha: GridField,
    pub phi: GridField,
    pub w: GridField,
}

impl GravitationalData {
    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    /// Flat vacuum data on `grid`.
    pub fn flat(grid: Grid) -> Self {
        GravitationalData {
            h: sym_field(grid, |_| Matrix3::identity()),
            kext: GridField::zeros(grid, 6),
            z: GridField::zeros(grid, 1),
            j: GridField::zeros(grid, 3),
            alpha: GridField::scalar_fn(grid, |_| 1.0),
            phi: GridField::scalar_fn(grid, |_| 1.0),
            w: GridField::zeros(grid, 3),
        }
    }

    pub fn to_field(&self) -> GridField {
        GridField::stack(&[&self.h, &self.kext, &self.z, &self.j, &self.alpha, &self.phi, &self.w]).expect("consistent data")
    }

    pub fn from_field(f: &GridField) -> Result<Self> {
        if f.components() != GRAVITATIONAL_DATA_COMPONENTS {
            return Err(EekError::ShapeMismatch(format!(
                "gravitational data needs {GRAVITATIONAL_DATA_COMPONENTS} components (h 6, K 6, z 1, j 3, alpha, phi, W 3), got {}",
                f.components()
            )));
        }
        Ok(GravitationalData {
            h: f.extract_range(0, 6),
            kext: f.extract_range(6, 6),
            z: f.extract(12),
            j: f.extract_range(13, 3),
            alpha: f.extract(16),
            phi: f.extract(17),
            w: f.extract_range(18, 3),
        })
    }

    /// Matter sources (z, j¹, j², j³) as one field.
    pub fn matter(&self) -> GridField {
        GridField::stack(&[&self.z, &self.j]).expect("consistent data")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Max-norm residual target of the linear solves (in the unscaled equation).
    pub tol: f64,
    pub max_iterations: usize,
    /// Target of the Lichnerowicz Newton iteration.
    pub newton_tol: f64,
    pub boundary: Boundary,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iterations: 20_000,
            newton_tol: 1e-9,
            boundary: Boundary::Robin,
        }
    }
}

/// One row of the constraint report: stage, residual_norm, iterations, wall_time.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: String,
    pub residual: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

fn krylov(opts: &SolverOptions, scale: f64) -> KrylovOptions {
    KrylovOptions {
        tol: opts.tol * scale,
        max_iterations: opts.max_iterations,
    }
}

fn min_sqrt_det(metric: &Metric) -> f64 {
    metric.sqrt_det.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn scalar_from(grid: Grid, full: Vec<f64>) -> GridField {
    GridField::new(grid, 1, full).expect("finite solution")
}

/// Solves −Δ_{h̄}α + R(h̄)α/8 = 0 with α → 1.
pub fn solve_alpha(hbar: &GridField, opts: &SolverOptions) -> Result<(GridField, StageReport)> {
    let start = Instant::now();
    let metric = Metric::from_field(hbar)?;
    let r = scalar_curvature(hbar)?;
    let grid = metric.grid;
    let mass: Vec<f64> = (0..grid.len()).map(|i| metric.sqrt_det[i] * r.at(0, i) / 8.0).collect();
    let op = ScalarOperator::new(&metric, mass.clone(), opts.boundary);
    let rhs: Vec<f64> = op.interior.nodes.iter().map(|&p| -mass[p]).collect();
    let mut x = vec![0.0; rhs.len()];
    let stats = match op.solve(&rhs, &mut x, krylov(opts, min_sqrt_det(&metric)), "solve_alpha") {
        Ok(s) => s,
        Err(EekError::Numerical { .. }) => {
            let bc = brill_cantor_check(hbar, opts)?;
            return Err(EekError::BrillCantor { lambda_min: bc.lambda_min });
        }
        Err(e) => return Err(e),
    };
    let full: Vec<f64> = op.interior.extend(&x).iter().map(|a| 1.0 + a).collect();
    if let Some(p) = full.iter().position(|&a| a <= 0.0) {
        log::error!("alpha <= 0 at {:?}", grid.unravel(p));
        let bc = brill_cantor_check(hbar, opts)?;
        return Err(EekError::BrillCantor { lambda_min: bc.lambda_min });
    }
    let residual = unscaled_max(&op, &full, &rhs_with_unit(&op, &mass, &full), &metric);
    Ok((
        scalar_from(grid, full),
        StageReport {
            stage: "alpha".into(),
            residual,
            iterations: stats.iterations,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

/// A(α) with the constant part restored: returns the zero right-hand side.
fn rhs_with_unit(op: &ScalarOperator, _mass: &[f64], _full: &[f64]) -> Vec<f64> {
    vec![0.0; op.interior.len()]
}

/// Max over interior nodes of |(A u − rhs)/√h|.
fn unscaled_max(op: &ScalarOperator, full: &[f64], rhs: &[f64], metric: &Metric) -> f64 {
    let au = op.apply_full(full);
    op.interior
        .nodes
        .iter()
        .zip(au.iter().zip(rhs))
        .map(|(&p, (a, b))| ((a - b) / metric.sqrt_det[p]).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrillCantorReport {
    pub passes: bool,
    pub lambda_min: f64,
    pub iterations: usize,
    /// Rayleigh quotient after every inverse iteration.
    pub history: Vec<f64>,
}

/// Smallest eigenvalue of −Δ_{h̄} + R(h̄)/8 with Dirichlet data on the box.
pub fn brill_cantor_check(hbar: &GridField, opts: &SolverOptions) -> Result<BrillCantorReport> {
    let metric = Metric::from_field(hbar)?;
    let r = scalar_curvature(hbar)?;
    lowest_eigenvalue(&metric, r.component(0), opts)
}

/// Smallest eigenvalue of −Δ_h + c with Dirichlet data, for a given potential c, on the
/// generalised problem A x = λ √h x. Single-vector LOBPCG preconditioned by the shifted
/// inverse (A − σ√h)⁻¹, which is definite for σ below min c.
pub fn lowest_eigenvalue(metric: &Metric, curvature: &[f64], opts: &SolverOptions) -> Result<BrillCantorReport> {
    use crate::linalg::{dot, max_abs};
    let grid = metric.grid;
    let n3 = grid.len();
    let potential: Vec<f64> = curvature.iter().map(|r| r / 8.0).collect();
    let sigma = potential.iter().cloned().fold(0.0, f64::min) - 1e-2;
    let shifted: Vec<f64> = (0..n3).map(|i| metric.sqrt_det[i] * (potential[i] - sigma)).collect();
    let op = ScalarOperator::new(metric, shifted, Boundary::Dirichlet);
    let weight: Vec<f64> = op.interior.nodes.iter().map(|&p| metric.sqrt_det[p]).collect();
    let m = op.interior.len();
    let mdot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&weight).map(|((x, y), w)| x * y * w).sum::<f64>();
    let apply_a = |x: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        op.apply(x, &mut out);
        out.iter_mut().zip(x.iter().zip(&weight)).for_each(|(o, (v, w))| *o += sigma * w * v);
        out
    };
    // Smooth positive start with the shape of the box ground state.
    let mut x: Vec<f64> = op
        .interior
        .nodes
        .iter()
        .map(|&p| {
            let s = |a: usize| (std::f64::consts::PI * a as f64 / (grid.n() - 1) as f64).sin();
            let [i, j, k] = grid.unravel(p);
            s(i) * s(j) * s(k)
        })
        .collect();
    let nx = mdot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let mut ax = apply_a(&x);
    let mut lambda = dot(&x, &ax);
    let mut p_dir: Option<Vec<f64>> = None;
    let mut history = vec![lambda];
    for it in 0..400 {
        let r: Vec<f64> = (0..m).map(|k| ax[k] - lambda * weight[k] * x[k]).collect();
        let res = r.iter().zip(&weight).map(|(v, w)| v * v / w).sum::<f64>().sqrt();
        if res <= 1e-9 * lambda.abs().max(1e-2) {
            return Ok(BrillCantorReport {
                passes: lambda > 0.0,
                lambda_min: lambda,
                iterations: it,
                history,
            });
        }
        let mut wv = vec![0.0; m];
        op.solve(&r, &mut wv, KrylovOptions { tol: 1e-4 * max_abs(&r), max_iterations: opts.max_iterations }, "brill_cantor")?;
        // M-orthonormal basis of span{x, w, p} by twice-repeated Gram–Schmidt.
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        for mut v in std::iter::once(wv).chain(p_dir.take()) {
            let n0 = mdot(&v, &v).sqrt();
            for _ in 0..2 {
                for b in &basis {
                    let c = mdot(&v, b);
                    v.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
                }
            }
            let nv = mdot(&v, &v).sqrt();
            if nv > 1e-10 * n0 {
                v.iter_mut().for_each(|a| *a /= nv);
                basis.push(v);
            }
        }
        let abasis: Vec<Vec<f64>> = std::iter::once(ax.clone()).chain(basis[1..].iter().map(|b| apply_a(b))).collect();
        let k = basis.len();
        let proj = nalgebra::DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&basis[i], &abasis[j]) + dot(&basis[j], &abasis[i])));
        let eig = proj.symmetric_eigen();
        let (imin, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let c = eig.eigenvectors.column(imin);
        let combine = |vs: &[Vec<f64>], from: usize| -> Vec<f64> {
            let mut out = vec![0.0; m];
            for (q, v) in vs.iter().enumerate().skip(from) {
                out.iter_mut().zip(v).for_each(|(o, a)| *o += c[q] * a);
            }
            out
        };
        let p_new = combine(&basis, 1);
        let ap_new = combine(&abasis, 1);
        x = x.iter().zip(&p_new).map(|(a, b)| c[0] * a + b).collect();
        ax = ax.iter().zip(&ap_new).map(|(a, b)| c[0] * a + b).collect();
        let nx = mdot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        ax.iter_mut().for_each(|v| *v /= nx);
        lambda = dot(&x, &ax);
        history.push(lambda);
        p_dir = Some(p_new);
    }
    Err(EekError::Numerical {
        stage: "brill_cantor".into(),
        detail: format!("eigen-iteration stagnated; Rayleigh quotients {:?}", &history[history.len().saturating_sub(5)..]),
    })
}

/// Divergence D_a T^{ab} of a symmetric tensor given with lower indices.
pub fn divergence_lowered(metric: &Metric, t: &GridField) -> GridField {
    let grid = metric.grid;
    let n3 = grid.len();
    let upper = sym_field(grid, |idx| metric.inv[idx] * sym_at(t, 0, idx) * metric.inv[idx]);
    let d: Vec<[Vec<f64>; 3]> = (0..6)
        .map(|c| std::array::from_fn(|m| stencil::diff1(upper.component(c), &grid, m)))
        .collect();
    let mut out = vec![0.0; 3 * n3];
    for idx in 0..n3 {
        let g = metric.christoffel(idx);
        let tu = sym_at(&upper, 0, idx);
        for b in 0..3 {
            let mut v = 0.0;
            for a in 0..3 {
                v += d[sym(a, b)][a][idx];
                for c in 0..3 {
                    v += g[a][a][c] * tu[(c, b)] + g[b][a][c] * tu[(a, c)];
                }
            }
            out[b * n3 + idx] = v;
        }
    }
    GridField::new(grid, 3, out).expect("finite divergence")
}

/// Solves (Δ_L W)^b = −8πĵ^b on ĥ with W → 0.
pub fn solve_lichnerowicz_vector(hhat: &GridField, jhat: &GridField, opts: &SolverOptions) -> Result<(GridField, StageReport)> {
    let start = Instant::now();
    let metric = Metric::from_field(hhat)?;
    jhat.same_shape(&GridField::zeros(*hhat.grid(), 3))?;
    let op = VectorOperator::new(&metric, opts.boundary);
    let m = op.interior.len();
    let n3 = metric.grid.len();
    let mut rhs = vec![0.0; 3 * m];
    for (k, &p) in op.interior.nodes.iter().enumerate() {
        for d in 0..3 {
            let lowered: f64 = (0..3).map(|b| metric.h[p][(d, b)] * jhat.at(b, p)).sum();
            rhs[d * m + k] = 8.0 * std::f64::consts::PI * metric.sqrt_det[p] * lowered;
        }
    }
    let mut x = vec![0.0; 3 * m];
    let stats = op.solve(&rhs, &mut x, krylov(opts, min_sqrt_det(&metric)), "lichnerowicz_vector")?;
    let full = op.extend(&x);
    // Unscaled residual (Δ_L W + 8πĵ)^b = −h^{bd}(out_d − rhs_d)/√h.
    let out = op.apply_full(&full);
    let mut residual: f64 = 0.0;
    for (k, &p) in op.interior.nodes.iter().enumerate() {
        for b in 0..3 {
            let v: f64 = (0..3).map(|d| metric.inv[p][(b, d)] * (out[d * m + k] - rhs[d * m + k])).sum();
            residual = residual.max((v / metric.sqrt_det[p]).abs());
        }
    }
    let mut data = vec![0.0; 3 * n3];
    for c in 0..3 {
        data[c * n3..(c + 1) * n3].copy_from_slice(&full[c]);
    }
    Ok((
        GridField::new(metric.grid, 3, data)?,
        StageReport {
            stage: "lichnerowicz_vector".into(),
            residual,
            iterations: stats.iterations,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

/// The conformal Killing operator of W, lowered, as a 6-component field.
pub fn killing_field(metric: &Metric, w: &GridField) -> GridField {
    let arrays: [Vec<f64>; 3] = std::array::from_fn(|c| w.component(c).to_vec());
    sym_field(metric.grid, |idx| killing_lowered(metric, &arrays, idx))
}

/// Solves −Δ_ĥφ = 2πẑφ⁻³ + kφ⁻⁷/8, k = K̂ᵃ_bK̂ᵇ_a, by Newton continuation in τ.
pub fn solve_lichnerowicz_scalar(hhat: &GridField, zhat: &GridField, khat: &GridField, opts: &SolverOptions) -> Result<(GridField, StageReport)> {
    let start = Instant::now();
    let metric = Metric::from_field(hhat)?;
    let grid = metric.grid;
    let n3 = grid.len();
    let kk: Vec<f64> = (0..n3)
        .map(|idx| {
            let k = sym_at(khat, 0, idx);
            let mixed = metric.inv[idx] * k;
            (mixed * mixed).trace()
        })
        .collect();
    let z = zhat.component(0);
    if z.iter().any(|&v| v < 0.0) {
        log::warn!("lichnerowicz: source z has negative values (min {:e})", z.iter().cloned().fold(0.0, f64::min));
    }
    let op0 = ScalarOperator::new(&metric, vec![0.0; n3], opts.boundary);
    let sq = &metric.sqrt_det;
    let two_pi = 2.0 * std::f64::consts::PI;
    let source = |p: usize, phi: f64| two_pi * z[p] * phi.powi(-3) + kk[p] * phi.powi(-7) / 8.0;
    let source_derivative = |p: usize, phi: f64| 3.0 * two_pi * z[p] * phi.powi(-4) + 7.0 * kk[p] * phi.powi(-8) / 8.0;
    let residual_of = |u: &[f64], tau: f64| -> (Vec<f64>, f64) {
        let full: Vec<f64> = op0.interior.extend(u);
        let au = op0.apply_full(&full);
        let mut worst: f64 = 0.0;
        let r: Vec<f64> = op0
            .interior
            .nodes
            .iter()
            .zip(&au)
            .map(|(&p, a)| {
                let v = a - sq[p] * tau * source(p, 1.0 + full[p]);
                worst = worst.max((v / sq[p]).abs());
                v
            })
            .collect();
        (r, worst)
    };
    let mut u = vec![0.0; op0.interior.len()];
    let mut total_iterations = 0;
    let mut clamped = false;
    let mut tau_done: f64 = 0.0;
    let mut step: f64 = 0.25;
    let mut last_residual = 0.0;
    while tau_done < 1.0 {
        let tau = (tau_done + step).min(1.0);
        let saved = u.clone();
        let mut converged = false;
        let (mut r, mut worst) = residual_of(&u, tau);
        for _ in 0..40 {
            if worst <= opts.newton_tol {
                converged = true;
                break;
            }
            let full = op0.interior.extend(&u);
            let mass: Vec<f64> = (0..n3)
                .map(|p| {
                    if grid.is_boundary(p) {
                        0.0
                    } else {
                        sq[p] * tau * source_derivative(p, 1.0 + full[p])
                    }
                })
                .collect();
            let jac = op0.with_mass(mass);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let mut delta = vec![0.0; rhs.len()];
            let lin_tol = (0.01 * worst).max(0.1 * opts.newton_tol) * min_sqrt_det(&metric);
            let st = jac.solve(&rhs, &mut delta, KrylovOptions { tol: lin_tol, max_iterations: opts.max_iterations }, "lichnerowicz_scalar")?;
            total_iterations += st.iterations;
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
                let positive = op0.interior.extend(&trial).iter().all(|v| 1.0 + v > 0.0);
                if positive {
                    let (tr, tw) = residual_of(&trial, tau);
                    if tw < worst || t < 1e-3 {
                        u = trial;
                        r = tr;
                        worst = tw;
                        break;
                    }
                } else {
                    clamped = true;
                }
                t *= 0.5;
                if t < 1e-6 {
                    break;
                }
            }
        }
        if converged {
            tau_done = tau;
            last_residual = worst;
        } else {
            u = saved;
            step *= 0.5;
            if step < 1e-3 {
                return Err(EekError::Convergence {
                    stage: format!("lichnerowicz_scalar at tau = {tau}"),
                    iterations: total_iterations,
                    residual: worst,
                });
            }
        }
    }
    if clamped {
        log::warn!("lichnerowicz: line search was clamped to keep phi positive");
    }
    let full: Vec<f64> = op0.interior.extend(&u).iter().map(|v| 1.0 + v).collect();
    let min_phi = full.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_phi < 1.0 - 1e-8 {
        log::warn!("lichnerowicz: phi dips below 1 (min {min_phi})");
    }
    Ok((
        scalar_from(grid, full),
        StageReport {
            stage: "lichnerowicz_scalar".into(),
            residual: last_residual,
            iterations: total_iterations,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

/// York split: removes the trace and the longitudinal part L(X) from `a`.
pub fn york_projection(h: &GridField, a: &GridField, opts: &SolverOptions) -> Result<GridField> {
    let metric = Metric::from_field(h)?;
    let grid = metric.grid;
    let tf = sym_field(grid, |idx| {
        let m = sym_at(a, 0, idx);
        let tr = (metric.inv[idx].component_mul(&m)).sum();
        m - metric.h[idx] * (tr / 3.0)
    });
    let div = divergence_lowered(&metric, &tf);
    let source = div.map(|v| -v / (8.0 * std::f64::consts::PI));
    let (x, _) = solve_lichnerowicz_vector(h, &source, opts)?;
    let lx = killing_field(&metric, &x);
    tf.zip_map(&lx, |p, q| p - q)
}

/// Runs α → W → φ and assembles the physical data.
pub fn assemble_physical_data(free: &ConstraintFreeData, eos: &EquationOfState, opts: &SolverOptions) -> Result<(GravitationalData, Vec<StageReport>)> {
    let grid = *free.grid();
    let n3 = grid.len();
    for f in [&free.abar, &free.yhat, &free.vhat] {
        if f.grid() != &grid {
            return Err(EekError::ShapeMismatch("free data fields live on different grids".into()));
        }
    }
    let trace = free.trace_defect()?;
    if trace > 1e-8 {
        return Err(EekError::invalid(format!(
            "Abar is not trace-free (max |hbar^ab Abar_ab| = {trace:e}); apply the York projection first"
        )));
    }
    let mut reports = Vec::new();
    let start = Instant::now();
    let bc = brill_cantor_check(&free.hbar, opts)?;
    reports.push(StageReport {
        stage: "brill_cantor".into(),
        residual: bc.lambda_min,
        iterations: bc.iterations,
        wall_time: start.elapsed().as_secs_f64(),
    });
    if !bc.passes {
        return Err(EekError::BrillCantor { lambda_min: bc.lambda_min });
    }
    let (alpha, rep) = solve_alpha(&free.hbar, opts)?;
    reports.push(rep);
    let a = alpha.component(0);
    let hhat = sym_field(grid, |idx| sym_at(&free.hbar, 0, idx) * a[idx].powi(4));
    let hhat_metric = Metric::from_field(&hhat)?;

    let exponent = 2.0 / (eos.gamma - 1.0);
    for idx in 0..n3 {
        let y = free.yhat.at(0, idx);
        let v = [free.vhat.at(0, idx), free.vhat.at(1, idx), free.vhat.at(2, idx)];
        if y != 0.0 || v != [0.0; 3] {
            check_omega(eos, &hhat_metric.h[idx], &ScaledMatter { y, v }, 0.0).map_err(|e| match e {
                EekError::RegionViolation(m) => EekError::RegionViolation(format!("free matter data at grid point {:?}: {m}", grid.unravel(idx))),
                other => other,
            })?;
        }
    }
    let zhat = free.yhat.map(|y| if y > 0.0 { y.powf(exponent) } else { 0.0 });
    let jhat = GridField::from_fn(grid, 3, |_, _| {});
    let mut jdata = jhat.into_data();
    for c in 0..3 {
        for idx in 0..n3 {
            jdata[c * n3 + idx] = zhat.at(0, idx) * free.vhat.at(c, idx);
        }
    }
    let jhat = GridField::new(grid, 3, jdata)?;
    let (w, rep) = solve_lichnerowicz_vector(&hhat, &jhat, opts)?;
    reports.push(rep);
    let lw = killing_field(&hhat_metric, &w);
    let khat = sym_field(grid, |idx| sym_at(&free.abar, 0, idx) * a[idx].powi(-2) + sym_at(&lw, 0, idx));
    let (phi, rep) = solve_lichnerowicz_scalar(&hhat, &zhat, &khat, opts)?;
    reports.push(rep);
    let p = phi.component(0);
    let h = sym_field(grid, |idx| hhat_metric.h[idx] * p[idx].powi(4));
    let kext = sym_field(grid, |idx| sym_at(&khat, 0, idx) * p[idx].powi(-2));
    let z = GridField::new(grid, 1, (0..n3).map(|i| zhat.at(0, i) * p[i].powi(-8)).collect())?;
    let mut jd = vec![0.0; 3 * n3];
    for c in 0..3 {
        for i in 0..n3 {
            jd[c * n3 + i] = jhat.at(c, i) * p[i].powi(-10);
        }
    }
    let j = GridField::new(grid, 3, jd)?;
    Ok((
        GravitationalData {
            h,
            kext,
            z,
            j,
            alpha,
            phi,
            w,
        },
        reports,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    pub ham: GridField,
    pub mom: GridField,
    /// H_{0,δ+2} norms.
    pub ham_norm: f64,
    pub mom_norm: f64,
    pub ham_max: f64,
    pub mom_max: f64,
}

/// Width of the face layer excluded from residual evaluation.
pub const RESIDUAL_MARGIN: usize = 2;

/// Hamiltonian R − K_{ab}K^{ab} + (trK)² − 16πz and momentum
/// D_aK^{ab} − D^b trK + 8πj^b residuals with their weighted norms.
pub fn constraint_residuals(gd: &GravitationalData, delta: f64) -> Result<ConstraintResiduals> {
    let metric = Metric::from_field(&gd.h)?;
    let grid = metric.grid;
    let n3 = grid.len();
    let r = scalar_curvature(&gd.h)?;
    let tr: Vec<f64> = (0..n3).map(|i| (metric.inv[i].component_mul(&sym_at(&gd.kext, 0, i))).sum()).collect();
    let pi = std::f64::consts::PI;
    let mut ham: Vec<f64> = (0..n3)
        .map(|i| {
            let k = sym_at(&gd.kext, 0, i);
            let mixed = metric.inv[i] * k;
            r.at(0, i) - (mixed * mixed).trace() + tr[i] * tr[i] - 16.0 * pi * gd.z.at(0, i)
        })
        .collect();
    let div = divergence_lowered(&metric, &gd.kext);
    let dtr: [Vec<f64>; 3] = std::array::from_fn(|m| stencil::diff1(&tr, &grid, m));
    let mut mom = vec![0.0; 3 * n3];
    for i in 0..n3 {
        for b in 0..3 {
            let up: f64 = (0..3).map(|c| metric.inv[i][(b, c)] * dtr[c][i]).sum();
            mom[b * n3 + i] = div.at(b, i) - up + 8.0 * pi * gd.j.at(b, i);
        }
    }
    // Only nodes whose nested stencils stay off the box faces carry equations.
    let n = grid.n();
    for i in 0..n3 {
        if grid.unravel(i).iter().any(|&c| c < RESIDUAL_MARGIN || c + RESIDUAL_MARGIN >= n) {
            ham[i] = 0.0;
            for b in 0..3 {
                mom[b * n3 + i] = 0.0;
            }
        }
    }
    let ham = GridField::new(grid, 1, ham)?;
    let mom = GridField::new(grid, 3, mom)?;
    let p = DyadicPartition::for_grid(&grid);
    let idx = SobolevIndex::new(0.0, delta + 2.0)?;
    Ok(ConstraintResiduals {
        ham_norm: weighted_norm(&ham, idx, &p, 1)?.dyadic,
        mom_norm: weighted_norm(&mom, idx, &p, 1)?.dyadic,
        ham_max: ham.max_abs(),
        mom_max: mom.max_abs(),
        ham,
        mom,
    })
}

/// Largest admissible ŷ at each node for the given v̂ on a flat metric, scaled by `fraction`.
pub fn admissible_yhat_bound(eos: &EquationOfState, vhat: &GridField, fraction: f64) -> GridField {
    let grid = *vhat.grid();
    GridField::new(
        grid,
        1,
        (0..grid.len())
            .map(|i| {
                let q = (0..3).map(|c| vhat.at(c, i).powi(2)).sum::<f64>().sqrt();
                fraction * boundary_s(eos, q)
            })
            .collect(),
    )
    .expect("finite bound")
}
