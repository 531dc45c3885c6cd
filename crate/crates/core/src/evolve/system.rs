//! First-order symmetric hyperbolic systems A⁰∂_tU = ΣAᵃ∂_aU + BU + F on the
//! 55-component state, selectable by name.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix5, SymmetricEigen, Vector5};

use super::geometry::{metric_derivative, quadratic_source, PointGeometry};
use super::{dg_slot, FLUID_OFFSET, G_PAIRS, STATE_COMPONENTS};
use crate::error::{EekError, Result};
use crate::fluid::{eos_unchecked, euler_matrix, EquationOfState, PAIRS};

/// Euler unknown (w, u⁰, u¹, u², u³) stored at each fluid slot (w, u¹, u², u³, u⁰ − 1).
const FLUID_TO_EULER: [usize; 5] = [0, 2, 3, 4, 1];

/// Pointwise coefficient evaluators. Every method takes the state at which the
/// coefficients are frozen; for the quasilinear system that is the current state.
pub trait FirstOrderSystem: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Positivity bound: μ⁻¹|U|² ≤ UᵀA⁰U ≤ μ|U|² on admissible states.
    fn mu(&self) -> f64;
    /// True when no coefficient depends on the state.
    fn is_linear(&self) -> bool;
    fn a0(&self, frozen: &[f64]) -> Result<DMatrix<f64>>;
    /// Aᵃ for `axis` = a − 1.
    fn aa(&self, axis: usize, frozen: &[f64]) -> Result<DMatrix<f64>>;
    fn b(&self, frozen: &[f64]) -> Result<DMatrix<f64>>;
    fn f(&self, frozen: &[f64]) -> Result<DVector<f64>>;
    /// Largest coordinate characteristic speed along any axis.
    fn max_speed(&self, frozen: &[f64]) -> Result<f64>;

    /// ∂_tU = A⁰⁻¹(ΣAᵃ∂_aU + BU + F) with coefficients frozen at `frozen`.
    fn rhs(&self, frozen: &[f64], u: &[f64], du: [&[f64]; 3], out: &mut [f64]) -> Result<()> {
        let u_vec = DVector::from_column_slice(u);
        let mut total = self.b(frozen)? * &u_vec + self.f(frozen)?;
        for (axis, d) in du.iter().enumerate() {
            total += self.aa(axis, frozen)? * DVector::from_column_slice(d);
        }
        let sol = self
            .a0(frozen)?
            .lu()
            .solve(&total)
            .ok_or_else(|| EekError::Numerical { stage: "rhs".into(), detail: "A0 is singular".into() })?;
        out.copy_from_slice(sol.as_slice());
        Ok(())
    }

    /// Quadratic forms vᵀA⁰v restricted to the metric, derivative and fluid blocks.
    fn a0_blocks(&self, frozen: &[f64], v: &[f64]) -> Result<[f64; 3]> {
        let a0 = self.a0(frozen)?;
        let block = |lo: usize, hi: usize| {
            let mut s = 0.0;
            for i in lo..hi {
                for j in lo..hi {
                    s += v[i] * a0[(i, j)] * v[j];
                }
            }
            s
        };
        Ok([block(0, G_PAIRS), block(G_PAIRS, FLUID_OFFSET), block(FLUID_OFFSET, STATE_COMPONENTS)])
    }

    /// Smallest and largest eigenvalue of A⁰.
    fn a0_bounds(&self, frozen: &[f64]) -> Result<(f64, f64)> {
        let e = SymmetricEigen::new(self.a0(frozen)?).eigenvalues;
        Ok((e.min(), e.max()))
    }
}

fn singular() -> EekError {
    EekError::SingularMetric { location: [0; 3] }
}

/// Fluid quantities at a frozen state.
struct FluidCoefficients {
    a: [Matrix5<f64>; 4],
}

/// The coupled reduced Einstein–Euler system in harmonic gauge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EinsteinEuler {
    pub eos: EquationOfState,
    pub mu: f64,
}

/// Default positivity bound: four times the spread of A⁰ at the vacuum Minkowski state.
pub fn default_mu(eos: &EquationOfState) -> f64 {
    let k2 = eos_unchecked(eos, 0.0).kappa.powi(2);
    4.0 * k2.max(1.0 / k2).max(1.0)
}

pub fn assemble_einstein_system(eos: EquationOfState) -> EinsteinEuler {
    EinsteinEuler { eos, mu: default_mu(&eos) }
}

fn four_velocity(u: &[f64]) -> [f64; 4] {
    [1.0 + u[FLUID_OFFSET + 4], u[FLUID_OFFSET + 1], u[FLUID_OFFSET + 2], u[FLUID_OFFSET + 3]]
}

impl EinsteinEuler {
    fn geometry(&self, frozen: &[f64]) -> Result<PointGeometry> {
        let geo = PointGeometry::from_state(frozen).ok_or_else(singular)?;
        if !(geo.ginv[(0, 0)] < 0.0) {
            return Err(EekError::Numerical {
                stage: "einstein".into(),
                detail: format!("g^00 = {} >= 0: the time slices are not spacelike", geo.ginv[(0, 0)]),
            });
        }
        Ok(geo)
    }

    fn fluid(&self, geo: &PointGeometry, frozen: &[f64]) -> Result<FluidCoefficients> {
        let q = eos_unchecked(&self.eos, frozen[FLUID_OFFSET]);
        if q.sigma2 >= 1.0 {
            return Err(EekError::Hyperbolicity { sigma2: q.sigma2 });
        }
        let u = four_velocity(frozen);
        let ul: [f64; 4] = std::array::from_fn(|a| (0..4).map(|b| geo.g[(a, b)] * u[b]).sum());
        let uu: f64 = (0..4).map(|a| u[a] * ul[a]).sum();
        if !(uu < 0.0) || u[0] <= 0.0 {
            return Err(EekError::Numerical {
                stage: "euler".into(),
                detail: format!("four-velocity is not future timelike: g(u,u) = {uu}, u^0 = {}", u[0]),
            });
        }
        let sigma = q.sigma2.sqrt();
        Ok(FluidCoefficients {
            a: std::array::from_fn(|nu| euler_matrix(nu, q.kappa, sigma, &u, &ul, &geo.g)),
        })
    }

    /// 16π(ε+p)u_αu_β + 8π(ε−p)g_{αβ}, the trace-reversed stress moved to the right-hand side.
    fn matter_source(&self, geo: &PointGeometry, frozen: &[f64]) -> [f64; G_PAIRS] {
        let q = eos_unchecked(&self.eos, frozen[FLUID_OFFSET]);
        if q.epsilon == 0.0 && q.p == 0.0 {
            return [0.0; G_PAIRS];
        }
        let u = four_velocity(frozen);
        let ul: [f64; 4] = std::array::from_fn(|a| (0..4).map(|b| geo.g[(a, b)] * u[b]).sum());
        let pi = std::f64::consts::PI;
        std::array::from_fn(|k| {
            let (a, b) = PAIRS[k];
            16.0 * pi * (q.epsilon + q.p) * ul[a] * ul[b] + 8.0 * pi * (q.epsilon - q.p) * geo.g[(a, b)]
        })
    }

    /// Connection contraction −Σ_ν Â^ν (0, Γ^β_{νλ}u^λ) in Euler ordering, split into the
    /// part linear in the state's (u^a, u⁰−1) and the constant part from u⁰'s unit offset.
    fn connection_rows(&self, geo: &PointGeometry, fl: &FluidCoefficients) -> [[f64; 4]; 5] {
        let gamma = geo.christoffel();
        // row i, column λ: −Σ_ν Σ_β Â^ν_{i,β+1} Γ^β_{νλ}
        let mut m = [[0.0; 4]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for nu in 0..4 {
                    for b in 0..4 {
                        s += fl.a[nu][(i, b + 1)] * gamma[b][nu][l];
                    }
                }
                *v = -s;
            }
        }
        m
    }
}

impl FirstOrderSystem for EinsteinEuler {
    fn name(&self) -> &'static str {
        "einstein-euler"
    }

    fn description(&self) -> &'static str {
        "reduced Einstein equations in harmonic gauge coupled to the Makino-variable Euler system"
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn a0(&self, frozen: &[f64]) -> Result<DMatrix<f64>> {
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let mut m = DMatrix::zeros(STATE_COMPONENTS, STATE_COMPONENTS);
        for p in 0..G_PAIRS {
            m[(p, p)] = 1.0;
            for a in 1..4 {
                for b in 1..4 {
                    m[(dg_slot(a, p), dg_slot(b, p))] = geo.ginv[(a, b)];
                }
            }
            m[(dg_slot(0, p), dg_slot(0, p))] = -geo.ginv[(0, 0)];
        }
        put_fluid_block(&mut m, &fl.a[0], 1.0);
        Ok(m)
    }

    fn aa(&self, axis: usize, frozen: &[f64]) -> Result<DMatrix<f64>> {
        let c = axis + 1;
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let mut m = DMatrix::zeros(STATE_COMPONENTS, STATE_COMPONENTS);
        for p in 0..G_PAIRS {
            let h0 = dg_slot(0, p);
            for a in 1..4 {
                m[(dg_slot(a, p), h0)] = geo.ginv[(a, c)];
                m[(h0, dg_slot(a, p))] = geo.ginv[(c, a)];
            }
            m[(h0, h0)] = 2.0 * geo.ginv[(0, c)];
        }
        put_fluid_block(&mut m, &fl.a[c], -1.0);
        Ok(m)
    }

    fn b(&self, frozen: &[f64]) -> Result<DMatrix<f64>> {
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let mut m = DMatrix::zeros(STATE_COMPONENTS, STATE_COMPONENTS);
        for p in 0..G_PAIRS {
            m[(p, dg_slot(0, p))] = 1.0;
        }
        let mut unit = vec![0.0; STATE_COMPONENTS];
        for k in G_PAIRS..FLUID_OFFSET {
            unit[k] = 1.0;
            let src = quadratic_source(&geo.ginv, &geo.dg, &metric_derivative(&unit));
            unit[k] = 0.0;
            for p in 0..G_PAIRS {
                m[(dg_slot(0, p), k)] = -src[p];
            }
        }
        let conn = self.connection_rows(&geo, &fl);
        for (slot, &e) in FLUID_TO_EULER.iter().enumerate() {
            for l in 1..4 {
                m[(FLUID_OFFSET + slot, FLUID_OFFSET + l)] = conn[e][l];
            }
            m[(FLUID_OFFSET + slot, FLUID_OFFSET + 4)] = conn[e][0];
        }
        Ok(m)
    }

    fn f(&self, frozen: &[f64]) -> Result<DVector<f64>> {
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let mut v = DVector::zeros(STATE_COMPONENTS);
        let s = self.matter_source(&geo, frozen);
        for p in 0..G_PAIRS {
            v[dg_slot(0, p)] = s[p];
        }
        let conn = self.connection_rows(&geo, &fl);
        for (slot, &e) in FLUID_TO_EULER.iter().enumerate() {
            v[FLUID_OFFSET + slot] = conn[e][0];
        }
        Ok(v)
    }

    fn max_speed(&self, frozen: &[f64]) -> Result<f64> {
        let geo = self.geometry(frozen)?;
        let g00 = geo.ginv[(0, 0)];
        let mut speed: f64 = 0.0;
        for a in 1..4 {
            let b = geo.ginv[(0, a)];
            let disc = b * b - g00 * geo.ginv[(a, a)];
            let root = disc.max(0.0).sqrt();
            speed = speed.max(((b + root) / g00).abs()).max(((b - root) / g00).abs());
        }
        Ok(speed)
    }

    fn rhs(&self, frozen: &[f64], u: &[f64], du: [&[f64]; 3], out: &mut [f64]) -> Result<()> {
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let neg_g00 = -geo.ginv[(0, 0)];
        for p in 0..G_PAIRS {
            out[p] = u[dg_slot(0, p)];
            for a in 1..4 {
                out[dg_slot(a, p)] = du[a - 1][dg_slot(0, p)];
            }
        }
        let src = if std::ptr::eq(frozen, u) {
            quadratic_source(&geo.ginv, &geo.dg, &geo.dg)
        } else {
            quadratic_source(&geo.ginv, &geo.dg, &metric_derivative(u))
        };
        let matter = self.matter_source(&geo, frozen);
        for p in 0..G_PAIRS {
            let h0 = dg_slot(0, p);
            let mut num = matter[p] - src[p];
            for c in 1..4 {
                num += 2.0 * geo.ginv[(0, c)] * du[c - 1][h0];
                for b in 1..4 {
                    num += geo.ginv[(c, b)] * du[c - 1][dg_slot(b, p)];
                }
            }
            out[h0] = num / neg_g00;
        }

        // Fluid: Â⁰∂_tV = −Σ_a Â^a ∂_aV − Σ_ν Â^ν (0, Γ^β_{νλ}u^λ).
        let euler_of = |v: &[f64]| -> Vector5<f64> { Vector5::from_fn(|e, _| v[FLUID_OFFSET + euler_slot(e)]) };
        let mut total = Vector5::zeros();
        for (a, d) in du.iter().enumerate() {
            total -= fl.a[a + 1] * euler_of(d);
        }
        let conn = self.connection_rows(&geo, &fl);
        let ucur = four_velocity(u);
        for (i, row) in conn.iter().enumerate() {
            total[i] += (0..4).map(|l| row[l] * ucur[l]).sum::<f64>();
        }
        let chol = fl.a[0].cholesky().ok_or_else(|| EekError::Numerical {
            stage: "euler".into(),
            detail: "fluid A0 is not positive definite".into(),
        })?;
        let dt = chol.solve(&total);
        for (slot, &e) in FLUID_TO_EULER.iter().enumerate() {
            out[FLUID_OFFSET + slot] = dt[e];
        }
        Ok(())
    }

    fn a0_blocks(&self, frozen: &[f64], v: &[f64]) -> Result<[f64; 3]> {
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let metric: f64 = v[..G_PAIRS].iter().map(|x| x * x).sum();
        let mut deriv = 0.0;
        for p in 0..G_PAIRS {
            for a in 1..4 {
                for b in 1..4 {
                    deriv += v[dg_slot(a, p)] * geo.ginv[(a, b)] * v[dg_slot(b, p)];
                }
            }
            deriv -= geo.ginv[(0, 0)] * v[dg_slot(0, p)].powi(2);
        }
        let ve = Vector5::from_fn(|e, _| v[FLUID_OFFSET + euler_slot(e)]);
        let fluid = (ve.transpose() * fl.a[0] * ve)[0];
        Ok([metric, deriv, fluid])
    }

    fn a0_bounds(&self, frozen: &[f64]) -> Result<(f64, f64)> {
        let geo = self.geometry(frozen)?;
        let fl = self.fluid(&geo, frozen)?;
        let spatial: Matrix3<f64> = geo.ginv.fixed_view::<3, 3>(1, 1).into_owned();
        let es = SymmetricEigen::new(spatial).eigenvalues;
        let ef = SymmetricEigen::new(fl.a[0]).eigenvalues;
        let lo = es.min().min(ef.min()).min(1.0).min(-geo.ginv[(0, 0)]);
        let hi = es.max().max(ef.max()).max(1.0).max(-geo.ginv[(0, 0)]);
        Ok((lo, hi))
    }
}

/// State slot holding Euler unknown `e`.
#[inline]
fn euler_slot(e: usize) -> usize {
    const SLOT: [usize; 5] = [0, 4, 1, 2, 3];
    SLOT[e]
}

fn put_fluid_block(m: &mut DMatrix<f64>, a: &Matrix5<f64>, sign: f64) {
    for (i, &ei) in FLUID_TO_EULER.iter().enumerate() {
        for (j, &ej) in FLUID_TO_EULER.iter().enumerate() {
            m[(FLUID_OFFSET + i, FLUID_OFFSET + j)] = sign * a[(ei, ej)];
        }
    }
}

/// The Einstein–Euler principal part and lower-order terms linearised about the
/// vacuum Minkowski state: a constant-coefficient system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearWave {
    inner: EinsteinEuler,
}

impl LinearWave {
    pub fn new(eos: EquationOfState) -> Self {
        LinearWave { inner: assemble_einstein_system(eos) }
    }
}

const ZERO_STATE: [f64; STATE_COMPONENTS] = [0.0; STATE_COMPONENTS];

impl FirstOrderSystem for LinearWave {
    fn name(&self) -> &'static str {
        "linear-wave"
    }
    fn description(&self) -> &'static str {
        "constant-coefficient system frozen at the vacuum Minkowski state"
    }
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn a0(&self, _frozen: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.a0(&ZERO_STATE)
    }
    fn aa(&self, axis: usize, _frozen: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.aa(axis, &ZERO_STATE)
    }
    fn b(&self, _frozen: &[f64]) -> Result<DMatrix<f64>> {
        self.inner.b(&ZERO_STATE)
    }
    fn f(&self, _frozen: &[f64]) -> Result<DVector<f64>> {
        self.inner.f(&ZERO_STATE)
    }
    fn max_speed(&self, _frozen: &[f64]) -> Result<f64> {
        self.inner.max_speed(&ZERO_STATE)
    }
    fn rhs(&self, _frozen: &[f64], u: &[f64], du: [&[f64]; 3], out: &mut [f64]) -> Result<()> {
        self.inner.rhs(&ZERO_STATE, u, du, out)
    }
    fn a0_blocks(&self, _frozen: &[f64], v: &[f64]) -> Result<[f64; 3]> {
        self.inner.a0_blocks(&ZERO_STATE, v)
    }
    fn a0_bounds(&self, _frozen: &[f64]) -> Result<(f64, f64)> {
        self.inner.a0_bounds(&ZERO_STATE)
    }
}

/// Named evolution systems for one equation of state.
pub struct SystemRegistry {
    systems: Vec<Box<dyn FirstOrderSystem>>,
}

impl SystemRegistry {
    pub fn new(eos: EquationOfState) -> Self {
        SystemRegistry {
            systems: vec![Box::new(assemble_einstein_system(eos)), Box::new(LinearWave::new(eos))],
        }
    }

    pub fn register(&mut self, system: Box<dyn FirstOrderSystem>) {
        self.systems.retain(|s| s.name() != system.name());
        self.systems.push(system);
    }

    pub fn get(&self, name: &str) -> Result<&dyn FirstOrderSystem> {
        self.systems
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| EekError::invalid(format!("unknown evolution system `{name}`; known: {}", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.systems.iter().map(|s| s.name()).collect()
    }
}
