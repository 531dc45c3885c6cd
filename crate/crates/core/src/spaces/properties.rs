//! Numerical checks of the H_{s,δ} inequalities. Every check evaluates both
//! sides over a family of fields, fits the constant as the largest ratio and
//! passes when that constant is finite and varies less than 10× over the family.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DyadicPartition, DyadicSpectral, NormStrategy};
use crate::error::{EekError, Result};
use crate::fields::{Grid, GridField, SobolevIndex, Spectral};

/// Largest allowed ratio between the extreme per-member constants.
pub const MAX_VARIATION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub ratios: Vec<f64>,
    /// Fitted constant: the largest ratio over the family.
    pub constant: f64,
    /// Largest over smallest ratio.
    pub variation: f64,
    /// Optional a priori bound the fitted constant must respect.
    pub bound: Option<f64>,
    pub pass: bool,
}

impl PropertyResult {
    pub fn from_ratios(name: &str, ratios: Vec<f64>, bound: Option<f64>) -> Self {
        let constant = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let variation = if min > 0.0 { constant / min } else { f64::INFINITY };
        let pass = !ratios.is_empty()
            && constant.is_finite()
            && variation < MAX_VARIATION
            && bound.map_or(true, |b| constant <= b);
        PropertyResult {
            name: name.to_string(),
            ratios,
            constant,
            variation,
            bound,
            pass,
        }
    }
}

pub trait PropertyCheck: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, family: &[GridField]) -> Result<PropertyResult>;
}

fn norm(u: &GridField, s: f64, delta: f64) -> Result<f64> {
    let p = DyadicPartition::for_grid(u.grid());
    Ok(DyadicSpectral.evaluate(u, SobolevIndex::new(s, delta)?, &p, 1)?.dyadic)
}

fn spectral_derivative(u: &GridField, axis: usize) -> Result<GridField> {
    let spec = Spectral::for_grid(u.grid());
    let (d, _) = spec.apply_multiplier(u.component(0), None, false, |idx| spec.derivative_symbol(axis, idx));
    GridField::new(*u.grid(), 1, d)
}

/// ‖uv‖_{2,−1} ≤ C‖u‖_{2,−5/4}‖v‖_{2,−5/4}, with 2·(−5/4) = −1 − 3/2.
pub struct Algebra;
impl PropertyCheck for Algebra {
    fn name(&self) -> &'static str {
        "algebra"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let mut ratios = Vec::new();
        for (i, u) in family.iter().enumerate() {
            let v = &family[(i + 1) % family.len()];
            let uv = u.zip_map(v, |a, b| a * b)?;
            ratios.push(norm(&uv, 2.0, -1.0)? / (norm(u, 2.0, -1.25)? * norm(v, 2.0, -1.25)?));
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, None))
    }
}

/// ‖F(u)‖_{2,−1} ≤ K‖u‖_{2,−1} for the smooth F(u) = u/(1+u²), F(0) = 0.
pub struct Moser;
impl PropertyCheck for Moser {
    fn name(&self) -> &'static str {
        "moser"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let mut ratios = Vec::new();
        for u in family {
            let f = u.map(|x| x / (1.0 + x * x));
            ratios.push(norm(&f, 2.0, -1.0)? / norm(u, 2.0, -1.0)?);
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, None))
    }
}

/// ‖|u|^γ‖_{2,−1} ≤ C(‖u‖_∞)‖u‖_{2,−1} with γ = 1.8 (so that s < γ + 1/2).
pub struct FractionalPower;
impl PropertyCheck for FractionalPower {
    fn name(&self) -> &'static str {
        "fractional-power"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let mut ratios = Vec::new();
        for u in family {
            let f = u.map(|x| x.abs().powf(1.8));
            ratios.push(norm(&f, 2.0, -1.0)? / norm(u, 2.0, -1.0)?);
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, None))
    }
}

/// ‖∂_i u‖_{s−1,δ+1} ≤ ‖u‖_{s,δ} at s = 2, δ = −1, with discrete slack 2.
pub struct Derivative;
impl PropertyCheck for Derivative {
    fn name(&self) -> &'static str {
        "derivative"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let mut ratios = Vec::new();
        for u in family {
            for axis in 0..3 {
                let d = spectral_derivative(u, axis)?;
                ratios.push(norm(&d, 1.0, 0.0)? / norm(u, 2.0, -1.0)?);
            }
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, Some(2.0)))
    }
}

/// sup ⟨x⟩^β|u| ≤ C‖u‖_{2,−1} with β = δ + 3/2 = 1/2.
pub struct Embedding;
impl PropertyCheck for Embedding {
    fn name(&self) -> &'static str {
        "embedding"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let mut ratios = Vec::new();
        for u in family {
            let g = u.grid();
            let sup = (0..g.len())
                .map(|idx| (1.0 + g.radius(idx)).powf(0.5) * u.at(0, idx).abs())
                .fold(0.0, f64::max);
            ratios.push(sup / norm(u, 2.0, -1.0)?);
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, None))
    }
}

/// ‖u‖_{s',δ} ≤ ‖u‖_{s,δ}^{s'/s}‖u‖_{0,δ}^{1−s'/s} at s = 2, s' = 1.2, slack 4.
pub struct Intermediate;
impl PropertyCheck for Intermediate {
    fn name(&self) -> &'static str {
        "intermediate"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let (s, sp, delta) = (2.0, 1.2, -1.0);
        let th = sp / s;
        let mut ratios = Vec::new();
        for u in family {
            let rhs = norm(u, s, delta)?.powf(th) * norm(u, 0.0, delta)?.powf(1.0 - th);
            ratios.push(norm(u, sp, delta)? / rhs);
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, Some(4.0)))
    }
}

/// ‖u‖_{s,δ} ≤ √2·ε‖u‖_{s₁,δ} + C(ε)‖u‖_{s₀,δ} at s₀ < s < s₁ = (0, 1, 2), ε = 1/2.
pub struct IntermediateEpsilon;
impl PropertyCheck for IntermediateEpsilon {
    fn name(&self) -> &'static str {
        "intermediate-epsilon"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let eps = 0.5;
        let mut ratios = Vec::new();
        for u in family {
            let rhs = 2f64.sqrt() * eps * norm(u, 2.0, -1.0)? + norm(u, 0.0, -1.0)?;
            ratios.push(norm(u, 1.0, -1.0)? / rhs);
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, None))
    }
}

/// Kato–Ponce commutator estimate at s = 2 with f = g = u.
pub struct KatoPonce;
impl PropertyCheck for KatoPonce {
    fn name(&self) -> &'static str {
        "kato-ponce"
    }
    fn run(&self, family: &[GridField]) -> Result<PropertyResult> {
        let mut ratios = Vec::new();
        for u in family {
            ratios.push(kato_ponce_check(u, u, 2.0)?.ratio);
        }
        Ok(PropertyResult::from_ratios(self.name(), ratios, None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatoPonceReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// RHS vanished while LHS did not.
    pub anomaly: bool,
}

/// ‖Λ^s(fg) − fΛ^s g‖_{L²} against ‖∇f‖_∞‖g‖_{H^{s−1}} + ‖f‖_{H^s}‖g‖_∞, spectrally.
pub fn kato_ponce_check(f: &GridField, g: &GridField, s: f64) -> Result<KatoPonceReport> {
    f.same_shape(g)?;
    if f.components() != 1 {
        return Err(EekError::invalid("Kato-Ponce check takes scalar fields"));
    }
    let grid = *f.grid();
    let spec = Spectral::for_grid(&grid);
    let tf: Vec<f64> = (0..grid.len()).map(|i| spec.taper(i) * f.at(0, i)).collect();
    let tg: Vec<f64> = (0..grid.len()).map(|i| spec.taper(i) * g.at(0, i)).collect();
    let fg: Vec<f64> = tf.iter().zip(&tg).map(|(a, b)| a * b).collect();
    let lambda = |idx: usize| Complex64::new((1.0 + spec.k2(idx)).powf(0.5 * s), 0.0);
    let (l_fg, l_g) = spec.apply_multiplier(&fg, Some(&tg), false, lambda);
    let l_g = l_g.expect("paired transform");
    let h = grid.spacing();
    let lhs = (h * h * h
        * l_fg
            .iter()
            .zip(&l_g)
            .zip(&tf)
            .map(|((a, b), c)| (a - c * b).powi(2))
            .sum::<f64>())
    .sqrt();
    let d: Vec<Vec<f64>> = (0..3)
        .map(|axis| spec.apply_multiplier(&tf, None, false, |idx| spec.derivative_symbol(axis, idx)).0)
        .collect();
    let grad_sup = (0..grid.len())
        .map(|i| (d[0][i] * d[0][i] + d[1][i] * d[1][i] + d[2][i] * d[2][i]).sqrt())
        .fold(0.0, f64::max);
    let g_sup = tg.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // f and g are already tapered, so their Bessel norms are taken without a second taper.
    let spec_norm = |u: &[f64], order: f64| -> f64 {
        spec.weighted_sum(&[u], false, |idx| (1.0 + spec.k2(idx)).powf(order)).sqrt()
    };
    let rhs = grad_sup * spec_norm(&tg, s - 1.0) + spec_norm(&tf, s) * g_sup;
    let tol = 1e-12 * (1.0 + rhs);
    let anomaly = rhs == 0.0 && lhs > tol;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(KatoPonceReport { lhs, rhs, ratio, anomaly })
}

/// Checks selectable by name.
pub struct PropertyRegistry {
    checks: Vec<Box<dyn PropertyCheck>>,
}

impl Default for PropertyRegistry {
    fn default() -> Self {
        PropertyRegistry {
            checks: vec![
                Box::new(Algebra),
                Box::new(Moser),
                Box::new(FractionalPower),
                Box::new(Derivative),
                Box::new(Embedding),
                Box::new(Intermediate),
                Box::new(IntermediateEpsilon),
                Box::new(KatoPonce),
            ],
        }
    }
}

impl PropertyRegistry {
    pub fn names(&self) -> Vec<&'static str> {
        self.checks.iter().map(|c| c.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn PropertyCheck> {
        self.checks
            .iter()
            .find(|c| c.name() == name)
            .map(|c| c.as_ref())
            .ok_or_else(|| EekError::invalid(format!("unknown property check `{name}`; known: {}", self.names().join(", "))))
    }

    pub fn run_all(&self, family: &[GridField]) -> Result<Vec<PropertyResult>> {
        self.checks.iter().map(|c| c.run(family)).collect()
    }
}

/// Runs every registered check over `family`.
pub fn property_suite(family: &[GridField]) -> Result<Vec<PropertyResult>> {
    if family.is_empty() {
        return Err(EekError::invalid("property suite needs a nonempty family"));
    }
    PropertyRegistry::default().run_all(family)
}

/// Seeded family of Gaussians A·exp(−|x−c|²/w²) with A ∈ [1/2, 1], w ∈ [1, 2], |c| ≤ 3/2.
pub fn gaussian_family(grid: Grid, count: usize, seed: u64) -> Vec<GridField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a: f64 = rng.gen_range(0.5..1.0);
            let w: f64 = rng.gen_range(1.0..2.0);
            let r: f64 = rng.gen_range(0.0..1.5);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let ph: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let c = [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()];
            GridField::scalar_fn(grid, |x| {
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
                a * (-d2 / (w * w)).exp()
            })
        })
        .collect()
}
