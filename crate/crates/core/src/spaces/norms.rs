use super::DyadicPartition;
use crate::error::{EekError, Result};
use crate::fields::{bessel_norm, scale_field_onto, stencil, Grid, GridField, SobolevIndex, Spectral};

/// Half width of the target grid used when shells are literally resampled; every
/// rescaled shell (ψ_j u)(2^j x) is supported in |x| ≤ 8.
pub const RESAMPLE_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub strategy: String,
    /// √(Σ shell_terms²).
    pub dyadic: f64,
    /// Integer-order weighted integral norm, when the order allows it.
    pub integral: Option<f64>,
    pub shell_terms: Vec<f64>,
    /// Shell weights 2^{(3/2+δ)2j}.
    pub weights: Vec<f64>,
    /// Set when the outermost shell carries more than 10% of the norm.
    pub truncation_warning: bool,
}

impl NormReport {
    fn from_terms(strategy: &str, shell_terms: Vec<f64>, weights: Vec<f64>) -> Self {
        let dyadic = shell_terms.iter().map(|t| t * t).sum::<f64>().sqrt();
        let last = shell_terms.last().copied().unwrap_or(0.0);
        let truncation_warning = shell_terms.len() > 1 && last > 0.1 * dyadic;
        if truncation_warning {
            log::warn!("{strategy}: outermost shell carries {:.1}% of the norm", 100.0 * last / dyadic);
        }
        NormReport {
            strategy: strategy.to_string(),
            dyadic,
            integral: None,
            shell_terms,
            weights,
            truncation_warning,
        }
    }
}

/// One way of evaluating an H_{s,δ} norm.
pub trait NormStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, u: &GridField, idx: SobolevIndex, p: &DyadicPartition, gamma_psi: u32) -> Result<NormReport>;
}

fn check_gamma(gamma_psi: u32) -> Result<()> {
    if matches!(gamma_psi, 1 | 2 | 4) {
        Ok(())
    } else {
        Err(EekError::invalid(format!("partition power must be 1, 2 or 4, got {gamma_psi}")))
    }
}

fn shell_weight(j: usize, delta: f64) -> f64 {
    2f64.powf((1.5 + delta) * 2.0 * j as f64)
}

/// Multiplies every component of `u` by ψ_j^γ; `None` when the shell misses the grid.
fn localise(u: &GridField, psi: &[f64], gamma_psi: u32) -> Option<Vec<Vec<f64>>> {
    if psi.iter().all(|&p| p == 0.0) {
        return None;
    }
    let pw: Vec<f64> = psi.iter().map(|p| p.powi(gamma_psi as i32)).collect();
    Some(
        (0..u.components())
            .map(|c| u.component(c).iter().zip(&pw).map(|(a, b)| a * b).collect())
            .collect(),
    )
}

/// Dyadic norm with each dilated shell norm evaluated through the identity
/// ‖f_ε‖²_{H^s} = ε⁻³∫(1+ε²|ξ|²)^s|f̂|², so no shell is ever resampled.
pub struct DyadicSpectral;

impl DyadicSpectral {
    /// Reports for several indices at once; each shell is transformed a single time.
    pub fn evaluate_many(&self, u: &GridField, indices: &[SobolevIndex], p: &DyadicPartition, gamma_psi: u32) -> Result<Vec<NormReport>> {
        check_gamma(gamma_psi)?;
        let spec = Spectral::for_grid(u.grid());
        let shells = p.j_max() + 1;
        let mut jobs = Vec::new();
        for j in 0..shells {
            let psi = p.sample(j, u.grid());
            if let Some(parts) = localise(u, &psi, gamma_psi) {
                jobs.extend(parts.into_iter().map(|part| (j, part)));
            }
        }
        // δ only enters through the shell weights, so one sum per distinct order suffices.
        let mut orders: Vec<f64> = Vec::new();
        for idx in indices {
            if !orders.contains(&idx.s) {
                orders.push(idx.s);
            }
        }
        let mut by_order = vec![vec![0.0; shells]; orders.len()];
        let mut accumulate = |j: usize, power: &[f64]| {
            let eps = 2f64.powi(j as i32);
            let e2 = eps * eps;
            for (m, &s) in orders.iter().enumerate() {
                let total: f64 = if s.fract() == 0.0 {
                    let k = s as i32;
                    power.iter().enumerate().map(|(i, pw)| (1.0 + e2 * spec.k2(i)).powi(k) * pw).sum()
                } else {
                    power.iter().enumerate().map(|(i, pw)| (1.0 + e2 * spec.k2(i)).powf(s) * pw).sum()
                };
                by_order[m][j] += total / (e2 * eps);
            }
        };
        for pair in jobs.chunks(2) {
            let (pf, pg) = spec.power_spectra(&pair[0].1, pair.get(1).map(|x| x.1.as_slice()), true);
            accumulate(pair[0].0, &pf);
            if let Some(pg) = pg {
                accumulate(pair[1].0, &pg);
            }
        }
        Ok(indices
            .iter()
            .map(|idx| {
                let sq = &by_order[orders.iter().position(|&s| s == idx.s).expect("order listed")];
                let weights: Vec<f64> = (0..shells).map(|j| shell_weight(j, idx.delta)).collect();
                let terms = sq.iter().zip(&weights).map(|(v, w)| (w * v).sqrt()).collect();
                NormReport::from_terms(self.name(), terms, weights)
            })
            .collect())
    }
}

impl NormStrategy for DyadicSpectral {
    fn name(&self) -> &'static str {
        "dyadic"
    }

    fn evaluate(&self, u: &GridField, idx: SobolevIndex, p: &DyadicPartition, gamma_psi: u32) -> Result<NormReport> {
        Ok(self.evaluate_many(u, &[idx], p, gamma_psi)?.remove(0))
    }
}

/// Dyadic norm following the definition literally: each shell is rescaled by
/// trilinear interpolation onto a fixed grid and its Bessel norm taken there.
pub struct DyadicResampled;

impl NormStrategy for DyadicResampled {
    fn name(&self) -> &'static str {
        "dyadic-resampled"
    }

    fn evaluate(&self, u: &GridField, idx: SobolevIndex, p: &DyadicPartition, gamma_psi: u32) -> Result<NormReport> {
        check_gamma(gamma_psi)?;
        let target = Grid::new(u.grid().n(), RESAMPLE_HALF_WIDTH)?;
        let mut terms = Vec::new();
        let mut weights = Vec::new();
        for j in 0..=p.j_max() {
            let w = shell_weight(j, idx.delta);
            weights.push(w);
            let psi = p.sample(j, u.grid());
            let term = match localise(u, &psi, gamma_psi) {
                None => 0.0,
                Some(parts) => {
                    let f = GridField::new(*u.grid(), u.components(), parts.concat())?;
                    let g = scale_field_onto(&f, 2f64.powi(j as i32), target)?;
                    w.sqrt() * bessel_norm(&g, idx.s)?
                }
            };
            terms.push(term);
        }
        Ok(NormReport::from_terms(self.name(), terms, weights))
    }
}

/// The integer-order weighted integral norm Σ_{|α|≤m}‖⟨x⟩^{δ+|α|}∂^αu‖²_{L²}.
pub struct IntegralNorm;

impl NormStrategy for IntegralNorm {
    fn name(&self) -> &'static str {
        "integral"
    }

    fn evaluate(&self, u: &GridField, idx: SobolevIndex, _p: &DyadicPartition, _gamma_psi: u32) -> Result<NormReport> {
        if idx.s.fract() != 0.0 {
            return Err(EekError::invalid(format!(
                "the integral norm needs an integer order, got {}",
                idx.s
            )));
        }
        let value = integral_norm(u, idx.s as usize, idx.delta)?;
        let mut report = NormReport::from_terms(self.name(), vec![value], vec![1.0]);
        report.integral = Some(value);
        Ok(report)
    }
}

/// Norm strategies selectable by name.
pub struct NormRegistry {
    strategies: Vec<Box<dyn NormStrategy>>,
}

impl Default for NormRegistry {
    fn default() -> Self {
        NormRegistry {
            strategies: vec![Box::new(DyadicSpectral), Box::new(DyadicResampled), Box::new(IntegralNorm)],
        }
    }
}

impl NormRegistry {
    pub fn register(&mut self, strategy: Box<dyn NormStrategy>) {
        self.strategies.retain(|s| s.name() != strategy.name());
        self.strategies.push(strategy);
    }

    pub fn get(&self, name: &str) -> Result<&dyn NormStrategy> {
        self.strategies
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| EekError::invalid(format!("unknown norm strategy `{name}`; known: {}", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.iter().map(|s| s.name()).collect()
    }
}

/// Dyadic H_{s,δ} norm with the integral norm attached for s ∈ {0, 1, 2}.
pub fn weighted_norm(u: &GridField, idx: SobolevIndex, p: &DyadicPartition, gamma_psi: u32) -> Result<NormReport> {
    let mut report = DyadicSpectral.evaluate(u, idx, p, gamma_psi)?;
    if idx.s.fract() == 0.0 && idx.s <= 2.0 {
        report.integral = Some(integral_norm(u, idx.s as usize, idx.delta)?);
    }
    Ok(report)
}

/// Weighted integral norm of order m ≤ 2 with centred-difference derivatives.
pub fn integral_norm(u: &GridField, m: usize, delta: f64) -> Result<f64> {
    if m > 2 {
        return Err(EekError::UnsupportedOrder(m));
    }
    let grid = u.grid();
    let h = grid.spacing();
    let bracket: Vec<f64> = (0..grid.len()).map(|idx| 1.0 + grid.radius(idx)).collect();
    let weighted = |f: &[f64], order: i32| -> f64 {
        f.iter()
            .zip(&bracket)
            .map(|(v, b)| {
                let t = b.powf(delta + order as f64) * v;
                t * t
            })
            .sum::<f64>()
    };
    let mut total = 0.0;
    for c in 0..u.components() {
        let f = u.component(c);
        total += weighted(f, 0);
        if m >= 1 {
            for a in 0..3 {
                total += weighted(&stencil::diff1(f, grid, a), 1);
            }
        }
        if m >= 2 {
            for a in 0..3 {
                for b in a..3 {
                    total += weighted(&stencil::diff2(f, grid, a, b), 2);
                }
            }
        }
    }
    Ok((h * h * h * total).sqrt())
}
