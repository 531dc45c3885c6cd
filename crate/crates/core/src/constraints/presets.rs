//! Named constraint free-data generators, selectable by name.

use nalgebra::Matrix3;

use super::{sym_field, ConstraintFreeData};
use crate::error::{EekError, Result};
use crate::fields::{Grid, GridField};
use crate::fluid::EquationOfState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    pub amplitude: f64,
    pub width: f64,
    pub eos: EquationOfState,
}

pub trait FreeDataPreset: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn build(&self, grid: Grid, params: &PresetParams) -> Result<ConstraintFreeData>;
}

fn gaussian(grid: Grid, width: f64) -> Vec<f64> {
    (0..grid.len()).map(|i| (-(grid.radius(i) / width).powi(2)).exp()).collect()
}

fn scalar(grid: Grid, data: Vec<f64>) -> GridField {
    GridField::new(grid, 1, data).expect("finite preset")
}

fn vector_x(grid: Grid, data: &[f64]) -> GridField {
    let mut v = vec![0.0; 3 * grid.len()];
    v[..grid.len()].copy_from_slice(data);
    GridField::new(grid, 3, v).expect("finite preset")
}

fn check_params(p: &PresetParams) -> Result<()> {
    if !(p.amplitude.is_finite() && p.width.is_finite() && p.width > 0.0) {
        return Err(EekError::invalid(format!("preset needs a finite amplitude and width > 0, got {} and {}", p.amplitude, p.width)));
    }
    Ok(())
}

/// Flat metric, no extrinsic curvature, no matter.
pub struct Trivial;

impl FreeDataPreset for Trivial {
    fn name(&self) -> &'static str {
        "trivial"
    }
    fn description(&self) -> &'static str {
        "flat vacuum"
    }
    fn build(&self, grid: Grid, _params: &PresetParams) -> Result<ConstraintFreeData> {
        Ok(ConstraintFreeData {
            hbar: sym_field(grid, |_| Matrix3::identity()),
            abar: GridField::zeros(grid, 6),
            yhat: GridField::zeros(grid, 1),
            vhat: GridField::zeros(grid, 3),
        })
    }
}

/// h̄ = θ⁴δ with θ = 1/(1 + A e^{−r²/w²}), for which α = 1 + A e^{−r²/w²} exactly.
pub struct Conformal;

impl FreeDataPreset for Conformal {
    fn name(&self) -> &'static str {
        "conformal"
    }
    fn description(&self) -> &'static str {
        "conformally flat vacuum metric with a known conformal factor"
    }
    fn build(&self, grid: Grid, params: &PresetParams) -> Result<ConstraintFreeData> {
        check_params(params)?;
        let g = gaussian(grid, params.width);
        if params.amplitude <= -1.0 {
            return Err(EekError::invalid("conformal preset needs amplitude > -1"));
        }
        Ok(ConstraintFreeData {
            hbar: sym_field(grid, |i| Matrix3::identity() * (1.0 + params.amplitude * g[i]).powi(-4)),
            ..Trivial.build(grid, params)?
        })
    }
}

/// Flat metric carrying a moving fluid blob at a fixed fraction of the admissible bound.
pub struct FluidBlob;

fn fluid_blob(grid: Grid, params: &PresetParams, hbar: GridField, speed: f64) -> Result<ConstraintFreeData> {
    let g = gaussian(grid, params.width);
    let bound = crate::idata::boundary_s(&params.eos, speed);
    if params.amplitude < 0.0 || params.amplitude >= bound {
        return Err(EekError::invalid(format!(
            "fluid amplitude must lie in [0, s({speed})) = [0, {bound}), got {}",
            params.amplitude
        )));
    }
    let v: Vec<f64> = g.iter().map(|x| speed * x).collect();
    Ok(ConstraintFreeData {
        hbar,
        abar: GridField::zeros(grid, 6),
        yhat: scalar(grid, g.iter().map(|x| params.amplitude * x).collect()),
        vhat: vector_x(grid, &v),
    })
}

impl FreeDataPreset for FluidBlob {
    fn name(&self) -> &'static str {
        "fluid-blob"
    }
    fn description(&self) -> &'static str {
        "flat metric with a Gaussian fluid blob moving along x"
    }
    fn build(&self, grid: Grid, params: &PresetParams) -> Result<ConstraintFreeData> {
        check_params(params)?;
        fluid_blob(grid, params, sym_field(grid, |_| Matrix3::identity()), 0.2)
    }
}

/// Quadrupolar metric perturbation diag(1 + AG, 1 − AG, 1) together with a fluid blob.
pub struct WaveBlob;

impl FreeDataPreset for WaveBlob {
    fn name(&self) -> &'static str {
        "wave-blob"
    }
    fn description(&self) -> &'static str {
        "quadrupolar metric perturbation plus a moving fluid blob"
    }
    fn build(&self, grid: Grid, params: &PresetParams) -> Result<ConstraintFreeData> {
        wave_blob(grid, params, 0.2)
    }
}

fn wave_blob(grid: Grid, params: &PresetParams, speed: f64) -> Result<ConstraintFreeData> {
    check_params(params)?;
    if params.amplitude.abs() >= 0.5 {
        return Err(EekError::invalid("wave amplitude must satisfy |A| < 0.5"));
    }
    let g = gaussian(grid, params.width);
    let a = params.amplitude;
    let hbar = sym_field(grid, |i| Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0 + a * g[i], 1.0 - a * g[i], 1.0)));
    fluid_blob(grid, &PresetParams { amplitude: a.abs(), ..*params }, hbar, speed)
}

/// The wave-blob metric with curvature free data given by the York projection (trace and
/// longitudinal part removed) of (A/w)·G·diag(1, −1, 0), and the fluid at rest.
pub struct WavePacket;

impl FreeDataPreset for WavePacket {
    fn name(&self) -> &'static str {
        "wave-packet"
    }
    fn description(&self) -> &'static str {
        "quadrupolar metric and curvature perturbation plus a fluid blob at rest"
    }
    fn build(&self, grid: Grid, params: &PresetParams) -> Result<ConstraintFreeData> {
        let mut data = wave_blob(grid, params, 0.0)?;
        let g = gaussian(grid, params.width);
        let scale = params.amplitude / params.width;
        let raw = sym_field(grid, |i| Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, 0.0)) * (scale * g[i]));
        data.abar = super::york_projection(&data.hbar, &raw, &super::SolverOptions::default())?;
        Ok(data)
    }
}

pub struct PresetRegistry {
    presets: Vec<Box<dyn FreeDataPreset>>,
}

impl Default for PresetRegistry {
    fn default() -> Self {
        PresetRegistry {
            presets: vec![Box::new(Trivial), Box::new(Conformal), Box::new(FluidBlob), Box::new(WaveBlob), Box::new(WavePacket)],
        }
    }
}

impl PresetRegistry {
    pub fn register(&mut self, preset: Box<dyn FreeDataPreset>) {
        self.presets.retain(|p| p.name() != preset.name());
        self.presets.push(preset);
    }

    pub fn get(&self, name: &str) -> Result<&dyn FreeDataPreset> {
        self.presets
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
            .ok_or_else(|| EekError::invalid(format!("unknown free-data preset `{name}`; known: {}", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.presets.iter().map(|p| p.name()).collect()
    }
}
