//! Periodic FFT utilities on a [`Grid`]. Norms use the unitary continuous
//! normalisation, so that the s = 0 norm is the L² quadrature h³Σu².

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Grid, GridField};
use crate::error::{EekError, Result};

/// Fraction of each axis, measured from the faces, over which the taper rolls off.
pub const TAPER_FRACTION: f64 = 0.1;

pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular wavenumber of each FFT index along one axis.
    k: Vec<f64>,
    k2_flat: Vec<f64>,
    taper_flat: Vec<f64>,
}

impl Spectral {
    /// Shared transform plans for `grid`; planning happens once per grid shape.
    pub fn for_grid(grid: &Grid) -> Arc<Spectral> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Spectral>>>> = OnceLock::new();
        let key = (grid.n(), grid.half_width().to_bits());
        let mut cache = CACHE.get_or_init(Default::default).lock().expect("fft cache");
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(Spectral::new(*grid)))
            .clone()
    }

    fn new(grid: Grid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let l = grid.half_width();
        let k: Vec<f64> = (0..n)
            .map(|m| {
                let m = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                PI * m / l
            })
            .collect();
        let taper: Vec<f64> = (0..n).map(|i| taper_weight(grid.coord(i), l)).collect();
        let mut k2_flat = Vec::with_capacity(grid.len());
        let mut taper_flat = Vec::with_capacity(grid.len());
        for c in 0..n {
            for b in 0..n {
                for a in 0..n {
                    k2_flat.push(k[a] * k[a] + k[b] * k[b] + k[c] * k[c]);
                    taper_flat.push(taper[a] * taper[b] * taper[c]);
                }
            }
        }
        Spectral {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k,
            k2_flat,
            taper_flat,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// |ξ|² for every flat FFT index.
    pub fn k2(&self, idx: usize) -> f64 {
        self.k2_flat[idx]
    }

    /// Separable boundary taper evaluated at a flat index.
    pub fn taper(&self, idx: usize) -> f64 {
        self.taper_flat[idx]
    }

    /// In-place unnormalised 3-D transform.
    pub fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.grid.n();
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
        let mut tmp = vec![Complex64::default(); buf.len()];
        // y axis: gather so that j is contiguous.
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    tmp[(k * n + i) * n + j] = buf[(k * n + j) * n + i];
                }
            }
        }
        plan.process_with_scratch(&mut tmp, &mut scratch);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    buf[(k * n + j) * n + i] = tmp[(k * n + i) * n + j];
                }
            }
        }
        // z axis.
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    tmp[(j * n + i) * n + k] = buf[(k * n + j) * n + i];
                }
            }
        }
        plan.process_with_scratch(&mut tmp, &mut scratch);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    buf[(k * n + j) * n + i] = tmp[(j * n + i) * n + k];
                }
            }
        }
    }

    /// Packs two real arrays as f + i·g, optionally tapered, and transforms forward.
    /// Any real multiplier applied to the result acts on f and g independently.
    pub fn forward_pair(&self, f: &[f64], g: Option<&[f64]>, taper: bool) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..f.len())
            .map(|idx| {
                let w = if taper { self.taper(idx) } else { 1.0 };
                Complex64::new(w * f[idx], g.map_or(0.0, |g| w * g[idx]))
            })
            .collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Normalised power spectra (h³/n³)|f̂|² and (h³/n³)|ĝ|² from one packed transform,
    /// separated through f̂(ξ) = (Z(ξ) + conj Z(−ξ))/2.
    pub fn power_spectra(&self, f: &[f64], g: Option<&[f64]>, taper: bool) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let norm = h * h * h / self.grid.len() as f64;
        let z = self.forward_pair(f, g, taper);
        if g.is_none() {
            return (z.iter().map(|c| norm * c.norm_sqr()).collect(), None);
        }
        let neg = |m: usize| (n - m) % n;
        let mut pf = vec![0.0; z.len()];
        let mut pg = vec![0.0; z.len()];
        for c in 0..n {
            for b in 0..n {
                for a in 0..n {
                    let idx = (c * n + b) * n + a;
                    let zm = z[(neg(c) * n + neg(b)) * n + neg(a)].conj();
                    pf[idx] = 0.25 * norm * (z[idx] + zm).norm_sqr();
                    pg[idx] = 0.25 * norm * (z[idx] - zm).norm_sqr();
                }
            }
        }
        (pf, Some(pg))
    }

    /// Weighted Parseval sum (h³/n³)Σ m(ξ)|f̂|² over several real arrays.
    pub fn weighted_sum(&self, parts: &[&[f64]], taper: bool, weight: impl Fn(usize) -> f64) -> f64 {
        let n3 = self.grid.len();
        let h = self.grid.spacing();
        let norm = h * h * h / n3 as f64;
        let mut total = 0.0;
        for pair in parts.chunks(2) {
            let spec = self.forward_pair(pair[0], pair.get(1).copied(), taper);
            total += spec
                .iter()
                .enumerate()
                .map(|(idx, c)| weight(idx) * c.norm_sqr())
                .sum::<f64>();
        }
        norm * total
    }

    /// ‖f_ε‖²_{H^s} for f_ε(x) = f(εx), evaluated spectrally as
    /// ε⁻³ Σ (1 + ε²|ξ|²)^s |f̂(ξ)|² on the grid of f.
    pub fn dilated_norm_sq(&self, parts: &[&[f64]], s: f64, eps: f64, taper: bool) -> f64 {
        let e2 = eps * eps;
        self.weighted_sum(parts, taper, |idx| (1.0 + e2 * self.k2(idx)).powf(s)) / (eps * eps * eps)
    }

    /// Applies a real Fourier multiplier `m(idx)` to f (and g) and returns the
    /// real-space results. `m` must satisfy m(−ξ) = conj m(ξ).
    pub fn apply_multiplier(
        &self,
        f: &[f64],
        g: Option<&[f64]>,
        taper: bool,
        m: impl Fn(usize) -> Complex64,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        let mut spec = self.forward_pair(f, g, taper);
        for (idx, c) in spec.iter_mut().enumerate() {
            *c *= m(idx);
        }
        self.transform(&mut spec, true);
        let scale = 1.0 / self.grid.len() as f64;
        let re = spec.iter().map(|c| c.re * scale).collect();
        let im = g.map(|_| spec.iter().map(|c| c.im * scale).collect());
        (re, im)
    }

    /// Symbol of ∂_axis with the Nyquist mode removed so the output stays real.
    pub fn derivative_symbol(&self, axis: usize, idx: usize) -> Complex64 {
        let n = self.grid.n();
        let c = self.grid.unravel(idx)[axis];
        if c == n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, self.k[c])
        }
    }
}

/// Cosine roll-off from 1 to 0 over the outer [`TAPER_FRACTION`] of [−L, L].
pub fn taper_weight(x: f64, l: f64) -> f64 {
    let inner = (1.0 - TAPER_FRACTION) * l;
    let a = x.abs();
    if a <= inner {
        1.0
    } else if a >= l {
        0.0
    } else {
        0.5 * (1.0 + (PI * (a - inner) / (TAPER_FRACTION * l)).cos())
    }
}

/// Discrete Bessel potential norm ‖u‖_{H^s}, root-sum-square over components.
pub fn bessel_norm(u: &GridField, s: f64) -> Result<f64> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(EekError::invalid(format!("Bessel order must be >= 0, got {s}")));
    }
    Ok(bessel_norm_any_order(u, s))
}

/// Same as [`bessel_norm`] but also accepts negative orders.
pub fn bessel_norm_any_order(u: &GridField, s: f64) -> f64 {
    let spec = Spectral::for_grid(u.grid());
    let parts: Vec<&[f64]> = (0..u.components()).map(|c| u.component(c)).collect();
    spec.dilated_norm_sq(&parts, s, 1.0, true).sqrt()
}
