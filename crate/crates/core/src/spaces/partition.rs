use crate::fields::Grid;

/// C^∞ step rising from 0 at t ≤ 0 to 1 at t ≥ 1, built from exp(−1/t).
pub fn smooth_step(t: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = f(t);
    let b = f(1.0 - t);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let f = |t: f64| (-1.0 / t).exp();
    let df = |t: f64| f(t) / (t * t);
    let (a, b) = (f(t), f(1.0 - t));
    (df(t) * b + a * df(1.0 - t)) / ((a + b) * (a + b))
}

/// Radial bumps ψ_0..ψ_{j_max}. ψ_0 = 1 on |x| ≤ 4 with support in |x| ≤ 8; for
/// j ≥ 1, ψ_j = 1 on 2^{j−3} ≤ |x| ≤ 2^{j+2} with support in 2^{j−4} ≤ |x| ≤ 2^{j+3}.
/// The j ≥ 1 bumps are profiles in log₂|x|, so ψ_j(x) = ψ_1(2^{1−j}x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicPartition {
    j_max: usize,
}

pub fn build_partition(j_max: usize) -> DyadicPartition {
    DyadicPartition { j_max }
}

impl DyadicPartition {
    /// Smallest partition containing every shell whose support meets the box.
    pub fn for_grid(grid: &Grid) -> DyadicPartition {
        let corner = 3f64.sqrt() * grid.half_width();
        let mut j = 0;
        while 2f64.powi(j as i32 + 1 - 4) < corner {
            j += 1;
        }
        DyadicPartition { j_max: j.max(1) }
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn plateau(&self, j: usize) -> (f64, f64) {
        if j == 0 {
            (0.0, 4.0)
        } else {
            (2f64.powi(j as i32 - 3), 2f64.powi(j as i32 + 2))
        }
    }

    pub fn support(&self, j: usize) -> (f64, f64) {
        if j == 0 {
            (0.0, 8.0)
        } else {
            (2f64.powi(j as i32 - 4), 2f64.powi(j as i32 + 3))
        }
    }

    pub fn psi(&self, j: usize, r: f64) -> f64 {
        if j == 0 {
            return 1.0 - smooth_step((r - 4.0) / 4.0);
        }
        if r <= 0.0 {
            return 0.0;
        }
        let l = r.log2() - j as f64;
        smooth_step(l + 4.0) * (1.0 - smooth_step(l - 2.0))
    }

    /// dψ_j/dr.
    pub fn dpsi(&self, j: usize, r: f64) -> f64 {
        if j == 0 {
            return -0.25 * smooth_step_derivative((r - 4.0) / 4.0);
        }
        if r <= 0.0 {
            return 0.0;
        }
        let l = r.log2() - j as f64;
        let dl = 1.0 / (r * std::f64::consts::LN_2);
        let rise = smooth_step(l + 4.0);
        let fall = 1.0 - smooth_step(l - 2.0);
        dl * (smooth_step_derivative(l + 4.0) * fall - rise * smooth_step_derivative(l - 2.0))
    }

    /// Σ_j ψ_j(r) over the partition.
    pub fn sum(&self, r: f64) -> f64 {
        (0..=self.j_max).map(|j| self.psi(j, r)).sum()
    }

    /// ψ_j sampled at every node of `grid`.
    pub fn sample(&self, j: usize, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|idx| self.psi(j, grid.radius(idx))).collect()
    }
}
