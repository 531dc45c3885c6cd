//! Finite-difference derivatives of whole arrays on a [`Grid`].

use super::Grid;

#[inline]
fn stride(grid: &Grid, axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => grid.n(),
        _ => grid.n() * grid.n(),
    }
}

/// ∂_axis f with second-order centred differences, one-sided on the faces.
pub fn diff1(f: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.n();
    let st = stride(grid, axis);
    let h = grid.spacing();
    let mut out = vec![0.0; f.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let c = grid.unravel(idx)[axis];
        *o = if c == 0 {
            (-3.0 * f[idx] + 4.0 * f[idx + st] - f[idx + 2 * st]) / (2.0 * h)
        } else if c == n - 1 {
            (3.0 * f[idx] - 4.0 * f[idx - st] + f[idx - 2 * st]) / (2.0 * h)
        } else {
            (f[idx + st] - f[idx - st]) / (2.0 * h)
        };
    }
    out
}

/// ∂_a∂_b f with second-order centred differences (compact for a = b).
pub fn diff2(f: &[f64], grid: &Grid, a: usize, b: usize) -> Vec<f64> {
    if a != b {
        return diff1(&diff1(f, grid, a), grid, b);
    }
    let n = grid.n();
    let st = stride(grid, a);
    let h2 = grid.spacing() * grid.spacing();
    let mut out = vec![0.0; f.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let c = grid.unravel(idx)[a];
        let m = if c == 0 {
            idx + st
        } else if c == n - 1 {
            idx - st
        } else {
            idx
        };
        *o = (f[m + st] - 2.0 * f[m] + f[m - st]) / h2;
    }
    out
}

/// ∂_axis f with fourth-order centred differences away from the faces,
/// second order on the first interior layer and one-sided on the faces.
pub fn diff1_order4(f: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.n();
    let st = stride(grid, axis);
    let h = grid.spacing();
    let mut out = diff1(f, grid, axis);
    for (idx, o) in out.iter_mut().enumerate() {
        let c = grid.unravel(idx)[axis];
        if c >= 2 && c + 2 < n {
            *o = (f[idx - 2 * st] - 8.0 * f[idx - st] + 8.0 * f[idx + st] - f[idx + 2 * st]) / (12.0 * h);
        }
    }
    out
}
