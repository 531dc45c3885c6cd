use super::{Grid, GridField};
use crate::error::{EekError, Result};

/// Returns v(x) = u(εx) on the grid of `u`.
pub fn scale_field(u: &GridField, eps: f64) -> Result<GridField> {
    scale_field_onto(u, eps, *u.grid())
}

/// Returns v(x) = u(εx) sampled on `target` by trilinear interpolation of `u`;
/// points that map outside the source node range read as zero.
pub fn scale_field_onto(u: &GridField, eps: f64, target: Grid) -> Result<GridField> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(EekError::invalid(format!("scale factor must be positive and finite, got {eps}")));
    }
    let src = *u.grid();
    let n = src.n();
    let h = src.spacing();
    let l = src.half_width();
    let n3t = target.len();
    let mut out = vec![0.0; u.components() * n3t];
    // Trilinear weights are separable, so precompute the per-axis stencils.
    let node = |m: i64| (0..n as i64).contains(&m).then_some(m as usize);
    let stencils: Vec<[(Option<usize>, f64); 2]> = (0..target.n())
        .map(|i| {
            let pos = (eps * target.coord(i) + l) / h;
            let i0 = pos.floor();
            let t = pos - i0;
            let i0 = i0 as i64;
            [(node(i0), 1.0 - t), (node(i0 + 1), t)]
        })
        .collect();
    for c in 0..u.components() {
        let s = u.component(c);
        let o = &mut out[c * n3t..(c + 1) * n3t];
        for k in 0..target.n() {
            let sk = &stencils[k];
            for j in 0..target.n() {
                let sj = &stencils[j];
                for i in 0..target.n() {
                    let si = &stencils[i];
                    let mut acc = 0.0;
                    for &(kk, wk) in sk {
                        let Some(kk) = kk else { continue };
                        for &(jj, wj) in sj {
                            let Some(jj) = jj else { continue };
                            for &(ii, wi) in si {
                                let Some(ii) = ii else { continue };
                                acc += wk * wj * wi * s[src.index(ii, jj, kk)];
                            }
                        }
                    }
                    o[target.index(i, j, k)] = acc;
                }
            }
        }
    }
    GridField::new(target, u.components(), out)
}
