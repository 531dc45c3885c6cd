//! Pointwise Riemannian geometry of a sampled 3-metric: inverse, volume factor,
//! Christoffel symbols and scalar curvature by centred differences.

use nalgebra::Matrix3;

use crate::error::{EekError, Result};
use crate::fields::{stencil, Grid, GridField};

/// Component order of symmetric 3-tensors: xx, xy, xz, yy, yz, zz.
pub const SYM3: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[inline]
pub fn sym(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

pub fn sym3(c: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5])
}

pub fn sym3_components(m: &Matrix3<f64>) -> [f64; 6] {
    SYM3.map(|(a, b)| 0.5 * (m[(a, b)] + m[(b, a)]))
}

/// Symmetric tensor field with 6 components from a pointwise closure.
pub fn sym_field(grid: Grid, f: impl Fn(usize) -> Matrix3<f64>) -> GridField {
    let n3 = grid.len();
    let mut data = vec![0.0; 6 * n3];
    for idx in 0..n3 {
        let c = sym3_components(&f(idx));
        for (k, v) in c.iter().enumerate() {
            data[k * n3 + idx] = *v;
        }
    }
    GridField::new(grid, 6, data).expect("finite tensor field")
}

pub fn sym_at(f: &GridField, offset: usize, idx: usize) -> Matrix3<f64> {
    let c: [f64; 6] = std::array::from_fn(|k| f.at(offset + k, idx));
    sym3(&c)
}

/// Sampled metric with its inverse, √det and first derivatives.
pub struct Metric {
    pub grid: Grid,
    pub h: Vec<Matrix3<f64>>,
    pub inv: Vec<Matrix3<f64>>,
    pub sqrt_det: Vec<f64>,
    /// ∂_m h_{ab} as `dh[idx][m]`.
    pub dh: Vec<[Matrix3<f64>; 3]>,
}

impl Metric {
    pub fn from_field(field: &GridField) -> Result<Metric> {
        if field.components() != 6 {
            return Err(EekError::ShapeMismatch(format!(
                "a 3-metric needs 6 components, got {}",
                field.components()
            )));
        }
        let grid = *field.grid();
        let n3 = grid.len();
        let mut h = Vec::with_capacity(n3);
        let mut inv = Vec::with_capacity(n3);
        let mut sqrt_det = Vec::with_capacity(n3);
        for idx in 0..n3 {
            let m = sym_at(field, 0, idx);
            let chol = m.cholesky().ok_or(EekError::NotPositiveDefinite {
                location: grid.unravel(idx),
            })?;
            let l = chol.l();
            sqrt_det.push(l[(0, 0)] * l[(1, 1)] * l[(2, 2)]);
            inv.push(chol.inverse());
            h.push(m);
        }
        let d: Vec<[Vec<f64>; 3]> = (0..6)
            .map(|c| std::array::from_fn(|m| stencil::diff1(field.component(c), &grid, m)))
            .collect();
        let dh = (0..n3)
            .map(|idx| std::array::from_fn(|m| sym3(&std::array::from_fn(|c| d[c][m][idx]))))
            .collect();
        Ok(Metric {
            grid,
            h,
            inv,
            sqrt_det,
            dh,
        })
    }

    pub fn flat(grid: Grid) -> Metric {
        Metric::from_field(&sym_field(grid, |_| Matrix3::identity())).expect("identity metric")
    }

    /// Γ^k_{ij} at a node.
    pub fn christoffel(&self, idx: usize) -> [[[f64; 3]; 3]; 3] {
        let dh = &self.dh[idx];
        let inv = &self.inv[idx];
        let lower = |l: usize, i: usize, j: usize| 0.5 * (dh[i][(l, j)] + dh[j][(l, i)] - dh[l][(i, j)]);
        let mut g = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in i..3 {
                    let v: f64 = (0..3).map(|l| inv[(k, l)] * lower(l, i, j)).sum();
                    g[k][i][j] = v;
                    g[k][j][i] = v;
                }
            }
        }
        g
    }

    /// ∂_m ln√det h = ½h^{ab}∂_m h_{ab}.
    pub fn dlog_sqrt_det(&self, idx: usize) -> [f64; 3] {
        std::array::from_fn(|m| 0.5 * (self.inv[idx].component_mul(&self.dh[idx][m])).sum())
    }

    /// ∂_m h^{ab} = −h^{ac}h^{bd}∂_m h_{cd}.
    pub fn dinv(&self, idx: usize) -> [Matrix3<f64>; 3] {
        let inv = &self.inv[idx];
        std::array::from_fn(|m| -(inv * self.dh[idx][m] * inv))
    }

    pub fn metric_field(&self) -> GridField {
        sym_field(self.grid, |idx| self.h[idx])
    }
}

/// R(h) from the Christoffel/Ricci contraction with centred second derivatives.
pub fn scalar_curvature(field: &GridField) -> Result<GridField> {
    let metric = Metric::from_field(field)?;
    let grid = metric.grid;
    let d2: Vec<[Vec<f64>; 6]> = (0..6)
        .map(|c| std::array::from_fn(|p| stencil::diff2(field.component(c), &grid, SYM3[p].0, SYM3[p].1)))
        .collect();
    let out = (0..grid.len())
        .map(|idx| {
            let inv = &metric.inv[idx];
            let dh = &metric.dh[idx];
            let dinv = metric.dinv(idx);
            let gam = metric.christoffel(idx);
            let ddh = |a: usize, b: usize, m: usize, n: usize| d2[sym(a, b)][sym(m, n)][idx];
            let lower = |l: usize, i: usize, j: usize| 0.5 * (dh[i][(l, j)] + dh[j][(l, i)] - dh[l][(i, j)]);
            let dlower = |m: usize, l: usize, i: usize, j: usize| 0.5 * (ddh(l, j, m, i) + ddh(l, i, m, j) - ddh(i, j, m, l));
            // ∂_m Γ^k_{ij}.
            let dgam = |m: usize, k: usize, i: usize, j: usize| -> f64 {
                (0..3)
                    .map(|l| dinv[m][(k, l)] * lower(l, i, j) + inv[(k, l)] * dlower(m, l, i, j))
                    .sum()
            };
            let mut r = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let mut rij = 0.0;
                    for k in 0..3 {
                        rij += dgam(k, k, i, j) - dgam(j, k, i, k);
                        for p in 0..3 {
                            rij += gam[k][k][p] * gam[p][i][j] - gam[k][j][p] * gam[p][i][k];
                        }
                    }
                    r += inv[(i, j)] * rij;
                }
            }
            r
        })
        .collect();
    GridField::new(grid, 1, out)
}
