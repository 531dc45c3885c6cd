//! Discrete elliptic operators on interior nodes. Box-boundary values are fixed
//! by collocation against the nearest interior node: Robin ∂_r(r·u) = 0 takes
//! u_b = (r_q/r_b)·u_q, Dirichlet takes u_b = 0.

use nalgebra::Matrix3;

use super::geometry::Metric;
use crate::error::Result;
use crate::fields::Grid;
use crate::linalg::{bicgstab, pcg, KrylovOptions, SolveStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Robin,
    Dirichlet,
}

impl std::str::FromStr for Boundary {
    type Err = crate::EekError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robin" => Ok(Boundary::Robin),
            "dirichlet" => Ok(Boundary::Dirichlet),
            other => Err(crate::EekError::invalid(format!("unknown boundary condition `{other}`"))),
        }
    }
}

/// Interior nodes (every index in 1..n−1) and the boundary collocation rule.
pub struct Interior {
    pub grid: Grid,
    /// Full index of each interior unknown.
    pub nodes: Vec<usize>,
    /// (boundary node, interior source node, factor).
    pub closure: Vec<(usize, usize, f64)>,
    /// Factor applied to the boundary neighbour of an interior node, by full index.
    beta: Vec<f64>,
}

impl Interior {
    pub fn new(grid: Grid, boundary: Boundary) -> Interior {
        let n = grid.n();
        let mut nodes = Vec::with_capacity((n - 2).pow(3));
        let mut closure = Vec::new();
        let mut beta = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            if grid.is_boundary(idx) {
                let [i, j, k] = grid.unravel(idx);
                let c = |a: usize| a.clamp(1, n - 2);
                let q = grid.index(c(i), c(j), c(k));
                let b = match boundary {
                    Boundary::Robin => grid.radius(q) / grid.radius(idx),
                    Boundary::Dirichlet => 0.0,
                };
                beta[idx] = b;
                closure.push((idx, q, b));
            } else {
                nodes.push(idx);
            }
        }
        Interior {
            grid,
            nodes,
            closure,
            beta,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Full array from interior values, boundary filled by the closure.
    pub fn extend(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        for (k, &idx) in self.nodes.iter().enumerate() {
            full[idx] = u[k];
        }
        for &(b, q, f) in &self.closure {
            full[b] = f * full[q];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&idx| full[idx]).collect()
    }

    fn strides(&self) -> [usize; 3] {
        let n = self.grid.n();
        [1, n, n * n]
    }

    /// Closure factor of the neighbour `nb` when it is a boundary node, else `None`.
    fn boundary_factor(&self, nb: usize) -> Option<f64> {
        if self.grid.is_boundary(nb) {
            Some(self.beta[nb])
        } else {
            None
        }
    }
}

/// Centred first difference along `axis`, zero where that coordinate is on the box face.
fn centred(f: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.n();
    let st = [1, n, n * n][axis];
    let inv2h = 0.5 / grid.spacing();
    let mut out = vec![0.0; f.len()];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let c = [i, j, k][axis];
                if c == 0 || c == n - 1 {
                    continue;
                }
                let idx = (k * n + j) * n + i;
                out[idx] = (f[idx + st] - f[idx - st]) * inv2h;
            }
        }
    }
    out
}

/// −∂_a(C^{ab}∂_b u) + m·u with C^{ab} = √h h^{ab}. Same-axis terms use face-averaged
/// compact stencils; mixed terms use the gradient of a centred energy restricted to
/// centres whose stencils stay interior, which keeps the matrix symmetric.
pub struct ScalarOperator {
    pub interior: Interior,
    coef: Vec<[f64; 6]>,
    /// Upper-face coefficient (C^{aa} averaged over p and p + e_a) per axis.
    face: [Vec<f64>; 3],
    /// Centres whose mixed flux is kept.
    centre_ok: Vec<bool>,
    mixed: bool,
    mass: Vec<f64>,
    diag: Vec<f64>,
}

impl ScalarOperator {
    pub fn new(metric: &Metric, mass: Vec<f64>, boundary: Boundary) -> ScalarOperator {
        let grid = metric.grid;
        let n = grid.n();
        let coef: Vec<[f64; 6]> = (0..grid.len())
            .map(|idx| {
                let c = metric.inv[idx] * metric.sqrt_det[idx];
                super::geometry::sym3_components(&c)
            })
            .collect();
        let st = [1, n, n * n];
        let face = std::array::from_fn(|a| {
            let d = super::geometry::sym(a, a);
            (0..grid.len())
                .map(|p| if p + st[a] < grid.len() { 0.5 * (coef[p][d] + coef[p + st[a]][d]) } else { 0.0 })
                .collect()
        });
        let centre_ok = (0..grid.len())
            .map(|c| grid.unravel(c).iter().all(|&i| (2..=n - 3).contains(&i)))
            .collect();
        let mixed = coef.iter().any(|c| c[1] != 0.0 || c[2] != 0.0 || c[4] != 0.0);
        let mut op = ScalarOperator {
            interior: Interior::new(grid, boundary),
            coef,
            face,
            centre_ok,
            mixed,
            mass,
            diag: Vec::new(),
        };
        op.diag = op.compute_diag();
        op
    }

    pub fn with_mass(&self, mass: Vec<f64>) -> ScalarOperator {
        let mut op = ScalarOperator {
            interior: Interior {
                grid: self.interior.grid,
                nodes: self.interior.nodes.clone(),
                closure: self.interior.closure.clone(),
                beta: self.interior.beta.clone(),
            },
            coef: self.coef.clone(),
            face: self.face.clone(),
            centre_ok: self.centre_ok.clone(),
            mixed: self.mixed,
            mass,
            diag: Vec::new(),
        };
        op.diag = op.compute_diag();
        op
    }

    fn compute_diag(&self) -> Vec<f64> {
        let h2 = self.interior.grid.spacing().powi(2);
        let st = self.interior.strides();
        self.interior
            .nodes
            .iter()
            .map(|&p| {
                let mut d = self.mass[p];
                for a in 0..3 {
                    for (nb, cf) in [(p + st[a], self.face[a][p]), (p - st[a], self.face[a][p - st[a]])] {
                        d += cf * (1.0 - self.interior.boundary_factor(nb).unwrap_or(0.0)) / h2;
                    }
                }
                d
            })
            .collect()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Applies the operator to a full array, returning interior values.
    pub fn apply_full(&self, u: &[f64]) -> Vec<f64> {
        let grid = &self.interior.grid;
        let h = grid.spacing();
        let h2 = h * h;
        let st = self.interior.strides();
        // Mixed fluxes F_ab = C^{ab} D_b u at admissible centres, for a ≠ b.
        let fluxes: Vec<(usize, Vec<f64>)> = if self.mixed {
            let grads: [Vec<f64>; 3] = std::array::from_fn(|b| centred(u, grid, b));
            let mut out = Vec::with_capacity(6);
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let cab = super::geometry::sym(a, b);
                    let f: Vec<f64> = (0..u.len())
                        .map(|c| if self.centre_ok[c] { self.coef[c][cab] * grads[b][c] } else { 0.0 })
                        .collect();
                    out.push((a, f));
                }
            }
            out
        } else {
            Vec::new()
        };
        self.interior
            .nodes
            .iter()
            .map(|&p| {
                let mut acc = self.mass[p] * u[p];
                for a in 0..3 {
                    let up = self.face[a][p];
                    let dn = self.face[a][p - st[a]];
                    acc -= (up * (u[p + st[a]] - u[p]) - dn * (u[p] - u[p - st[a]])) / h2;
                }
                for (a, f) in &fluxes {
                    acc -= (f[p + st[*a]] - f[p - st[*a]]) / (2.0 * h);
                }
                acc
            })
            .collect()
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let full = self.interior.extend(u);
        out.copy_from_slice(&self.apply_full(&full));
    }

    pub fn solve(&self, rhs: &[f64], x: &mut [f64], opts: KrylovOptions, stage: &str) -> Result<SolveStats> {
        pcg(|v, o| self.apply(v, o), &self.diag, rhs, x, opts, stage)
    }
}

/// √h·h_{db}(Δ_L W)^b in divergence form: ∂_a F^a_d − √h Γ^e_{ad} T^a_e, where
/// T^a_d = h_{db}(L W)^{ab} and F = √h T. The principal flux is
/// C^{ac}_{db}∂_c W^b with C^{ac}_{db} = √h[h^{ac}h_{db} + δ^a_b δ^c_d − ⅔δ^a_d δ^c_b];
/// the remaining first-order part of F comes from the coordinate Lie derivative.
pub struct VectorOperator<'a> {
    pub interior: Interior,
    metric: &'a Metric,
    /// Upper-face C^{aa}_{db} per axis a, symmetric in (d, b), packed by SYM3.
    face: [Vec<[f64; 6]>; 3],
    /// Lower-order flux coefficients: F^a_d ⊃ lower[idx][a][d][e] W^e.
    lower: Vec<[[[f64; 3]; 3]; 3]>,
    gamma: Vec<[[[f64; 3]; 3]; 3]>,
    diag: Vec<f64>,
}

impl<'a> VectorOperator<'a> {
    pub fn new(metric: &'a Metric, boundary: Boundary) -> VectorOperator<'a> {
        let grid = metric.grid;
        let n = grid.n();
        let n3 = grid.len();
        let st = [1, n, n * n];
        let interior = Interior::new(grid, boundary);
        let same_axis = |idx: usize, a: usize, d: usize, b: usize| {
            let kd = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
            metric.sqrt_det[idx] * (metric.inv[idx][(a, a)] * metric.h[idx][(d, b)] + kd(a, b) * kd(a, d) / 3.0)
        };
        let face = std::array::from_fn(|a| {
            (0..n3)
                .map(|p| {
                    let q = if p + st[a] < n3 { p + st[a] } else { p };
                    std::array::from_fn(|s| {
                        let (d, b) = super::geometry::SYM3[s];
                        0.5 * (same_axis(p, a, d, b) + same_axis(q, a, d, b))
                    })
                })
                .collect()
        });
        let lower = (0..n3)
            .map(|idx| {
                let sq = metric.sqrt_det[idx];
                let h = &metric.h[idx];
                let dinv = metric.dinv(idx);
                let dlog = metric.dlog_sqrt_det(idx);
                std::array::from_fn(|a| {
                    std::array::from_fn(|d| {
                        std::array::from_fn(|e| {
                            let s: f64 = (0..3).map(|b| h[(d, b)] * dinv[e][(a, b)]).sum();
                            let mut v = -sq * s;
                            if a == d {
                                v -= 2.0 / 3.0 * sq * dlog[e];
                            }
                            v
                        })
                    })
                })
            })
            .collect();
        let gamma = (0..n3).map(|i| metric.christoffel(i)).collect();
        let mut op = VectorOperator {
            interior,
            metric,
            face,
            lower,
            gamma,
            diag: Vec::new(),
        };
        op.diag = op.compute_diag();
        op
    }

    fn compute_diag(&self) -> Vec<f64> {
        let h2 = self.interior.grid.spacing().powi(2);
        let st = self.interior.strides();
        let mut diag = Vec::with_capacity(3 * self.interior.len());
        for d in 0..3 {
            let s_dd = super::geometry::sym(d, d);
            for &p in &self.interior.nodes {
                let mut s = 0.0;
                for a in 0..3 {
                    for (nb, cf) in [(p + st[a], self.face[a][p][s_dd]), (p - st[a], self.face[a][p - st[a]][s_dd])] {
                        s += cf * (1.0 - self.interior.boundary_factor(nb).unwrap_or(0.0)) / h2;
                    }
                }
                diag.push(s);
            }
        }
        diag
    }

    /// Splits a stacked interior vector (component-major) into full arrays.
    pub fn extend(&self, u: &[f64]) -> [Vec<f64>; 3] {
        let m = self.interior.len();
        std::array::from_fn(|c| self.interior.extend(&u[c * m..(c + 1) * m]))
    }

    /// −√h h_{db}(Δ_L W)^b at interior nodes, stacked by d.
    pub fn apply_full(&self, w: &[Vec<f64>; 3]) -> Vec<f64> {
        let grid = &self.interior.grid;
        let n3 = grid.len();
        let h = grid.spacing();
        let h2 = h * h;
        let st = self.interior.strides();
        let m = self.interior.len();
        // Per node: y[(a·3 + c)·3 + d] = C^{ac}_{db}∂_c W^b and y[27 + a·3 + d] = lower-order flux.
        let n = grid.n();
        let inv2h = 0.5 / h;
        let mut y: Vec<[f64; 36]> = vec![[0.0; 36]; n3];
        for (idx, yv) in y.iter_mut().enumerate() {
            let pos = [idx % n, (idx / n) % n, idx / (n * n)];
            // ∂_c W^b, left at zero where coordinate c is on a face (never read there).
            let mut dw = [[0.0; 3]; 3];
            for c in 0..3 {
                if pos[c] != 0 && pos[c] != n - 1 {
                    for b in 0..3 {
                        dw[c][b] = (w[b][idx + st[c]] - w[b][idx - st[c]]) * inv2h;
                    }
                }
            }
            let sq = self.metric.sqrt_det[idx];
            let hm = &self.metric.h[idx];
            let hi = &self.metric.inv[idx];
            for c in 0..3 {
                let v: [f64; 3] = std::array::from_fn(|d| hm[(d, 0)] * dw[c][0] + hm[(d, 1)] * dw[c][1] + hm[(d, 2)] * dw[c][2]);
                for a in 0..3 {
                    for d in 0..3 {
                        let mut val = hi[(a, c)] * v[d];
                        if c == d {
                            val += dw[c][a];
                        }
                        if a == d {
                            val -= 2.0 / 3.0 * dw[c][c];
                        }
                        yv[(a * 3 + c) * 3 + d] = sq * val;
                    }
                }
            }
            let l = &self.lower[idx];
            let wv = [w[0][idx], w[1][idx], w[2][idx]];
            for a in 0..3 {
                for d in 0..3 {
                    yv[27 + a * 3 + d] = l[a][d][0] * wv[0] + l[a][d][1] * wv[1] + l[a][d][2] * wv[2];
                }
            }
        }
        let mut out = vec![0.0; 3 * m];
        for (k, &p) in self.interior.nodes.iter().enumerate() {
            let gam = &self.gamma[p];
            let yp = &y[p];
            // √h T^a_e = Σ_c y[a][c][e] + g[a][e].
            let t: [[f64; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|e| yp[a * 9 + e] + yp[a * 9 + 3 + e] + yp[a * 9 + 6 + e] + yp[27 + a * 3 + e]));
            for d in 0..3 {
                let mut acc = 0.0;
                for a in 0..3 {
                    let (up, dn) = (p + st[a], p - st[a]);
                    let fu = &self.face[a][p];
                    let fd = &self.face[a][dn];
                    for b in 0..3 {
                        let s = super::geometry::sym(d, b);
                        acc += (fu[s] * (w[b][up] - w[b][p]) - fd[s] * (w[b][p] - w[b][dn])) / h2;
                    }
                    let (yu, yd) = (&y[up], &y[dn]);
                    let mut diff = yu[27 + a * 3 + d] - yd[27 + a * 3 + d];
                    for c in 0..3 {
                        if c != a {
                            let i = (a * 3 + c) * 3 + d;
                            diff += yu[i] - yd[i];
                        }
                    }
                    acc += diff * inv2h;
                }
                for a in 0..3 {
                    for e in 0..3 {
                        acc -= gam[e][a][d] * t[a][e];
                    }
                }
                out[d * m + k] = -acc;
            }
        }
        out
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.apply_full(&self.extend(u)));
    }

    pub fn solve(&self, rhs: &[f64], x: &mut [f64], opts: KrylovOptions, stage: &str) -> Result<SolveStats> {
        bicgstab(|v, o| self.apply(v, o), &self.diag, rhs, x, opts, stage)
    }
}

/// Conformal Killing operator (L W)_{ab} = £_W h_{ab} − ⅔h_{ab}D_cW^c with centred
/// differences; trace-free pointwise by construction.
pub fn killing_lowered(metric: &Metric, w: &[Vec<f64>; 3], idx: usize) -> Matrix3<f64> {
    let grid = &metric.grid;
    let n = grid.n();
    let h = grid.spacing();
    let st = [1, n, n * n];
    let pos = grid.unravel(idx);
    let grad = |c: usize, b: usize| -> f64 {
        let f = &w[b];
        if pos[c] == 0 {
            (-3.0 * f[idx] + 4.0 * f[idx + st[c]] - f[idx + 2 * st[c]]) / (2.0 * h)
        } else if pos[c] == n - 1 {
            (3.0 * f[idx] - 4.0 * f[idx - st[c]] + f[idx - 2 * st[c]]) / (2.0 * h)
        } else {
            (f[idx + st[c]] - f[idx - st[c]]) / (2.0 * h)
        }
    };
    let dw: [[f64; 3]; 3] = std::array::from_fn(|c| std::array::from_fn(|b| grad(c, b)));
    let wv = [w[0][idx], w[1][idx], w[2][idx]];
    let hm = &metric.h[idx];
    let dh = &metric.dh[idx];
    let dlog = metric.dlog_sqrt_det(idx);
    let div: f64 = (0..3).map(|c| dw[c][c] + wv[c] * dlog[c]).sum();
    Matrix3::from_fn(|a, b| {
        let mut v = 0.0;
        for c in 0..3 {
            v += wv[c] * dh[c][(a, b)] + hm[(c, b)] * dw[a][c] + hm[(a, c)] * dw[b][c];
        }
        v - 2.0 / 3.0 * hm[(a, b)] * div
    })
}

/// Principal symbol of Δ_L at covector ξ, as the matrix acting on vectors η:
/// σ(ξ)η = |ξ|²_h η + ⅓ ξ^♯ (ξ·η).
pub fn lichnerowicz_symbol(h: &Matrix3<f64>, xi: &[f64; 3]) -> Result<Matrix3<f64>> {
    let inv = h
        .try_inverse()
        .ok_or_else(|| crate::EekError::invalid("metric is singular"))?;
    let xi = nalgebra::Vector3::from_column_slice(xi);
    let raised = inv * xi;
    let norm2 = xi.dot(&raised);
    Ok(Matrix3::identity() * norm2 + raised * xi.transpose() / 3.0)
}
