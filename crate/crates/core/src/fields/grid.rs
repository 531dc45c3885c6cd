use crate::error::{EekError, Result};

/// Uniform grid on [−L, L)³: node `i` sits at `−L + i·h` with `h = 2L/n`,
/// so the node set is periodic-compatible and the origin is node `n/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    half_width: f64,
}

impl Grid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(EekError::invalid(format!(
                "points per axis must be even and >= 16, got {n}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(EekError::invalid(format!(
                "half width must be positive and finite, got {half_width}"
            )));
        }
        Ok(Grid { n, half_width })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Number of nodes, n³.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Flat index with x varying fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unravel(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// True for nodes on the outermost layer of the box.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let n = self.n;
        self.unravel(idx).iter().any(|&c| c == 0 || c == n - 1)
    }
}

/// Real multi-component samples on a grid, stored component-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    components: usize,
    data: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(EekError::invalid("a field needs at least one component"));
        }
        if data.len() != components * grid.len() {
            return Err(EekError::ShapeMismatch(format!(
                "expected {} values for {} components on n = {}, got {}",
                components * grid.len(),
                components,
                grid.n(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EekError::invalid(format!(
                "non-finite entry at component {}, grid point {:?}",
                pos / grid.len(),
                grid.unravel(pos % grid.len())
            )));
        }
        Ok(GridField {
            grid,
            components,
            data,
        })
    }

    pub fn zeros(grid: Grid, components: usize) -> Self {
        GridField {
            grid,
            components: components.max(1),
            data: vec![0.0; components.max(1) * grid.len()],
        }
    }

    /// Samples a closure `f(x, out)` writing all components at position `x`.
    pub fn from_fn(grid: Grid, components: usize, mut f: impl FnMut([f64; 3], &mut [f64])) -> Self {
        let n3 = grid.len();
        let mut field = GridField::zeros(grid, components);
        let mut buf = vec![0.0; components];
        for idx in 0..n3 {
            f(grid.point(idx), &mut buf);
            for (c, v) in buf.iter().enumerate() {
                field.data[c * n3 + idx] = *v;
            }
        }
        field
    }

    pub fn scalar_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        GridField::from_fn(grid, 1, |x, out| out[0] = f(x))
    }

    /// Stacks single-component parts into one field.
    pub fn stack(parts: &[&GridField]) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| EekError::invalid("nothing to stack"))?
            .grid;
        let mut data = Vec::new();
        let mut components = 0;
        for p in parts {
            if p.grid != grid {
                return Err(EekError::ShapeMismatch("stacked fields live on different grids".into()));
            }
            data.extend_from_slice(&p.data);
            components += p.components;
        }
        Ok(GridField {
            grid,
            components,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n3 = self.grid.len();
        &self.data[c * n3..(c + 1) * n3]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n3 = self.grid.len();
        &mut self.data[c * n3..(c + 1) * n3]
    }

    pub fn extract(&self, c: usize) -> GridField {
        GridField {
            grid: self.grid,
            components: 1,
            data: self.component(c).to_vec(),
        }
    }

    pub fn extract_range(&self, start: usize, count: usize) -> GridField {
        let n3 = self.grid.len();
        GridField {
            grid: self.grid,
            components: count,
            data: self.data[start * n3..(start + count) * n3].to_vec(),
        }
    }

    #[inline]
    pub fn at(&self, c: usize, idx: usize) -> f64 {
        self.data[c * self.grid.len() + idx]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude of any component on the outer layer of the box.
    pub fn boundary_max_abs(&self) -> f64 {
        let n3 = self.grid.len();
        let mut m = 0.0_f64;
        for idx in (0..n3).filter(|&i| self.grid.is_boundary(i)) {
            for c in 0..self.components {
                m = m.max(self.data[c * n3 + idx].abs());
            }
        }
        m
    }

    /// Logs a warning when the field has not decayed below `tol` at the boundary.
    pub fn check_decay(&self, what: &str, tol: f64) -> bool {
        let b = self.boundary_max_abs();
        if b > tol {
            log::warn!("{what}: boundary magnitude {b:e} exceeds {tol:e}; enlarge the box");
            false
        } else {
            true
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid,
            components: self.components,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.same_shape(other)?;
        Ok(GridField {
            grid: self.grid,
            components: self.components,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_shape(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(EekError::ShapeMismatch(format!(
                "fields differ: ({} comps, n = {}, L = {}) vs ({} comps, n = {}, L = {})",
                self.components,
                self.grid.n(),
                self.grid.half_width(),
                other.components,
                other.grid.n(),
                other.grid.half_width()
            )));
        }
        Ok(())
    }

    /// Discrete L² norm h³Σ|u|² (square-rooted), summed over components.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        (h * h * h * self.data.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Differentiability order `s ≥ 0` and weight exponent `δ` of H_{s,δ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevIndex {
    pub s: f64,
    pub delta: f64,
}

impl SobolevIndex {
    pub fn new(s: f64, delta: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(EekError::invalid(format!("Sobolev order must be >= 0, got {s}")));
        }
        if !delta.is_finite() {
            return Err(EekError::invalid(format!("weight exponent must be finite, got {delta}")));
        }
        Ok(SobolevIndex { s, delta })
    }
}
