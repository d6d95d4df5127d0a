//! Uniform grids, linear interpolation and composite-trapezoid tables.
//!
//! Every tabulated function in the crate lives on a [`UniformGrid`]. Values
//! may be vector- or matrix-valued; they are stored flat with a fixed
//! `width` per node.

/// Uniform grid `lo, lo + step, ..., lo + (n-1) step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    lo: f64,
    step: f64,
    n: usize,
}

impl UniformGrid {
    /// `n` points spanning `[lo, hi]` inclusive. Requires `n >= 2` and `lo < hi`.
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2, "grid needs at least two nodes");
        assert!(lo < hi, "grid bounds must be increasing");
        UniformGrid {
            lo,
            step: (hi - lo) / (n - 1) as f64,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            // avoid drift of lo + (n-1)*step away from the requested hi
            self.lo + self.step * (self.n - 1) as f64
        } else {
            self.lo + self.step * j as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Interval index `j` and fraction `w ∈ [0,1]` with `x ≈ x_j + w·step`.
    /// Points outside the grid are clamped to the end intervals.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let u = (x - self.lo) / self.step;
        if u <= 0.0 || u.is_nan() {
            return (0, 0.0);
        }
        let last = self.n - 2;
        let j = (u.floor() as usize).min(last);
        let w = (u - j as f64).min(1.0);
        (j, w)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi()
    }
}

/// Node-tabulated function with `width` components per node.
#[derive(Debug, Clone)]
pub struct Table {
    grid: UniformGrid,
    width: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn new(grid: UniformGrid, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len() * width, "table data has the wrong length");
        Table { grid, width, data }
    }

    /// Tabulate `fill(x_j, out_j)` on every node.
    pub fn tabulate<F>(grid: UniformGrid, width: usize, mut fill: F) -> Self
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut data = vec![0.0; grid.len() * width];
        for (j, chunk) in data.chunks_exact_mut(width).enumerate() {
            fill(grid.node(j), chunk);
        }
        Table { grid, width, data }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn node(&self, j: usize) -> &[f64] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Linear interpolation (clamped to the end nodes).
    #[inline]
    pub fn interp(&self, x: f64, out: &mut [f64]) {
        let (j, w) = self.grid.locate(x);
        let a = self.node(j);
        let b = self.node(j + 1);
        for k in 0..self.width {
            out[k] = a[k] + w * (b[k] - a[k]);
        }
    }

    pub fn interp_scalar(&self, x: f64) -> f64 {
        debug_assert_eq!(self.width, 1);
        let (j, w) = self.grid.locate(x);
        let a = self.data[j];
        a + w * (self.data[j + 1] - a)
    }
}

/// Direction of accumulation for a [`CumulativeTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accumulate {
    /// `∫_{x_lo}^{x} g`
    FromLeft,
    /// `∫_{x}^{x_hi} g`
    FromRight,
}

/// Composite-trapezoid antiderivative of a tabulated integrand.
///
/// Evaluation between nodes integrates the linearly interpolated integrand
/// over the partial interval, so splitting an interval at any point leaves
/// the total unchanged.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    integrand: Table,
    cum: Table,
    dir: Accumulate,
}

impl CumulativeTable {
    pub fn new(integrand: Table, dir: Accumulate) -> Self {
        let grid = *integrand.grid();
        let width = integrand.width();
        let n = grid.len();
        let h = grid.step();
        let mut cum = vec![0.0; n * width];
        match dir {
            Accumulate::FromLeft => {
                for j in 1..n {
                    let (prev, cur) = cum.split_at_mut(j * width);
                    let prev = &prev[(j - 1) * width..];
                    let a = integrand.node(j - 1);
                    let b = integrand.node(j);
                    for k in 0..width {
                        cur[k] = prev[k] + 0.5 * h * (a[k] + b[k]);
                    }
                }
            }
            Accumulate::FromRight => {
                for j in (0..n - 1).rev() {
                    let (cur, next) = cum.split_at_mut((j + 1) * width);
                    let cur = &mut cur[j * width..];
                    let a = integrand.node(j);
                    let b = integrand.node(j + 1);
                    for k in 0..width {
                        cur[k] = next[k] + 0.5 * h * (a[k] + b[k]);
                    }
                }
            }
        }
        CumulativeTable {
            cum: Table::new(grid, width, cum),
            integrand,
            dir,
        }
    }

    pub fn integrand(&self) -> &Table {
        &self.integrand
    }

    pub fn table(&self) -> &Table {
        &self.cum
    }

    pub fn width(&self) -> usize {
        self.cum.width()
    }

    /// Whole-grid integral.
    pub fn total(&self) -> &[f64] {
        match self.dir {
            Accumulate::FromLeft => self.cum.node(self.cum.grid().len() - 1),
            Accumulate::FromRight => self.cum.node(0),
        }
    }

    /// Antiderivative at an arbitrary point (clamped to the grid).
    pub fn at(&self, x: f64, out: &mut [f64]) {
        let grid = self.cum.grid();
        let x = x.clamp(grid.lo(), grid.hi());
        let (j, w) = grid.locate(x);
        let h = grid.step();
        let a = self.integrand.node(j);
        let b = self.integrand.node(j + 1);
        match self.dir {
            Accumulate::FromLeft => {
                let c = self.cum.node(j);
                let len = w * h;
                for k in 0..self.width() {
                    let gx = a[k] + w * (b[k] - a[k]);
                    out[k] = c[k] + 0.5 * len * (a[k] + gx);
                }
            }
            Accumulate::FromRight => {
                let c = self.cum.node(j + 1);
                let len = (1.0 - w) * h;
                for k in 0..self.width() {
                    let gx = a[k] + w * (b[k] - a[k]);
                    out[k] = c[k] + 0.5 * len * (gx + b[k]);
                }
            }
        }
    }

    pub fn at_scalar(&self, x: f64) -> f64 {
        let mut v = [0.0];
        self.at(x, &mut v);
        v[0]
    }
}

/// Composite trapezoid rule on arbitrary (sorted) abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}
