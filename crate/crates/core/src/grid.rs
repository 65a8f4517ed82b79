//! Uniform age grids, sampled functions and the quadrature shared by every
//! module.
//!
//! Integrals over `[0, A]` always use composite Simpson on the grid nodes.
//! Cumulative integrals of the mortality rate use the trapezoid rule so that
//! every module sees the same `∫₀ᵃ μ`.

use crate::error::{Error, Result};

/// Default number of age nodes.
pub const DEFAULT_AGE_NODES: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid {
    max_age: f64,
    nodes: usize,
}

impl AgeGrid {
    pub fn new(max_age: f64, nodes: usize) -> Result<Self> {
        if !(max_age.is_finite() && max_age > 0.0) {
            return Err(Error::InvalidParams(format!(
                "max age must be positive, got {max_age}"
            )));
        }
        if nodes < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least 2 age nodes, got {nodes}"
            )));
        }
        Ok(Self { max_age, nodes })
    }

    pub fn max_age(&self) -> f64 {
        self.max_age
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.max_age / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.max_age
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn ages(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(|i| self.node(i))
    }

    /// Same interval, spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            max_age: self.max_age,
            nodes: 2 * self.nodes - 1,
        }
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_values(*self, self.ages().map(f).collect()).expect("length matches grid")
    }

    /// Composite Simpson weights. An odd interval count closes with the
    /// three-eighths rule on the last three intervals.
    pub fn simpson_weights(&self) -> Vec<f64> {
        simpson_weights(self.nodes, self.spacing())
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes);
        simpson(values, self.spacing())
    }

    /// `∫₀^{aᵢ} f` at every node by the trapezoid rule.
    pub fn cumulative_trapezoid(&self, values: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for pair in values.windows(2) {
            acc += 0.5 * h * (pair[0] + pair[1]);
            out.push(acc);
        }
        out
    }

    /// `∫_{aᵢ}^{A} f` at every node. Even-offset nodes use composite Simpson
    /// on the remaining panels; the others add a three-point single-interval
    /// rule.
    pub fn tail_integrals(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let h = self.spacing();
        let mut head = vec![0.0; n];
        if n >= 3 {
            for i in 1..n {
                head[i] = if i % 2 == 0 {
                    head[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i])
                } else {
                    head[i - 1]
                        + h / 12.0
                            * (5.0 * values[i - 1] + 8.0 * values[i] - values[(i + 1).min(n - 1)])
                };
            }
            // the last odd node has no right neighbour; use the left-sided rule
            if (n - 1) % 2 == 1 {
                let i = n - 1;
                head[i] = head[i - 1]
                    + h / 12.0 * (5.0 * values[i] + 8.0 * values[i - 1] - values[i - 2]);
            }
        } else {
            head[1] = 0.5 * h * (values[0] + values[1]);
        }
        let total = head[n - 1];
        let mut tail: Vec<f64> = head.iter().map(|c| total - c).collect();
        tail[n - 1] = 0.0;
        tail
    }

    /// Fourth-order central differences, one-sided fourth-order stencils at
    /// the ends. Falls back to second order on very short grids.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let h = self.spacing();
        let mut d = vec![0.0; n];
        if n < 5 {
            for i in 0..n {
                d[i] = if i == 0 {
                    (values[1] - values[0]) / h
                } else if i == n - 1 {
                    (values[n - 1] - values[n - 2]) / h
                } else {
                    (values[i + 1] - values[i - 1]) / (2.0 * h)
                };
            }
            return d;
        }
        for i in 2..n - 2 {
            d[i] = (values[i - 2] - 8.0 * values[i - 1] + 8.0 * values[i + 1] - values[i + 2])
                / (12.0 * h);
        }
        let fwd = |v: &[f64], i: usize| {
            (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3] - 3.0 * v[i + 4])
                / (12.0 * h)
        };
        let bwd = |v: &[f64], i: usize| {
            (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3] + 3.0 * v[i - 4])
                / (12.0 * h)
        };
        let near_fwd = |v: &[f64], i: usize| {
            (-3.0 * v[i - 1] - 10.0 * v[i] + 18.0 * v[i + 1] - 6.0 * v[i + 2] + v[i + 3])
                / (12.0 * h)
        };
        let near_bwd = |v: &[f64], i: usize| {
            (3.0 * v[i + 1] + 10.0 * v[i] - 18.0 * v[i - 1] + 6.0 * v[i - 2] - v[i - 3])
                / (12.0 * h)
        };
        d[0] = fwd(values, 0);
        d[1] = near_fwd(values, 1);
        d[n - 2] = near_bwd(values, n - 2);
        d[n - 1] = bwd(values, n - 1);
        d
    }
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => return w,
        2 => {
            w.fill(0.5 * h);
            return w;
        }
        _ => {}
    }
    let intervals = n - 1;
    let paired = if intervals % 2 == 1 {
        intervals - 3
    } else {
        intervals
    };
    for i in (0..paired).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if intervals % 2 == 1 {
        for (j, c) in [1.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
            w[paired + j] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

/// Composite Simpson on uniformly spaced samples, exact for cubics.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    simpson_weights(values.len(), h)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

/// A function on `[0, A]` known at the nodes of a uniform grid and evaluated
/// elsewhere by linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: AgeGrid,
    values: Vec<f64>,
    positive: bool,
    continuous: bool,
}

impl GridFunction {
    pub fn from_values(grid: AgeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParams(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite sample".into()));
        }
        let positive = values.iter().all(|&v| v > 0.0);
        Ok(Self {
            grid,
            values,
            positive,
            continuous: true,
        })
    }

    pub fn constant(grid: AgeGrid, c: f64) -> Self {
        grid.sample(|_| c)
    }

    /// Resample a table given at uniformly spaced ages onto `grid`.
    pub fn from_table(grid: AgeGrid, table: &[f64]) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::InvalidParams(
                "a table needs at least two entries".into(),
            ));
        }
        let src = AgeGrid::new(grid.max_age(), table.len())?;
        let f = GridFunction::from_values(src, table.to_vec())?;
        Ok(grid.sample(|a| f.eval(a)))
    }

    /// Marks the function as only piecewise continuous (kinks or jumps
    /// between nodes).
    pub fn with_continuity(mut self, continuous: bool) -> Self {
        self.continuous = continuous;
        self
    }

    pub fn grid(&self) -> AgeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    pub fn eval(&self, a: f64) -> f64 {
        let h = self.grid.spacing();
        let n = self.values.len();
        let x = (a / h).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let u = x - i as f64;
        self.values[i] * (1.0 - u) + self.values[i + 1] * u
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .grid
            .ages()
            .zip(&self.values)
            .map(|(a, &v)| f(a, v))
            .collect();
        GridFunction::from_values(self.grid, values).expect("same grid")
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|_, v| c * v)
    }

    pub fn mul(&self, other: &GridFunction) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        GridFunction::from_values(self.grid, values).expect("same grid")
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// L² inner product `⟨self, other⟩`.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        inner(&self.grid, &self.values, &other.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn derivative(&self) -> GridFunction {
        GridFunction::from_values(self.grid, self.grid.derivative(&self.values)).expect("same grid")
    }

    pub fn at_node(&self, i: usize) -> f64 {
        self.values[i]
    }
}

pub fn inner(grid: &AgeGrid, f: &[f64], g: &[f64]) -> f64 {
    let h = grid.spacing();
    let n = f.len();
    if n < 3 {
        return simpson(&f.iter().zip(g).map(|(a, b)| a * b).collect::<Vec<_>>(), h);
    }
    let intervals = n - 1;
    let mut sum = 0.0;
    for i in 0..intervals / 2 {
        let j = 2 * i;
        sum += f[j] * g[j] + 4.0 * f[j + 1] * g[j + 1] + f[j + 2] * g[j + 2];
    }
    if intervals % 2 == 1 {
        sum += 1.25 * f[n - 1] * g[n - 1] + 2.0 * f[n - 2] * g[n - 2] - 0.25 * f[n - 3] * g[n - 3];
    }
    h / 3.0 * sum
}
