//! Graded grids on `[0, 1)` and piecewise-linear radial profiles.
//!
//! A grid stores co-radii `t = 1 - r`, strictly decreasing, so that radii
//! increase. Nodes are geometric in `t`, which concentrates them toward
//! `r = 1` where every quantity of interest is decided.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    co: Vec<f64>,
}

/// Enough description of a grid to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub kind: String,
    pub nodes: usize,
    pub r_min: f64,
    /// `1 - r_max`, the co-radius of the outermost node.
    pub co_radius_min: f64,
}

impl Grid {
    /// Geometric grid in `1 - r` from `r = 0` down to `1 - r = co_radius_min`
    /// with a fixed node density per decade.
    pub fn graded(co_radius_min: f64, nodes_per_decade: usize) -> Result<Grid> {
        if !(co_radius_min > 0.0 && co_radius_min < 1.0) {
            return Err(Error::Parameter(format!("grid co-radius {co_radius_min} not in (0,1)")));
        }
        if nodes_per_decade == 0 {
            return Err(Error::Parameter("nodes_per_decade must be positive".into()));
        }
        let decades = -co_radius_min.log10();
        let cells = ((decades * nodes_per_decade as f64).round() as usize).max(1);
        Ok(Self::geometric(1.0, co_radius_min, cells))
    }

    /// `n` nodes (n >= 2), geometric in `1 - r` from `r = 0` to `1 - co_radius_min`.
    pub fn with_nodes(n: usize, co_radius_min: f64) -> Result<Grid> {
        if n < 2 {
            return Err(Error::Parameter("a grid needs at least two nodes".into()));
        }
        if !(co_radius_min > 0.0 && co_radius_min < 1.0) {
            return Err(Error::Parameter(format!("grid co-radius {co_radius_min} not in (0,1)")));
        }
        Ok(Self::geometric(1.0, co_radius_min, n - 1))
    }

    /// Geometric co-radii from `t_hi` to `t_lo` with `cells` intervals.
    pub fn geometric(t_hi: f64, t_lo: f64, cells: usize) -> Grid {
        let ratio = (t_lo / t_hi).ln() / cells as f64;
        let mut co: Vec<f64> = (0..=cells).map(|i| t_hi * (ratio * i as f64).exp()).collect();
        co[0] = t_hi;
        co[cells] = t_lo;
        Grid { co }
    }

    pub fn from_radii(radii: &[f64]) -> Result<Grid> {
        if radii.is_empty() {
            return Err(Error::Parameter("empty grid".into()));
        }
        for w in radii.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Parameter("grid radii must be strictly increasing".into()));
            }
        }
        if radii[0] < 0.0 || radii[radii.len() - 1] >= 1.0 {
            return Err(Error::Domain("grid radii must lie in [0,1)".into()));
        }
        Ok(Grid { co: radii.iter().map(|r| 1.0 - r).collect() })
    }

    pub fn from_co_radii(co: Vec<f64>) -> Result<Grid> {
        if co.is_empty() {
            return Err(Error::Parameter("empty grid".into()));
        }
        for w in co.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Parameter("co-radii must be strictly decreasing".into()));
            }
        }
        if co[0] > 1.0 || co[co.len() - 1] <= 0.0 {
            return Err(Error::Domain("co-radii must lie in (0,1]".into()));
        }
        Ok(Grid { co })
    }

    pub fn len(&self) -> usize {
        self.co.len()
    }

    pub fn is_empty(&self) -> bool {
        self.co.is_empty()
    }

    pub fn co_radii(&self) -> &[f64] {
        &self.co
    }

    pub fn co_radius(&self, i: usize) -> f64 {
        self.co[i]
    }

    pub fn radius(&self, i: usize) -> f64 {
        1.0 - self.co[i]
    }

    pub fn radii(&self) -> Vec<f64> {
        self.co.iter().map(|t| 1.0 - t).collect()
    }

    /// Same nodes with every cell split into `factor` geometric sub-cells.
    pub fn refined(&self, factor: usize) -> Grid {
        let factor = factor.max(1);
        let mut co = Vec::with_capacity((self.co.len() - 1) * factor + 1);
        for w in self.co.windows(2) {
            let (a, b) = (w[0], w[1]);
            for j in 0..factor {
                let s = j as f64 / factor as f64;
                co.push(a * (b / a).powf(s));
            }
        }
        co.push(*self.co.last().unwrap());
        Grid { co }
    }

    /// Index range of nodes whose co-radius lies in `[t_lo, t_hi]`.
    pub fn band(&self, t_lo: f64, t_hi: f64) -> std::ops::Range<usize> {
        let (hi, lo) = (t_hi * (1.0 + 1e-12), t_lo * (1.0 - 1e-12));
        let start = self.co.iter().position(|&t| t <= hi).unwrap_or(self.co.len());
        let end = self.co.iter().rposition(|&t| t >= lo).map_or(start, |i| i + 1);
        start..end.max(start)
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            kind: "geometric-in-co-radius".into(),
            nodes: self.co.len(),
            r_min: 1.0 - self.co[0],
            co_radius_min: *self.co.last().unwrap(),
        }
    }

    /// Index `i` with `co[i] >= t > co[i+1]`, i.e. the cell containing
    /// the radius `1 - t`. `None` beyond the last node or before the first.
    pub fn cell_of_co_radius(&self, t: f64) -> Option<usize> {
        if t > self.co[0] || t <= *self.co.last().unwrap() {
            return None;
        }
        // co is decreasing: find first index with co < t
        let idx = self.co.partition_point(|&c| c >= t);
        Some(idx - 1)
    }
}

/// Samples of a radial function on a grid, read back by piecewise-linear
/// interpolation in `r`, held constant beyond the outermost node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Profile> {
        if grid.len() != values.len() {
            return Err(Error::Parameter(format!(
                "profile has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Profile { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Profile {
        let values = grid.co_radii().iter().map(|t| f(1.0 - t)).collect();
        Profile { grid: grid.clone(), values }
    }

    pub fn constant(grid: &Grid, v: f64) -> Profile {
        Profile { grid: grid.clone(), values: vec![v; grid.len()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.eval_co(1.0 - r)
    }

    /// Value at co-radius `t`.
    pub fn eval_co(&self, t: f64) -> f64 {
        let co = self.grid.co_radii();
        if t >= co[0] {
            return self.values[0];
        }
        let last = co.len() - 1;
        if t <= co[last] {
            return self.values[last];
        }
        let idx = co.partition_point(|&c| c >= t);
        let (ta, tb) = (co[idx - 1], co[idx]);
        let lam = (ta - t) / (ta - tb);
        self.values[idx - 1] * (1.0 - lam) + self.values[idx] * lam
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Profile {
        Profile { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}
