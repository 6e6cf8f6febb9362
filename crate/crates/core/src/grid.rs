//! Logarithmically uniform size grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing positive size nodes with a constant ratio between
/// neighbours. The ratio is the invariant everything else leans on: panel
/// lookup is O(1) arithmetic on logarithms.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    ln_first: f64,
    ln_step: f64,
}

pub const MIN_NODES: usize = 16;

impl Grid {
    /// Log-uniform grid with exactly `n` nodes, first node `x_min`, last
    /// node `x_max`.
    pub fn log_uniform(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min > 0.0) || !(x_max > x_min) {
            return Err(Error::config(format!(
                "grid requires 0 < x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n < MIN_NODES {
            return Err(Error::config(format!(
                "grid requires at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let ln_first = x_min.ln();
        let ln_step = (x_max / x_min).ln() / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n)
            .map(|i| (ln_first + ln_step * i as f64).exp())
            .collect();
        // Pin the endpoints exactly.
        nodes[0] = x_min;
        nodes[n - 1] = x_max;
        Ok(Grid {
            nodes,
            ln_first,
            ln_step,
        })
    }

    /// Validate an externally supplied node ladder (e.g. read from CSV).
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return Err(Error::config(format!(
                "grid requires at least {MIN_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        if !(nodes[0] > 0.0) {
            return Err(Error::config("grid nodes must be positive"));
        }
        let n = nodes.len();
        let ln_step = (nodes[n - 1] / nodes[0]).ln() / (n - 1) as f64;
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::config("grid nodes must be strictly increasing"));
            }
            let ratio = (w[1] / w[0]).ln();
            if (ratio / ln_step - 1.0).abs() > 1e-12 * (1.0 / ln_step).max(1.0) + 1e-9 {
                return Err(Error::config(
                    "grid nodes are not log-uniform within tolerance",
                ));
            }
        }
        let ln_first = nodes[0].ln();
        Ok(Grid {
            nodes,
            ln_first,
            ln_step,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Constant ratio x_{i+1}/x_i.
    pub fn ratio(&self) -> f64 {
        self.ln_step.exp()
    }

    pub fn ln_step(&self) -> f64 {
        self.ln_step
    }

    /// Panel index i with nodes[i] <= x <= nodes[i+1], clamped to the grid.
    /// O(1) via the log spacing, with a one-step correction for rounding.
    pub fn panel_of(&self, x: f64) -> usize {
        debug_assert!(x > 0.0);
        let n = self.nodes.len();
        let raw = ((x.ln() - self.ln_first) / self.ln_step).floor();
        let mut i = if raw < 0.0 {
            0
        } else {
            (raw as usize).min(n - 2)
        };
        if x < self.nodes[i] && i > 0 {
            i -= 1;
        } else if x > self.nodes[i + 1] && i < n - 2 {
            i += 1;
        }
        i
    }

    /// Cell widths for sectional bookkeeping: geometric cells centred on
    /// the pivots, so width_i = x_i (sqrt(r) - 1/sqrt(r)).
    pub fn cell_widths(&self) -> Vec<f64> {
        let s = (0.5 * self.ln_step).exp();
        let factor = s - 1.0 / s;
        self.nodes.iter().map(|x| x * factor).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decade_grid_hits_powers_of_ten() {
        // nine nodes spanning 10^{-4}..10^{4}
        let g = Grid::log_uniform(1e-4, 1e4, 16).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.first(), 1e-4);
        assert_eq!(g.last(), 1e4);
        let g = Grid::log_uniform(1e-6, 1e6, 241).unwrap();
        assert!((g.ratio() - 10f64.powf(0.05)).abs() < 1e-13);
    }

    #[test]
    fn empty_range_is_rejected() {
        assert!(Grid::log_uniform(1.0, 1.0, 16).is_err());
        assert!(Grid::log_uniform(2.0, 1.0, 16).is_err());
        assert!(Grid::log_uniform(0.0, 1.0, 16).is_err());
        assert!(Grid::log_uniform(1e-2, 1.0, 8).is_err());
    }

    #[test]
    fn panel_lookup_brackets_every_sample() {
        let g = Grid::log_uniform(1e-3, 1e3, 61).unwrap();
        for k in 0..600 {
            let x = 1e-3 * 10f64.powf(6.0 * (k as f64 + 0.5) / 600.0);
            let i = g.panel_of(x);
            assert!(g.nodes()[i] <= x * (1.0 + 1e-14));
            assert!(x <= g.nodes()[i + 1] * (1.0 + 1e-14));
        }
        // clamping outside the grid
        assert_eq!(g.panel_of(1e-9), 0);
        assert_eq!(g.panel_of(1e9), g.len() - 2);
    }

    #[test]
    fn roundtrip_nodes_revalidate() {
        let g = Grid::log_uniform(1e-5, 1e5, 121).unwrap();
        let g2 = Grid::from_nodes(g.nodes().to_vec()).unwrap();
        assert_eq!(g, g2);
        assert!(Grid::from_nodes(vec![1.0; 20]).is_err());
    }
}
