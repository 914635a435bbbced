//! Architecture and schedule hyperparameters: the single source of truth
//! for every shape in the system.

use serde::{Deserialize, Serialize};

use crate::error::{GlomError, Result};

/// All architecture/schedule hyperparameters.
///
/// The image extent is derived: `(grid_h * patch, grid_w * patch)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlomConfig {
    /// Number of part-whole levels (>= 2).
    pub levels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Embedding dimension per level.
    pub dim: usize,
    /// Pixel patch edge per grid location.
    pub patch: usize,
    /// Settling steps per image.
    pub steps: usize,
    /// Frequency count of the position code (code length is 4 * pos_freqs).
    pub pos_freqs: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Neighborhood width per level, nondecreasing: higher levels sample
    /// lateral partners from a wider spread.
    pub sigma: Vec<f64>,
    /// Lateral partners sampled per location (without replacement).
    pub neighbors: usize,
    /// Inverse temperature of the lateral attention, interpolated linearly
    /// from start to end over the settling steps; must be nondecreasing.
    pub beta_start: f64,
    pub beta_end: f64,
    /// Contribution weights (start, end) interpolated over settling steps.
    pub lambda_bu: (f64, f64),
    pub lambda_td: (f64, f64),
    pub lambda_prev: (f64, f64),
    pub lambda_lateral: (f64, f64),
    /// One shared net pair for all level transitions instead of one per pair.
    pub share_nets_across_levels: bool,
    /// Redraw lateral partners every settling step instead of fixing them
    /// once per model instance.
    pub resample_neighbors_each_step: bool,
    /// Frequency scale folded into the first layer of sine nets.
    pub sine_w0: f64,
    /// Island cosine threshold per level.
    pub tau: Vec<f64>,
    pub seed: u64,
}

impl Default for GlomConfig {
    fn default() -> Self {
        GlomConfig {
            levels: 3,
            grid_h: 16,
            grid_w: 16,
            dim: 32,
            patch: 4,
            steps: 12,
            pos_freqs: 3,
            hidden_width: 64,
            hidden_layers: 2,
            sigma: vec![1.5, 3.0, 6.0],
            neighbors: 12,
            beta_start: 0.5,
            beta_end: 4.0,
            lambda_bu: (0.6, 0.3),
            lambda_td: (0.0, 0.2),
            lambda_prev: (0.2, 0.2),
            lambda_lateral: (0.2, 0.3),
            share_nets_across_levels: false,
            resample_neighbors_each_step: false,
            sine_w0: 3.0,
            tau: vec![0.9, 0.9, 0.9],
            seed: 42,
        }
    }
}

impl GlomConfig {
    /// A small configuration for fast tests: 2 levels on a 4x4 grid.
    pub fn tiny() -> Self {
        GlomConfig {
            levels: 2,
            grid_h: 4,
            grid_w: 4,
            dim: 8,
            patch: 4,
            steps: 3,
            pos_freqs: 2,
            hidden_width: 12,
            hidden_layers: 1,
            sigma: vec![1.5, 3.0],
            neighbors: 5,
            tau: vec![0.9, 0.9],
            ..GlomConfig::default()
        }
    }

    pub fn image_h(&self) -> usize {
        self.grid_h * self.patch
    }

    pub fn image_w(&self) -> usize {
        self.grid_w * self.patch
    }

    pub fn grid_size(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn pos_code_len(&self) -> usize {
        4 * self.pos_freqs
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(GlomError::config(format!("levels must be >= 2, got {}", self.levels)));
        }
        if self.grid_h == 0 || self.grid_w == 0 || self.dim == 0 || self.patch == 0 {
            return Err(GlomError::config("grid extents, dim and patch must be positive"));
        }
        if self.pos_freqs == 0 {
            return Err(GlomError::config("pos_freqs must be positive"));
        }
        if self.sigma.len() != self.levels {
            return Err(GlomError::config(format!(
                "sigma must have one entry per level ({}), got {}",
                self.levels,
                self.sigma.len()
            )));
        }
        for w in self.sigma.windows(2) {
            if w[1] < w[0] {
                return Err(GlomError::config("sigma must be nondecreasing across levels"));
            }
        }
        if self.sigma.iter().any(|&s| s <= 0.0) {
            return Err(GlomError::config("sigma entries must be positive"));
        }
        if self.neighbors > self.grid_size().saturating_sub(1) {
            return Err(GlomError::config(format!(
                "neighbors {} exceeds grid size - 1 = {}",
                self.neighbors,
                self.grid_size() - 1
            )));
        }
        if self.beta_start < 0.0 || self.beta_end < self.beta_start {
            return Err(GlomError::config("beta must be nonnegative and nondecreasing"));
        }
        for (name, (a, b)) in [
            ("lambda_bu", self.lambda_bu),
            ("lambda_td", self.lambda_td),
            ("lambda_prev", self.lambda_prev),
            ("lambda_lateral", self.lambda_lateral),
        ] {
            if a < 0.0 || b < 0.0 {
                return Err(GlomError::config(format!("{name} must be nonnegative")));
            }
        }
        if self.tau.len() != self.levels {
            return Err(GlomError::config(format!(
                "tau must have one entry per level ({}), got {}",
                self.levels,
                self.tau.len()
            )));
        }
        if self.tau.iter().any(|&t| t <= 0.0 || t >= 1.0) {
            return Err(GlomError::config("tau entries must lie in (0, 1)"));
        }
        Ok(())
    }
}
