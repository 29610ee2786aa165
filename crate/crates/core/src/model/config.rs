use crate::attention::variance_schedule;
use crate::error::{Error, Result};
use crate::manifold::DEFAULT_MAX_TANGENT_NORM;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Raw frame feature width `D_vid`.
    pub video_dim: usize,
    /// Raw word feature width `D_text`.
    pub text_dim: usize,
    /// Latent width `d`.
    pub dim: usize,
    /// Hyperbolic dimension `n` of the Lorentz blocks.
    pub hyper_dim: usize,
    /// `N_L`.
    pub lorentz_blocks: usize,
    /// `N_E`.
    pub euclidean_blocks: usize,
    /// Heads of every Euclidean attention.
    pub heads: usize,
    /// Feed-forward hidden width inside each block.
    pub ffn_hidden: usize,
    /// Clip count `M_c` of the glance branch.
    pub clip_count: usize,
    /// Fusion softmax temperature `τ`.
    pub tau: f64,
    pub alpha_frame: f64,
    pub alpha_clip: f64,
    /// Initial lift scale `β`.
    pub beta_init: f64,
    /// Initial Lorentz linear scale `λ`.
    pub lambda_init: f64,
    pub max_tangent_norm: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults.
    pub fn toy() -> Self {
        Self {
            video_dim: 64,
            text_dim: 48,
            dim: 32,
            hyper_dim: 32,
            lorentz_blocks: 2,
            euclidean_blocks: 2,
            heads: 2,
            ffn_hidden: 32,
            clip_count: 8,
            tau: 1.0,
            alpha_frame: 0.5,
            alpha_clip: 0.5,
            beta_init: 0.02,
            lambda_init: 1.0,
            max_tangent_norm: DEFAULT_MAX_TANGENT_NORM,
            seed: 0,
        }
    }

    /// Published model scale (I3D / RoBERTa feature widths).
    pub fn paper() -> Self {
        Self {
            video_dim: 1024,
            text_dim: 1024,
            dim: 384,
            hyper_dim: 384,
            lorentz_blocks: 4,
            euclidean_blocks: 4,
            heads: 4,
            ffn_hidden: 384,
            clip_count: 32,
            ..Self::toy()
        }
    }

    /// `N_O = N_L + N_E`.
    pub fn total_blocks(&self) -> usize {
        self.lorentz_blocks + self.euclidean_blocks
    }

    pub fn lorentz_variances(&self) -> Vec<f64> {
        variance_schedule(self.lorentz_blocks)
    }

    pub fn euclidean_variances(&self) -> Vec<f64> {
        variance_schedule(self.euclidean_blocks)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("video_dim", self.video_dim),
            ("text_dim", self.text_dim),
            ("dim", self.dim),
            ("hyper_dim", self.hyper_dim),
            ("heads", self.heads),
            ("ffn_hidden", self.ffn_hidden),
            ("clip_count", self.clip_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        if self.total_blocks() == 0 {
            return Err(Error::arg("at least one attention block is required"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::arg(format!(
                "heads ({}) must divide dim ({})",
                self.heads, self.dim
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::arg("tau must be positive"));
        }
        let in_unit = |a: f64| (0.0..=1.0).contains(&a);
        if !in_unit(self.alpha_frame)
            || !in_unit(self.alpha_clip)
            || (self.alpha_frame + self.alpha_clip - 1.0).abs() > 1e-12
        {
            return Err(Error::arg("alpha_frame and alpha_clip must lie in [0,1] and sum to 1"));
        }
        if !(self.beta_init > 0.0) || !(self.lambda_init > 0.0) {
            return Err(Error::arg("beta_init and lambda_init must be positive"));
        }
        if !(self.max_tangent_norm > 0.0) {
            return Err(Error::arg("max_tangent_norm must be positive"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}
