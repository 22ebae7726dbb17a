use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamic::DynamicConfig;
use crate::error::{Error, Result};
use crate::optimize::OptimConfig;
use crate::scene::{ClassId, GridSpec};
use crate::splat::SplatConfig;

/// Where the per-point initial Gaussians come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    /// Stride-subsampled labeled LiDAR points.
    #[default]
    Points,
    /// The same number of Gaussians at uniform random positions in the grid.
    Random,
    /// Anchor Gaussians only.
    None,
}

/// Flat key/value pipeline configuration. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frames_dir: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub grid_min: Option<[f64; 3]>,
    pub grid_max: Option<[f64; 3]>,
    pub voxel_size: Option<f64>,

    pub stride: usize,
    pub init_source: InitSource,
    pub init_opacity: f64,
    pub seed: u64,

    pub steps: u32,
    pub lr_init: f64,
    pub lr_position_decay: f64,
    pub lr_decay_every: u32,
    pub image_start: [u32; 2],
    pub image_double_every: u32,
    pub prune_period: u32,
    pub prune_alpha: f64,
    pub densify_grad_threshold: Vec<f64>,
    pub max_gaussians: usize,
    pub w_sem: f64,
    pub w_geo: f64,
    pub w_sky: f64,
    pub epsilon_geo: f64,

    pub cutoff: f64,
    pub sigma_bound: f64,
    pub theta_occ: f64,
    pub knn_k: usize,

    pub rho: f64,
    pub pair_gate: f64,

    pub ignore: Vec<ClassId>,
    pub write_logits: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let o = OptimConfig::default();
        let s = SplatConfig::default();
        let d = DynamicConfig::default();
        Self {
            frames_dir: None,
            taxonomy: None,
            ground_truth: None,
            out_dir: PathBuf::from("out"),
            grid_min: None,
            grid_max: None,
            voxel_size: None,
            stride: 8,
            init_source: InitSource::Points,
            init_opacity: 0.5,
            seed: 0,
            steps: o.steps,
            lr_init: o.lr_init,
            lr_position_decay: o.lr_position_decay,
            lr_decay_every: o.lr_decay_every,
            image_start: o.image_start,
            image_double_every: o.image_double_every,
            prune_period: o.prune_period,
            prune_alpha: o.prune_alpha,
            densify_grad_threshold: o.densify_grad_threshold,
            max_gaussians: o.max_gaussians,
            w_sem: o.w_sem,
            w_geo: o.w_geo,
            w_sky: o.w_sky,
            epsilon_geo: o.epsilon_geo,
            cutoff: s.cutoff,
            sigma_bound: s.sigma_bound,
            theta_occ: s.theta_occ,
            knn_k: s.knn_k,
            rho: d.rho,
            pair_gate: d.pair_gate,
            ignore: Vec::new(),
            write_logits: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            Error::parse("config", offset, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parse `path` and resolve its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.frames_dir.as_mut().map(resolve);
        cfg.taxonomy.as_mut().map(resolve);
        cfg.ground_truth.as_mut().map(resolve);
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn frames_dir(&self) -> Result<&Path> {
        self.frames_dir.as_deref().ok_or_else(|| Error::Config("missing `frames_dir`".into()))
    }

    pub fn taxonomy_path(&self) -> Result<&Path> {
        self.taxonomy.as_deref().ok_or_else(|| Error::Config("missing `taxonomy`".into()))
    }

    pub fn grid(&self) -> Result<GridSpec> {
        match (self.grid_min, self.grid_max, self.voxel_size) {
            (Some(lo), Some(hi), Some(v)) => GridSpec::new(lo.into(), hi.into(), v),
            _ => Err(Error::Config("grid needs `grid_min`, `grid_max` and `voxel_size`".into())),
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            lr_init: self.lr_init,
            lr_position_decay: self.lr_position_decay,
            lr_decay_every: self.lr_decay_every,
            steps: self.steps,
            image_start: self.image_start,
            image_double_every: self.image_double_every,
            prune_period: self.prune_period,
            prune_alpha: self.prune_alpha,
            densify_grad_threshold: self.densify_grad_threshold.clone(),
            max_gaussians: self.max_gaussians,
            w_sem: self.w_sem,
            w_geo: self.w_geo,
            w_sky: self.w_sky,
            epsilon_geo: self.epsilon_geo,
            render: Default::default(),
        }
    }

    pub fn splat(&self) -> SplatConfig {
        SplatConfig {
            cutoff: self.cutoff,
            sigma_bound: self.sigma_bound,
            theta_occ: self.theta_occ,
            knn_k: self.knn_k,
        }
    }

    pub fn dynamic(&self) -> DynamicConfig {
        DynamicConfig {
            rho: self.rho,
            pair_gate: self.pair_gate,
        }
    }

    pub fn ignore_set(&self) -> BTreeSet<ClassId> {
        self.ignore.iter().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("`stride` must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.init_opacity) {
            return Err(Error::Config("`init_opacity` must be in [0, 1]".into()));
        }
        self.optim().validate()?;
        self.splat().validate()?;
        self.dynamic().validate()?;
        self.grid()?;
        Ok(())
    }
}
