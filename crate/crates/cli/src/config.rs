//! Pipeline configuration: defaults, TOML file, `FORGE_*` environment
//! overrides and command-line flags, applied in that order.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use forge_core::filters::FilterParams;
use forge_core::ingest::TilingParams;
use forge_core::targets::{ColorParams, CueParams, TargetParams};
use forge_enhance::EndpointConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; splits, filter sampling and distillation sampling
    /// derive from it.
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub paths: Paths,
    pub tiling: Tiling,
    pub clustering: Clustering,
    pub cues: Cues,
    pub filters: Filters,
    pub splits: Splits,
    pub enhancer: Enhancer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Source manifest (`sources.json`).
    pub sources: PathBuf,
    /// Stage checkpoints.
    pub work_dir: PathBuf,
    /// Exported dataset.
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Optional replacement for the built-in expression grammar.
    pub grammar: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tiling {
    pub window: u32,
    pub stride: u32,
    pub min_clip_fraction: f64,
    /// Side length label-raster sources are resized to.
    pub semantic_size: u32,
    pub promoted_classes: BTreeSet<String>,
    pub min_component_area: u64,
    pub eight_connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Clustering {
    pub eps: f64,
    pub min_pts: usize,
    pub max_cluster_size: usize,
    pub min_region_area: u64,
    pub ignore_classes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cues {
    pub achromatic_dominance: f64,
    pub chromatic_dominance: f64,
    pub light_max_saturation: f64,
    pub light_min_value: f64,
    pub dark_max_value: f64,
    pub no_color_categories: BTreeSet<String>,
    pub relation_max_dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filters {
    pub gamma: f64,
    pub contrast: f64,
    pub grain_sigma: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    /// Share of training images that get a historic variant.
    pub p_filter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Splits {
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Enhancer {
    pub url: String,
    pub model: String,
    pub concurrency: usize,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub requests_per_second: f64,
    pub timeout_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: 0,
            paths: Paths::default(),
            tiling: Tiling::default(),
            clustering: Clustering::default(),
            cues: Cues::default(),
            filters: Filters::default(),
            splits: Splits::default(),
            enhancer: Enhancer::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            sources: PathBuf::from("sources.json"),
            work_dir: PathBuf::from("work"),
            out_dir: PathBuf::from("dataset"),
            cache_dir: PathBuf::from("cache"),
            grammar: None,
        }
    }
}

impl Default for Tiling {
    fn default() -> Self {
        let t = TilingParams::default();
        Self {
            window: t.window,
            stride: t.stride,
            min_clip_fraction: t.min_clip_fraction,
            semantic_size: forge_core::TILE_SIZE,
            promoted_classes: TargetParams::default().promoted_classes,
            min_component_area: 100,
            eight_connected: true,
        }
    }
}

impl Default for Clustering {
    fn default() -> Self {
        let t = TargetParams::default();
        Self {
            eps: t.eps,
            min_pts: t.min_pts,
            max_cluster_size: t.max_cluster_size,
            min_region_area: t.min_region_area,
            ignore_classes: t.ignore_classes,
        }
    }
}

impl Default for Cues {
    fn default() -> Self {
        let c = ColorParams::default();
        Self {
            achromatic_dominance: c.achromatic_dominance,
            chromatic_dominance: c.chromatic_dominance,
            light_max_saturation: c.light_max_saturation,
            light_min_value: c.light_min_value,
            dark_max_value: c.dark_max_value,
            no_color_categories: c.no_color_categories,
            relation_max_dist: CueParams::default().relation_max_dist,
        }
    }
}

impl Default for Filters {
    fn default() -> Self {
        let f = FilterParams::default();
        Self {
            gamma: f.gamma,
            contrast: f.contrast,
            grain_sigma: f.grain_sigma,
            noise_low: f.noise_range.0,
            noise_high: f.noise_range.1,
            p_filter: 0.2,
        }
    }
}

impl Default for Splits {
    fn default() -> Self {
        Self { test_fraction: 0.2658 }
    }
}

impl Default for Enhancer {
    fn default() -> Self {
        let e = EndpointConfig::default();
        Self {
            url: e.url,
            model: e.model,
            concurrency: e.concurrency,
            max_attempts: e.max_attempts,
            base_delay_ms: e.base_delay_ms,
            requests_per_second: e.requests_per_second,
            timeout_secs: e.timeout_secs,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl PipelineConfig {
    /// Parses a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for field in [&mut p.sources, &mut p.work_dir, &mut p.out_dir, &mut p.cache_dir] {
            if field.is_relative() {
                *field = base.join(&*field);
            }
        }
        if let Some(g) = &mut p.grammar {
            if g.is_relative() {
                *g = base.join(&*g);
            }
        }
        Ok(cfg)
    }

    /// Applies `FORGE_*` variables from `vars` (normally the process
    /// environment) and the `ENHANCER_*` endpoint variables.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, CliError> {
            v.parse().map_err(|_| CliError::Config(format!("{k}={v:?} is not valid")))
        }
        for (k, v) in vars {
            match k.as_str() {
                "FORGE_SEED" => self.seed = parse(&k, &v)?,
                "FORGE_WORKERS" => self.workers = parse(&k, &v)?,
                "FORGE_SOURCES" => self.paths.sources = v.into(),
                "FORGE_WORK_DIR" => self.paths.work_dir = v.into(),
                "FORGE_OUT_DIR" => self.paths.out_dir = v.into(),
                "FORGE_CACHE_DIR" => self.paths.cache_dir = v.into(),
                "FORGE_P_FILTER" => self.filters.p_filter = parse(&k, &v)?,
                "FORGE_TEST_FRACTION" => self.splits.test_fraction = parse(&k, &v)?,
                "ENHANCER_URL" => self.enhancer.url = v,
                "ENHANCER_MODEL" => self.enhancer.model = v,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.tiling.window == 0 || self.tiling.stride == 0 || self.tiling.semantic_size == 0 {
            return bad("tiling window, stride and semantic_size must be positive".into());
        }
        if self.tiling.stride > self.tiling.window {
            return bad(format!("stride {} exceeds window {}", self.tiling.stride, self.tiling.window));
        }
        unit("tiling.min_clip_fraction", self.tiling.min_clip_fraction)?;
        if !(self.clustering.eps >= 0.0) || self.clustering.min_pts == 0 || self.clustering.max_cluster_size < 2 {
            return bad("clustering needs eps ≥ 0, min_pts ≥ 1, max_cluster_size ≥ 2".into());
        }
        for (n, v) in [
            ("cues.achromatic_dominance", self.cues.achromatic_dominance),
            ("cues.chromatic_dominance", self.cues.chromatic_dominance),
            ("cues.light_max_saturation", self.cues.light_max_saturation),
            ("cues.light_min_value", self.cues.light_min_value),
            ("cues.dark_max_value", self.cues.dark_max_value),
            ("filters.p_filter", self.filters.p_filter),
        ] {
            unit(n, v)?;
        }
        if !(self.cues.relation_max_dist >= 0.0) {
            return bad("cues.relation_max_dist must be non-negative".into());
        }
        if !(self.filters.gamma > 0.0) || !(self.filters.grain_sigma >= 0.0) || !(self.filters.noise_low < self.filters.noise_high) {
            return bad("filters need gamma > 0, grain_sigma ≥ 0 and noise_low < noise_high".into());
        }
        if !(self.splits.test_fraction > 0.0 && self.splits.test_fraction < 1.0) {
            return bad(format!("splits.test_fraction = {} is outside (0, 1)", self.splits.test_fraction));
        }
        if self.enhancer.concurrency == 0 || self.enhancer.max_attempts == 0 {
            return bad("enhancer concurrency and max_attempts must be positive".into());
        }
        Ok(())
    }

    pub fn tiling_params(&self) -> TilingParams {
        TilingParams {
            window: self.tiling.window,
            stride: self.tiling.stride,
            min_clip_fraction: self.tiling.min_clip_fraction,
        }
    }

    pub fn target_params(&self) -> TargetParams {
        TargetParams {
            eps: self.clustering.eps,
            min_pts: self.clustering.min_pts,
            max_cluster_size: self.clustering.max_cluster_size,
            min_region_area: self.clustering.min_region_area,
            promoted_classes: self.tiling.promoted_classes.clone(),
            ignore_classes: self.clustering.ignore_classes.clone(),
        }
    }

    pub fn cue_params(&self) -> CueParams {
        CueParams {
            color: ColorParams {
                achromatic_dominance: self.cues.achromatic_dominance,
                chromatic_dominance: self.cues.chromatic_dominance,
                light_max_saturation: self.cues.light_max_saturation,
                light_min_value: self.cues.light_min_value,
                dark_max_value: self.cues.dark_max_value,
                no_color_categories: self.cues.no_color_categories.clone(),
            },
            relation_max_dist: self.cues.relation_max_dist,
        }
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            gamma: self.filters.gamma,
            contrast: self.filters.contrast,
            grain_sigma: self.filters.grain_sigma,
            noise_range: (self.filters.noise_low, self.filters.noise_high),
        }
    }

    pub fn endpoint(&self) -> EndpointConfig {
        EndpointConfig {
            url: self.enhancer.url.clone(),
            model: self.enhancer.model.clone(),
            api_key: std::env::var("ENHANCER_KEY").ok(),
            max_attempts: self.enhancer.max_attempts,
            base_delay_ms: self.enhancer.base_delay_ms,
            timeout_secs: self.enhancer.timeout_secs,
            concurrency: self.enhancer.concurrency,
            requests_per_second: self.enhancer.requests_per_second,
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.workers
        }
    }
}
