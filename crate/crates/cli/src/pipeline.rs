//! Checkpointed pipeline stages.
//!
//! Every stage reads the previous stage's checkpoint from the work
//! directory and writes its own. A stage is skipped when its output exists
//! and the stamp (hash of its config section and input files) matches.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use forge_core::dataset::{
    assign_splits_weighted, compute_stats, write_manifest, DatasetManifest, DatasetStats, ExpressionRecord,
    FilterProvenance, ImageRecord, RleMask, Split, TargetRecord,
};
use forge_core::expressions::{dedupe_image, generate_rule_expressions, Grammar};
use forge_core::filters::{self, image_seed, sample_filter, FilterKind, FilterParams, FilterSpec};
use forge_core::ingest::{
    promote_pseudo_instances, resize_semantic_image, tile_instance_image, Annotations, Connectivity, SourceManifest, Tile,
};
use forge_core::targets::{build_targets, extract_cues};
use forge_enhance::{
    estimate_cost, export_distillation_pairs, validate_enhancement, CostModel, DiskCache, Enhancer, PromptPayload,
    TeacherRecord, INSTRUCTION_VERSION,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::*;
use crate::config::PipelineConfig;
use crate::error::{at, CliError, Result};

/// What a stage did, logged as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub skipped: bool,
    pub counters: BTreeMap<&'static str, u64>,
}

impl StageReport {
    fn new(stage: &'static str, skipped: bool) -> Self {
        Self {
            stage,
            skipped,
            counters: BTreeMap::new(),
        }
    }

    fn count(mut self, key: &'static str, n: impl TryInto<u64>) -> Self {
        self.counters.insert(key, n.try_into().unwrap_or(u64::MAX));
        self
    }

    fn log(self) -> Self {
        tracing::info!(
            stage = self.stage,
            skipped = self.skipped,
            counters = %serde_json::to_string(&self.counters).unwrap_or_default(),
            "stage finished"
        );
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnhanceOptions {
    /// Only estimate what the stage would cost.
    pub dry_run_cost: bool,
    /// Write `k` teacher exchanges as distillation pairs to this file.
    pub distill: Option<(PathBuf, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub targets: u64,
    pub uncached_requests: u64,
    pub teacher_usd: f64,
    pub distilled_usd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnhanceOutcome {
    DryRun(CostEstimate),
    Done(StageReport),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportReport {
    pub manifest: PathBuf,
    pub stats: DatasetStats,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    /// Recompute stages even when their stamps match.
    pub force: bool,
    pool: rayon::ThreadPool,
}

fn png_bytes(img: &image::DynamicImage) -> image::ImageResult<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Filter for one training image. The stream is keyed by the image id so
/// the choice does not depend on processing order.
pub fn assign_filter(seed: u64, image_id: &str, p_filter: f64, params: FilterParams) -> forge_core::Result<FilterSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(seed, image_id));
    sample_filter(&mut rng, p_filter, params)
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.worker_count())
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
        Ok(Self {
            config,
            force: false,
            pool,
        })
    }

    pub fn work_dir(&self) -> &Path {
        &self.config.paths.work_dir
    }

    fn work(&self, name: &str) -> PathBuf {
        self.work_dir().join(name)
    }

    /// Ordered parallel map; the first failing item (in input order) wins.
    fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        let out: Vec<Result<R>> = self.pool.install(|| items.par_iter().map(f).collect());
        out.into_iter().collect()
    }

    fn stamp(&self, stage: &'static str, section: &impl Serialize, inputs: &[PathBuf]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update(serde_json::to_vec(section).map_err(at(stage, "config"))?);
        for p in inputs {
            if !p.exists() {
                return Err(CliError::stage(stage, p.display().to_string(), "missing input; run the previous stage first"));
            }
            h.update(file_sha256(p, stage)?.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.work(&format!("{stage}.stamp"))
    }

    fn is_fresh(&self, stage: &str, stamp: &str, output: &Path) -> bool {
        !self.force
            && output.exists()
            && std::fs::read_to_string(self.stamp_path(stage)).map(|s| s.trim() == stamp).unwrap_or(false)
    }

    fn finish(&self, stage: &'static str, stamp: &str) -> Result<()> {
        write_atomic(&self.stamp_path(stage), format!("{stamp}\n").as_bytes(), stage)
    }

    /// Source images → tiles. Label-raster sources are resized to one tile
    /// and their promoted classes turned into pseudo-instances.
    pub fn tile(&self) -> Result<StageReport> {
        const STAGE: &str = "tile";
        let sources = self.config.paths.sources.clone();
        let out = self.work(TILES);
        let stamp = self.stamp(STAGE, &self.config.tiling, std::slice::from_ref(&sources))?;
        if self.is_fresh(STAGE, &stamp, &out) {
            return Ok(StageReport::new(STAGE, true).log());
        }
        let manifest = SourceManifest::load(&sources).map_err(at(STAGE, &sources.display().to_string()))?;
        let tiles_dir = self.work("tiles");
        if tiles_dir.exists() {
            std::fs::remove_dir_all(&tiles_dir).map_err(at(STAGE, &tiles_dir.display().to_string()))?;
        }
        std::fs::create_dir_all(&tiles_dir).map_err(at(STAGE, &tiles_dir.display().to_string()))?;

        let t = &self.config.tiling;
        let params = self.config.tiling_params();
        let connectivity = if t.eight_connected { Connectivity::Eight } else { Connectivity::Four };
        let work = self.work_dir();
        let per_source = self.par_map(&manifest.sources, |entry| {
            let src = manifest.load_source(entry).map_err(at(STAGE, &entry.id))?;
            let tiles: Vec<Tile> = match src.annotations {
                Annotations::Labels { .. } => {
                    let mut tile = resize_semantic_image(&src, t.semantic_size).map_err(at(STAGE, &entry.id))?;
                    promote_pseudo_instances(&mut tile, &t.promoted_classes, t.min_component_area, connectivity);
                    vec![tile]
                }
                Annotations::Instances(_) => tile_instance_image(&src, &params).map_err(at(STAGE, &entry.id))?,
            };
            tiles
                .into_iter()
                .map(|tile| {
                    let image = PathBuf::from("tiles").join(format!("{}.png", tile.id));
                    let bytes = png_bytes(&image::DynamicImage::ImageRgb8(tile.pixels)).map_err(at(STAGE, &tile.id))?;
                    std::fs::write(work.join(&image), &bytes).map_err(at(STAGE, &tile.id))?;
                    let labels = match tile.semantic {
                        Some(sem) => {
                            let p = PathBuf::from("tiles").join(format!("{}.labels.png", tile.id));
                            let bytes =
                                png_bytes(&image::DynamicImage::ImageLuma8(sem.raster)).map_err(at(STAGE, &tile.id))?;
                            std::fs::write(work.join(&p), bytes).map_err(at(STAGE, &tile.id))?;
                            Some(p)
                        }
                        None => None,
                    };
                    Ok(TileRecord {
                        id: tile.id,
                        source_id: tile.source_id,
                        source_dataset: tile.source_dataset,
                        origin: [tile.origin.0, tile.origin.1],
                        image,
                        image_sha256: sha256_hex(&bytes),
                        labels,
                        instances: tile
                            .instances
                            .iter()
                            .map(|i| InstanceRecord {
                                id: i.id,
                                category: i.category.clone(),
                                mask: RleMask::encode(&i.mask),
                            })
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let tiles: Vec<TileRecord> = per_source.into_iter().flatten().collect();
        let mut seen = HashSet::new();
        if let Some(dup) = tiles.iter().find(|t| !seen.insert(t.id.as_str())) {
            return Err(CliError::stage(STAGE, &dup.id, "duplicate tile id; source ids must be unique"));
        }
        let report = StageReport::new(STAGE, false)
            .count("sources", manifest.sources.len())
            .count("tiles", tiles.len())
            .count("instances", tiles.iter().map(|t| t.instances.len()).sum::<usize>());
        write_json(
            &out,
            &TilesCheckpoint {
                legend: manifest.legend.0.clone(),
                tiles,
            },
            STAGE,
        )?;
        self.finish(STAGE, &stamp)?;
        Ok(report.log())
    }

    pub fn targets(&self) -> Result<StageReport> {
        const STAGE: &str = "targets";
        let input = self.work(TILES);
        let out = self.work(TARGETS);
        let section = (&self.config.clustering, &self.config.cues, &self.config.tiling.promoted_classes);
        let stamp = self.stamp(STAGE, &section, std::slice::from_ref(&input))?;
        if self.is_fresh(STAGE, &stamp, &out) {
            return Ok(StageReport::new(STAGE, true).log());
        }
        let tiles: TilesCheckpoint = read_json(&input, STAGE)?;
        let target_params = self.config.target_params();
        let cue_params = self.config.cue_params();
        let work = self.work_dir();
        let per_tile = self.par_map(&tiles.tiles, |rec| {
            let tile = load_tile(work, rec, &tiles.legend, STAGE)?;
            let targets = build_targets(&tile, &target_params);
            let cues = extract_cues(&tile, &targets, &cue_params);
            Ok(TileTargets {
                tile_id: rec.id.clone(),
                targets: targets.iter().zip(cues).map(|(t, c)| TargetEntry::from_target(t, c)).collect(),
            })
        })?;
        let mut report = StageReport::new(STAGE, false).count("tiles", per_tile.len());
        let mut by_kind: BTreeMap<&'static str, u64> = BTreeMap::new();
        for t in per_tile.iter().flat_map(|t| &t.targets) {
            *by_kind.entry(t.kind.as_str()).or_default() += 1;
        }
        report = report.count("targets", by_kind.values().sum::<u64>());
        for (k, n) in by_kind {
            report = report.count(k, n);
        }
        write_json(&out, &TargetsCheckpoint { tiles: per_tile }, STAGE)?;
        self.finish(STAGE, &stamp)?;
        Ok(report.log())
    }

    fn grammar(&self) -> Result<(Grammar, String)> {
        match &self.config.paths.grammar {
            None => Ok((Grammar::builtin(), "builtin".into())),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let g = Grammar::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Ok((g, sha256_hex(text.as_bytes())))
            }
        }
    }

    pub fn generate(&self) -> Result<StageReport> {
        const STAGE: &str = "generate";
        let input = self.work(TARGETS);
        let out = self.work(RAW_EXPRESSIONS);
        let (grammar, grammar_hash) = self.grammar()?;
        let stamp = self.stamp(STAGE, &grammar_hash, std::slice::from_ref(&input))?;
        if self.is_fresh(STAGE, &stamp, &out) {
            return Ok(StageReport::new(STAGE, true).log());
        }
        let targets: TargetsCheckpoint = read_json(&input, STAGE)?;
        let per_tile = self.par_map(&targets.tiles, |tt| {
            let mut expressions = Vec::new();
            for entry in &tt.targets {
                let target = entry.to_target().map_err(at(STAGE, &entry.id))?;
                expressions.extend(generate_rule_expressions(&target, &entry.cues, &grammar));
            }
            Ok(TileRawExpressions {
                tile_id: tt.tile_id.clone(),
                expressions,
            })
        })?;
        let report = StageReport::new(STAGE, false)
            .count("tiles", per_tile.len())
            .count("expressions", per_tile.iter().map(|t| t.expressions.len()).sum::<usize>());
        write_json(&out, &RawExpressions { tiles: per_tile }, STAGE)?;
        self.finish(STAGE, &stamp)?;
        Ok(report.log())
    }

    pub fn dedupe(&self) -> Result<StageReport> {
        const STAGE: &str = "dedupe";
        let input = self.work(RAW_EXPRESSIONS);
        let out = self.work(EXPRESSIONS);
        let stamp = self.stamp(STAGE, &"per-image", std::slice::from_ref(&input))?;
        if self.is_fresh(STAGE, &stamp, &out) {
            return Ok(StageReport::new(STAGE, true).log());
        }
        let raw: RawExpressions = read_json(&input, STAGE)?;
        let before: usize = raw.tiles.iter().map(|t| t.expressions.len()).sum();
        let tiles: Vec<TileExpressions> = raw
            .tiles
            .into_iter()
            .map(|t| {
                let mut next: HashMap<String, usize> = HashMap::new();
                let expressions = dedupe_image(t.expressions)
                    .into_iter()
                    .map(|e| {
                        let n = next.entry(e.target_id.clone()).or_default();
                        let id = expression_id(&e.target_id, *n);
                        *n += 1;
                        ExpressionRecord {
                            id,
                            target_id: e.target_id,
                            text: e.text,
                            source: e.source,
                            parent: e.parent_expression_id,
                        }
                    })
                    .collect();
                TileExpressions {
                    tile_id: t.tile_id,
                    expressions,
                }
            })
            .collect();
        let set = ExpressionSet { tiles };
        let report = StageReport::new(STAGE, false)
            .count("before", before)
            .count("after", set.count())
            .count("removed", before - set.count());
        write_json(&out, &set, STAGE)?;
        self.finish(STAGE, &stamp)?;
        Ok(report.log())
    }

    fn enhance_stamp(&self) -> Result<String> {
        let inputs = [self.work(TILES), self.work(TARGETS), self.work(EXPRESSIONS)];
        self.stamp("enhance", &(&self.config.enhancer.model, INSTRUCTION_VERSION), &inputs)
    }

    /// One prompt per target that still has rule expressions, in manifest
    /// order.
    fn payloads(&self) -> Result<Vec<(PromptPayload, Vec<String>)>> {
        const STAGE: &str = "enhance";
        let tiles: TilesCheckpoint = read_json(&self.work(TILES), STAGE)?;
        let targets: TargetsCheckpoint = read_json(&self.work(TARGETS), STAGE)?;
        let exprs: ExpressionSet = read_json(&self.work(EXPRESSIONS), STAGE)?;
        let targets_by_tile: HashMap<&str, &TileTargets> = targets.tiles.iter().map(|t| (t.tile_id.as_str(), t)).collect();
        let exprs_by_tile: HashMap<&str, &TileExpressions> = exprs.tiles.iter().map(|t| (t.tile_id.as_str(), t)).collect();
        let work = self.work_dir();
        let per_tile = self.par_map(&tiles.tiles, |rec| {
            let Some(te) = exprs_by_tile.get(rec.id.as_str()).filter(|t| !t.expressions.is_empty()) else {
                return Ok(Vec::new());
            };
            let tt = targets_by_tile
                .get(rec.id.as_str())
                .ok_or_else(|| CliError::stage(STAGE, &rec.id, "tile has no targets entry"))?;
            let tile = load_tile(work, rec, &tiles.legend, STAGE)?;
            let mut out = Vec::new();
            for entry in &tt.targets {
                let rules: Vec<&ExpressionRecord> = te.expressions.iter().filter(|e| e.target_id == entry.id).collect();
                if rules.is_empty() {
                    continue;
                }
                let target = entry.to_target().map_err(at(STAGE, &entry.id))?;
                let texts: Vec<String> = rules.iter().map(|e| e.text.clone()).collect();
                let ids: Vec<String> = rules.iter().map(|e| e.id.clone()).collect();
                let payload = PromptPayload::build(&tile.pixels, &tile.id, &target, texts).map_err(at(STAGE, &entry.id))?;
                out.push((payload, ids));
            }
            Ok(out)
        })?;
        Ok(per_tile.into_iter().flatten().collect())
    }

    /// LLM language and visual variations for every described target.
    pub fn enhance(&self, opts: &EnhanceOptions) -> Result<EnhanceOutcome> {
        const STAGE: &str = "enhance";
        let out = self.work(ENHANCED);
        let stamp = self.enhance_stamp()?;
        let cache = DiskCache::open(&self.config.paths.cache_dir)
            .map_err(|e| CliError::Config(format!("cache {}: {e}", self.config.paths.cache_dir.display())))?;
        let model = self.config.enhancer.model.clone();

        if opts.dry_run_cost {
            let payloads = self.payloads()?;
            let uncached = payloads.iter().filter(|(p, _)| cache.get(&p.cache_key(&model)).is_none()).count() as u64;
            let est = CostEstimate {
                targets: payloads.len() as u64,
                uncached_requests: uncached,
                teacher_usd: estimate_cost(uncached, &CostModel::O3),
                distilled_usd: estimate_cost(uncached, &CostModel::DISTILLED),
            };
            tracing::info!(stage = STAGE, targets = est.targets, uncached = est.uncached_requests, "cost estimate");
            return Ok(EnhanceOutcome::DryRun(est));
        }
        if opts.distill.is_none() && self.is_fresh(STAGE, &stamp, &out) {
            return Ok(EnhanceOutcome::Done(StageReport::new(STAGE, true).log()));
        }

        let endpoint = self.config.endpoint();
        endpoint.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let payloads = self.payloads()?;
        let enhancer = Arc::new(Enhancer::new(endpoint, cache).map_err(|e| CliError::Config(e.to_string()))?);
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(at(STAGE, "runtime"))?;
        let (payloads, rule_ids): (Vec<PromptPayload>, Vec<Vec<String>>) = payloads.into_iter().unzip();
        let fetched = runtime.block_on(enhancer.enhance_all(payloads));

        let exprs: ExpressionSet = read_json(&self.work(EXPRESSIONS), STAGE)?;
        let mut existing: HashMap<String, Vec<String>> = HashMap::new();
        for t in &exprs.tiles {
            existing.insert(t.tile_id.clone(), t.expressions.iter().map(|e| e.text.clone()).collect());
        }

        let mut added: BTreeMap<String, Vec<ExpressionRecord>> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        let mut teacher = Vec::new();
        let (mut cache_hits, mut rejected, mut schema_invalid, mut language, mut visual) = (0u64, 0u64, 0u64, 0u64, 0u64);
        for ((payload, result), ids) in fetched.into_iter().zip(rule_ids) {
            let fetched = result.map_err(at(STAGE, &payload.target_id))?;
            cache_hits += fetched.from_cache as u64;
            let seen = existing.entry(payload.image_id.clone()).or_default();
            let v = validate_enhancement(&fetched.result, &payload.task1_inputs, seen);
            if !v.schema_valid {
                schema_invalid += 1;
            }
            rejected += v.rejected() as u64;
            if v.schema_valid && v.rejected() == 0 {
                teacher.push(TeacherRecord {
                    target_id: payload.target_id.clone(),
                    messages: payload.messages(),
                    response: fetched.result.raw.clone(),
                });
            }
            if !added.contains_key(&payload.image_id) {
                order.push(payload.image_id.clone());
            }
            let records = added.entry(payload.image_id.clone()).or_default();
            let mut n = ids.len();
            for (text, parent) in v.language.iter().zip(&ids) {
                if let Some(text) = text {
                    records.push(ExpressionRecord {
                        id: expression_id(&payload.target_id, n),
                        target_id: payload.target_id.clone(),
                        text: text.clone(),
                        source: forge_core::expressions::ExpressionSource::LlmLanguage,
                        parent: Some(parent.clone()),
                    });
                    seen.push(text.clone());
                    n += 1;
                    language += 1;
                }
            }
            for text in &v.visual {
                records.push(ExpressionRecord {
                    id: expression_id(&payload.target_id, n),
                    target_id: payload.target_id.clone(),
                    text: text.clone(),
                    source: forge_core::expressions::ExpressionSource::LlmVisual,
                    parent: None,
                });
                seen.push(text.clone());
                n += 1;
                visual += 1;
            }
        }
        let set = ExpressionSet {
            tiles: order
                .into_iter()
                .map(|tile_id| TileExpressions {
                    expressions: added.remove(&tile_id).unwrap_or_default(),
                    tile_id,
                })
                .collect(),
        };
        if let Some((path, k)) = &opts.distill {
            let n = export_distillation_pairs(&teacher, *k, self.config.seed, path)
                .map_err(at(STAGE, &path.display().to_string()))?;
            tracing::info!(stage = STAGE, pairs = n, path = %path.display(), "distillation pairs written");
        }
        write_json(&out, &set, STAGE)?;
        self.finish(STAGE, &stamp)?;
        let report = StageReport::new(STAGE, false)
            .count("requests", enhancer.requests_issued())
            .count("cache_hits", cache_hits)
            .count("schema_invalid", schema_invalid)
            .count("rejected_items", rejected)
            .count("language_variations", language)
            .count("visual_variations", visual);
        Ok(EnhanceOutcome::Done(report.log()))
    }

    /// Writes the dataset: tile images, filtered training variants, the
    /// sharded manifest and statistics. Targets without expressions and
    /// tiles without targets are left out.
    pub fn export(&self, include_enhanced: bool) -> Result<ExportReport> {
        const STAGE: &str = "export";
        let tiles: TilesCheckpoint = read_json(&self.work(TILES), STAGE)?;
        let targets: TargetsCheckpoint = read_json(&self.work(TARGETS), STAGE)?;
        let rules: ExpressionSet = read_json(&self.work(EXPRESSIONS), STAGE)?;
        let enhanced: Option<ExpressionSet> = if include_enhanced && self.work(ENHANCED).exists() {
            let stamp = self.enhance_stamp()?;
            let current = std::fs::read_to_string(self.stamp_path("enhance")).map(|s| s.trim() == stamp).unwrap_or(false);
            if !current {
                return Err(CliError::stage(
                    STAGE,
                    ENHANCED,
                    "enhanced expressions are stale; rerun enhance or export with --skip-enhance",
                ));
            }
            Some(read_json(&self.work(ENHANCED), STAGE)?)
        } else {
            None
        };

        let mut by_target: HashMap<&str, Vec<&ExpressionRecord>> = HashMap::new();
        for e in rules.tiles.iter().chain(enhanced.iter().flat_map(|s| &s.tiles)).flat_map(|t| &t.expressions) {
            by_target.entry(e.target_id.as_str()).or_default().push(e);
        }
        let targets_by_tile: HashMap<&str, &TileTargets> = targets.tiles.iter().map(|t| (t.tile_id.as_str(), t)).collect();

        let mut manifest = DatasetManifest::new();
        let mut kept_tiles: Vec<&TileRecord> = Vec::new();
        let mut weights: Vec<(&str, u64)> = Vec::new();
        for rec in &tiles.tiles {
            let Some(tt) = targets_by_tile.get(rec.id.as_str()) else { continue };
            let mut n_expr = 0u64;
            for entry in &tt.targets {
                let Some(exprs) = by_target.get(entry.id.as_str()) else { continue };
                manifest.targets.push(TargetRecord {
                    id: entry.id.clone(),
                    image_id: rec.id.clone(),
                    kind: entry.kind,
                    category: entry.category.clone(),
                    mask: entry.mask.clone(),
                    bbox: entry.bbox,
                    members: entry.members.clone(),
                });
                manifest.expressions.extend(exprs.iter().map(|e| (*e).clone()));
                n_expr += exprs.len() as u64;
            }
            if n_expr > 0 {
                kept_tiles.push(rec);
                weights.push((rec.source_id.as_str(), n_expr));
            }
        }
        let splits = if weights.is_empty() {
            BTreeMap::new()
        } else {
            assign_splits_weighted(&weights, self.config.splits.test_fraction, self.config.seed)
                .map_err(at(STAGE, "splits"))?
        };

        let out = &self.config.paths.out_dir;
        let images_dir = out.join("images");
        if images_dir.exists() {
            std::fs::remove_dir_all(&images_dir).map_err(at(STAGE, &images_dir.display().to_string()))?;
        }
        if let Ok(entries) = std::fs::read_dir(out) {
            for e in entries.flatten() {
                let name = e.file_name().to_string_lossy().into_owned();
                if name.starts_with("manifest") && name.ends_with(".json") {
                    std::fs::remove_file(e.path()).map_err(at(STAGE, &name))?;
                }
            }
        }
        std::fs::create_dir_all(&images_dir).map_err(at(STAGE, &images_dir.display().to_string()))?;

        let params = self.config.filter_params();
        let (seed, p_filter) = (self.config.seed, self.config.filters.p_filter);
        let work = self.work_dir();
        manifest.images = self.par_map(&kept_tiles, |rec| {
            let split = splits.get(&rec.source_id).copied().unwrap_or(Split::Train);
            let file = PathBuf::from("images").join(format!("{}.png", rec.id));
            std::fs::copy(work.join(&rec.image), out.join(&file)).map_err(at(STAGE, &rec.id))?;
            let mut filter = None;
            if split == Split::Train {
                let spec = assign_filter(seed, &rec.id, p_filter, params).map_err(at(STAGE, &rec.id))?;
                if spec.kind != FilterKind::None {
                    let img = image::open(out.join(&file)).map_err(at(STAGE, &rec.id))?.to_rgb8();
                    let filtered = filters::apply(&spec, &img).map_err(at(STAGE, &rec.id))?;
                    let vfile = PathBuf::from("images").join(format!("{}{}.png", rec.id, spec.kind.suffix()));
                    filtered.save(out.join(&vfile)).map_err(at(STAGE, &rec.id))?;
                    filter = Some(FilterProvenance {
                        kind: spec.kind,
                        seed: spec.seed,
                        file: vfile,
                    });
                }
            }
            Ok(ImageRecord {
                id: rec.id.clone(),
                file,
                split,
                source_dataset: rec.source_dataset.clone(),
                source_id: rec.source_id.clone(),
                origin: rec.origin,
                filter,
            })
        })?;

        manifest.validate().map_err(at(STAGE, "manifest"))?;
        let path = write_manifest(out, &manifest).map_err(at(STAGE, "manifest"))?;
        let stats = compute_stats(&manifest).map_err(at(STAGE, "stats"))?;
        write_json(&out.join("stats.json"), &stats, STAGE)?;
        write_atomic(&out.join("stats.txt"), stats.to_text().as_bytes(), STAGE)?;
        StageReport::new(STAGE, false)
            .count("images", manifest.images.len())
            .count("filtered_images", stats.filtered_images)
            .count("targets", manifest.targets.len())
            .count("expressions", manifest.expressions.len())
            .count("test_expressions", stats.total_expressions.test)
            .log();
        Ok(ExportReport { manifest: path, stats })
    }

    /// All stages in order. Without `skip_enhance` the enhancer endpoint
    /// must be configured.
    pub fn run(&self, skip_enhance: bool) -> Result<ExportReport> {
        self.tile()?;
        self.targets()?;
        self.generate()?;
        self.dedupe()?;
        if !skip_enhance {
            self.enhance(&EnhanceOptions::default())?;
        }
        self.export(!skip_enhance)
    }
}

/// Filtered variants for every image of a dataset manifest, written next
/// to the originals. With `kind` unset each image gets one of the historic
/// filters chosen by its own seeded stream.
pub fn filter_manifest(
    manifest_path: &Path,
    split: Option<Split>,
    kind: Option<FilterKind>,
    seed: u64,
    params: FilterParams,
) -> Result<usize> {
    const STAGE: &str = "filter";
    let manifest =
        forge_core::dataset::load_manifest(manifest_path).map_err(at(STAGE, &manifest_path.display().to_string()))?;
    let root = manifest_path.parent().unwrap_or(Path::new(""));
    let images: Vec<&ImageRecord> = manifest.images.iter().filter(|i| split.is_none_or(|s| i.split == s)).collect();
    let results: Vec<Result<()>> = images
        .par_iter()
        .map(|rec| {
            let spec = match kind {
                Some(k) => FilterSpec {
                    kind: k,
                    params,
                    seed: image_seed(seed, &rec.id),
                },
                None => assign_filter(seed, &rec.id, 1.0, params).map_err(at(STAGE, &rec.id))?,
            };
            if spec.kind == FilterKind::None {
                return Ok(());
            }
            let src = root.join(&rec.file);
            let img = image::open(&src).map_err(at(STAGE, &rec.id))?.to_rgb8();
            let out = filters::apply(&spec, &img).map_err(at(STAGE, &rec.id))?;
            let stem = src.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| rec.id.clone());
            out.save(src.with_file_name(format!("{stem}{}.png", spec.kind.suffix())))
                .map_err(at(STAGE, &rec.id))
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(images.len())
}
