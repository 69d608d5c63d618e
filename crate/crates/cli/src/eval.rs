//! Scoring prediction files against a dataset manifest.
//!
//! Predictions live in one directory, one file per expression id:
//! `<id>.png` (non-zero pixels are foreground) or `<id>.json` holding an
//! RLE mask with either plain `counts` or a compressed counts string.
//! `<id>_hist.png` / `<id>_hist.json` score the historic condition.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use forge_core::dataset::{DatasetManifest, RleMask, Split};
use forge_core::metrics::{Condition, EvalReport, EvalSample, Overlap};
use forge_core::Mask;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{at, CliError, Result};

const STAGE: &str = "eval";

#[derive(Deserialize)]
#[serde(untagged)]
enum Counts {
    Plain(Vec<u32>),
    Compressed(String),
}

#[derive(Deserialize)]
struct RleFile {
    size: [u32; 2],
    counts: Counts,
}

fn find(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "json"].iter().map(|ext| dir.join(format!("{stem}.{ext}"))).find(|p| p.is_file())
}

/// Reads a prediction file and checks it against the ground-truth size.
pub fn load_prediction(path: &Path, width: u32, height: u32) -> Result<Mask> {
    let item = path.display().to_string();
    let mask = if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(at(STAGE, &item))?;
        let f: RleFile = serde_json::from_str(&text).map_err(at(STAGE, &item))?;
        let rle = match f.counts {
            Counts::Plain(counts) => RleMask { size: f.size, counts },
            Counts::Compressed(s) => RleMask::from_coco_string(&s, f.size[0], f.size[1]).map_err(at(STAGE, &item))?,
        };
        rle.decode().map_err(at(STAGE, &item))?
    } else {
        Mask::from_luma(&image::open(path).map_err(at(STAGE, &item))?.to_luma8())
    };
    if mask.dims() != (width, height) {
        return Err(CliError::stage(
            STAGE,
            item,
            format!("prediction is {:?}, ground truth is {:?}", mask.dims(), (width, height)),
        ));
    }
    Ok(mask)
}

/// Scores every expression of `split` (all when `None`). A missing clean
/// prediction counts as an empty mask and is reported.
pub fn evaluate(manifest: &DatasetManifest, pred_dir: &Path, split: Option<Split>) -> Result<EvalReport> {
    let images: HashMap<&str, _> = manifest.images.iter().map(|i| (i.id.as_str(), i)).collect();
    let targets: HashMap<&str, _> = manifest.targets.iter().map(|t| (t.id.as_str(), t)).collect();
    let selected: Vec<_> = manifest
        .expressions
        .iter()
        .filter_map(|e| {
            let t = targets.get(e.target_id.as_str())?;
            let img = images.get(t.image_id.as_str())?;
            split.is_none_or(|s| img.split == s).then_some((e, *t, *img))
        })
        .collect();

    let scored: Vec<Result<(Vec<EvalSample>, bool)>> = selected
        .par_iter()
        .map(|(e, t, img)| {
            let gt = t.mask.decode().map_err(at(STAGE, &t.id))?;
            let (w, h) = gt.dims();
            let mut samples = Vec::new();
            let clean = find(pred_dir, &e.id);
            let pred = match &clean {
                Some(p) => load_prediction(p, w, h)?,
                None => Mask::new(w, h),
            };
            samples.push(EvalSample {
                expression_id: e.id.clone(),
                dataset: img.source_dataset.clone(),
                condition: Condition::Clean,
                overlap: Overlap::of(&gt, &pred).map_err(at(STAGE, &e.id))?,
            });
            if let Some(p) = find(pred_dir, &format!("{}_hist", e.id)) {
                let pred = load_prediction(&p, w, h)?;
                samples.push(EvalSample {
                    expression_id: e.id.clone(),
                    dataset: img.source_dataset.clone(),
                    condition: Condition::Historic,
                    overlap: Overlap::of(&gt, &pred).map_err(at(STAGE, &e.id))?,
                });
            }
            Ok((samples, clean.is_none()))
        })
        .collect();

    let mut samples = Vec::new();
    let mut missing = 0;
    for r in scored {
        let (s, miss) = r?;
        samples.extend(s);
        missing += miss as usize;
    }
    EvalReport::from_samples(&samples, missing).map_err(at(STAGE, "report"))
}
