//! Mask-level evaluation: IoU, mean IoU, overall IoU and Pass@τ.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Mask, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    Historic,
}

/// Pixel counts for one (ground truth, prediction) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub intersection: u64,
    pub union: u64,
}

impl Overlap {
    pub fn of(gt: &Mask, pred: &Mask) -> Result<Overlap> {
        Ok(Overlap {
            intersection: gt.intersection_area(pred)?,
            union: gt.union_area(pred)?,
        })
    }

    /// 1.0 when both masks are empty.
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub expression_id: String,
    pub dataset: String,
    pub condition: Condition,
    pub overlap: Overlap,
}

/// |gt ∩ pred| / |gt ∪ pred|; 1.0 if both are empty, 0.0 if exactly one is.
pub fn iou(gt: &Mask, pred: &Mask) -> Result<f64> {
    Ok(Overlap::of(gt, pred)?.iou())
}

pub fn miou(samples: &[Overlap]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(samples.iter().map(Overlap::iou).sum::<f64>() / samples.len() as f64)
}

/// Σ intersections / Σ unions; 1.0 if every union is empty.
pub fn oiou(samples: &[Overlap]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let inter: u64 = samples.iter().map(|s| s.intersection).sum();
    let union: u64 = samples.iter().map(|s| s.union).sum();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Fraction of samples with IoU ≥ τ.
pub fn pass_at(samples: &[Overlap], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("{tau} is outside (0, 1]"),
        });
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    Ok(samples.iter().filter(|s| s.iou() >= tau).count() as f64 / samples.len() as f64)
}

pub const PASS_THRESHOLDS: [f64; 3] = [0.5, 0.7, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub samples: usize,
    pub miou: f64,
    pub oiou: f64,
    /// Pass@0.5, Pass@0.7, Pass@0.9.
    pub pass: [f64; 3],
}

impl MetricRow {
    pub fn compute(samples: &[Overlap]) -> Result<MetricRow> {
        Ok(MetricRow {
            samples: samples.len(),
            miou: miou(samples)?,
            oiou: oiou(samples)?,
            pass: [
                pass_at(samples, PASS_THRESHOLDS[0])?,
                pass_at(samples, PASS_THRESHOLDS[1])?,
                pass_at(samples, PASS_THRESHOLDS[2])?,
            ],
        })
    }
}

/// Per-dataset results split into clean and historic imagery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: BTreeMap<String, BTreeMap<Condition, MetricRow>>,
    pub overall: Option<MetricRow>,
    /// Expressions that had no prediction file (scored as empty predictions).
    pub missing_predictions: usize,
}

impl EvalReport {
    pub fn from_samples(samples: &[EvalSample], missing_predictions: usize) -> Result<EvalReport> {
        let mut groups: BTreeMap<String, BTreeMap<Condition, Vec<Overlap>>> = BTreeMap::new();
        for s in samples {
            groups
                .entry(s.dataset.clone())
                .or_default()
                .entry(s.condition)
                .or_default()
                .push(s.overlap);
        }
        let mut rows = BTreeMap::new();
        for (dataset, by_cond) in groups {
            let mut r = BTreeMap::new();
            for (cond, overlaps) in by_cond {
                r.insert(cond, MetricRow::compute(&overlaps)?);
            }
            rows.insert(dataset, r);
        }
        let all: Vec<Overlap> = samples.iter().map(|s| s.overlap).collect();
        Ok(EvalReport {
            rows,
            overall: if all.is_empty() { None } else { Some(MetricRow::compute(&all)?) },
            missing_predictions,
        })
    }

    /// One row per dataset with Orig. and Hist. column pairs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
            "Dataset", "mIoU", "oIoU", "mIoU", "oIoU", "P@0.5", "P@0.7", "P@0.9", "n"
        );
        let _ = writeln!(out, "{:<20}{:>20}{:>20}", "", "Orig.", "Hist.");
        let pct = |v: Option<f64>| v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into());
        for (dataset, conds) in &self.rows {
            let clean = conds.get(&Condition::Clean);
            let hist = conds.get(&Condition::Historic);
            let main = clean.or(hist).expect("non-empty group");
            let n: usize = conds.values().map(|r| r.samples).sum();
            let _ = writeln!(
                out,
                "{dataset:<20}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}{n:>10}",
                pct(clean.map(|r| r.miou)),
                pct(clean.map(|r| r.oiou)),
                pct(hist.map(|r| r.miou)),
                pct(hist.map(|r| r.oiou)),
                pct(Some(main.pass[0])),
                pct(Some(main.pass[1])),
                pct(Some(main.pass[2])),
            );
        }
        if let Some(o) = &self.overall {
            let _ = writeln!(
                out,
                "\noverall: mIoU {:.2}  oIoU {:.2}  P@0.5 {:.2}  P@0.7 {:.2}  P@0.9 {:.2}  n={}",
                o.miou * 100.0,
                o.oiou * 100.0,
                o.pass[0] * 100.0,
                o.pass[1] * 100.0,
                o.pass[2] * 100.0,
                o.samples
            );
        }
        if self.missing_predictions > 0 {
            let _ = writeln!(out, "missing predictions: {}", self.missing_predictions);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(intersection: u64, union: u64) -> Overlap {
        Overlap { intersection, union }
    }

    #[test]
    fn identical_and_disjoint() {
        let a = Mask::rect(20, 20, 0, 0, 10, 10);
        let b = Mask::rect(20, 20, 10, 10, 10, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_is_one_third() {
        let a = Mask::rect(30, 30, 0, 0, 10, 10);
        let b = Mask::rect(30, 30, 5, 0, 10, 10);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_conventions() {
        let e = Mask::new(4, 4);
        let f = Mask::rect(4, 4, 0, 0, 1, 1);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert_eq!(iou(&e, &f).unwrap(), 0.0);
        assert!(iou(&e, &Mask::new(5, 4)).is_err());
    }

    #[test]
    fn perfect_and_empty_prediction() {
        let s = [ov(100, 100), ov(0, 300)];
        assert_eq!(miou(&s).unwrap(), 0.5);
        assert_eq!(oiou(&s).unwrap(), 0.25);
    }

    #[test]
    fn single_sample_miou_equals_oiou() {
        let s = [ov(37, 91)];
        assert_eq!(miou(&s).unwrap(), oiou(&s).unwrap());
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(miou(&[]).is_err());
        assert!(oiou(&[]).is_err());
    }

    #[test]
    fn pass_thresholds() {
        let s = [ov(6, 10), ov(8, 10)];
        assert_eq!(pass_at(&s, 0.5).unwrap(), 1.0);
        assert_eq!(pass_at(&s, 0.7).unwrap(), 0.5);
        assert_eq!(pass_at(&s, 0.9).unwrap(), 0.0);
        assert!(pass_at(&s, 0.0).is_err());
        assert!(pass_at(&s, 1.1).is_err());
    }

    #[test]
    fn report_groups_by_condition() {
        let samples = vec![
            EvalSample {
                expression_id: "a".into(),
                dataset: "isaid".into(),
                condition: Condition::Clean,
                overlap: ov(10, 10),
            },
            EvalSample {
                expression_id: "b".into(),
                dataset: "isaid".into(),
                condition: Condition::Historic,
                overlap: ov(5, 10),
            },
        ];
        let r = EvalReport::from_samples(&samples, 0).unwrap();
        assert_eq!(r.rows["isaid"][&Condition::Clean].miou, 1.0);
        assert_eq!(r.rows["isaid"][&Condition::Historic].miou, 0.5);
        assert_eq!(r.overall.as_ref().unwrap().miou, 0.75);
        assert!(r.to_text().contains("isaid"));
    }
}
