use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Split};
use crate::expressions::ExpressionSource;
use crate::targets::TargetKind;
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: u64,
    pub test: u64,
    pub total: u64,
}

impl SplitCounts {
    fn add(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Test => self.test += 1,
        }
        self.total += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub targets: BTreeMap<TargetKind, u64>,
    pub expressions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: SplitCounts,
    pub filtered_images: u64,
    pub targets: SplitCounts,
    pub targets_by_kind: BTreeMap<TargetKind, u64>,
    pub rule_expressions: SplitCounts,
    pub llm_language_variations: SplitCounts,
    pub llm_visual_variations: SplitCounts,
    pub instance_expressions: SplitCounts,
    pub semantic_expressions: SplitCounts,
    pub total_expressions: SplitCounts,
    pub categories: BTreeMap<String, CategoryCounts>,
    /// Lower-cased word counts, most frequent first, ties alphabetical.
    pub word_frequencies: Vec<(String, u64)>,
}

/// Checks that source rows and kind rows add up to the same total and
/// returns it.
pub fn double_entry(source_rows: &[u64], kind_rows: &[u64]) -> Option<u64> {
    let a: u64 = source_rows.iter().sum();
    let b: u64 = kind_rows.iter().sum();
    (a == b).then_some(a)
}

impl DatasetStats {
    /// `Σ source rows = Σ kind rows = total` for every split column.
    pub fn double_entry_holds(&self) -> bool {
        let col = |f: fn(&SplitCounts) -> u64| {
            double_entry(
                &[
                    f(&self.rule_expressions),
                    f(&self.llm_language_variations),
                    f(&self.llm_visual_variations),
                ],
                &[f(&self.instance_expressions), f(&self.semantic_expressions)],
            ) == Some(f(&self.total_expressions))
        };
        col(|c| c.train) && col(|c| c.test) && col(|c| c.total)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, c: &SplitCounts| {
            let _ = writeln!(out, "{name:<26}{:>12}{:>12}{:>12}", c.train, c.test, c.total);
        };
        let _ = writeln!(out, "{:<26}{:>12}{:>12}{:>12}", "Expression Source", "Train", "Test", "Total");
        row(&mut out, "Rule-Based Expressions", &self.rule_expressions);
        row(&mut out, "LLM Language Variations", &self.llm_language_variations);
        row(&mut out, "LLM Visual Variations", &self.llm_visual_variations);
        let _ = writeln!(out, "{}", "-".repeat(62));
        row(&mut out, "Instances", &self.instance_expressions);
        row(&mut out, "Semantic Classes", &self.semantic_expressions);
        let _ = writeln!(out, "{}", "-".repeat(62));
        row(&mut out, "Total Expressions", &self.total_expressions);
        let _ = writeln!(out);
        row(&mut out, "Images", &self.images);
        row(&mut out, "Targets", &self.targets);
        let _ = writeln!(out, "{:<26}{:>12}", "Filtered images", self.filtered_images);
        let _ = writeln!(out);
        let _ = writeln!(out, "Targets by kind");
        for (kind, n) in &self.targets_by_kind {
            let _ = writeln!(out, "  {:<24}{n:>12}", kind.as_str());
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Categories (targets / expressions)");
        for (cat, c) in &self.categories {
            let targets: u64 = c.targets.values().sum();
            let _ = writeln!(out, "  {cat:<24}{targets:>12}{:>12}", c.expressions);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Top words");
        for (w, n) in self.word_frequencies.iter().take(25) {
            let _ = writeln!(out, "  {w:<24}{n:>12}");
        }
        out
    }
}

/// Validates the manifest and tallies Table-style counts.
pub fn compute_stats(manifest: &DatasetManifest) -> Result<DatasetStats> {
    manifest.validate()?;
    let mut stats = DatasetStats::default();
    let image_split: HashMap<&str, Split> = manifest.images.iter().map(|i| (i.id.as_str(), i.split)).collect();
    for img in &manifest.images {
        stats.images.add(img.split);
        if img.filter.is_some() {
            stats.filtered_images += 1;
        }
    }
    let mut target_info = HashMap::new();
    for t in &manifest.targets {
        let split = image_split[t.image_id.as_str()];
        stats.targets.add(split);
        *stats.targets_by_kind.entry(t.kind).or_default() += 1;
        *stats.categories.entry(t.category.clone()).or_default().targets.entry(t.kind).or_default() += 1;
        target_info.insert(t.id.as_str(), (split, t.kind, t.category.as_str()));
    }
    let mut words: HashMap<String, u64> = HashMap::new();
    for e in &manifest.expressions {
        let (split, kind, category) = target_info[e.target_id.as_str()];
        stats.total_expressions.add(split);
        match e.source {
            ExpressionSource::Rule => stats.rule_expressions.add(split),
            ExpressionSource::LlmLanguage => stats.llm_language_variations.add(split),
            ExpressionSource::LlmVisual => stats.llm_visual_variations.add(split),
        }
        if kind == TargetKind::SemanticRegion {
            stats.semantic_expressions.add(split);
        } else {
            stats.instance_expressions.add(split);
        }
        stats.categories.get_mut(category).expect("target category").expressions += 1;
        for w in e
            .text
            .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
            .map(|w| w.trim_matches(|c: char| c == '-' || c == '\''))
            .filter(|w| !w.is_empty())
        {
            *words.entry(w.to_lowercase()).or_default() += 1;
        }
    }
    let mut words: Vec<(String, u64)> = words.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    stats.word_frequencies = words;
    Ok(stats)
}
