//! Confusion matrices, F1 metrics, per-condition tables, plot series and
//! scoring of externally produced predictions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, Stance};
use crate::jsonl::{self, ReadError};
use crate::postprocess::{self, ParsedPrediction, ReviewItem, ReviewStore};
use crate::promptlab::{ExperimentCell, RenderedPrompt, Sampling, TemplateKind};
use crate::runner::RunStore;

pub const DEFAULT_SUPPORT_THRESHOLD: usize = 100;
pub const TABLE_DECIMALS: usize = 2;
pub const IMPORT_DECIMALS: usize = 4;

const ZERO_DENOMINATOR_NOTE: &str = "precision, recall or F1 with a zero denominator is 0";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no instances to score")]
    EmptyInput,
    #[error("prediction for unknown prompt {0}")]
    UnknownPromptId(String),
    #[error("{} review item(s) unresolved: {}", .0.len(), .0.join(", "))]
    UnresolvedReview(Vec<String>),
    #[error("unknown post {0}")]
    UnknownPostId(String),
    #[error("duplicate prediction for post {0}")]
    DuplicatePostId(String),
    #[error("post {0} is not in the test split")]
    NotInTestSplit(String),
    #[error("duplicate prediction for prompt {0}")]
    DuplicatePromptId(String),
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("{0}")]
    Store(String),
}

/// Counts indexed `[gold][predicted]` in [`Stance::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (Stance, Stance)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for &(gold, pred) in pairs {
            m.add(gold, pred);
        }
        m
    }

    pub fn add(&mut self, gold: Stance, predicted: Stance) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn support(&self, c: Stance) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    pub fn predicted(&self, c: Stance) -> u64 {
        self.counts.iter().map(|row| row[c.index()]).sum()
    }

    pub fn true_positives(&self, c: Stance) -> u64 {
        self.counts[c.index()][c.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        Stance::ALL.iter().map(|&c| self.true_positives(c)).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: Stance,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScores>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub n: u64,
}

impl F1Report {
    pub fn from_matrix(m: &ConfusionMatrix) -> Result<Self, EvalError> {
        let n = m.total();
        if n == 0 {
            return Err(EvalError::EmptyInput);
        }
        let per_class: Vec<ClassScores> = Stance::ALL
            .iter()
            .map(|&c| {
                let tp = m.true_positives(c);
                let precision = ratio(tp, m.predicted(c));
                let recall = ratio(tp, m.support(c));
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassScores {
                    label: c,
                    precision,
                    recall,
                    f1,
                    support: m.support(c),
                }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / per_class.len() as f64;
        let weighted_f1 = per_class.iter().map(|s| s.f1 * s.support as f64).sum::<f64>() / n as f64;
        Ok(F1Report {
            per_class,
            micro_f1: ratio(m.correct(), n),
            macro_f1,
            weighted_f1,
            n,
        })
    }

    pub fn class(&self, c: Stance) -> &ClassScores {
        &self.per_class[c.index()]
    }

    /// Two-column `metric,value` listing with metrics at `decimals` places.
    pub fn render(&self, decimals: usize) -> String {
        let mut out = String::from("metric,value\n");
        for s in &self.per_class {
            for (name, v) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1)] {
                let _ = writeln!(out, "{}_{name},{v:.decimals$}", s.label.as_str().replace(' ', "_"));
            }
        }
        let _ = writeln!(out, "micro_f1,{:.decimals$}", self.micro_f1);
        let _ = writeln!(out, "macro_f1,{:.decimals$}", self.macro_f1);
        let _ = writeln!(out, "weighted_f1,{:.decimals$}", self.weighted_f1);
        let _ = writeln!(out, "n,{}", self.n);
        let _ = writeln!(
            out,
            "# metrics rendered to {decimals} decimals; {ZERO_DENOMINATOR_NOTE}"
        );
        out
    }
}

pub fn f1_scores(pairs: &[(Stance, Stance)]) -> Result<F1Report, EvalError> {
    F1Report::from_matrix(&ConfusionMatrix::from_pairs(pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionKey {
    pub sampling: Sampling,
    pub shots: usize,
    pub template: TemplateKind,
}

impl ConditionKey {
    /// Table order: random, then stratified, then zero-shot; shots ascending
    /// within a section; basic before detailed.
    fn sort_key(&self) -> (u8, usize, TemplateKind) {
        let section = match self.sampling {
            Sampling::Random => 0,
            Sampling::Stratified => 1,
            Sampling::ZeroShot => 2,
        };
        (section, self.shots, self.template)
    }
}

impl From<ExperimentCell> for ConditionKey {
    fn from(c: ExperimentCell) -> Self {
        ConditionKey {
            sampling: c.sampling,
            shots: c.shots,
            template: c.template,
        }
    }
}

impl PartialOrd for ConditionKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ConditionKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    #[serde(flatten)]
    pub key: ConditionKey,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub support: u64,
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTable {
    pub model: String,
    pub counter_kind: String,
    pub seed: Option<u64>,
    pub support_threshold: usize,
    pub rows: Vec<ConditionRow>,
}

const TABLE_COLUMNS: &str = "sampling,shots,template,weighted_f1,macro_f1,support,low_support";

impl ConditionTable {
    pub fn row(&self, sampling: Sampling, shots: usize, template: TemplateKind) -> Option<&ConditionRow> {
        let key = ConditionKey {
            sampling,
            shots,
            template,
        };
        self.rows.iter().find(|r| r.key == key)
    }

    /// Comma-separated rendering with a `#` metadata header and footer.
    /// The output carries no timestamps so identical inputs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# model: {}", self.model);
        let _ = writeln!(out, "# counter_kind: {}", self.counter_kind);
        match self.seed {
            Some(seed) => {
                let _ = writeln!(out, "# seed: {seed}");
            }
            None => out.push_str("# seed: unknown\n"),
        }
        let _ = writeln!(out, "# support_threshold: {}", self.support_threshold);
        out.push_str(TABLE_COLUMNS);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.d$},{:.d$},{},{}",
                r.key.sampling,
                r.key.shots,
                r.key.template,
                r.weighted_f1,
                r.macro_f1,
                r.support,
                r.low_support,
                d = TABLE_DECIMALS
            );
        }
        let _ = writeln!(
            out,
            "# metrics rendered to {TABLE_DECIMALS} decimals; {ZERO_DENOMINATOR_NOTE}"
        );
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::MalformedTable(m);
        let mut meta = HashMap::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(": ") {
                    meta.insert(k.to_string(), v.to_string());
                }
            } else if !line.trim().is_empty() {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.deserialize::<ConditionRecord>() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let cell = ExperimentCell::new(rec.template, rec.sampling, rec.shots).map_err(|e| bad(e.to_string()))?;
            rows.push(ConditionRow {
                key: cell.into(),
                weighted_f1: rec.weighted_f1,
                macro_f1: rec.macro_f1,
                support: rec.support,
                low_support: rec.low_support,
            });
        }
        let field = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(format!("missing metadata {k}")));
        Ok(ConditionTable {
            model: field("model")?,
            counter_kind: field("counter_kind")?,
            seed: field("seed")?.parse().ok(),
            support_threshold: field("support_threshold")?
                .parse()
                .map_err(|_| bad("support_threshold is not an integer".into()))?,
            rows,
        })
    }
}

#[derive(Deserialize)]
struct ConditionRecord {
    sampling: Sampling,
    shots: usize,
    template: TemplateKind,
    weighted_f1: f64,
    macro_f1: f64,
    support: u64,
    low_support: bool,
}

#[derive(Debug, Clone)]
pub struct ReportContext {
    pub model: String,
    pub counter_kind: String,
    pub support_threshold: usize,
}

/// Scores final labels per grid cell. Automatic predictions are merged with
/// resolved reviews first; any open review fails the whole report.
pub fn condition_report(
    predictions: &[ParsedPrediction],
    reviews: &[ReviewItem],
    prompts: &[RenderedPrompt],
    split: &CorpusSplit,
    ctx: &ReportContext,
) -> Result<ConditionTable, EvalError> {
    let merged = postprocess::final_predictions(predictions, reviews).map_err(EvalError::UnresolvedReview)?;
    let by_id: HashMap<&str, &RenderedPrompt> = prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
    let gold: HashMap<&str, Stance> = split.test.iter().map(|p| (p.post_id.as_str(), p.gold)).collect();
    let mut groups: BTreeMap<ConditionKey, ConfusionMatrix> = BTreeMap::new();
    let mut seen = HashSet::new();
    for pred in &merged {
        if !seen.insert(pred.prompt_id.as_str()) {
            return Err(EvalError::DuplicatePromptId(pred.prompt_id.clone()));
        }
        let prompt = by_id
            .get(pred.prompt_id.as_str())
            .ok_or_else(|| EvalError::UnknownPromptId(pred.prompt_id.clone()))?;
        let &g = gold
            .get(prompt.test_post_id.as_str())
            .ok_or_else(|| EvalError::NotInTestSplit(prompt.test_post_id.clone()))?;
        groups.entry(prompt.cell.into()).or_default().add(g, pred.label);
    }
    let rows = groups
        .into_iter()
        .map(|(key, m)| {
            let report = F1Report::from_matrix(&m)?;
            Ok(ConditionRow {
                key,
                weighted_f1: report.weighted_f1,
                macro_f1: report.macro_f1,
                support: report.n,
                low_support: report.n < ctx.support_threshold as u64,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ConditionTable {
        model: ctx.model.clone(),
        counter_kind: ctx.counter_kind.clone(),
        seed: Some(split.seed),
        support_threshold: ctx.support_threshold,
        rows,
    })
}

/// Builds the table for a run directory from its manifest, prompt log,
/// parsed predictions and review store. A run with no predictions file
/// yields an empty row set.
pub fn evaluate_run(
    run_dir: &Path,
    split: &CorpusSplit,
    support_threshold: usize,
) -> Result<ConditionTable, EvalError> {
    let store = RunStore::new(run_dir);
    let store_err = |e: crate::runner::RunError| EvalError::Store(e.to_string());
    let manifest = store.manifest().map_err(store_err)?;
    let prompts = store.prompts().map_err(store_err)?;
    let pred_path = run_dir.join(postprocess::PREDICTIONS_FILE);
    let predictions: Vec<ParsedPrediction> = if pred_path.exists() {
        jsonl::read_all(&pred_path)?
    } else {
        Vec::new()
    };
    let reviews =
        ReviewStore::open(run_dir.join(postprocess::REVIEWS_FILE)).map_err(|e| EvalError::Store(e.to_string()))?;
    let ctx = ReportContext {
        model: manifest.model,
        counter_kind: manifest.counter_kind,
        support_threshold,
    };
    condition_report(&predictions, reviews.items(), &prompts, split, &ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MacroF1,
    WeightedF1,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MacroF1 => "macro_f1",
            Metric::WeightedF1 => "weighted_f1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSeries {
    pub template: TemplateKind,
    pub sampling: Sampling,
    pub metric: Metric,
    /// `(shots, value)` with shots ascending; zero-shot appears as shots 0.
    pub points: Vec<(usize, f64)>,
}

/// One series per (template, sampling) pair that has few-shot rows, for
/// each metric. Macro series come first.
pub fn plot_data(table: &ConditionTable) -> Vec<PlotSeries> {
    let mut series = Vec::new();
    for metric in [Metric::MacroF1, Metric::WeightedF1] {
        for template in TemplateKind::ALL {
            let zero = table.row(Sampling::ZeroShot, 0, template);
            for sampling in [Sampling::Random, Sampling::Stratified] {
                let mut rows: Vec<&ConditionRow> = table
                    .rows
                    .iter()
                    .filter(|r| r.key.template == template && r.key.sampling == sampling)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                rows.extend(zero);
                rows.sort_by_key(|r| r.key.shots);
                let value = |r: &ConditionRow| match metric {
                    Metric::MacroF1 => r.macro_f1,
                    Metric::WeightedF1 => r.weighted_f1,
                };
                series.push(PlotSeries {
                    template,
                    sampling,
                    metric,
                    points: rows.iter().map(|r| (r.key.shots, value(r))).collect(),
                });
            }
        }
    }
    series
}

/// Long format: `template,sampling,shots,metric,value`.
pub fn plot_csv(series: &[PlotSeries]) -> String {
    let mut out = String::from("template,sampling,shots,metric,value\n");
    for s in series {
        for (shots, v) in &s.points {
            let _ = writeln!(
                out,
                "{},{},{shots},{},{v:.4}",
                s.template,
                s.sampling,
                s.metric.as_str()
            );
        }
    }
    out
}

/// One line of an externally produced predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportedPrediction {
    pub post_id: String,
    pub predicted: Stance,
}

pub fn score_imported(records: &[ImportedPrediction], split: &CorpusSplit) -> Result<F1Report, EvalError> {
    let test: HashMap<&str, Stance> = split.test.iter().map(|p| (p.post_id.as_str(), p.gold)).collect();
    let train: HashSet<&str> = split.train.iter().map(|p| p.post_id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut m = ConfusionMatrix::default();
    for rec in records {
        let id = rec.post_id.as_str();
        if train.contains(id) {
            return Err(EvalError::NotInTestSplit(rec.post_id.clone()));
        }
        let &gold = test
            .get(id)
            .ok_or_else(|| EvalError::UnknownPostId(rec.post_id.clone()))?;
        if !seen.insert(id) {
            return Err(EvalError::DuplicatePostId(rec.post_id.clone()));
        }
        m.add(gold, rec.predicted);
    }
    F1Report::from_matrix(&m)
}

/// Scores a `{post_id, predicted}` line file against the test split.
pub fn import_predictions(path: &Path, split: &CorpusSplit) -> Result<F1Report, EvalError> {
    score_imported(&jsonl::read_all(path)?, split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub model: String,
    pub sampling: Sampling,
    pub shots: usize,
    pub template: TemplateKind,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReference {
    pub model: String,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

const REFERENCE_ICL: &str = include_str!("../data/reference_icl.csv");
const REFERENCE_FINETUNE: &str = include_str!("../data/reference_finetune.csv");

fn parse_reference<T: for<'de> Deserialize<'de>>(text: &str) -> Vec<T> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("shipped reference table parses")
}

/// Published in-context-learning scores per model and condition.
pub fn reference_icl() -> Vec<ReferenceRow> {
    parse_reference(REFERENCE_ICL)
}

/// Reads a reference table with the same columns as the shipped one.
pub fn read_reference(path: &Path) -> Result<Vec<ReferenceRow>, EvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| EvalError::MalformedTable(e.to_string()))?;
    reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::MalformedTable(e.to_string()))
}

/// Published scores of the fine-tuned models.
pub fn reference_finetune() -> Vec<FinetuneReference> {
    parse_reference(REFERENCE_FINETUNE)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRow {
    #[serde(flatten)]
    pub key: ConditionKey,
    pub weighted_f1: f64,
    pub reference_weighted_f1: Option<f64>,
    pub macro_f1: f64,
    pub reference_macro_f1: Option<f64>,
}

impl DiffRow {
    pub fn macro_delta(&self) -> Option<f64> {
        self.reference_macro_f1.map(|r| self.macro_f1 - r)
    }

    pub fn weighted_delta(&self) -> Option<f64> {
        self.reference_weighted_f1.map(|r| self.weighted_f1 - r)
    }
}

/// Pairs each row of `table` with the reference row for the same model and
/// condition, if one exists.
pub fn diff_against_reference(table: &ConditionTable, reference: &[ReferenceRow]) -> Vec<DiffRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let hit = reference.iter().find(|x| {
                x.model == table.model
                    && x.sampling == r.key.sampling
                    && x.shots == r.key.shots
                    && x.template == r.key.template
            });
            DiffRow {
                key: r.key,
                weighted_f1: r.weighted_f1,
                reference_weighted_f1: hit.map(|h| h.weighted_f1),
                macro_f1: r.macro_f1,
                reference_macro_f1: hit.map(|h| h.macro_f1),
            }
        })
        .collect()
}

pub fn diff_csv(rows: &[DiffRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
    let signed = |v: Option<f64>| v.map(|x| format!("{x:+.2}")).unwrap_or_default();
    let mut out = String::from(
        "sampling,shots,template,weighted_f1,reference_weighted_f1,weighted_delta,macro_f1,reference_macro_f1,macro_delta\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.2},{},{},{:.2},{},{}",
            r.key.sampling,
            r.key.shots,
            r.key.template,
            r.weighted_f1,
            opt(r.reference_weighted_f1),
            signed(r.weighted_delta()),
            r.macro_f1,
            opt(r.reference_macro_f1),
            signed(r.macro_delta()),
        );
    }
    out
}
