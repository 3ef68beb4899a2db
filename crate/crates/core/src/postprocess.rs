//! Label extraction from raw completions and the human review queue for
//! completions the extraction rules cannot settle.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backends::CompletionRecord;
use crate::corpus::Stance;
use crate::jsonl;
use crate::promptlab::TemplateKind;
use crate::runner::RunStore;

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REVIEWS_FILE: &str = "reviews.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseRule {
    BeginsWith,
    SoleMention,
}

impl ParseRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseRule::BeginsWith => "begins_with",
            ParseRule::SoleMention => "sole_mention",
        }
    }
}

/// Kinds of ill-formatted output a reviewer can assign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllFormatCategory {
    MissingInitialLabel,
    IncorrectInitialLabel,
    EmptyResponse,
    TaskRestatement,
    IrrelevantStance,
    Misindexing,
    CreatingNewStance,
    NoLabel,
    DualStance,
    ApologyOrHallucination,
    InfiniteRepetition,
}

impl IllFormatCategory {
    pub const ALL: [IllFormatCategory; 11] = [
        IllFormatCategory::MissingInitialLabel,
        IllFormatCategory::IncorrectInitialLabel,
        IllFormatCategory::EmptyResponse,
        IllFormatCategory::TaskRestatement,
        IllFormatCategory::IrrelevantStance,
        IllFormatCategory::Misindexing,
        IllFormatCategory::CreatingNewStance,
        IllFormatCategory::NoLabel,
        IllFormatCategory::DualStance,
        IllFormatCategory::ApologyOrHallucination,
        IllFormatCategory::InfiniteRepetition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IllFormatCategory::MissingInitialLabel => "missing_initial_label",
            IllFormatCategory::IncorrectInitialLabel => "incorrect_initial_label",
            IllFormatCategory::EmptyResponse => "empty_response",
            IllFormatCategory::TaskRestatement => "task_restatement",
            IllFormatCategory::IrrelevantStance => "irrelevant_stance",
            IllFormatCategory::Misindexing => "misindexing",
            IllFormatCategory::CreatingNewStance => "creating_new_stance",
            IllFormatCategory::NoLabel => "no_label",
            IllFormatCategory::DualStance => "dual_stance",
            IllFormatCategory::ApologyOrHallucination => "apology_or_hallucination",
            IllFormatCategory::InfiniteRepetition => "infinite_repetition",
        }
    }

    /// Whether [`classify_illformat`] can ever suggest this category.
    pub fn auto_detectable(self) -> bool {
        !matches!(
            self,
            IllFormatCategory::MissingInitialLabel
                | IllFormatCategory::IncorrectInitialLabel
                | IllFormatCategory::IrrelevantStance
                | IllFormatCategory::Misindexing
        )
    }
}

impl fmt::Display for IllFormatCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IllFormatCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IllFormatCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed { label: Stance, rule: ParseRule },
    NeedsReview { suggested: IllFormatCategory },
}

/// Trims, lowercases, collapses whitespace and folds the label spelling
/// variants `in-favor` and `neutral/unclear`.
pub fn normalize(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .replace("in-favor", "in favor")
        .replace("neutral/unclear", "neutral or unclear")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Byte offsets of whole-word occurrences of `needle` in `haystack`.
fn word_matches<'a>(haystack: &'a str, needle: &'a str) -> impl Iterator<Item = usize> + 'a {
    haystack.match_indices(needle).filter_map(move |(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        let bounded = !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char);
        bounded.then_some(i)
    })
}

fn labels_present(normalized: &str) -> Vec<Stance> {
    Stance::ALL
        .into_iter()
        .filter(|s| word_matches(normalized, s.as_str()).next().is_some())
        .collect()
}

fn begins_with_label(normalized: &str) -> Option<Stance> {
    let mut hits = Stance::ALL
        .into_iter()
        .filter(|s| word_matches(normalized, s.as_str()).next() == Some(0));
    match (hits.next(), hits.next()) {
        (Some(s), None) => Some(s),
        _ => None,
    }
}

pub fn extract_label(raw: &str) -> ParseOutcome {
    let normalized = normalize(raw);
    if let Some(label) = begins_with_label(&normalized) {
        return ParseOutcome::Parsed {
            label,
            rule: ParseRule::BeginsWith,
        };
    }
    if let [label] = labels_present(&normalized)[..] {
        return ParseOutcome::Parsed {
            label,
            rule: ParseRule::SoleMention,
        };
    }
    ParseOutcome::NeedsReview {
        suggested: classify_illformat(raw),
    }
}

const APOLOGY_MARKERS: [&str; 3] = ["i'm sorry", "i cannot", "as an ai"];
const FOREIGN_STANCE_WORDS: [&str; 4] = ["positive", "negative", "supportive", "opposed"];
const RESTATEMENT_WINDOW: usize = 10;

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

fn preamble_windows() -> &'static HashSet<String> {
    static WINDOWS: OnceLock<HashSet<String>> = OnceLock::new();
    WINDOWS.get_or_init(|| {
        let mut set = HashSet::new();
        for kind in TemplateKind::ALL {
            for with_examples in [true, false] {
                let w = words(&kind.preamble(with_examples));
                for window in w.windows(RESTATEMENT_WINDOW) {
                    set.insert(window.join(" "));
                }
            }
        }
        set
    })
}

fn has_repeated_lines(raw: &str) -> bool {
    let mut prev: Option<&str> = None;
    let mut run = 0;
    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if prev == Some(line) {
            run += 1;
        } else {
            prev = Some(line);
            run = 1;
        }
        if run >= 3 {
            return true;
        }
    }
    false
}

/// Suggests a category for a completion that failed both extraction rules.
/// Checks run in a fixed order and the first hit wins.
pub fn classify_illformat(raw: &str) -> IllFormatCategory {
    if raw.trim().is_empty() {
        return IllFormatCategory::EmptyResponse;
    }
    if has_repeated_lines(raw) {
        return IllFormatCategory::InfiniteRepetition;
    }
    let normalized = normalize(raw).replace('\u{2019}', "'");
    if labels_present(&normalized).len() >= 2 {
        return IllFormatCategory::DualStance;
    }
    if APOLOGY_MARKERS.iter().any(|m| normalized.contains(m)) {
        return IllFormatCategory::ApologyOrHallucination;
    }
    let w = words(raw);
    let windows = preamble_windows();
    if w.windows(RESTATEMENT_WINDOW)
        .any(|win| windows.contains(&win.join(" ")))
    {
        return IllFormatCategory::TaskRestatement;
    }
    if FOREIGN_STANCE_WORDS
        .iter()
        .any(|s| word_matches(&normalized, s).next().is_some())
    {
        return IllFormatCategory::CreatingNewStance;
    }
    IllFormatCategory::NoLabel
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("{prompt_id} already resolved as {label} ({category})")]
    AlreadyResolved {
        prompt_id: String,
        label: Stance,
        category: IllFormatCategory,
    },
    #[error("no review item for prompt {0}")]
    NotFound(String),
    #[error("review store corrupt: {0}")]
    Corrupt(String),
    #[error("review store io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub prompt_id: String,
    pub raw_text: String,
    pub suggested: IllFormatCategory,
    #[serde(default)]
    pub assigned: Option<Stance>,
    #[serde(default)]
    pub final_category: Option<IllFormatCategory>,
    #[serde(default)]
    pub reviewer: Option<String>,
    #[serde(default)]
    pub resolved_at: Option<DateTime<Utc>>,
}

impl ReviewItem {
    pub fn new(prompt_id: impl Into<String>, raw_text: impl Into<String>, suggested: IllFormatCategory) -> Self {
        ReviewItem {
            prompt_id: prompt_id.into(),
            raw_text: raw_text.into(),
            suggested,
            assigned: None,
            final_category: None,
            reviewer: None,
            resolved_at: None,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.assigned.is_some()
    }

    pub fn category(&self) -> IllFormatCategory {
        self.final_category.unwrap_or(self.suggested)
    }
}

/// Resolves an item. Repeating an identical resolution is a no-op; a
/// different one is rejected.
pub fn resolve_review(
    item: &ReviewItem,
    label: Stance,
    category: IllFormatCategory,
    reviewer: &str,
) -> Result<ReviewItem, ReviewError> {
    resolve_at(item, label, category, reviewer, Utc::now())
}

fn resolve_at(
    item: &ReviewItem,
    label: Stance,
    category: IllFormatCategory,
    reviewer: &str,
    at: DateTime<Utc>,
) -> Result<ReviewItem, ReviewError> {
    match item.assigned {
        Some(existing) if existing == label && item.category() == category => Ok(item.clone()),
        Some(existing) => Err(ReviewError::AlreadyResolved {
            prompt_id: item.prompt_id.clone(),
            label: existing,
            category: item.category(),
        }),
        None => Ok(ReviewItem {
            assigned: Some(label),
            final_category: Some(category),
            reviewer: Some(reviewer.to_string()),
            resolved_at: Some(at),
            ..item.clone()
        }),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum ReviewEvent {
    Enqueue {
        item: ReviewItem,
    },
    Resolve {
        prompt_id: String,
        label: Stance,
        category: IllFormatCategory,
        reviewer: String,
        resolved_at: DateTime<Utc>,
    },
}

/// Append-only event log of review items. State is rebuilt from the file on
/// open, so every process reading the same path sees the same queue.
#[derive(Debug)]
pub struct ReviewStore {
    path: PathBuf,
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
}

impl ReviewStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ReviewError> {
        let path = path.into();
        let events: Vec<ReviewEvent> = if path.exists() {
            jsonl::read_all(&path).map_err(|e| ReviewError::Corrupt(e.to_string()))?
        } else {
            Vec::new()
        };
        let mut store = ReviewStore {
            path,
            items: Vec::new(),
            index: HashMap::new(),
        };
        for event in events {
            store.apply(event)?;
        }
        Ok(store)
    }

    fn apply(&mut self, event: ReviewEvent) -> Result<(), ReviewError> {
        match event {
            ReviewEvent::Enqueue { item } => {
                if !self.index.contains_key(&item.prompt_id) {
                    self.index.insert(item.prompt_id.clone(), self.items.len());
                    self.items.push(item);
                }
            }
            ReviewEvent::Resolve {
                prompt_id,
                label,
                category,
                reviewer,
                resolved_at,
            } => {
                let &i = self
                    .index
                    .get(&prompt_id)
                    .ok_or_else(|| ReviewError::Corrupt(format!("resolve before enqueue: {prompt_id}")))?;
                self.items[i] = resolve_at(&self.items[i], label, category, &reviewer, resolved_at)?;
            }
        }
        Ok(())
    }

    fn append(&self, event: &ReviewEvent) -> Result<(), ReviewError> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&jsonl::to_line(event)?)?;
        f.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn get(&self, prompt_id: &str) -> Option<&ReviewItem> {
        self.index.get(prompt_id).map(|&i| &self.items[i])
    }

    pub fn unresolved(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.iter().filter(|i| !i.is_resolved())
    }

    /// Adds an item unless one exists for its prompt. Returns whether it was added.
    pub fn enqueue(&mut self, item: ReviewItem) -> Result<bool, ReviewError> {
        if self.index.contains_key(&item.prompt_id) {
            return Ok(false);
        }
        let event = ReviewEvent::Enqueue { item };
        self.append(&event)?;
        self.apply(event)?;
        Ok(true)
    }

    pub fn resolve(
        &mut self,
        prompt_id: &str,
        label: Stance,
        category: IllFormatCategory,
        reviewer: &str,
    ) -> Result<ReviewItem, ReviewError> {
        let &i = self
            .index
            .get(prompt_id)
            .ok_or_else(|| ReviewError::NotFound(prompt_id.to_string()))?;
        let current = &self.items[i];
        let resolved = resolve_review(current, label, category, reviewer)?;
        if resolved != *current {
            self.append(&ReviewEvent::Resolve {
                prompt_id: prompt_id.to_string(),
                label,
                category,
                reviewer: reviewer.to_string(),
                resolved_at: resolved.resolved_at.expect("resolved"),
            })?;
            self.items[i] = resolved.clone();
        }
        Ok(resolved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Auto,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub prompt_id: String,
    pub label: Stance,
    pub source: PredictionSource,
    pub rule_or_category: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseSummary {
    pub completions: usize,
    pub auto: usize,
    pub human: usize,
    pub queued: usize,
}

/// Runs extraction over every completion in a run directory. Writes the
/// parsed-predictions file sorted by prompt id and enqueues every
/// completion that needs review.
pub fn parse_run(run_dir: &Path) -> Result<ParseSummary, ReviewError> {
    let store = RunStore::new(run_dir);
    let mut completions: Vec<CompletionRecord> =
        store.completions().map_err(|e| ReviewError::Corrupt(e.to_string()))?;
    completions.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    let mut reviews = ReviewStore::open(run_dir.join(REVIEWS_FILE))?;
    let mut summary = ParseSummary {
        completions: completions.len(),
        ..Default::default()
    };
    let mut predictions = Vec::new();
    for rec in &completions {
        match extract_label(&rec.raw_text) {
            ParseOutcome::Parsed { label, rule } => {
                summary.auto += 1;
                predictions.push(ParsedPrediction {
                    prompt_id: rec.prompt_id.clone(),
                    label,
                    source: PredictionSource::Auto,
                    rule_or_category: rule.as_str().into(),
                });
            }
            ParseOutcome::NeedsReview { suggested } => {
                if reviews.enqueue(ReviewItem::new(&rec.prompt_id, &rec.raw_text, suggested))? {
                    summary.queued += 1;
                }
                if let Some(item) = reviews.get(&rec.prompt_id) {
                    if let Some(label) = item.assigned {
                        summary.human += 1;
                        predictions.push(ParsedPrediction {
                            prompt_id: rec.prompt_id.clone(),
                            label,
                            source: PredictionSource::Human,
                            rule_or_category: item.category().as_str().into(),
                        });
                    }
                }
            }
        }
    }
    jsonl::write_all(&run_dir.join(PREDICTIONS_FILE), &predictions)?;
    Ok(summary)
}

/// Merges automatic predictions with resolved reviews. Fails with the
/// sorted ids of reviews still open.
pub fn final_predictions(
    predictions: &[ParsedPrediction],
    reviews: &[ReviewItem],
) -> Result<Vec<ParsedPrediction>, Vec<String>> {
    let mut merged: BTreeMap<&str, ParsedPrediction> =
        predictions.iter().map(|p| (p.prompt_id.as_str(), p.clone())).collect();
    let mut unresolved = Vec::new();
    for item in reviews {
        match item.assigned {
            Some(label) => {
                merged.insert(
                    &item.prompt_id,
                    ParsedPrediction {
                        prompt_id: item.prompt_id.clone(),
                        label,
                        source: PredictionSource::Human,
                        rule_or_category: item.category().as_str().into(),
                    },
                );
            }
            None if !merged.contains_key(item.prompt_id.as_str()) => unresolved.push(item.prompt_id.clone()),
            None => {}
        }
    }
    if unresolved.is_empty() {
        Ok(merged.into_values().collect())
    } else {
        unresolved.sort();
        Err(unresolved)
    }
}
