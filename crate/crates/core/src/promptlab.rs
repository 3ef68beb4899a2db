//! The factorial prompt grid: template complexity × shot sampling × shot
//! quantity, and rendering of one prompt per (cell, test post).

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusSplit, LabeledPost, Stance};
use crate::jsonl;

const BASIC_BODY: &str = "What is the stance of the tweet below with respect to vaccination against human papilloma virus, often abbreviated as HPV? If we can infer from the tweet that the Tweeter supports human papilloma virus (HPV) vaccination, please label it as \u{201c}in favor.\u{201d} If we can infer from the tweet that Tweeter is against human papilloma virus (HPV) vaccination, please label it as \u{201c}against.\u{201d} If we can infer from the tweet that the Tweeter has a neutral stance towards human papilloma virus (HPV) vaccination, please label it as \u{201c}neutral or unclear.\u{201d} If there is no indication in the tweet to reveal the stance of the Tweeter or towards human papilloma virus (HPV) vaccination, please also label it as \u{201c}neutral or unclear.\u{201d} Please use only one of the following three categories labels to classify its stance: \u{201c}in favor,\u{201d} \u{201c}against,\u{201d} or \u{201c}neutral or unclear.\u{201d}";

const DETAILED_BODY: &str = "You are an expert content analyst with experience classifying the stance of text. What is the stance of the tweet below with respect to vaccination against human papilloma virus, often abbreviated as HPV? If we can infer from the tweet that the Tweeter supports human papilloma virus (HPV) vaccination, please label it as \u{201c}in favor.\u{201d} By \u{201c}in-favor,\u{201d} we mean providing supportive statements, facts, statistics, opinions, or anecdotes that (a) endorse vaccination in general, (b) mention the health benefits of vaccination, or (c) emphasize its effectiveness in preventing infection from HPV, averting precancerous lesions, and reducing the risk of cancer and death. If we can infer from the tweet that Tweeter is against human papilloma virus (HPV) vaccination, please label it as \u{201c}against.\u{201d} By \u{201c}against,\u{201d} we mean providing skeptical or inaccurate statements, facts, statistics, opinions, or anecdotes that (a) oppose vaccination in general, (b) question the health benefits of vaccination, or (c) link vaccination to reproductive health and pregnancy risks, the increased possibility of developing cancer, and greater likelihood of death or serious medical complications. If we can infer from the tweet that the Tweeter has a neutral stance towards human papilloma virus (HPV) vaccination, please label it as \u{201c}neutral or unclear.\u{201d} By \u{201c}neutral or unclear\u{201d} we mean balancing benefits of HPV vaccination against potential risk of vaccination without a clear tilt in favor or against vaccination. If there is no indication in the tweet to reveal the stance of the Tweeter or towards human papilloma virus (HPV) vaccination, please also label it as \u{201c}neutral or unclear.\u{201d} Please use only one of the following three categories labels to classify its stance: \u{201c}in favor,\u{201d} \u{201c}against,\u{201d} or \u{201c}neutral or unclear.\u{201d}";

const EXAMPLES_GUIDANCE: &str = "Here are some examples of tweets that are \u{201c}in favor,\u{201d} \u{201c}against,\u{201d} or \u{201c}neutral or unclear\u{201d} to provide you guidance.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Basic,
    Detailed,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 2] = [TemplateKind::Basic, TemplateKind::Detailed];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::Basic => "basic",
            TemplateKind::Detailed => "detailed",
        }
    }

    /// The full few-shot template.
    pub fn template(self) -> String {
        self.preamble(true)
    }

    /// Instruction text placed before the example blocks. Zero-shot prompts
    /// swap the two closing guidance sentences for a single one that refers
    /// to the tweet below.
    pub fn preamble(self, with_examples: bool) -> String {
        let (body, closing_few, closing_zero) = match self {
            TemplateKind::Basic => (
                BASIC_BODY,
                "Make a strong effort to classify the last tweet correctly.",
                "Make a strong effort to classify the tweet below correctly.",
            ),
            TemplateKind::Detailed => (
                DETAILED_BODY,
                "Make a strong effort to classify the last tweet correctly, as misclassifications may have costly consequences.",
                "Make a strong effort to classify the tweet below correctly, as misclassifications may have costly consequences.",
            ),
        };
        if with_examples {
            format!("{body} {EXAMPLES_GUIDANCE} {closing_few}")
        } else {
            format!("{body} {closing_zero}")
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How shots are drawn. `ZeroShot` marks the cells without examples and
/// serializes as `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[serde(rename = "none")]
    ZeroShot,
    Random,
    Stratified,
}

impl Sampling {
    pub fn as_str(self) -> &'static str {
        match self {
            Sampling::ZeroShot => "none",
            Sampling::Random => "random",
            Sampling::Stratified => "stratified",
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const SHOT_QUANTITIES: [usize; 10] = [3, 6, 9, 12, 15, 18, 21, 24, 27, 30];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("insufficient pool for {}: needed {needed}, available {available}", class.map(|c| c.as_str()).unwrap_or("all classes"))]
    InsufficientPool {
        class: Option<Stance>,
        needed: usize,
        available: usize,
    },
    #[error("cell expects {expected} shots, got {actual}")]
    ShotCountMismatch { expected: usize, actual: usize },
    #[error("prompt file: {0}")]
    Io(#[from] jsonl::ReadError),
}

/// One point of the experimental grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCell")]
pub struct ExperimentCell {
    pub template: TemplateKind,
    pub sampling: Sampling,
    pub shots: usize,
}

#[derive(Deserialize)]
struct RawCell {
    template: TemplateKind,
    sampling: Sampling,
    shots: usize,
}

impl TryFrom<RawCell> for ExperimentCell {
    type Error = PromptError;

    fn try_from(raw: RawCell) -> Result<Self, Self::Error> {
        ExperimentCell::new(raw.template, raw.sampling, raw.shots)
    }
}

impl ExperimentCell {
    pub fn new(template: TemplateKind, sampling: Sampling, shots: usize) -> Result<Self, PromptError> {
        let zero = sampling == Sampling::ZeroShot;
        if zero != (shots == 0) {
            return Err(PromptError::InvalidCell(format!(
                "shots = 0 iff sampling = none (got {sampling}, {shots})"
            )));
        }
        if !zero && !SHOT_QUANTITIES.contains(&shots) {
            return Err(PromptError::InvalidCell(format!("unsupported shot count {shots}")));
        }
        Ok(ExperimentCell {
            template,
            sampling,
            shots,
        })
    }

    pub fn zero_shot(template: TemplateKind) -> Self {
        ExperimentCell {
            template,
            sampling: Sampling::ZeroShot,
            shots: 0,
        }
    }

    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.template, self.sampling, self.shots)
    }
}

/// All 42 cells, ordered by template, then sampling (none, random,
/// stratified), then shots ascending.
pub fn expand_grid() -> Vec<ExperimentCell> {
    let mut cells = Vec::with_capacity(42);
    for template in TemplateKind::ALL {
        cells.push(ExperimentCell::zero_shot(template));
        for sampling in [Sampling::Random, Sampling::Stratified] {
            for shots in SHOT_QUANTITIES {
                cells.push(ExperimentCell {
                    template,
                    sampling,
                    shots,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSet {
    pub members: Vec<LabeledPost>,
    /// Seed of the shuffle that fixed `members` order.
    pub order_seed: u64,
}

impl ShotSet {
    pub fn empty() -> Self {
        ShotSet {
            members: Vec::new(),
            order_seed: 0,
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.post_id.clone()).collect()
    }
}

pub fn sample_shots(
    cell: &ExperimentCell,
    train: &[LabeledPost],
    test_post_id: &str,
    rng_seed: u64,
) -> Result<ShotSet, PromptError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pool: Vec<&LabeledPost> = train.iter().filter(|p| p.post_id != test_post_id).collect();
    let mut drawn: Vec<LabeledPost> = match cell.sampling {
        Sampling::ZeroShot => return Ok(ShotSet::empty()),
        Sampling::Random => {
            if pool.len() < cell.shots {
                return Err(PromptError::InsufficientPool {
                    class: None,
                    needed: cell.shots,
                    available: pool.len(),
                });
            }
            index::sample(&mut rng, pool.len(), cell.shots)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect()
        }
        Sampling::Stratified => {
            let per_class = cell.shots / Stance::ALL.len();
            let mut drawn = Vec::with_capacity(cell.shots);
            for class in Stance::ALL {
                let members: Vec<&LabeledPost> = pool.iter().copied().filter(|p| p.gold == class).collect();
                if members.len() < per_class {
                    return Err(PromptError::InsufficientPool {
                        class: Some(class),
                        needed: per_class,
                        available: members.len(),
                    });
                }
                drawn.extend(
                    index::sample(&mut rng, members.len(), per_class)
                        .into_iter()
                        .map(|i| members[i].clone()),
                );
            }
            drawn
        }
    };
    let order_seed = rng.next_u64();
    drawn.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));
    Ok(ShotSet {
        members: drawn,
        order_seed,
    })
}

/// A fully rendered prompt bound to one test post and one shot set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub prompt_id: String,
    #[serde(flatten)]
    pub cell: ExperimentCell,
    pub test_post_id: String,
    pub shot_ids: Vec<String>,
    pub shot_order_seed: u64,
    pub text: String,
}

/// Post text as it appears inside a block; line breaks would end the block.
fn inline(text: &str) -> String {
    text.split(['\r', '\n'])
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn prompt_id(cell: &ExperimentCell, test_post_id: &str, shot_ids: &[String], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(cell.key().as_bytes());
    h.update([0]);
    h.update(test_post_id.as_bytes());
    for id in shot_ids {
        h.update([0]);
        h.update(id.as_bytes());
    }
    h.update([0]);
    h.update(seed.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

pub fn render_prompt(
    cell: &ExperimentCell,
    shots: &ShotSet,
    test_post: &LabeledPost,
) -> Result<RenderedPrompt, PromptError> {
    if shots.members.len() != cell.shots {
        return Err(PromptError::ShotCountMismatch {
            expected: cell.shots,
            actual: shots.members.len(),
        });
    }
    let mut text = cell.template.preamble(cell.shots > 0);
    text.push_str("\n\n");
    for shot in &shots.members {
        text.push_str(&format!("Tweet: \"{}\"\nStance: {}\n\n", inline(&shot.text), shot.gold));
    }
    text.push_str(&format!("Tweet: \"{}\"\nStance:", inline(&test_post.text)));
    let shot_ids = shots.ids();
    Ok(RenderedPrompt {
        prompt_id: prompt_id(cell, &test_post.post_id, &shot_ids, shots.order_seed),
        cell: *cell,
        test_post_id: test_post.post_id.clone(),
        shot_ids,
        shot_order_seed: shots.order_seed,
        text,
    })
}

/// Counts `(labeled, unlabeled)` example blocks in a rendered prompt.
pub fn count_blocks(text: &str) -> (usize, usize) {
    let mut labeled = 0;
    let mut unlabeled = 0;
    let mut prev_was_tweet = false;
    for line in text.split('\n') {
        if prev_was_tweet {
            if line == "Stance:" {
                unlabeled += 1;
            } else if let Some(label) = line.strip_prefix("Stance: ") {
                if Stance::ALL.iter().any(|s| s.as_str() == label) {
                    labeled += 1;
                }
            }
        }
        prev_was_tweet = line.starts_with("Tweet: \"") && line.ends_with('"');
    }
    (labeled, unlabeled)
}

/// Per-prompt sampling seed, derived only from the run seed, the cell and the
/// test post.
pub fn sub_seed(rng_seed: u64, cell: &ExperimentCell, test_post_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(rng_seed.to_le_bytes());
    h.update(cell.key().as_bytes());
    h.update([0]);
    h.update(test_post_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn build_prompt_set(split: &CorpusSplit, rng_seed: u64) -> Result<Vec<RenderedPrompt>, PromptError> {
    let grid = expand_grid();
    let mut prompts = Vec::with_capacity(grid.len() * split.test.len());
    for test_post in &split.test {
        for cell in &grid {
            let seed = sub_seed(rng_seed, cell, &test_post.post_id);
            let shots = sample_shots(cell, &split.train, &test_post.post_id, seed)?;
            prompts.push(render_prompt(cell, &shots, test_post)?);
        }
    }
    Ok(prompts)
}

pub fn write_prompt_set(prompts: &[RenderedPrompt], path: &Path) -> std::io::Result<()> {
    jsonl::write_all(path, prompts)
}

pub fn read_prompt_set(path: &Path) -> Result<Vec<RenderedPrompt>, PromptError> {
    let prompts: Vec<RenderedPrompt> = jsonl::read_all(path)?;
    let mut seen = HashSet::new();
    for p in &prompts {
        if !seen.insert(p.prompt_id.as_str()) {
            return Err(PromptError::InvalidCell(format!("duplicate prompt_id {}", p.prompt_id)));
        }
    }
    Ok(prompts)
}

#[derive(Serialize)]
struct TemplateSidecar {
    basic: String,
    detailed: String,
    basic_zero_shot: String,
    detailed_zero_shot: String,
}

/// Writes the template texts keyed by kind, for audit.
pub fn write_template_sidecar(path: &Path) -> std::io::Result<()> {
    let sidecar = TemplateSidecar {
        basic: TemplateKind::Basic.preamble(true),
        detailed: TemplateKind::Detailed.preamble(true),
        basic_zero_shot: TemplateKind::Basic.preamble(false),
        detailed_zero_shot: TemplateKind::Detailed.preamble(false),
    };
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)
}
