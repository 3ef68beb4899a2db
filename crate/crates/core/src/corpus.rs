//! Annotated corpus ingestion, unanimity filtering and the stratified
//! train/test split.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::jsonl;

/// Search query used to collect the raw post stream. Shipped for reference
/// only; the harness never queries a data provider.
pub const COLLECTION_QUERY: &str = "(hpv vaccine) OR (hpv vaccination) OR (hpv vaccinate) OR (hpv vax) OR (hpv vaxxed) OR (hpv jab) OR (hpv jabbed) OR (hpv shot) OR (\"human papillomavirus\" vaccine) OR (\"human papillomavirus\" vaccination) OR (\"human papillomavirus\" vaccinate) OR (\"human papillomavirus\" vax) OR (\"human papillomavirus\" vaxxed) OR (\"human papillomavirus\" shot) OR (\"human papillomavirus\" jab) OR (\"human papillomavirus\" jabbed) OR gardasil OR cervarix.";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },
    #[error("duplicate post id {0}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// The three-way stance label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stance {
    InFavor,
    Against,
    NeutralOrUnclear,
}

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::InFavor, Stance::Against, Stance::NeutralOrUnclear];

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::InFavor => "in favor",
            Stance::Against => "against",
            Stance::NeutralOrUnclear => "neutral or unclear",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stance::InFavor => 0,
            Stance::Against => 1,
            Stance::NeutralOrUnclear => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Stance> {
        Stance::ALL.get(i).copied()
    }

    /// Lenient label parsing: case-insensitive, with hyphens, underscores
    /// and runs of whitespace all treated as a single space.
    pub fn parse_lenient(s: &str) -> Option<Stance> {
        let folded: String = s
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c == '_' { ' ' } else { c })
            .collect();
        let folded = folded.split_whitespace().collect::<Vec<_>>().join(" ");
        match folded.as_str() {
            "in favor" => Some(Stance::InFavor),
            "against" => Some(Stance::Against),
            "neutral or unclear" => Some(Stance::NeutralOrUnclear),
            _ => None,
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stance::parse_lenient(s).ok_or_else(|| format!("unrecognized stance label {s:?}"))
    }
}

impl Serialize for Stance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Stance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-class counts, indexed in [`Stance::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts(pub [usize; 3]);

impl ClassCounts {
    pub fn of<'a>(posts: impl IntoIterator<Item = &'a LabeledPost>) -> Self {
        let mut counts = [0; 3];
        for p in posts {
            counts[p.gold.index()] += 1;
        }
        ClassCounts(counts)
    }

    pub fn get(&self, stance: Stance) -> usize {
        self.0[stance.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl Serialize for ClassCounts {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, usize> = Stance::ALL.iter().map(|s| (s.as_str(), self.get(*s))).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClassCounts {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, usize>::deserialize(deserializer)?;
        let mut counts = [0; 3];
        for (k, v) in map {
            let stance: Stance = k.parse().map_err(serde::de::Error::custom)?;
            counts[stance.index()] = v;
        }
        Ok(ClassCounts(counts))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedRow {
    pub post_id: String,
    pub text: String,
    pub annotations: Vec<Stance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPost {
    pub post_id: String,
    pub text: String,
    pub gold: Stance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Comma-separated with a header row.
    Delimited,
    /// One JSON object per line.
    LineRecords,
}

impl InputFormat {
    /// `.jsonl`/`.ndjson`/`.json` are read as line records, anything else as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => InputFormat::LineRecords,
            _ => InputFormat::Delimited,
        }
    }
}

const ANNOTATION_COLUMNS: [&str; 3] = ["ann1", "ann2", "ann3"];

pub fn ingest(path: &Path, format: InputFormat) -> Result<Vec<AnnotatedRow>, CorpusError> {
    let rows = match format {
        InputFormat::Delimited => ingest_delimited(path)?,
        InputFormat::LineRecords => ingest_lines(path)?,
    };
    let mut seen = HashSet::with_capacity(rows.len());
    for row in &rows {
        if !seen.insert(row.post_id.as_str()) {
            return Err(CorpusError::DuplicateId(row.post_id.clone()));
        }
    }
    Ok(rows)
}

fn build_row(
    line: u64,
    post_id: Option<&str>,
    text: Option<&str>,
    labels: &[&str],
) -> Result<AnnotatedRow, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord { line, reason };
    let post_id = post_id
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| malformed("missing post_id".into()))?;
    let text = text
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| malformed("missing or empty text".into()))?;
    if labels.is_empty() {
        return Err(malformed("no annotation columns".into()));
    }
    if labels.len() > 3 {
        return Err(malformed(format!("{} annotations, at most 3 allowed", labels.len())));
    }
    let annotations = labels
        .iter()
        .map(|l| Stance::parse_lenient(l).ok_or_else(|| malformed(format!("unrecognized label {l:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnnotatedRow {
        post_id: post_id.to_string(),
        text: text.to_string(),
        annotations,
    })
}

fn ingest_delimited(path: &Path) -> Result<Vec<AnnotatedRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let id_col = col("post_id");
    let text_col = col("text");
    let gold_col = col("gold");
    let ann_cols: Vec<usize> = ANNOTATION_COLUMNS.iter().filter_map(|c| col(c)).collect();
    if id_col.is_none() || text_col.is_none() || (gold_col.is_none() && ann_cols.is_empty()) {
        return Err(CorpusError::MalformedRecord {
            line: 1,
            reason: "header must contain post_id, text and either ann1..ann3 or gold".into(),
        });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: Option<usize>| i.and_then(|i| record.get(i));
        let labels: Vec<&str> = match gold_col {
            Some(g) if ann_cols.is_empty() => vec![record.get(g).unwrap_or("")],
            _ => ann_cols
                .iter()
                .filter_map(|&i| record.get(i))
                .filter(|v| !v.trim().is_empty())
                .collect(),
        };
        rows.push(build_row(line, get(id_col), get(text_col), &labels)?);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CorpusError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CorpusError::io(path, io),
        other => CorpusError::MalformedRecord {
            line,
            reason: format!("{other:?}"),
        },
    }
}

#[derive(Deserialize)]
struct LineRecord {
    post_id: Option<String>,
    text: Option<String>,
    #[serde(default)]
    annotations: Option<Vec<String>>,
    ann1: Option<String>,
    ann2: Option<String>,
    ann3: Option<String>,
    gold: Option<String>,
}

fn ingest_lines(path: &Path) -> Result<Vec<AnnotatedRow>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LineRecord = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let mut labels: Vec<&str> = Vec::new();
        if let Some(anns) = &rec.annotations {
            labels.extend(anns.iter().map(String::as_str));
        } else {
            labels.extend(
                [&rec.ann1, &rec.ann2, &rec.ann3]
                    .into_iter()
                    .flatten()
                    .map(String::as_str)
                    .filter(|s| !s.trim().is_empty()),
            );
        }
        if labels.is_empty() {
            if let Some(g) = &rec.gold {
                labels.push(g);
            }
        }
        rows.push(build_row(
            line_no,
            rec.post_id.as_deref(),
            rec.text.as_deref(),
            &labels,
        )?);
    }
    Ok(rows)
}

/// Keeps rows whose annotators all agree, in input order.
pub fn filter_unanimous(rows: &[AnnotatedRow]) -> Vec<LabeledPost> {
    rows.iter()
        .filter_map(|row| {
            let (first, rest) = row.annotations.split_first()?;
            rest.iter().all(|a| a == first).then(|| LabeledPost {
                post_id: row.post_id.clone(),
                text: row.text.clone(),
                gold: *first,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<LabeledPost>,
    pub test: Vec<LabeledPost>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn train_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.train)
    }

    pub fn test_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.test)
    }

    pub fn test_post(&self, post_id: &str) -> Option<&LabeledPost> {
        self.test.iter().find(|p| p.post_id == post_id)
    }
}

/// Splits each class in half after a seeded shuffle.
///
/// Odd classes leave one post over. Those remainders go alternately to test
/// and train, visiting classes from largest to smallest and starting with
/// test, except that when the number of odd classes is itself odd the last
/// remainder goes to train. This keeps `|test| = floor(n / 2)` for every
/// corpus. Both sides keep the corpus order of their members.
pub fn stratified_split(corpus: &[LabeledPost], seed: u64) -> Result<CorpusSplit, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, p) in corpus.iter().enumerate() {
        by_class[p.gold.index()].push(i);
    }
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }

    let mut order: Vec<usize> = (0..3).collect();
    // descending size, ties broken by label order
    order.sort_by_key(|&c| (std::cmp::Reverse(by_class[c].len()), c));
    let odd_classes: Vec<usize> = order.iter().copied().filter(|&c| by_class[c].len() % 2 == 1).collect();
    let extras_to_test = odd_classes.len() / 2;

    let mut in_test = vec![false; corpus.len()];
    for (c, members) in by_class.iter().enumerate() {
        let mut take = members.len() / 2;
        if let Some(rank) = odd_classes.iter().position(|&o| o == c) {
            if rank % 2 == 0 && rank / 2 < extras_to_test {
                take += 1;
            }
        }
        for &i in &members[..take] {
            in_test[i] = true;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (post, &t) in corpus.iter().zip(&in_test) {
        if t {
            test.push(post.clone());
        } else {
            train.push(post.clone());
        }
    }
    Ok(CorpusSplit { train, test, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    seed: u64,
    class_counts: SideCounts,
}

#[derive(Serialize, Deserialize)]
struct SideCounts {
    train: ClassCounts,
    test: ClassCounts,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestRecord {
    pub post_id: String,
    pub text: String,
    pub gold: Stance,
    pub side: Side,
}

/// Writes the split manifest: a header line `{seed, class_counts}` followed by
/// one `{post_id, text, gold, side}` line per post, train first.
pub fn write_split_manifest(split: &CorpusSplit, path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header = ManifestHeader {
        seed: split.seed,
        class_counts: SideCounts {
            train: split.train_counts(),
            test: split.test_counts(),
        },
    };
    let io = |e| CorpusError::io(path, e);
    jsonl::write_line(&mut out, &header).map_err(io)?;
    for (side, posts) in [(Side::Train, &split.train), (Side::Test, &split.test)] {
        for p in posts {
            let rec = ManifestRecord {
                post_id: p.post_id.clone(),
                text: p.text.clone(),
                gold: p.gold,
                side,
            };
            jsonl::write_line(&mut out, &rec).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_split_manifest(path: &Path) -> Result<CorpusSplit, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line: u64, e: serde_json::Error| CorpusError::MalformedRecord {
        line,
        reason: e.to_string(),
    };
    let header_line = lines
        .next()
        .ok_or(CorpusError::EmptyCorpus)?
        .map_err(|e| CorpusError::io(path, e))?;
    let header: ManifestHeader = serde_json::from_str(&header_line).map_err(|e| malformed(1, e))?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| malformed(i as u64 + 2, e))?;
        let post = LabeledPost {
            post_id: rec.post_id,
            text: rec.text,
            gold: rec.gold,
        };
        match rec.side {
            Side::Train => train.push(post),
            Side::Test => test.push(post),
        }
    }
    let split = CorpusSplit {
        train,
        test,
        seed: header.seed,
    };
    if split.train_counts() != header.class_counts.train || split.test_counts() != header.class_counts.test {
        return Err(CorpusError::MalformedRecord {
            line: 1,
            reason: "header class counts disagree with records".into(),
        });
    }
    Ok(split)
}
