//! License-plate post-processing: syntactic validation against the Indian
//! registration grammar with single-confusion repair, multi-frame confidence
//! voting, and salted hashing for export.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_SALT_LEN: usize = 16;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlateError {
    #[error("salt must be at least {MIN_SALT_LEN} bytes, got {0}")]
    WeakSalt(usize),
    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),
    #[error("plate config json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Valid,
    Corrected(String),
    Invalid,
}

impl Validation {
    /// The accepted text, if any.
    pub fn accepted<'a>(&'a self, original: &'a str) -> Option<&'a str> {
        match self {
            Validation::Valid => Some(original),
            Validation::Corrected(t) => Some(t),
            Validation::Invalid => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GrammarDoc", into = "GrammarDoc")]
pub struct PlateGrammar {
    templates: Vec<String>,
    confusions: Vec<(char, char)>,
    patterns: Vec<Regex>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GrammarDoc {
    patterns: Vec<String>,
    confusions: Vec<(char, char)>,
}

impl TryFrom<GrammarDoc> for PlateGrammar {
    type Error = PlateError;
    fn try_from(d: GrammarDoc) -> Result<Self, PlateError> {
        PlateGrammar::new(d.patterns, d.confusions)
    }
}

impl From<PlateGrammar> for GrammarDoc {
    fn from(g: PlateGrammar) -> Self {
        GrammarDoc { patterns: g.templates, confusions: g.confusions }
    }
}

impl PartialEq for PlateGrammar {
    fn eq(&self, other: &Self) -> bool {
        self.templates == other.templates && self.confusions == other.confusions
    }
}

impl Default for PlateGrammar {
    fn default() -> Self {
        Self::new(
            vec!["AA00AA0000".into(), "AA00A0000".into()],
            vec![('O', '0'), ('I', '1'), ('B', '8'), ('S', '5'), ('Z', '2'), ('G', '6')],
        )
        .expect("default grammar is well formed")
    }
}

fn template_regex(t: &str) -> Result<Regex, PlateError> {
    let mut re = String::from("^");
    for c in t.chars() {
        match c {
            'A' => re.push_str("[A-Z]"),
            '0' => re.push_str("[0-9]"),
            other => return Err(PlateError::InvalidGrammar(format!("template slot {other:?} in {t}"))),
        }
    }
    re.push('$');
    Regex::new(&re).map_err(|e| PlateError::InvalidGrammar(e.to_string()))
}

impl PlateGrammar {
    /// `templates` use `A` for a letter slot and `0` for a digit slot;
    /// each confusion pair applies in both directions.
    pub fn new(templates: Vec<String>, confusions: Vec<(char, char)>) -> Result<Self, PlateError> {
        if templates.is_empty() {
            return Err(PlateError::InvalidGrammar("no patterns".into()));
        }
        let patterns = templates.iter().map(|t| template_regex(t)).collect::<Result<_, _>>()?;
        for &(a, b) in &confusions {
            let ok = |c: char| c.is_ascii_uppercase() || c.is_ascii_digit();
            if !ok(a) || !ok(b) || a == b {
                return Err(PlateError::InvalidGrammar(format!("confusion pair {a:?}/{b:?}")));
            }
        }
        Ok(Self { templates, confusions, patterns })
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn is_valid(&self, text: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(text))
    }

    /// Plausible substitutes for `c`.
    pub fn substitutes(&self, c: char) -> impl Iterator<Item = char> + '_ {
        self.confusions.iter().filter_map(move |&(a, b)| {
            if a == c {
                Some(b)
            } else if b == c {
                Some(a)
            } else {
                None
            }
        })
    }
}

fn slot_accepts(slot: char, c: char) -> bool {
    match slot {
        'A' => c.is_ascii_uppercase(),
        _ => c.is_ascii_digit(),
    }
}

/// Exact match, else the unique single-confusion repair, else invalid.
pub fn validate(text: &str, grammar: &PlateGrammar) -> Validation {
    if !text.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) {
        return Validation::Invalid;
    }
    if grammar.is_valid(text) {
        return Validation::Valid;
    }
    let chars: Vec<char> = text.chars().collect();
    let mut candidates = BTreeSet::new();
    for template in grammar.templates() {
        if template.len() != chars.len() {
            continue;
        }
        for (i, slot) in template.chars().enumerate() {
            if slot_accepts(slot, chars[i]) {
                continue;
            }
            for sub in grammar.substitutes(chars[i]).filter(|&s| slot_accepts(slot, s)) {
                let mut cand = chars.clone();
                cand[i] = sub;
                let cand: String = cand.into_iter().collect();
                if grammar.is_valid(&cand) {
                    candidates.insert(cand);
                }
            }
        }
    }
    match candidates.len() {
        1 => Validation::Corrected(candidates.into_iter().next().expect("one candidate")),
        _ => Validation::Invalid,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallotEntry {
    pub text: String,
    pub confidence: f64,
    pub frame_index: u64,
}

/// The most recent readings attributed to one track.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateBallot {
    pub track_id: u64,
    capacity: usize,
    readings: VecDeque<BallotEntry>,
}

impl PlateBallot {
    pub fn new(track_id: u64, capacity: usize) -> Self {
        Self { track_id, capacity: capacity.max(1), readings: VecDeque::new() }
    }

    /// Adds a reading, evicting the oldest once full. Readings stay sorted
    /// by frame index.
    pub fn push(&mut self, text: impl Into<String>, confidence: f64, frame_index: u64) {
        let entry = BallotEntry { text: text.into(), confidence, frame_index };
        let pos = self.readings.partition_point(|r| r.frame_index <= frame_index);
        self.readings.insert(pos, entry);
        while self.readings.len() > self.capacity {
            self.readings.pop_front();
        }
    }

    pub fn readings(&self) -> impl ExactSizeIterator<Item = &BallotEntry> {
        self.readings.iter()
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub text: String,
    /// Winning confidence mass over the total accepted mass.
    pub score: f64,
}

/// Confidence-sum vote over the accepted readings of `ballot`.
///
/// Ties go to the text seen most recently, then to the lexicographically
/// smallest text.
pub fn vote(ballot: &PlateBallot, grammar: &PlateGrammar, min_readings: usize) -> Option<VoteResult> {
    // text -> (confidence sum, latest frame)
    let mut groups: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    let mut accepted = 0;
    for r in ballot.readings() {
        let v = validate(&r.text, grammar);
        let Some(text) = v.accepted(&r.text) else { continue };
        accepted += 1;
        let g = groups.entry(text.to_string()).or_insert((0.0, 0));
        g.0 += r.confidence;
        g.1 = g.1.max(r.frame_index);
    }
    if accepted < min_readings.max(1) {
        return None;
    }
    // summed in key order so the total is independent of reading order
    let total: f64 = groups.values().map(|g| g.0).sum();
    let (text, (mass, _)) = groups.into_iter().max_by(|a, b| {
        a.1 .0
            .total_cmp(&b.1 .0)
            .then(a.1 .1.cmp(&b.1 .1))
            .then(b.0.cmp(&a.0))
    })?;
    let score = if total > 0.0 { mass / total } else { 0.0 };
    Some(VoteResult { text, score })
}

/// Lowercase hex SHA-256 of `salt || text`.
pub fn hash_plate(text: &str, salt: &[u8]) -> Result<String, PlateError> {
    if salt.len() < MIN_SALT_LEN {
        return Err(PlateError::WeakSalt(salt.len()));
    }
    let mut h = Sha256::new();
    h.update(salt);
    h.update(text.as_bytes());
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateConfig {
    pub grammar: PlateGrammar,
    /// Readings kept per ballot.
    pub t_vote: usize,
    pub min_readings: usize,
}

impl Default for PlateConfig {
    fn default() -> Self {
        Self { grammar: PlateGrammar::default(), t_vote: 7, min_readings: 3 }
    }
}

impl PlateConfig {
    pub fn from_json(text: &str) -> Result<Self, PlateError> {
        serde_json::from_str(text).map_err(|e| PlateError::Json(e.to_string()))
    }
}
