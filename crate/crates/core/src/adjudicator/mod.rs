//! LLM querying, verdict parsing, self-consistency voting and scoring.

mod client;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reportgen::PromptBundle;

pub use client::{ChatClient, ChatMessage, ChatRequest, ClientError, HttpClient, MockClient};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictValue {
    FalseAlarm,
    RealBug,
    Unknown,
}

impl VerdictValue {
    pub const ALL: [VerdictValue; 3] = [VerdictValue::FalseAlarm, VerdictValue::RealBug, VerdictValue::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictValue::FalseAlarm => "false_alarm",
            VerdictValue::RealBug => "real_bug",
            VerdictValue::Unknown => "unknown",
        }
    }

    /// The marker text a response uses for this value.
    pub fn marker(self) -> &'static str {
        match self {
            VerdictValue::FalseAlarm => "FALSE ALARM",
            VerdictValue::RealBug => "REAL BUG",
            VerdictValue::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for VerdictValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerdictValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "false_alarm" => Ok(VerdictValue::FalseAlarm),
            "real_bug" => Ok(VerdictValue::RealBug),
            "unknown" => Ok(VerdictValue::Unknown),
            _ => Err(format!("unknown verdict `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub rationale: String,
    pub raw: String,
}

/// Reads the `VERDICT: ...` marker lines of a response. No marker, an
/// unreadable marker or markers that disagree give `unknown`.
pub fn parse_verdict(raw: &str) -> Verdict {
    let mut found: Vec<(usize, Option<VerdictValue>)> = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let t = line.trim().trim_start_matches(['*', '#', '>', '-', '`', '_', ' ']);
        if !t.get(..7).is_some_and(|h| h.eq_ignore_ascii_case("verdict")) {
            continue;
        }
        let Some(rest) = t[7..].trim_start_matches(['*', '_', ' ']).strip_prefix(':') else { continue };
        let body = rest.trim().trim_matches(['*', '`', '_', '.', '"', '\'', ' ']);
        let words: Vec<&str> = body.split_whitespace().collect();
        found.push((i, words.join(" ").parse().ok()));
    }
    let value = match found.split_first() {
        Some(((_, Some(v)), rest)) if rest.iter().all(|(_, w)| *w == Some(*v)) => *v,
        _ => VerdictValue::Unknown,
    };
    let rationale = match found.first() {
        Some((i, _)) => raw.lines().take(*i).collect::<Vec<_>>().join("\n").trim().to_string(),
        None => raw.trim().to_string(),
    };
    Verdict { value, rationale, raw: raw.to_string() }
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("cannot vote on an empty ballot")]
pub struct EmptyBallot;

/// Most frequent value; a tie for first place gives `unknown`.
pub fn majority_vote(ballot: &[VerdictValue]) -> Result<VerdictValue, EmptyBallot> {
    if ballot.is_empty() {
        return Err(EmptyBallot);
    }
    let mut counts: BTreeMap<VerdictValue, usize> = BTreeMap::new();
    for v in ballot {
        *counts.entry(*v).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or_default();
    let mut leaders = counts.iter().filter(|(_, c)| **c == top).map(|(v, _)| *v);
    match (leaders.next(), leaders.next()) {
        (Some(v), None) => Ok(v),
        _ => Ok(VerdictValue::Unknown),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Buggy,
    NotBuggy,
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "buggy" | "bug" | "true_positive" | "tp" => Ok(Label::Buggy),
            "not_buggy" | "clean" | "false_positive" | "fp" => Ok(Label::NotBuggy),
            _ => Err(format!("unknown label `{s}` (buggy, not_buggy)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoredItem {
    pub label: Label,
    pub final_value: VerdictValue,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    /// Buggy items count as positives: confirming one is a TP, dismissing
    /// it or answering unknown is an FN. For clean items a dismissal is a
    /// TN, anything else an FP.
    pub fn record(&mut self, label: Label, final_value: VerdictValue) {
        match (label, final_value) {
            (Label::Buggy, VerdictValue::RealBug) => self.tp += 1,
            (Label::Buggy, _) => self.fn_ += 1,
            (Label::NotBuggy, VerdictValue::FalseAlarm) => self.tn += 1,
            (Label::NotBuggy, _) => self.fp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

pub fn score(items: &[ScoredItem]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for it in items {
        m.record(it.label, it.final_value);
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("transport failed after {attempts} attempt(s): {message}")]
pub struct TransportError {
    pub attempts: u32,
    pub message: String,
    /// False when the endpoint rejected the request outright.
    pub retryable: bool,
}

/// Chat messages for a bundle: system, shots as user/assistant pairs, then
/// the report.
pub fn bundle_messages(bundle: &PromptBundle) -> Vec<ChatMessage> {
    let mut out = vec![ChatMessage::new("system", &bundle.system)];
    for s in &bundle.shots {
        out.push(ChatMessage::new("user", &s.question));
        out.push(ChatMessage::new("assistant", &s.answer));
    }
    out.push(ChatMessage::new("user", &bundle.user));
    out
}

/// Requests `n_samples` completions, retrying with exponential backoff. A
/// batch with the wrong number of responses counts as a failed attempt.
pub fn query_llm(bundle: &PromptBundle, client: &dyn ChatClient, policy: RetryPolicy) -> Result<Vec<String>, TransportError> {
    let n = bundle.decode.n_samples.max(1);
    let request = ChatRequest { messages: bundle_messages(bundle), n, temperature: bundle.decode.temperature };
    let attempts = policy.attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        match client.complete(&request) {
            Ok(r) if r.len() == n as usize => return Ok(r),
            Ok(r) => last = format!("partial batch: {} of {n} responses", r.len()),
            Err(ClientError::Rejected(m)) => return Err(TransportError { attempts: attempt, message: m, retryable: false }),
            Err(ClientError::Transport(m)) => last = m,
        }
        log::debug!("attempt {attempt}/{attempts} failed: {last}");
        if attempt < attempts {
            std::thread::sleep(policy.base_delay * 2u32.saturating_pow(attempt - 1));
        }
    }
    Err(TransportError { attempts, message: last, retryable: true })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub votes: Vec<Verdict>,
    #[serde(rename = "final")]
    pub final_value: VerdictValue,
}

/// Queries, parses every sample and votes.
pub fn adjudicate(bundle: &PromptBundle, client: &dyn ChatClient, policy: RetryPolicy) -> Result<Adjudication, TransportError> {
    let raw = query_llm(bundle, client, policy)?;
    let votes: Vec<Verdict> = raw.iter().map(|r| parse_verdict(r)).collect();
    let ballot: Vec<VerdictValue> = votes.iter().map(|v| v.value).collect();
    let final_value = majority_vote(&ballot).expect("query_llm returns at least one response");
    Ok(Adjudication { votes, final_value })
}
