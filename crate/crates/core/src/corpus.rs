//! Report ingestion and rule-based sentence segmentation.
//!
//! Sentences are the unit of analysis for every later stage, so the
//! segmentation rules here are fixed and deterministic:
//!
//! * `.`, `!` and `?` end a sentence when followed by whitespace or the end
//!   of the text (closing quotes and brackets stay attached to the sentence);
//! * a newline always ends a sentence;
//! * a single `.` after one of [`ABBREVIATIONS`] or after a lone capital
//!   letter (an initial such as `J.`) does not end a sentence;
//! * an ellipsis (`...` or `…`) ends a sentence only when followed by
//!   whitespace and an uppercase letter.
//!
//! Text is NFC-normalised and runs of whitespace collapse to single spaces
//! before the rules are applied.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Tokens that never end a sentence when followed by a period.
pub const ABBREVIATIONS: [&str; 7] = ["e.g.", "i.e.", "etc.", "dr.", "mr.", "mrs.", "vs."];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    FileNotFound(String),
    #[error("format error at line {line}: {message}")]
    FormatError { line: usize, message: String },
    #[error("duplicate report id `{0}`")]
    DuplicateId(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Hs,
    Dl,
    #[default]
    Other,
}

impl Condition {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_uppercase().as_str() {
            "HS" => Condition::Hs,
            "DL" => Condition::Dl,
            _ => Condition::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub condition: Condition,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub report_id: String,
    /// Position within the report, contiguous from zero.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Corpus {
    pub reports: Vec<Report>,
    pub sentences: Vec<SentenceUnit>,
}

/// Counts of reports dropped while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LoadSummary {
    pub rows_read: usize,
    pub dropped_empty: usize,
    pub dropped_no_sentences: usize,
}

impl Corpus {
    /// Builds a corpus from reports, segmenting each one. Reports with empty
    /// text or no sentences are dropped and counted.
    pub fn from_reports(
        reports: impl IntoIterator<Item = Report>,
    ) -> Result<(Self, LoadSummary), CorpusError> {
        let mut summary = LoadSummary::default();
        let mut seen = HashSet::new();
        let mut corpus = Corpus::default();
        for report in reports {
            summary.rows_read += 1;
            if !seen.insert(report.id.clone()) {
                return Err(CorpusError::DuplicateId(report.id));
            }
            if report.text.trim().is_empty() {
                summary.dropped_empty += 1;
                continue;
            }
            let parts = split_sentences(&report.text);
            if parts.is_empty() {
                summary.dropped_no_sentences += 1;
                continue;
            }
            corpus
                .sentences
                .extend(parts.into_iter().enumerate().map(|(index, text)| SentenceUnit {
                    report_id: report.id.clone(),
                    index,
                    text,
                }));
            corpus.reports.push(report);
        }
        if summary.dropped_empty + summary.dropped_no_sentences > 0 {
            log::warn!(
                "dropped {} empty reports and {} reports without sentences",
                summary.dropped_empty,
                summary.dropped_no_sentences
            );
        }
        Ok((corpus, summary))
    }

    pub fn sentence_texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.text.as_str()).collect()
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<(Corpus, LoadSummary), CorpusError> {
    if !path.exists() {
        return Err(CorpusError::FileNotFound(path.display().to_string()));
    }
    let raw = fs::read_to_string(path)?;
    let reports = match format {
        CorpusFormat::Jsonl => parse_jsonl(&raw)?,
        CorpusFormat::Csv => parse_csv(&raw)?,
    };
    Corpus::from_reports(reports)
}

fn value_to_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn parse_jsonl(raw: &str) -> Result<Vec<Report>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CorpusError::FormatError {
                line: lineno,
                message: e.to_string(),
            })?;
        let serde_json::Value::Object(mut obj) = value else {
            return Err(CorpusError::FormatError {
                line: lineno,
                message: "expected a JSON object".into(),
            });
        };
        let id = match obj.remove("id") {
            Some(serde_json::Value::String(s)) => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                return Err(CorpusError::FormatError {
                    line: lineno,
                    message: "missing string key `id`".into(),
                })
            }
        };
        let text = match obj.remove("text") {
            Some(serde_json::Value::String(s)) => s,
            _ => {
                return Err(CorpusError::FormatError {
                    line: lineno,
                    message: "missing string key `text`".into(),
                })
            }
        };
        let condition = obj
            .remove("condition")
            .map(|c| Condition::parse(&value_to_string(&c)))
            .unwrap_or_default();
        let mut metadata = BTreeMap::new();
        for (k, v) in obj {
            match v {
                serde_json::Value::Object(inner) if k == "metadata" => {
                    for (ik, iv) in inner {
                        metadata.insert(ik, value_to_string(&iv));
                    }
                }
                other => {
                    metadata.insert(k, value_to_string(&other));
                }
            }
        }
        out.push(Report {
            id,
            condition,
            text,
            metadata,
        });
    }
    Ok(out)
}

pub fn parse_csv(raw: &str) -> Result<Vec<Report>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::FormatError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_col), Some(text_col)) = (col("id"), col("text")) else {
        return Err(CorpusError::FormatError {
            line: 1,
            message: "header must contain `id` and `text` columns".into(),
        });
    };
    let cond_col = col("condition");
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CorpusError::FormatError {
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let mut metadata = BTreeMap::new();
        for (j, h) in headers.iter().enumerate() {
            if j == id_col || j == text_col || Some(j) == cond_col {
                continue;
            }
            let key = h.trim().strip_prefix("metadata.").unwrap_or(h.trim());
            metadata.insert(key.to_string(), record.get(j).unwrap_or("").to_string());
        }
        out.push(Report {
            id: record.get(id_col).unwrap_or("").to_string(),
            condition: cond_col
                .and_then(|c| record.get(c))
                .map(Condition::parse)
                .unwrap_or_default(),
            text: record.get(text_col).unwrap_or("").to_string(),
            metadata,
        });
    }
    Ok(out)
}

/// NFC-normalises and collapses whitespace within each line. Lines are
/// returned separately because a newline is always a sentence boundary.
fn clean_lines(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.split(['\n', '\r'])
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect()
}

#[inline]
fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

#[inline]
fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '”' | '’' | '»')
}

/// Segments free text into sentences. Pure; see the module docs for the rules.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in clean_lines(text) {
        split_line(&line, &mut out);
    }
    out
}

fn split_line(line: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = line.chars().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminal(chars[i]) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && is_terminal(chars[i]) {
            i += 1;
        }
        let run = &chars[run_start..i];
        while i < chars.len() && is_closer(chars[i]) {
            i += 1;
        }
        let at_end = i == chars.len();
        if !at_end && !chars[i].is_whitespace() {
            continue;
        }
        let is_ellipsis = run.iter().all(|&c| c == '.' || c == '…')
            && (run.len() >= 2 || run[0] == '…');
        let boundary = if is_ellipsis {
            at_end
                || chars
                    .get(i + 1)
                    .is_some_and(|c| c.is_uppercase())
        } else if run == ['.'] {
            !is_abbreviation(&chars[start..run_start])
        } else {
            true
        };
        if boundary {
            push_segment(&chars[start..i], out);
            start = i;
        }
    }
    push_segment(&chars[start..], out);
}

/// Whether the word ending right before a period is an abbreviation or an
/// initial.
fn is_abbreviation(before: &[char]) -> bool {
    let word_start = before
        .iter()
        .rposition(|c| c.is_whitespace() || *c == '(' || *c == '"')
        .map_or(0, |p| p + 1);
    let word = &before[word_start..];
    if word.len() == 1 && word[0].is_uppercase() {
        return true;
    }
    let mut token: String = word.iter().collect::<String>().to_lowercase();
    token.push('.');
    ABBREVIATIONS.contains(&token.as_str())
}

fn push_segment(seg: &[char], out: &mut Vec<String>) {
    let s: String = seg.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_two_terminal_periods() {
        assert_eq!(
            split_sentences("I saw colours. It was calm."),
            vec!["I saw colours.", "It was calm."]
        );
    }

    #[test]
    fn empty_input_gives_no_sentences() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n\t ").is_empty());
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            split_sentences("I saw shapes, e.g. spirals and grids. Then peace."),
            vec!["I saw shapes, e.g. spirals and grids.", "Then peace."]
        );
        assert_eq!(
            split_sentences("I met Dr. Smith vs. the crowd. Fine."),
            vec!["I met Dr. Smith vs. the crowd.", "Fine."]
        );
    }

    #[test]
    fn initials_do_not_split() {
        assert_eq!(
            split_sentences("J. R. R. Tolkien came to mind. Odd."),
            vec!["J. R. R. Tolkien came to mind.", "Odd."]
        );
    }

    #[test]
    fn ellipsis_needs_uppercase_follow() {
        assert_eq!(
            split_sentences("It was like... floating. Then... Nothing"),
            vec!["It was like... floating.", "Then...", "Nothing"]
        );
        assert_eq!(split_sentences("wait… Now"), vec!["wait…", "Now"]);
        assert_eq!(split_sentences("wait… now"), vec!["wait… now"]);
    }

    #[test]
    fn newline_is_a_boundary_and_whitespace_collapses() {
        assert_eq!(
            split_sentences("first line\nsecond   line!  Third?"),
            vec!["first line", "second line!", "Third?"]
        );
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        assert_eq!(
            split_sentences("He said \"stop.\" Then silence."),
            vec!["He said \"stop.\"", "Then silence."]
        );
    }

    #[test]
    fn decimals_and_inner_dots_do_not_split() {
        assert_eq!(split_sentences("About 3.5 minutes in. Yes"), vec!["About 3.5 minutes in.", "Yes"]);
    }

    #[test]
    fn jsonl_two_rows() {
        let raw = "{\"id\":\"a\",\"text\":\"I saw colours.\"}\n{\"id\":\"b\",\"text\":\"Calm. Peace.\",\"condition\":\"DL\",\"age\":31}\n";
        let (corpus, summary) = Corpus::from_reports(parse_jsonl(raw).unwrap()).unwrap();
        assert_eq!(corpus.reports.len(), 2);
        assert_eq!(corpus.sentences.len(), 3);
        assert_eq!(summary.rows_read, 2);
        assert_eq!(corpus.reports[1].condition, Condition::Dl);
        assert_eq!(corpus.reports[1].metadata["age"], "31");
        assert_eq!(corpus.sentences[2].index, 1);
    }

    #[test]
    fn csv_missing_text_column() {
        let err = parse_csv("id,body\na,hello\n").unwrap_err();
        assert!(matches!(err, CorpusError::FormatError { line: 1, .. }));
    }

    #[test]
    fn csv_with_quotes_and_metadata() {
        let raw = "id,text,condition,metadata.session\nr1,\"Calm, so calm. Yes.\",HS,3\n";
        let reports = parse_csv(raw).unwrap();
        assert_eq!(reports[0].text, "Calm, so calm. Yes.");
        assert_eq!(reports[0].condition, Condition::Hs);
        assert_eq!(reports[0].metadata["session"], "3");
    }

    #[test]
    fn jsonl_bad_line_reports_line_number() {
        let err = parse_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{oops\n").unwrap_err();
        assert!(matches!(err, CorpusError::FormatError { line: 2, .. }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let raw = "{\"id\":\"a\",\"text\":\"x.\"}\n{\"id\":\"a\",\"text\":\"y.\"}\n";
        let err = Corpus::from_reports(parse_jsonl(raw).unwrap()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn empty_reports_dropped_and_counted() {
        let raw = "{\"id\":\"a\",\"text\":\"  \"}\n{\"id\":\"b\",\"text\":\"ok.\"}\n";
        let (corpus, summary) = Corpus::from_reports(parse_jsonl(raw).unwrap()).unwrap();
        assert_eq!(corpus.reports.len(), 1);
        assert_eq!(summary.dropped_empty, 1);
    }

    #[test]
    fn missing_file() {
        let err = load_corpus(Path::new("/nonexistent/x.jsonl"), CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::FileNotFound(_)));
    }

    fn non_ws_sorted(s: &str) -> Vec<char> {
        let mut v: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        v.sort_unstable();
        v
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("e.g."), Just("Dr."), Just("..."), Just("…"), Just(". "), Just("! "),
                Just("? "), Just("\n"), Just(" "), Just("A."), Just("word"), Just("Calm"),
                Just("\""), Just("3.5"), Just("été"), Just("x"),
            ],
            0..40,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn split_is_deterministic(s in text_strategy()) {
            prop_assert_eq!(split_sentences(&s), split_sentences(&s));
        }

        #[test]
        fn split_preserves_non_whitespace(s in text_strategy()) {
            let joined = split_sentences(&s).join(" ");
            prop_assert_eq!(non_ws_sorted(&joined), non_ws_sorted(&s));
        }

        #[test]
        fn segments_are_trimmed_and_non_empty(s in text_strategy()) {
            for seg in split_sentences(&s) {
                prop_assert!(!seg.is_empty());
                prop_assert_eq!(seg.trim(), seg.as_str());
            }
        }

        #[test]
        fn appending_exclamation_adds_one(s in text_strategy()) {
            let s = s.trim().to_string();
            prop_assume!(!s.is_empty());
            let before = split_sentences(&s).len();
            let after = split_sentences(&format!("{s}! More.")).len();
            prop_assert_eq!(after, before + 1);
        }
    }
}
