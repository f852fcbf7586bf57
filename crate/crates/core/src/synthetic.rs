//! Seeded synthetic corpus with keyword-disjoint themes, used for
//! end-to-end checks and demos.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Condition, Corpus, Report};

pub const THEME_KEY: &str = "theme";

pub const THEMES: [(&str, [&str; 20]); 6] = [
    (
        "visual",
        [
            "colours", "geometric", "patterns", "kaleidoscope", "spirals", "hexagons", "violet", "crimson", "mosaic",
            "fractal", "symmetry", "tunnels", "lattice", "prism", "turquoise", "shimmering", "mandala", "stripes",
            "flickering", "vivid",
        ],
    ),
    (
        "calm",
        [
            "calm", "peaceful", "serene", "relaxed", "tranquil", "soothing", "gentle", "restful", "quietness",
            "stillness", "contentment", "unwinding", "placid", "mellow", "composure", "settled", "breathing",
            "softness", "lull", "harmony",
        ],
    ),
    (
        "bodily",
        [
            "body", "tingling", "limbs", "heavy", "floating", "hands", "chest", "heartbeat", "skin", "shoulders",
            "numbness", "vibration", "muscles", "spine", "weightless", "fingertips", "stomach", "pressure", "warmth",
            "trembling",
        ],
    ),
    (
        "memory",
        [
            "childhood", "memories", "grandmother", "school", "home", "garden", "holidays", "summer", "family",
            "younger", "nostalgia", "photographs", "birthday", "village", "kitchen", "brother", "seaside", "toys",
            "remembered", "hometown",
        ],
    ),
    (
        "spiritual",
        [
            "spiritual", "divine", "universe", "soul", "cosmic", "eternity", "sacred", "transcendent", "oneness",
            "infinite", "god", "heaven", "angelic", "enlightenment", "consciousness", "prayer", "awakening",
            "mystical", "afterlife", "presence",
        ],
    ),
    (
        "sound",
        [
            "music", "sounds", "rhythm", "melody", "drums", "humming", "bass", "echoes", "frequencies", "chords",
            "tones", "beats", "singing", "orchestra", "choir", "volume", "headphones", "notes", "pulsing",
            "resonance",
        ],
    ),
];

/// Filler is stopwords only, so theme words carry all the signal.
const TEMPLATES: [&str; 6] = [
    "The {0} and {1} with {2} {3}.",
    "There was {0} with {1} and {2}.",
    "Then {0} {1} into {2} {3}.",
    "It was all {0} {1} and {2}.",
    "So {0}, {1} and {2} {3}.",
    "After {0} then {1} {2}.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub sentences_per_theme: usize,
    pub sentences_per_report: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            sentences_per_theme: 100,
            sentences_per_report: 4,
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
    let picked: Vec<&str> = words.choose_multiple(rng, 4).copied().collect();
    let mut s = template.to_string();
    for (k, w) in picked.iter().enumerate() {
        s = s.replace(&format!("{{{k}}}"), w);
    }
    let mut chars = s.chars();
    chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or(s)
}

/// Reports that each draw all their sentences from one theme. The theme
/// name is stored under `metadata["theme"]`; conditions alternate HS/DL.
pub fn generate(spec: &SyntheticSpec) -> Vec<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_report = spec.sentences_per_report.max(1);
    let mut reports = Vec::new();
    for (name, words) in THEMES.iter() {
        let mut left = spec.sentences_per_theme;
        while left > 0 {
            let k = left.min(per_report);
            let text = (0..k).map(|_| sentence(&mut rng, words)).collect::<Vec<_>>().join(" ");
            reports.push((name.to_string(), text));
            left -= k;
        }
    }
    reports.shuffle(&mut rng);
    reports
        .into_iter()
        .enumerate()
        .map(|(i, (theme, text))| Report {
            id: format!("syn-{:04}", i + 1),
            condition: if i % 2 == 0 { Condition::Hs } else { Condition::Dl },
            text,
            metadata: BTreeMap::from([(THEME_KEY.to_string(), theme)]),
        })
        .collect()
}

pub fn write_jsonl<W: Write>(reports: &[Report], mut w: W) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Generator theme of every sentence, via its report's metadata.
pub fn sentence_themes(corpus: &Corpus) -> Vec<Option<String>> {
    let by_id: BTreeMap<&str, &Report> = corpus.reports.iter().map(|r| (r.id.as_str(), r)).collect();
    corpus
        .sentences
        .iter()
        .map(|s| by_id.get(s.report_id.as_str()).and_then(|r| r.metadata.get(THEME_KEY).cloned()))
        .collect()
}

/// Fraction of non-outlier points whose cluster's majority theme equals
/// their own theme.
pub fn purity(labels: &[i32], truth: &[Option<String>]) -> f64 {
    let mut table: BTreeMap<i32, BTreeMap<&str, usize>> = BTreeMap::new();
    let mut total = 0usize;
    for (&l, t) in labels.iter().zip(truth) {
        if l < 0 {
            continue;
        }
        total += 1;
        *table.entry(l).or_default().entry(t.as_deref().unwrap_or("")).or_insert(0) += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let majority: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{is_stopword, tokenize};
    use std::collections::BTreeSet;

    #[test]
    fn themes_are_disjoint_content_words() {
        let mut all = BTreeSet::new();
        for (_, words) in THEMES.iter() {
            for w in words {
                assert!(!is_stopword(w), "{w}");
                assert_eq!(tokenize(w), vec![w.to_string()]);
                assert!(all.insert(*w), "duplicate {w}");
            }
        }
    }

    #[test]
    fn default_corpus_has_600_sentences() {
        let reports = generate(&SyntheticSpec::default());
        let (corpus, summary) = Corpus::from_reports(reports).unwrap();
        assert_eq!(summary.dropped_empty + summary.dropped_no_sentences, 0);
        assert_eq!(corpus.sentences.len(), 600);
        let themes = sentence_themes(&corpus);
        for (name, _) in THEMES.iter() {
            assert_eq!(themes.iter().filter(|t| t.as_deref() == Some(*name)).count(), 100);
        }
    }

    #[test]
    fn template_filler_is_stopwords() {
        for t in TEMPLATES {
            let filler: String = t.split(|c: char| c == '{' || c == '}').step_by(2).collect::<Vec<_>>().join(" ");
            assert!(tokenize(&filler).is_empty(), "{t}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&SyntheticSpec::default());
        assert_eq!(a, generate(&SyntheticSpec::default()));
        assert_ne!(a, generate(&SyntheticSpec { seed: 8, ..Default::default() }));
    }

    #[test]
    fn purity_counts_majorities() {
        let t = |s: &str| Some(s.to_string());
        let truth = vec![t("a"), t("a"), t("b"), t("b"), t("a")];
        assert_eq!(purity(&[0, 0, 1, 1, -1], &truth), 1.0);
        assert_eq!(purity(&[0, 0, 0, 1, -1], &truth), 0.75);
    }
}
