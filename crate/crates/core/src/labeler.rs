//! Short human-readable topic labels from a chat-completions endpoint,
//! with a deterministic keyword fallback.

use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::embedder::API_KEY_ENV;
use crate::topics::{Topic, TopicModel};

pub const PROMPT_VERSION: &str = "label-v1";
const SYSTEM_TEMPLATE: &str = include_str!("../prompts/label-v1.system.txt");
const USER_TEMPLATE: &str = include_str!("../prompts/label-v1.user.txt");

/// Label given to sentences left in the noise class.
pub const OUTLIER_LABEL: &str = "Unlabelled";
const MAX_EXAMPLES: usize = 3;
const FALLBACK_KEYWORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_label_words: usize,
    pub attempts: usize,
    pub offline: bool,
    pub timeout_secs: u64,
    pub concurrency: usize,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:8080".into(),
            model_name: "llama-3-8b-instruct".into(),
            temperature: 0.0,
            max_label_words: 5,
            attempts: 2,
            offline: false,
            timeout_secs: 60,
            concurrency: 4,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err("labeler temperature must be >= 0".into());
        }
        if self.attempts == 0 {
            return Err("labeler attempts must be >= 1".into());
        }
        if self.max_label_words == 0 {
            return Err("max_label_words must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

pub trait ChatClient: Send + Sync {
    /// Returns the assistant message text.
    fn complete(&self, request: &ChatRequest) -> Result<String, String>;
}

pub struct HttpChatClient {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

impl HttpChatClient {
    pub fn new(cfg: &LabelerConfig) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            client,
            url: format!("{}/v1/chat/completions", cfg.endpoint_url.trim_end_matches('/')),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, String> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "response has no choices".to_string())
    }
}

/// The request for one topic: a pure function of its keywords, the
/// example sentences and the template version.
pub fn build_request(topic: &Topic, sentences: &[&str], cfg: &LabelerConfig) -> ChatRequest {
    let keywords = topic.keyword_terms().join(", ");
    let examples: Vec<String> = topic
        .representatives
        .iter()
        .filter_map(|&i| sentences.get(i))
        .take(MAX_EXAMPLES)
        .map(|s| format!("- {s}"))
        .collect();
    let system = SYSTEM_TEMPLATE
        .trim_end()
        .replace("{max_label_words}", &cfg.max_label_words.to_string());
    let user = USER_TEMPLATE
        .trim_end()
        .replace("{keywords}", &keywords)
        .replace("{examples}", &examples.join("\n"));
    ChatRequest {
        model: cfg.model_name.clone(),
        temperature: cfg.temperature,
        messages: vec![
            ChatMessage { role: "system".into(), content: system },
            ChatMessage { role: "user".into(), content: user },
        ],
    }
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
        None => String::new(),
    }
}

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '`' | '\u{201C}' | '\u{201D}' | '\u{2018}' | '\u{2019}' | '\u{00AB}' | '\u{00BB}')
}

/// Title-cased words with surrounding punctuation removed, at most
/// `max_words` of them.
fn clean_words(text: &str, max_words: usize) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .take(max_words)
        .map(title_case)
        .collect()
}

/// Cleans a raw completion: first non-empty line, quotes and punctuation
/// stripped, title-cased, truncated. `None` if nothing is left.
pub fn post_process(raw: &str, max_words: usize) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let unquoted: String = line.chars().filter(|&c| !is_quote(c)).collect();
    let words = clean_words(&unquoted, max_words);
    (!words.is_empty()).then(|| words.join(" "))
}

/// Top keywords joined and title-cased.
pub fn fallback_label(topic: &Topic, max_words: usize) -> String {
    let joined = topic.keyword_terms().into_iter().take(FALLBACK_KEYWORDS).collect::<Vec<_>>().join(" ");
    let words = clean_words(&joined, max_words);
    if words.is_empty() {
        format!("Topic {}", topic.id)
    } else {
        words.join(" ")
    }
}

pub fn label_topic(topic: &Topic, sentences: &[&str], cfg: &LabelerConfig, client: Option<&dyn ChatClient>) -> String {
    let Some(client) = client.filter(|_| !cfg.offline) else {
        return fallback_label(topic, cfg.max_label_words);
    };
    let request = build_request(topic, sentences, cfg);
    for attempt in 1..=cfg.attempts {
        match client.complete(&request) {
            Ok(raw) => match post_process(&raw, cfg.max_label_words) {
                Some(label) => return label,
                None => warn!("topic {}: attempt {attempt} returned an unusable label {raw:?}", topic.id),
            },
            Err(e) => warn!("topic {}: attempt {attempt} failed: {e}", topic.id),
        }
    }
    warn!("topic {}: falling back to keywords", topic.id);
    fallback_label(topic, cfg.max_label_words)
}

/// Labels every topic, up to `cfg.concurrency` requests at a time. Labels
/// are assigned by topic id whatever the completion order.
pub fn label_all(model: &TopicModel, sentences: &[&str], cfg: &LabelerConfig, client: Option<&dyn ChatClient>) -> TopicModel {
    let mut out = model.clone();
    if out.topics.is_empty() {
        return out;
    }
    let width = cfg.concurrency.max(1);
    let labels: Vec<String> = std::thread::scope(|s| {
        let mut labels = Vec::with_capacity(model.topics.len());
        for chunk in model.topics.chunks(width) {
            let handles: Vec<_> = chunk
                .iter()
                .map(|t| s.spawn(move || label_topic(t, sentences, cfg, client)))
                .collect();
            labels.extend(handles.into_iter().map(|h| h.join().expect("labelling thread panicked")));
        }
        labels
    });
    for (t, l) in out.topics.iter_mut().zip(labels) {
        t.label = l;
    }
    out
}
