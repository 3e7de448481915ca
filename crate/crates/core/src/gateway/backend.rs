use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{CallSite, ChatRequest, ChatResponse, GatewayError, GenerationRecord, TransportStatus, Usage};

/// A chat-completion endpoint. Implementations are shared between sessions.
pub trait Backend: Send + Sync {
    fn complete(&self, site: CallSite, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// File stem for a call site: `step3_attempt1`, or `step4_batch2_attempt1`
/// for batches after the first.
pub fn response_name(site: CallSite) -> String {
    if site.batch == 0 {
        format!("step{}_attempt{}", site.step.number(), site.attempt)
    } else {
        format!("step{}_batch{}_attempt{}", site.step.number(), site.batch + 1, site.attempt)
    }
}

#[derive(Debug, Clone, Default)]
struct ResponseSet {
    responses: HashMap<String, String>,
    usage: HashMap<String, Usage>,
}

impl ResponseSet {
    fn read_dir(dir: &Path) -> Result<Self, GatewayError> {
        let entries = fs::read_dir(dir).map_err(|e| GatewayError::Fixture(format!("{}: {e}", dir.display())))?;
        let mut set = ResponseSet::default();
        for entry in entries {
            let path = entry.map_err(|e| GatewayError::Fixture(e.to_string()))?.path();
            let (Some(stem), Some("txt")) = (
                path.file_stem().and_then(|s| s.to_str()),
                path.extension().and_then(|s| s.to_str()),
            ) else {
                continue;
            };
            if !stem.starts_with("step") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
            set.responses.insert(stem.to_owned(), text);
        }
        let usage_path = dir.join("usage.tsv");
        if usage_path.exists() {
            let text = fs::read_to_string(&usage_path).map_err(|e| GatewayError::Fixture(e.to_string()))?;
            set.usage = parse_usage(&text)?;
        }
        Ok(set)
    }

    fn get(&self, name: &str) -> Option<ChatResponse> {
        self.responses.get(name).map(|content| ChatResponse {
            content: content.clone(),
            usage: self.usage.get(name).copied().unwrap_or_default(),
        })
    }
}

fn parse_usage(text: &str) -> Result<HashMap<String, Usage>, GatewayError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("response")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || GatewayError::Fixture(format!("usage.tsv line {}: expected response, prompt_tokens, completion_tokens", i + 1));
        if cols.len() != 3 {
            return Err(bad());
        }
        let prompt_tokens = cols[1].trim().parse().map_err(|_| bad())?;
        let completion_tokens = cols[2].trim().parse().map_err(|_| bad())?;
        out.insert(cols[0].trim().to_owned(), Usage { prompt_tokens, completion_tokens });
    }
    Ok(out)
}

/// Canned responses keyed by call site. A missing repair attempt falls back
/// to the step's first attempt, so a fixture only needs one file per step.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    set: ResponseSet,
}

impl FixtureBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(FixtureBackend { set: ResponseSet::read_dir(dir.as_ref())? })
    }

    /// Builds a fixture from `(response name, content)` pairs.
    pub fn from_responses<I, K, V>(responses: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let responses = responses.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        FixtureBackend { set: ResponseSet { responses, usage: HashMap::new() } }
    }

    pub fn with_usage(mut self, name: impl Into<String>, usage: Usage) -> Self {
        self.set.usage.insert(name.into(), usage);
        self
    }
}

impl Backend for FixtureBackend {
    fn complete(&self, site: CallSite, _request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let name = response_name(site);
        self.set
            .get(&name)
            .or_else(|| self.set.get(&response_name(CallSite { attempt: 1, ..site })))
            .ok_or(GatewayError::Transport { status: TransportStatus::NotFound(name), attempts: 1 })
    }
}

/// Strict playback of a recorded run: every call site must have its own
/// recorded response.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    set: ResponseSet,
}

impl ReplayBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(ReplayBackend { set: ResponseSet::read_dir(dir.as_ref())? })
    }

    pub fn from_records(records: &[GenerationRecord]) -> Self {
        let mut set = ResponseSet::default();
        for (name, content, usage) in record_entries(records) {
            set.responses.insert(name.clone(), content);
            set.usage.insert(name, usage);
        }
        ReplayBackend { set }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, site: CallSite, _request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let name = response_name(site);
        self.set
            .get(&name)
            .ok_or(GatewayError::Transport { status: TransportStatus::NotFound(name), attempts: 1 })
    }
}

fn record_entries(records: &[GenerationRecord]) -> Vec<(String, String, Usage)> {
    let mut out = Vec::new();
    for r in records {
        let mut prompt = r.prompt_tokens;
        let mut completion = r.completion_tokens;
        for (i, rej) in r.rejected.iter().enumerate() {
            let site = CallSite { step: r.step, batch: r.batch, attempt: i as u8 + 1 };
            prompt = prompt.saturating_sub(rej.prompt_tokens);
            completion = completion.saturating_sub(rej.completion_tokens);
            out.push((
                response_name(site),
                rej.raw_response.clone(),
                Usage { prompt_tokens: rej.prompt_tokens, completion_tokens: rej.completion_tokens },
            ));
        }
        let site = CallSite { step: r.step, batch: r.batch, attempt: r.attempts };
        out.push((response_name(site), r.raw_response.clone(), Usage { prompt_tokens: prompt, completion_tokens: completion }));
    }
    out
}

/// Writes generation records as a replay directory readable by
/// [`ReplayBackend::open`]. Later records for the same call site win.
pub fn write_replay_dir(records: &[GenerationRecord], dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut usage: Vec<(String, Usage)> = Vec::new();
    for (name, content, u) in record_entries(records) {
        fs::write(dir.join(format!("{name}.txt")), content)?;
        usage.retain(|(n, _)| n != &name);
        usage.push((name, u));
    }
    let mut tsv = String::from("response\tprompt_tokens\tcompletion_tokens\n");
    for (name, u) in usage {
        tsv.push_str(&format!("{name}\t{}\t{}\n", u.prompt_tokens, u.completion_tokens));
    }
    fs::write(dir.join("usage.tsv"), tsv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Step;
    use crate::gateway::{build_prompt, GenerationConfig, PromptContext};

    fn request() -> ChatRequest {
        let ctx = PromptContext { profession: "Academic staff", ..Default::default() };
        build_prompt(Step::ObjectTypes, &ctx, &GenerationConfig::default()).unwrap()
    }

    fn site(step: Step, attempt: u8) -> CallSite {
        CallSite { step, batch: 0, attempt }
    }

    #[test]
    fn names_follow_the_directory_convention() {
        assert_eq!(response_name(site(Step::Objects, 1)), "step3_attempt1");
        assert_eq!(response_name(CallSite { step: Step::Events, batch: 1, attempt: 2 }), "step4_batch2_attempt2");
    }

    #[test]
    fn fixture_reads_dir_and_usage() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("step1_attempt1.txt"), "[\"a\"]").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        fs::write(dir.path().join("usage.tsv"), "response\tprompt_tokens\tcompletion_tokens\nstep1_attempt1\t120\t30\n").unwrap();
        let backend = FixtureBackend::open(dir.path()).unwrap();
        let resp = backend.complete(site(Step::ObjectTypes, 1), &request()).unwrap();
        assert_eq!(resp.content, "[\"a\"]");
        assert_eq!(resp.usage, Usage { prompt_tokens: 120, completion_tokens: 30 });
        // repair attempt falls back to the canned response
        assert!(backend.complete(site(Step::ObjectTypes, 2), &request()).is_ok());
        assert!(matches!(
            backend.complete(site(Step::Activities, 1), &request()),
            Err(GatewayError::Transport { status: TransportStatus::NotFound(_), .. })
        ));
    }

    #[test]
    fn replay_is_strict() {
        let backend = ReplayBackend::from_records(&[]);
        let err = backend.complete(site(Step::Activities, 1), &request()).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { status: TransportStatus::NotFound(n), .. } if n == "step2_attempt1"));
    }

    #[test]
    fn bad_usage_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("usage.tsv"), "step1_attempt1\tmany\t3\n").unwrap();
        assert!(matches!(FixtureBackend::open(dir.path()), Err(GatewayError::Fixture(_))));
        assert!(matches!(FixtureBackend::open(dir.path().join("absent")), Err(GatewayError::Fixture(_))));
    }
}
