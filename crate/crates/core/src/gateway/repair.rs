use chrono::Utc;

use super::{
    Backend, CallSite, ChatRequest, ChatResponse, GatewayError, GenerationRecord, ParseError, Parsed,
    RejectedAttempt,
};
use crate::domain::Step;

/// Session-wide token ceiling. Requests are refused when the tokens already
/// spent plus a rough estimate of the prompt would pass the ceiling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenBudget {
    pub ceiling: Option<u64>,
    pub spent: u64,
}

impl TokenBudget {
    pub fn new(ceiling: Option<u64>, spent: u64) -> Self {
        TokenBudget { ceiling, spent }
    }

    /// Roughly four characters per token.
    pub fn estimate(request: &ChatRequest) -> u64 {
        ((request.system_text.len() + request.user_text.len()) as u64).div_ceil(4)
    }

    fn check(&self, request: &ChatRequest) -> Result<(), GatewayError> {
        if let Some(ceiling) = self.ceiling {
            let requested = Self::estimate(request);
            if self.spent + requested > ceiling {
                return Err(GatewayError::BudgetExceeded { ceiling, spent: self.spent, requested });
            }
        }
        Ok(())
    }

    fn charge(&mut self, response: &ChatResponse) {
        self.spent += response.usage.prompt_tokens + response.usage.completion_tokens;
    }
}

fn call(
    backend: &dyn Backend,
    site: CallSite,
    request: &ChatRequest,
    budget: &mut TokenBudget,
) -> Result<ChatResponse, GatewayError> {
    budget.check(request)?;
    let response = backend.complete(site, request)?;
    budget.charge(&response);
    Ok(response)
}

fn repair_request(request: &ChatRequest, error: &ParseError) -> ChatRequest {
    let mut repaired = request.clone();
    repaired.user_text.push_str(&format!(
        "\n\nYour previous response could not be parsed: {error}. Reply again with only the JSON array in the required shape."
    ));
    repaired
}

/// Sends `request` and parses the reply. A parse failure triggers exactly one
/// repair attempt with the error appended to the user text; a second failure
/// is returned as [`GatewayError::ParseFailed`] carrying both responses.
pub fn generate_with_repair<T>(
    step: Step,
    batch: usize,
    request: ChatRequest,
    backend: &dyn Backend,
    budget: &mut TokenBudget,
    parse: impl Fn(&str) -> Result<Parsed<T>, ParseError>,
) -> Result<(Parsed<T>, GenerationRecord), GatewayError> {
    let first = call(backend, CallSite { step, batch, attempt: 1 }, &request, budget)?;
    let error = match parse(&first.content) {
        Ok(parsed) => {
            let record = GenerationRecord {
                step,
                batch,
                request,
                raw_response: first.content,
                prompt_tokens: first.usage.prompt_tokens,
                completion_tokens: first.usage.completion_tokens,
                attempts: 1,
                rejected: Vec::new(),
                created_at: Utc::now(),
            };
            return Ok((parsed, record));
        }
        Err(e) => e,
    };

    let retry = repair_request(&request, &error);
    let second = call(backend, CallSite { step, batch, attempt: 2 }, &retry, budget)?;
    match parse(&second.content) {
        Ok(parsed) => {
            let record = GenerationRecord {
                step,
                batch,
                request,
                raw_response: second.content,
                prompt_tokens: first.usage.prompt_tokens + second.usage.prompt_tokens,
                completion_tokens: first.usage.completion_tokens + second.usage.completion_tokens,
                attempts: 2,
                rejected: vec![RejectedAttempt {
                    raw_response: first.content,
                    prompt_tokens: first.usage.prompt_tokens,
                    completion_tokens: first.usage.completion_tokens,
                    error: error.to_string(),
                }],
                created_at: Utc::now(),
            };
            Ok((parsed, record))
        }
        Err(e) => Err(GatewayError::ParseFailed { step, error: e, responses: vec![first.content, second.content] }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{build_prompt, parse_labels, FixtureBackend, GenerationConfig, PromptContext, Usage};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting<B> {
        inner: B,
        calls: AtomicUsize,
    }

    impl<B: Backend> Backend for Counting<B> {
        fn complete(&self, site: CallSite, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(site, request)
        }
    }

    fn counting(pairs: &[(&str, &str)]) -> Counting<FixtureBackend> {
        Counting {
            inner: FixtureBackend::from_responses(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())))
                .with_usage("step1_attempt1", Usage { prompt_tokens: 100, completion_tokens: 10 })
                .with_usage("step1_attempt2", Usage { prompt_tokens: 120, completion_tokens: 12 }),
            calls: AtomicUsize::new(0),
        }
    }

    fn request() -> ChatRequest {
        let ctx = PromptContext { profession: "Academic staff", ..Default::default() };
        build_prompt(Step::ObjectTypes, &ctx, &GenerationConfig::default()).unwrap()
    }

    #[test]
    fn valid_first_response_uses_one_attempt() {
        let backend = counting(&[("step1_attempt1", "[\"students\"]")]);
        let mut budget = TokenBudget::default();
        let (parsed, record) =
            generate_with_repair(Step::ObjectTypes, 0, request(), &backend, &mut budget, parse_labels).unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(record.attempts, 1);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert_eq!(budget.spent, 110);
    }

    #[test]
    fn prose_then_array_is_repaired() {
        let backend = counting(&[("step1_attempt1", "Sure! Students and courses."), ("step1_attempt2", "[\"students\",\"courses\"]")]);
        let mut budget = TokenBudget::default();
        let (parsed, record) =
            generate_with_repair(Step::ObjectTypes, 0, request(), &backend, &mut budget, parse_labels).unwrap();
        assert_eq!(parsed.items.len(), 2);
        assert_eq!(record.attempts, 2);
        assert_eq!(record.rejected.len(), 1);
        assert_eq!((record.prompt_tokens, record.completion_tokens), (220, 22));
        assert!(!record.request.user_text.contains("could not be parsed"));
    }

    #[test]
    fn two_failures_surface_both_responses() {
        let backend = counting(&[("step1_attempt1", "no idea"), ("step1_attempt2", "still prose")]);
        let err = generate_with_repair(Step::ObjectTypes, 0, request(), &backend, &mut TokenBudget::default(), parse_labels)
            .unwrap_err();
        match err {
            GatewayError::ParseFailed { responses, error, .. } => {
                assert_eq!(responses, vec!["no idea".to_owned(), "still prose".to_owned()]);
                assert_eq!(error, ParseError::NoJsonFound);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn budget_blocks_before_sending() {
        let backend = counting(&[("step1_attempt1", "[\"a\"]")]);
        let mut budget = TokenBudget::new(Some(50), 0);
        let err = generate_with_repair(Step::ObjectTypes, 0, request(), &backend, &mut budget, parse_labels).unwrap_err();
        assert!(matches!(err, GatewayError::BudgetExceeded { ceiling: 50, .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
    }
}
