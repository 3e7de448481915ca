use serde::{Deserialize, Serialize};

use crate::gateway::GenerationRecord;

/// Per-million-token prices for one model, loaded from configuration.
///
/// ```toml
/// model = "gpt-4.1"
/// currency = "USD"
/// input_per_million = 2.00
/// output_per_million = 8.00
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_currency")]
    pub currency: String,
    pub input_per_million: f64,
    pub output_per_million: f64,
}

fn default_currency() -> String {
    "USD".into()
}

impl PriceTable {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        (prompt_tokens as f64 * self.input_per_million + completion_tokens as f64 * self.output_per_million) / 1e6
    }
}

/// Sum of the priced token usage over `records`.
pub fn estimate_cost(records: &[GenerationRecord], prices: &PriceTable) -> f64 {
    let (prompt, completion) = records
        .iter()
        .fold((0u64, 0u64), |(p, c), r| (p + r.prompt_tokens, c + r.completion_tokens));
    prices.cost(prompt, completion)
}
