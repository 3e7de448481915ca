use exoar_core::domain::StepMetrics;
use serde::Serialize;

pub const METRICS_HEADER: &str = "step\tgenerated\tkept\tadded\tedited\tremoved\tkept_pct";

/// One line per confirmed step, under [`METRICS_HEADER`].
pub fn metrics_tsv(rows: &[StepMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.step, r.generated, r.kept_as_is, r.added, r.edited, r.removed, r.kept_pct
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub currency: String,
    pub model: Option<String>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
}

impl CostReport {
    pub fn for_session(session: &exoar_core::session::Session) -> Result<Self, exoar_core::session::SessionError> {
        let cost = session.estimate_cost()?;
        let prices = session.price_table.as_ref().expect("estimate_cost checks for a price table");
        let (prompt_tokens, completion_tokens) = session
            .records
            .iter()
            .fold((0, 0), |(p, c), r| (p + r.prompt_tokens, c + r.completion_tokens));
        Ok(CostReport { currency: prices.currency.clone(), model: prices.model.clone(), prompt_tokens, completion_tokens, cost })
    }
}
