use serde_json::json;

use super::{ChatRequest, GatewayError, GenerationConfig, ResponseFormat};
use crate::domain::{Label, ObjectInstance, Step};

const SYSTEM_STEP1: &str = include_str!("../../prompts/step1.txt");
const SYSTEM_STEP2: &str = include_str!("../../prompts/step2.txt");
const SYSTEM_STEP3: &str = include_str!("../../prompts/step3.txt");
const SYSTEM_STEP4: &str = include_str!("../../prompts/step4.txt");

pub const FORMAT_LABELS: &str = include_str!("../../prompts/format_labels.txt");
pub const FORMAT_OBJECTS: &str = include_str!("../../prompts/format_objects.txt");
pub const FORMAT_ANNOTATIONS: &str = include_str!("../../prompts/format_annotations.txt");

/// Inputs available to a step. Each step reads only what it needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptContext<'a> {
    pub profession: &'a str,
    pub object_types: Option<&'a [Label]>,
    pub activities: Option<&'a [Label]>,
    pub objects: Option<&'a [ObjectInstance]>,
    pub titles: Option<&'a [String]>,
}

fn require<'a, T>(step: Step, value: Option<&'a [T]>, what: &'static str) -> Result<&'a [T], GatewayError> {
    match value {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(GatewayError::MissingContext { step, what }),
    }
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn label_list(labels: &[Label]) -> String {
    serde_json::to_string(&labels.iter().map(Label::as_str).collect::<Vec<_>>()).expect("serializable")
}

fn object_list(objects: &[ObjectInstance]) -> String {
    let rows: Vec<_> = objects
        .iter()
        .map(|o| json!({"object": o.name, "object_type": o.object_type.as_str()}))
        .collect();
    serde_json::to_string(&rows).expect("serializable")
}

/// Builds the request for `step`. Deterministic in its inputs.
pub fn build_prompt(step: Step, ctx: &PromptContext<'_>, config: &GenerationConfig) -> Result<ChatRequest, GatewayError> {
    if ctx.profession.trim().is_empty() {
        return Err(GatewayError::MissingContext { step, what: "profession" });
    }
    let mut user = format!("profession: {}\n", quoted(ctx.profession));

    if step >= Step::Activities {
        let types = require(step, ctx.object_types, "confirmed object types")?;
        user.push_str(&format!("object types: {}\n", label_list(types)));
    }
    if step >= Step::Objects {
        let activities = require(step, ctx.activities, "confirmed activities")?;
        user.push_str(&format!("activities: {}\n", label_list(activities)));
    }
    if step == Step::Events {
        let objects = ctx
            .objects
            .ok_or(GatewayError::MissingContext { step, what: "confirmed objects" })?;
        user.push_str(&format!("objects: {}\n", object_list(objects)));
    }
    if step >= Step::Objects {
        let titles = ctx.titles.ok_or(GatewayError::MissingContext { step, what: "window titles" })?;
        user.push_str("window titles:\n");
        for (i, title) in titles.iter().enumerate() {
            user.push_str(&format!("{}. {}\n", i + 1, quoted(title)));
        }
    }

    let (system, format, hint) = match step {
        Step::ObjectTypes => (SYSTEM_STEP1, FORMAT_LABELS, ResponseFormat::JsonArray),
        Step::Activities => (SYSTEM_STEP2, FORMAT_LABELS, ResponseFormat::JsonArray),
        Step::Objects => (SYSTEM_STEP3, FORMAT_OBJECTS, ResponseFormat::JsonObjects),
        Step::Events => (SYSTEM_STEP4, FORMAT_ANNOTATIONS, ResponseFormat::JsonObjects),
    };
    user.push('\n');
    user.push_str(format.trim_end());

    Ok(ChatRequest {
        system_text: system.trim_end().to_owned(),
        user_text: user,
        model_id: config.model_id.clone(),
        temperature: config.temperature,
        response_format_hint: hint,
    })
}
