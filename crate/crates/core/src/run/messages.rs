//! Construction of the four-turn message sequence injected into backends.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::plan::{Order, TrialSpec};

use super::RunError;

/// Fixed system prompt used verbatim for every trial.
pub const SYSTEM_PROMPT: &str = "You are a helpful assistant. You MUST use the web_search tool to find information before answering any query. Always cite the exact URLs from the search results in your response. Do not use any other sources or prior knowledge.";

/// Name of the injected search tool.
pub const TOOL_NAME: &str = "web_search";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub query: String,
}

/// One source entry in the tool response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub title: String,
    pub url: String,
    pub body: String,
}

/// The full turn sequence: system, user, tool call, tool response with
/// exactly two sources in trial order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSequence {
    pub system: String,
    pub user: String,
    pub tool_call: ToolCall,
    pub tool_response: Vec<SourceEntry>,
}

/// Build the message sequence for a trial. Purely a function of the spec and
/// corpus; never touches the network.
pub fn build_messages(spec: &TrialSpec, corpus: &Corpus) -> Result<MessageSequence, RunError> {
    let scenario = corpus
        .get(&spec.scenario_id)
        .ok_or_else(|| RunError::UnknownScenario(spec.scenario_id.clone()))?;
    let user = scenario
        .queries
        .get(spec.paraphrase_index as usize)
        .ok_or(RunError::ParaphraseOutOfRange {
            index: spec.paraphrase_index,
            available: scenario.queries.len(),
        })?
        .clone();
    let entry = |doc: &crate::corpus::VariantDoc| SourceEntry {
        title: doc.title.clone(),
        url: doc.url.clone(),
        body: doc.body.clone(),
    };
    let tool_response = match spec.order {
        Order::Ab => vec![entry(&scenario.variant_a), entry(&scenario.variant_b)],
        Order::Ba => vec![entry(&scenario.variant_b), entry(&scenario.variant_a)],
    };
    Ok(MessageSequence {
        system: SYSTEM_PROMPT.to_string(),
        user,
        tool_call: ToolCall {
            name: TOOL_NAME.to_string(),
            query: scenario.tool_query.clone(),
        },
        tool_response,
    })
}
