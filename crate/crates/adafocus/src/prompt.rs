//! Prompt templates, owned here so answer-model backends never hard-code
//! wording. Backends receive a template id and call [`render`]; the
//! citation instruction keeps generated answers parseable by the
//! timestamp extractor.

use crate::error::{Error, Result};
use crate::grounding::format_citation;
use crate::types::{EvidenceSet, Query};

/// Default question-answering template; asks for a bracketed timestamp
/// citation at the end of the answer.
pub const GROUNDED_QA: &str = "grounded-qa-v1";

/// Re-generation template for rethinking the same evidence after a
/// low-confidence answer, without retrieving anything new.
pub const COT_REFLECT: &str = "cot-reflect-v1";

const GROUNDED_QA_TEXT: &str = "\
You are answering a question about a video from the frames listed below.
Question: {query}
Frames:
{evidence}
Answer concisely. End with one bracketed timestamp of the decisive moment, \
written like [02:35] (or [1:02:35] past an hour).";

const COT_REFLECT_TEXT: &str = "\
Your previous answer to this question was low-confidence. Reason through \
the frames step by step, then answer again.
Question: {query}
Frames:
{evidence}
Answer concisely. End with one bracketed timestamp of the decisive moment, \
written like [02:35] (or [1:02:35] past an hour).";

/// Every registered template id.
pub fn template_ids() -> &'static [&'static str] {
    &[GROUNDED_QA, COT_REFLECT]
}

/// Renders a registered template against a query and its evidence.
/// Each evidence frame becomes one line naming its source and timestamp.
pub fn render(template_id: &str, query: &Query, evidence: &EvidenceSet) -> Result<String> {
    let body = match template_id {
        GROUNDED_QA => GROUNDED_QA_TEXT,
        COT_REFLECT => COT_REFLECT_TEXT,
        other => {
            return Err(Error::Config(format!(
                "unknown prompt template {other:?}; known: {:?}",
                template_ids()
            )))
        }
    };
    let mut lines = String::new();
    for frame in evidence.frames() {
        lines.push_str(&format!(
            "- {} frame {} at {}\n",
            frame.source_id,
            frame.index,
            format_citation(frame.timestamp_sec.round() as u64)
        ));
    }
    Ok(body
        .replace("{query}", &query.text)
        .replace("{evidence}", lines.trim_end()))
}
