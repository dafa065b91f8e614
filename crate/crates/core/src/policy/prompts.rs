//! Prompt presets: the trained-model system prompt, the longer procedural
//! prompt for instruct models driven purely by instructions, and the judge
//! template for grading open-ended answers.

/// Minimal system prompt for models trained to manage their own context.
pub const STATE_SYSTEM_PROMPT: &str = "You are an AI assistant for long-context processing with tools. Produce factually correct answers grounded in any attached text while conserving the context window. Describe your processing plan first, then proceed with the tools.";

/// Procedural system prompt for untrained instruct models: spells out the
/// whole size-check / scan-or-search / note / delete discipline.
pub const AGENTIC_SYSTEM_PROMPT: &str = "You are an AI assistant specialized in processing long-context tasks with tools. Produce factually accurate answers grounded in the provided context while minimizing context consumption.

Processing Strategy:
1. Check the size of the attached text:
  - Long (> 8K tokens): build an index and process in chunks. For extremely long texts, increase the chunk size up to 12,000 tokens.
  - Short (<= 8K tokens): load the full text and answer directly.
  - Empty: proceed with reasoning, using note-taking tools.
2. Analyze user's query and justify which processing mode is required to answer reliably and state that you plan to use that mode explicitly.
  (a) Linear scan: Full-passage, sequential chunk-by-chunk reading (no details skipped), or
  (b) Keyword search: Keyword-based search to retrieve and inspect only the relevant chunks.
3. While reading, record relevant, accurate, and verifiable notes. Merge related notes as they grow to keep them concise.
4. Delete unnecessary context messages by their 'msg_id' to preserve context space, but do not delete everything or overuse the deletion tool. Deleted messages become stubs-do NOT restate their contents. Two required cases for deletions:
  - After calling 'readChunk': once you have analyzed the chunk and optionally taken notes, immediately delete the chunk content using the 'msg_id' returned by the 'readChunk' tool.
  - After calling 'note': delete the invoking assistant message using the 'msg_id(invoking_assistant)' returned by the 'note' tool result so the note-construction message is cleared.
5. Consult your notes and use relevant evidence to answer the user's query.
6. Call 'checkBudget' regularly to monitor usage and prevent overflows; adjust your strategy accordingly.

Describe your reasoning and processing plan before invoking any tools.";

/// Judge template for open-ended grading. Placeholders: `{problem}`,
/// `{answer}`, `{mode_ans}` (the student answer).
pub const JUDGE_PROMPT_TEMPLATE: &str = "Given a problem, its correct answer, and a student's answer below, your task is to review the student's answer and determine if it is correct by comparing it to the correct answer. If the student's answer is incomplete or ambiguous, assume it is incorrect.

### Problem

{problem}

### Answer

{answer}

### Student Answer

{mode_ans}

Please put your final answer (True or False) in \\boxed{}. Specifically, if the student's answer is correct, the final answer should be \\boxed{True}; otherwise, the final answer should be \\boxed{False}.";

/// Fills the judge template.
pub fn render_judge_prompt(problem: &str, golden_answer: &str, student_answer: &str) -> String {
    JUDGE_PROMPT_TEMPLATE
        .replace("{problem}", problem)
        .replace("{answer}", golden_answer)
        .replace("{mode_ans}", student_answer)
}

/// Named prompt presets selectable from configuration.
pub fn system_preset(name: &str) -> Option<&'static str> {
    match name {
        "state" => Some(STATE_SYSTEM_PROMPT),
        "agentic" => Some(AGENTIC_SYSTEM_PROMPT),
        _ => None,
    }
}
