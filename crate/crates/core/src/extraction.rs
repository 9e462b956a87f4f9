//! LLM triple extraction over corpus chunks and the bracketed-triple parser.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{token_count, Chunk};
use crate::error::{Error, Result};
use crate::kg::Triple;
use crate::llm::{LlmProvider, LlmRequest};

pub const EXTRACTION_INSTRUCTION: &str =
    "Extract entities and relationships from the following text in [Entity1, Relationship, Entity2] format";

const SLOT: &str = "{text}";
const MAX_WORKERS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionPromptTemplate {
    text: String,
}

impl Default for ExtractionPromptTemplate {
    fn default() -> Self {
        Self {
            text: format!("{EXTRACTION_INSTRUCTION}.\n\n{SLOT}"),
        }
    }
}

impl ExtractionPromptTemplate {
    /// A custom template; it must contain exactly one `{text}` slot.
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.matches(SLOT).count() != 1 {
            return Err(Error::Config(format!(
                "extraction template needs exactly one {SLOT} slot"
            )));
        }
        Ok(Self { text })
    }

    pub fn render(&self, chunk_text: &str) -> String {
        let (head, tail) = self.text.split_once(SLOT).expect("validated slot");
        format!("{head}{chunk_text}{tail}")
    }

    /// Tokens contributed by the template itself.
    pub fn instruction_token_count(&self) -> usize {
        token_count(&self.text.replacen(SLOT, " ", 1))
    }
}

pub fn render_extraction_prompt(chunk: &Chunk) -> String {
    ExtractionPromptTemplate::default().render(&chunk.text)
}

fn snippet(s: &str) -> String {
    const MAX: usize = 60;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Scans `raw` for flat `[a, b, c]` groups. Anything else becomes a warning,
/// never an error.
pub fn parse_triples(raw: &str, chunk_id: &str) -> (Vec<Triple>, Vec<String>) {
    let mut triples = Vec::new();
    let mut warnings = Vec::new();
    let mut pos = 0;
    while let Some(offset) = raw[pos..].find('[') {
        let open = pos + offset;
        let mut depth = 0usize;
        let mut nested = false;
        let mut close = None;
        for (i, c) in raw[open..].char_indices() {
            match c {
                '[' => {
                    depth += 1;
                    nested |= depth > 1;
                }
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(open + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(close) = close else {
            warnings.push(format!("unclosed bracket at byte {open}: `{}`", snippet(&raw[open..])));
            pos = open + 1;
            continue;
        };
        let group = &raw[open + 1..close];
        pos = close + 1;
        if nested {
            warnings.push(format!("skipped nested group `[{}]`", snippet(group)));
            continue;
        }
        let fields: Vec<&str> = group.split(',').collect();
        if fields.len() != 3 {
            warnings.push(format!(
                "skipped `[{}]`: expected 3 fields, found {}",
                snippet(group),
                fields.len()
            ));
            continue;
        }
        match Triple::new(fields[0], fields[1], fields[2], chunk_id) {
            Ok(t) => triples.push(t),
            Err(why) => warnings.push(format!("skipped `[{}]`: {why}", snippet(group))),
        }
    }
    (triples, warnings)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRun {
    pub run_id: String,
    pub chunk_id: String,
    pub raw_llm_output: String,
    pub parsed: Vec<Triple>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExtractionRun {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

fn extract_chunk(chunk: &Chunk, llm: &dyn LlmProvider, template: &ExtractionPromptTemplate) -> ExtractionRun {
    let prompt = template.render(&chunk.text);
    let mut run = ExtractionRun {
        run_id: format!("extract-{}", chunk.chunk_id),
        chunk_id: chunk.chunk_id.clone(),
        raw_llm_output: String::new(),
        parsed: Vec::new(),
        warnings: Vec::new(),
        error: None,
    };
    match llm.complete(&LlmRequest::new(&prompt).tagged(&chunk.chunk_id)) {
        Ok(raw) => {
            let (parsed, warnings) = parse_triples(&raw, &chunk.chunk_id);
            run.raw_llm_output = raw;
            run.parsed = parsed;
            run.warnings = warnings;
        }
        Err(e) => run.error = Some(e.to_string()),
    }
    run
}

/// Runs extraction on every chunk, up to the provider's in-flight cap at a
/// time. Failed chunks yield runs with `error` set. Runs come back in chunk
/// order.
pub fn run_extraction(
    chunks: &[Chunk],
    llm: &dyn LlmProvider,
    template: &ExtractionPromptTemplate,
) -> Vec<ExtractionRun> {
    let workers = llm.max_in_flight().min(MAX_WORKERS).min(chunks.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ExtractionRun>>> = Mutex::new(vec![None; chunks.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(chunk) = chunks.get(i) else { break };
                let run = extract_chunk(chunk, llm, template);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(run);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every chunk processed"))
        .collect()
}

/// Fails when more than half of the runs failed.
pub fn check_failure_rate(runs: &[ExtractionRun]) -> Result<()> {
    let failed = runs.iter().filter(|r| !r.succeeded()).count();
    if failed * 2 > runs.len() {
        return Err(Error::ExtractionFailed {
            failed,
            total: runs.len(),
        });
    }
    Ok(())
}

pub fn extract_corpus(
    chunks: &[Chunk],
    llm: &dyn LlmProvider,
    template: &ExtractionPromptTemplate,
) -> Result<Vec<ExtractionRun>> {
    let runs = run_extraction(chunks, llm, template);
    check_failure_rate(&runs)?;
    Ok(runs)
}

pub fn write_report(path: &Path, runs: &[ExtractionRun]) -> Result<()> {
    let mut out = Vec::new();
    for run in runs {
        serde_json::to_writer(&mut out, run)?;
        out.write_all(b"\n")?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ExtractionRun>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
