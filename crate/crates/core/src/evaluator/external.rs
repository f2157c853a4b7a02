use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::data::Question;
use crate::error::{Error, Result};

use super::{check_answer, encode_multi_reference, Evaluator, ReferenceSet, ScoreRequest, UnitScore};

#[derive(Serialize)]
struct ScoreRequestLine<'a> {
    rendered: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponseLine {
    score: f64,
}

/// Writes one `{"rendered": ...}` JSONL line per prompt.
pub fn write_score_requests<'a>(
    out: &mut impl Write,
    rendered: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    for r in rendered {
        let line = serde_json::to_string(&ScoreRequestLine { rendered: r })?;
        writeln!(out, "{line}").map_err(|e| Error::io("<score requests>", e))?;
    }
    Ok(())
}

/// Reads `{"score": ...}` JSONL lines. Scores are clamped into `[0, 1]`; blank
/// lines are skipped; the count must equal `expected`.
pub fn read_score_responses(input: impl BufRead, expected: usize) -> Result<Vec<UnitScore>> {
    let mut scores = Vec::with_capacity(expected);
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Evaluator(format!("reading scores: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ScoreResponseLine = serde_json::from_str(&line)
            .map_err(|e| Error::Evaluator(format!("score line {}: {e}", i + 1)))?;
        scores.push(UnitScore::clamped(parsed.score)?);
    }
    if scores.len() != expected {
        return Err(Error::Evaluator(format!(
            "expected {expected} scores, got {}",
            scores.len()
        )));
    }
    Ok(scores)
}

/// Runs a shell command per batch, feeding rendered prompts on stdin and
/// reading one score per line from stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalEvaluator {
    command: String,
}

impl ExternalEvaluator {
    pub fn new(command: impl Into<String>) -> Result<Self> {
        let command = command.into();
        if command.trim().is_empty() {
            return Err(Error::InvalidArgument("external evaluator command is empty".into()));
        }
        Ok(Self { command })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn run(&self, rendered: Vec<String>) -> Result<Vec<UnitScore>> {
        if rendered.is_empty() {
            return Ok(Vec::new());
        }
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Evaluator(format!("spawning `{}`: {e}", self.command)))?;

        let mut stdin = child.stdin.take().expect("stdin is piped");
        let expected = rendered.len();
        let writer = std::thread::spawn(move || -> Result<()> {
            let mut buf = std::io::BufWriter::new(&mut stdin);
            write_score_requests(&mut buf, rendered.iter().map(String::as_str))?;
            buf.flush().map_err(|e| Error::io("<evaluator stdin>", e))
        });
        let stdout = child.stdout.take().expect("stdout is piped");
        let scores = read_score_responses(BufReader::new(stdout), expected);
        let written = writer
            .join()
            .map_err(|_| Error::Evaluator("stdin writer panicked".into()))?;
        let status = child
            .wait()
            .map_err(|e| Error::Evaluator(format!("waiting for `{}`: {e}", self.command)))?;
        if !status.success() {
            return Err(Error::Evaluator(format!("`{}` exited with {status}", self.command)));
        }
        written.map_err(|e| Error::Evaluator(format!("writing prompts: {e}")))?;
        scores
    }
}

impl Evaluator for ExternalEvaluator {
    fn score(&self, question: &Question, answer: &str, references: &ReferenceSet) -> Result<UnitScore> {
        let mut scores = self.score_batch(&[ScoreRequest {
            question,
            answer,
            references,
        }])?;
        Ok(scores.remove(0))
    }

    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Result<Vec<UnitScore>> {
        let rendered = requests
            .iter()
            .map(|r| {
                check_answer(r.answer)?;
                Ok(encode_multi_reference(r.question, r.answer, r.references).rendered)
            })
            .collect::<Result<Vec<_>>>()?;
        self.run(rendered)
    }
}
