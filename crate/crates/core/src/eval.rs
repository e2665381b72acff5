//! Faithfulness and relevance scoring, aggregation and comparison reports.
//!
//! Faithfulness is the fraction of an answer's claims the judge finds
//! supported by the retrieved context; relevance is the fraction of its
//! statements the judge finds pertinent to the question. Both are stored
//! with their numerator and denominator.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage, TransportError};
use crate::pipeline::{GeneratedAnswer, LlmBackend, Mode};
use crate::text;

/// Renders claims and verdicts for the metrics.
pub trait Judge: Send + Sync {
    fn name(&self) -> &str;
    fn decompose(&self, answer: &str) -> Result<Vec<String>>;
    fn is_supported(&self, claim: &str, context: &str) -> Result<bool>;
    fn is_relevant(&self, statement: &str, question: &str) -> Result<bool>;
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn decompose(&self, answer: &str) -> Result<Vec<String>> {
        (**self).decompose(answer)
    }
    fn is_supported(&self, claim: &str, context: &str) -> Result<bool> {
        (**self).is_supported(claim, context)
    }
    fn is_relevant(&self, statement: &str, question: &str) -> Result<bool> {
        (**self).is_relevant(statement, question)
    }
}

/// Splits after `.`, `!` or `?` when followed by whitespace or the end of
/// the text, and at line breaks. Pieces are trimmed; empty ones dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let end = match c {
            '\n' => Some(i),
            '.' | '!' | '?' if chars.peek().is_none_or(|(_, n)| n.is_whitespace()) => Some(i + c.len_utf8()),
            _ => None,
        };
        if let Some(end) = end {
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                out.push(piece.to_owned());
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_owned());
    }
    out
}

/// Deterministic judge built from word overlap.
///
/// A claim is supported when at least 60% of its distinct content words occur
/// in the context. A statement is relevant when it shares a content word with
/// the question.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalJudge;

impl LexicalJudge {
    fn content_set(text: &str) -> BTreeSet<String> {
        text::content_terms(text).into_iter().collect()
    }
}

impl Judge for LexicalJudge {
    fn name(&self) -> &str {
        "lexical"
    }

    fn decompose(&self, answer: &str) -> Result<Vec<String>> {
        Ok(split_sentences(answer))
    }

    fn is_supported(&self, claim: &str, context: &str) -> Result<bool> {
        let claim_terms = Self::content_set(claim);
        if claim_terms.is_empty() {
            return Ok(false);
        }
        let context_terms = text::term_set(context);
        let present = claim_terms.iter().filter(|t| context_terms.contains(*t)).count();
        // present / total >= 3/5
        Ok(5 * present >= 3 * claim_terms.len())
    }

    fn is_relevant(&self, statement: &str, question: &str) -> Result<bool> {
        let question_terms = Self::content_set(question);
        Ok(Self::content_set(statement).iter().any(|t| question_terms.contains(t)))
    }
}

const DECOMPOSE_SYSTEM: &str = "You split answers into atomic factual claims. \
Output one claim per line and nothing else.";
const VERDICT_SYSTEM: &str = "You are a strict evaluator. Reply with exactly YES or NO.";

/// Judge backed by a language model through [`LlmBackend`].
pub struct LlmJudge<L> {
    llm: L,
    name: String,
}

impl<L: LlmBackend> LlmJudge<L> {
    pub fn new(llm: L) -> Self {
        let name = format!("llm:{}", llm.name());
        Self { llm, name }
    }

    fn ask(&self, system: &str, prompt: &str) -> Result<String> {
        self.llm
            .complete(system, prompt, 256, 0.0)
            .map_err(|e| e.in_stage(Stage::Judge))
    }

    fn verdict(&self, prompt: &str) -> Result<bool> {
        let reply = self.ask(VERDICT_SYSTEM, prompt)?;
        let word: String = reply
            .trim_start()
            .chars()
            .take_while(|c| c.is_alphabetic())
            .collect::<String>()
            .to_ascii_lowercase();
        match word.as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            _ => Err(Error::backend(
                Stage::Judge,
                TransportError::Malformed(format!("expected YES or NO, got {reply:?}")),
            )),
        }
    }
}

impl<L: LlmBackend> Judge for LlmJudge<L> {
    fn name(&self) -> &str {
        &self.name
    }

    fn decompose(&self, answer: &str) -> Result<Vec<String>> {
        let reply = self.ask(DECOMPOSE_SYSTEM, &format!("Answer:\n{answer}"))?;
        Ok(reply
            .lines()
            .map(|l| l.trim().trim_start_matches(['-', '*', '•']).trim())
            .map(|l| {
                let digits = l.chars().take_while(char::is_ascii_digit).count();
                match l[digits..].strip_prefix(['.', ')']) {
                    Some(rest) if digits > 0 => rest.trim(),
                    _ => l,
                }
            })
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect())
    }

    fn is_supported(&self, claim: &str, context: &str) -> Result<bool> {
        self.verdict(&format!(
            "Context:\n{context}\n\nClaim: {claim}\n\nIs the claim fully supported by the context?"
        ))
    }

    fn is_relevant(&self, statement: &str, question: &str) -> Result<bool> {
        self.verdict(&format!(
            "Question: {question}\n\nStatement: {statement}\n\nIs the statement relevant to answering the question?"
        ))
    }
}

/// An exact score snapshot. A zero denominator scores 0 and is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub numerator: u32,
    pub denominator: u32,
}

impl Fraction {
    pub fn score(self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            f64::from(self.numerator) / f64::from(self.denominator)
        }
    }

    pub fn is_undefined(self) -> bool {
        self.denominator == 0
    }
}

pub fn decompose_claims(judge: &dyn Judge, answer: &str) -> Result<Vec<String>> {
    if answer.trim().is_empty() {
        return Ok(Vec::new());
    }
    judge.decompose(answer)
}

pub fn faithfulness<S: AsRef<str>>(judge: &dyn Judge, claims: &[String], context_texts: &[S]) -> Result<Fraction> {
    let context = context_texts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n\n");
    let mut supported = 0;
    for claim in claims {
        if judge.is_supported(claim, &context)? {
            supported += 1;
        }
    }
    Ok(Fraction {
        numerator: supported,
        denominator: claims.len() as u32,
    })
}

pub fn relevance(judge: &dyn Judge, question: &str, answer: &str) -> Result<Fraction> {
    let statements = decompose_claims(judge, answer)?;
    let mut relevant = 0;
    for s in &statements {
        if judge.is_relevant(s, question)? {
            relevant += 1;
        }
    }
    Ok(Fraction {
        numerator: relevant,
        denominator: statements.len() as u32,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub mode: Mode,
    pub faithfulness: f64,
    pub relevance: f64,
    /// Counts are absent for records transcribed from published tables.
    pub claim_count: Option<u32>,
    pub supported_count: Option<u32>,
    pub relevant_count: Option<u32>,
    pub statement_count: Option<u32>,
    #[serde(default)]
    pub faithfulness_undefined: bool,
    #[serde(default)]
    pub relevance_undefined: bool,
}

impl EvalRecord {
    pub fn from_fractions(question_id: &str, mode: Mode, faith: Fraction, rel: Fraction) -> Self {
        Self {
            question_id: question_id.to_owned(),
            mode,
            faithfulness: faith.score(),
            relevance: rel.score(),
            claim_count: Some(faith.denominator),
            supported_count: Some(faith.numerator),
            relevant_count: Some(rel.numerator),
            statement_count: Some(rel.denominator),
            faithfulness_undefined: faith.is_undefined(),
            relevance_undefined: rel.is_undefined(),
        }
    }

    /// A record carrying only scores.
    pub fn transcribed(question_id: &str, mode: Mode, faithfulness: f64, relevance: f64) -> Self {
        Self {
            question_id: question_id.to_owned(),
            mode,
            faithfulness,
            relevance,
            claim_count: None,
            supported_count: None,
            relevant_count: None,
            statement_count: None,
            faithfulness_undefined: false,
            relevance_undefined: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Eval(format!("{} {}: {msg}", self.question_id, self.mode)));
        for (name, v) in [("faithfulness", self.faithfulness), ("relevance", self.relevance)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        let pairs = [
            (
                "faithfulness",
                self.faithfulness,
                self.supported_count,
                self.claim_count,
            ),
            ("relevance", self.relevance, self.relevant_count, self.statement_count),
        ];
        for (name, score, num, den) in pairs {
            if let (Some(n), Some(d)) = (num, den) {
                let expected = Fraction {
                    numerator: n,
                    denominator: d,
                };
                if n > d || expected.score() != score {
                    return bad(format!("{name} {score} inconsistent with {n}/{d}"));
                }
            }
        }
        Ok(())
    }
}

/// Scores one generated answer against the texts that were injected for it.
pub fn evaluate_answer<S: AsRef<str>>(
    judge: &dyn Judge,
    question: &str,
    answer: &GeneratedAnswer,
    context_texts: &[S],
) -> Result<EvalRecord> {
    let claims = decompose_claims(judge, &answer.answer_text)?;
    let faith = faithfulness(judge, &claims, context_texts)?;
    let rel = relevance(judge, question, &answer.answer_text)?;
    let record = EvalRecord::from_fractions(&answer.question_id, answer.mode, faith, rel);
    if record.faithfulness_undefined || record.relevance_undefined {
        log::warn!("{} {}: answer has no claims; scored 0", record.question_id, record.mode);
    }
    Ok(record)
}

/// `100 * (new - baseline) / baseline`, or `None` for a zero baseline.
pub fn relative_improvement(baseline_mean: f64, new_mean: f64) -> Option<f64> {
    if baseline_mean == 0.0 {
        return None;
    }
    Some(100.0 * (new_mean - baseline_mean) / baseline_mean)
}

pub fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// Orders ids like `Q2` before `Q10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn parts(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut prev: Option<bool> = None;
        for (i, c) in s.char_indices() {
            let digit = c.is_ascii_digit();
            if prev.is_some_and(|p| p != digit) {
                out.push((prev.unwrap(), &s[start..i]));
                start = i;
            }
            prev = Some(digit);
        }
        if let Some(p) = prev {
            out.push((p, &s[start..]));
        }
        out
    }
    let (pa, pb) = (parts(a), parts(b));
    for (x, y) in pa.iter().zip(&pb) {
        let ord = match (x, y) {
            ((true, dx), (true, dy)) => {
                let (tx, ty) = (dx.trim_start_matches('0'), dy.trim_start_matches('0'));
                tx.len().cmp(&ty.len()).then_with(|| tx.cmp(ty))
            }
            ((_, sx), (_, sy)) => sx.cmp(sy),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    pa.len().cmp(&pb.len()).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Faithfulness,
    Relevance,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Faithfulness => "faithfulness",
            Metric::Relevance => "relevance",
        }
    }

    fn of(self, record: &CellScores) -> f64 {
        match self {
            Metric::Faithfulness => record.faithfulness,
            Metric::Relevance => record.relevance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub faithfulness: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub question_id: String,
    /// One cell per entry of [`MetricReport::modes`]; `None` if missing.
    pub cells: Vec<Option<CellScores>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMeans {
    pub mode: Mode,
    pub cells: usize,
    pub faithfulness: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub metric: Metric,
    pub baseline: Mode,
    pub candidate: Mode,
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    /// `None` when the baseline mean is zero.
    pub percent: Option<f64>,
}

impl Improvement {
    pub fn rounded_percent(&self) -> Option<i64> {
        self.percent.map(|p| p.round() as i64)
    }
}

/// A published mean to check the per-question cells against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedMean {
    pub mode: Mode,
    pub metric: Metric,
    pub value: f64,
    /// Decimal places the value was published with.
    pub decimals: u32,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub mode: Mode,
    pub metric: Metric,
    pub computed_mean: f64,
    pub reported: Vec<ReportedMean>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub question_id: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub modes: Vec<Mode>,
    pub rows: Vec<ReportRow>,
    pub means: Vec<ModeMeans>,
    pub improvements: Vec<Improvement>,
    pub missing: Vec<MissingCell>,
    pub discrepancies: Vec<Discrepancy>,
}

/// Builds the question × mode table, column means and pairwise relative
/// improvements. Improvements use means rounded to three decimals, as
/// presented.
pub fn aggregate(records: &[EvalRecord]) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::Eval("no records to aggregate".into()));
    }
    let mut grid: BTreeMap<(String, Mode), CellScores> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let cell = CellScores {
            faithfulness: r.faithfulness,
            relevance: r.relevance,
        };
        if grid.insert((r.question_id.clone(), r.mode), cell).is_some() {
            return Err(Error::Eval(format!(
                "duplicate record for {} {}",
                r.question_id, r.mode
            )));
        }
    }

    let modes: Vec<Mode> = records
        .iter()
        .map(|r| r.mode)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut questions: Vec<String> = records
        .iter()
        .map(|r| r.question_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    questions.sort_by(|a, b| natural_cmp(a, b));

    let mut missing = Vec::new();
    let rows: Vec<ReportRow> = questions
        .iter()
        .map(|q| ReportRow {
            question_id: q.clone(),
            cells: modes
                .iter()
                .map(|&m| {
                    let cell = grid.get(&(q.clone(), m)).copied();
                    if cell.is_none() {
                        missing.push(MissingCell {
                            question_id: q.clone(),
                            mode: m,
                        });
                    }
                    cell
                })
                .collect(),
        })
        .collect();
    for m in &missing {
        log::warn!("missing cell: {} {}", m.question_id, m.mode);
    }

    let means: Vec<ModeMeans> = modes
        .iter()
        .enumerate()
        .map(|(col, &mode)| {
            let cells: Vec<CellScores> = rows.iter().filter_map(|r| r.cells[col]).collect();
            let mean = |metric: Metric| cells.iter().map(|c| metric.of(c)).sum::<f64>() / cells.len() as f64;
            ModeMeans {
                mode,
                cells: cells.len(),
                faithfulness: mean(Metric::Faithfulness),
                relevance: mean(Metric::Relevance),
            }
        })
        .collect();

    let mut improvements = Vec::new();
    for metric in [Metric::Faithfulness, Metric::Relevance] {
        for (i, base) in means.iter().enumerate() {
            for cand in &means[i + 1..] {
                let pick = |m: &ModeMeans| match metric {
                    Metric::Faithfulness => m.faithfulness,
                    Metric::Relevance => m.relevance,
                };
                let (b, c) = (round_to(pick(base), 3), round_to(pick(cand), 3));
                improvements.push(Improvement {
                    metric,
                    baseline: base.mode,
                    candidate: cand.mode,
                    baseline_mean: b,
                    candidate_mean: c,
                    percent: relative_improvement(b, c),
                });
            }
        }
    }

    Ok(MetricReport {
        modes,
        rows,
        means,
        improvements,
        missing,
        discrepancies: Vec::new(),
    })
}

impl MetricReport {
    pub fn mean(&self, mode: Mode, metric: Metric) -> Option<f64> {
        self.means.iter().find(|m| m.mode == mode).map(|m| match metric {
            Metric::Faithfulness => m.faithfulness,
            Metric::Relevance => m.relevance,
        })
    }

    pub fn improvement(&self, metric: Metric, baseline: Mode, candidate: Mode) -> Option<&Improvement> {
        self.improvements
            .iter()
            .find(|i| i.metric == metric && i.baseline == baseline && i.candidate == candidate)
    }

    /// Records a discrepancy for every (mode, metric) whose computed mean
    /// disagrees with a published value by more than that value's rounding
    /// precision. Published values for modes absent from the report are
    /// ignored.
    pub fn check_reported(&mut self, reported: &[ReportedMean]) {
        let mut conflicts: BTreeMap<(Mode, Metric), Vec<ReportedMean>> = BTreeMap::new();
        for r in reported {
            let Some(computed) = self.mean(r.mode, r.metric) else {
                continue;
            };
            let tolerance = 0.5 * 10f64.powi(-(r.decimals as i32)) + 1e-9;
            if (computed - r.value).abs() > tolerance {
                conflicts.entry((r.mode, r.metric)).or_default().push(r.clone());
            }
        }
        self.discrepancies = conflicts
            .into_iter()
            .map(|((mode, metric), reported)| {
                let computed_mean = self.mean(mode, metric).expect("checked above");
                let listed = reported
                    .iter()
                    .map(|r| format!("{:.*} ({})", r.decimals as usize, r.value, r.source))
                    .collect::<Vec<_>>()
                    .join(", ");
                Discrepancy {
                    mode,
                    metric,
                    computed_mean,
                    note: format!(
                        "{mode} {}: mean of per-question cells is {computed_mean:.3}, reported {listed}",
                        metric.as_str()
                    ),
                    reported,
                }
            })
            .collect();
    }

    /// Fixed-width text table: two decimals per cell, three for means.
    pub fn render_text(&self) -> String {
        let widths: Vec<usize> = self.modes.iter().map(|m| m.as_str().len().max(5)).collect();
        let block_width: usize = widths.iter().map(|w| w + 2).sum();
        let qid_width = self
            .rows
            .iter()
            .map(|r| r.question_id.len())
            .chain([4])
            .max()
            .unwrap_or(4);

        let mut out = String::new();
        let _ = writeln!(out, "{:qid_width$} | {:block_width$}| relevance", "", "faithfulness");
        let header: String = self
            .modes
            .iter()
            .zip(&widths)
            .map(|(m, w)| format!("{:>w$}  ", m.as_str()))
            .collect();
        let _ = writeln!(out, "{:qid_width$} | {header}| {}", "qid", header.trim_end());
        let rule = format!(
            "{}-+-{}+-{}",
            "-".repeat(qid_width),
            "-".repeat(block_width),
            "-".repeat(block_width - 2)
        );
        let _ = writeln!(out, "{rule}");

        let cells = |values: Vec<Option<f64>>, decimals: usize| -> String {
            values
                .iter()
                .zip(&widths)
                .map(|(v, w)| match v {
                    Some(v) => format!("{v:>w$.decimals$}  "),
                    None => format!("{:>w$}  ", "-"),
                })
                .collect()
        };
        for row in &self.rows {
            let faith = cells(row.cells.iter().map(|c| c.map(|c| c.faithfulness)).collect(), 2);
            let rel = cells(row.cells.iter().map(|c| c.map(|c| c.relevance)).collect(), 2);
            let _ = writeln!(out, "{:qid_width$} | {faith}| {}", row.question_id, rel.trim_end());
        }
        let _ = writeln!(out, "{rule}");
        let faith = cells(self.means.iter().map(|m| Some(m.faithfulness)).collect(), 3);
        let rel = cells(self.means.iter().map(|m| Some(m.relevance)).collect(), 3);
        let _ = writeln!(out, "{:qid_width$} | {faith}| {}", "mean", rel.trim_end());

        if !self.improvements.is_empty() {
            let _ = writeln!(out, "\nrelative improvement");
            for i in &self.improvements {
                let pct = match i.rounded_percent() {
                    Some(p) => format!("{p:+}%"),
                    None => "undefined (zero baseline)".to_owned(),
                };
                let _ = writeln!(
                    out,
                    "  {:<13} {:>8} -> {:<8} {:.3} -> {:.3}  {pct}",
                    i.metric.as_str(),
                    i.baseline.as_str(),
                    i.candidate.as_str(),
                    i.baseline_mean,
                    i.candidate_mean
                );
            }
        }
        if !self.missing.is_empty() {
            let _ = writeln!(out, "\nmissing cells");
            for m in &self.missing {
                let _ = writeln!(out, "  {} {}", m.question_id, m.mode);
            }
        }
        if !self.discrepancies.is_empty() {
            let _ = writeln!(out, "\ndiscrepancies");
            for d in &self.discrepancies {
                let _ = writeln!(out, "  {}", d.note);
            }
        }
        out
    }

    /// One JSON object per question row, followed by one summary object.
    pub fn render_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut obj = serde_json::Map::new();
            obj.insert("question_id".into(), row.question_id.clone().into());
            for (mode, cell) in self.modes.iter().zip(&row.cells) {
                obj.insert(
                    mode.as_str().into(),
                    serde_json::to_value(cell).expect("cell serializes"),
                );
            }
            out.push_str(&serde_json::Value::Object(obj).to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "summary": {
                "means": self.means,
                "improvements": self.improvements,
                "missing": self.missing,
                "discrepancies": self.discrepancies,
            }
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::EchoLlm;

    /// Counts sentence boundaries with a plain byte scan.
    fn boundary_count(text: &str) -> usize {
        let bytes = text.as_bytes();
        let mut count = 0;
        let mut has_content = false;
        for (i, &b) in bytes.iter().enumerate() {
            let terminal = matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace());
            if !b.is_ascii_whitespace() {
                has_content = true;
            }
            if (terminal || b == b'\n') && has_content {
                count += 1;
                has_content = false;
            }
        }
        count + usize::from(has_content)
    }

    #[test]
    fn sentence_split_examples() {
        assert!(decompose_claims(&LexicalJudge, "").unwrap().is_empty());
        assert_eq!(decompose_claims(&LexicalJudge, "A. B.").unwrap(), ["A.", "B."]);
        assert_eq!(
            split_sentences("Dr.Who is 3.5 m tall! Yes?No"),
            ["Dr.Who is 3.5 m tall!", "Yes?No"]
        );
        assert_eq!(split_sentences("line one\nline two."), ["line one", "line two."]);
    }

    #[test]
    fn sentence_count_matches_boundary_scan() {
        for text in [
            "One. Two! Three?",
            "no terminator",
            "trailing space. ",
            "a.b. c\n\nd",
            "...",
            "Mixed? yes. and\nmore",
        ] {
            assert_eq!(split_sentences(text).len(), boundary_count(text), "{text:?}");
        }
    }

    #[test]
    fn faithfulness_examples() {
        let zero = faithfulness::<&str>(&LexicalJudge, &[], &["ctx"]).unwrap();
        assert_eq!(zero.score(), 0.0);
        assert!(zero.is_undefined());

        let sevenths = Fraction {
            numerator: 5,
            denominator: 7,
        };
        assert_eq!(format!("{:.2}", sevenths.score()), "0.71");
    }

    #[test]
    fn lexical_support_verdicts() {
        let context = "Obesity policy should focus on access to fresh fruits and vegetables.";
        // content words / present in context, counted by hand
        let table = [
            ("Policy should focus on access.", true), // policy focus access: 3/3
            ("Fresh vegetables reduce obesity costs sharply.", false), // 3/6
            ("Fresh vegetables reduce obesity.", true), // 3/4
            ("Taxes on soda work.", false),           // taxes soda work: 0/3
            ("It is what it is.", false),             // no content words
        ];
        for (claim, expected) in table {
            assert_eq!(LexicalJudge.is_supported(claim, context).unwrap(), expected, "{claim}");
        }
        let claims: Vec<String> = table.iter().map(|(c, _)| c.to_string()).collect();
        let f = faithfulness(&LexicalJudge, &claims, &[context]).unwrap();
        assert_eq!((f.numerator, f.denominator), (2, 5));
    }

    #[test]
    fn threshold_is_inclusive_at_sixty_percent() {
        // 3 of 5 content words present
        assert!(LexicalJudge
            .is_supported("alpha beta gamma delta epsilon", "alpha beta gamma")
            .unwrap());
        // 2 of 4
        assert!(!LexicalJudge
            .is_supported("alpha beta gamma delta", "alpha beta")
            .unwrap());
    }

    #[test]
    fn relevance_examples() {
        let q = "How should obesity be reframed for policy action?";
        let same = relevance(&LexicalJudge, q, q).unwrap();
        assert_eq!(same.score(), 1.0);
        let empty = relevance(&LexicalJudge, q, "").unwrap();
        assert_eq!(empty.score(), 0.0);
        assert!(empty.is_undefined());
        let answer = "Reframe obesity. Policy matters. Action helps. Obesity rises. Cats purr.";
        let r = relevance(&LexicalJudge, q, answer).unwrap();
        assert_eq!((r.numerator, r.denominator), (4, 5));
        assert_eq!(format!("{:.2}", r.score()), "0.80");
    }

    #[test]
    fn flipping_a_verdict_never_lowers_faithfulness() {
        for total in 1u32..12 {
            for supported in 0..total {
                let before = Fraction {
                    numerator: supported,
                    denominator: total,
                };
                let after = Fraction {
                    numerator: supported + 1,
                    denominator: total,
                };
                assert!(after.score() >= before.score());
            }
        }
    }

    #[test]
    fn relative_improvement_examples() {
        assert_eq!(relative_improvement(0.347, 0.621).unwrap().round(), 79.0);
        assert_eq!(relative_improvement(0.450, 0.697).unwrap().round(), 55.0);
        assert_eq!(relative_improvement(0.621, 0.797).unwrap().round(), 28.0);
        assert_eq!(relative_improvement(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(relative_improvement(0.0, 0.4), None);
    }

    #[test]
    fn natural_order() {
        let mut ids = vec!["Q10", "Q2", "Q1", "A", "Q02b"];
        ids.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(ids, ["A", "Q1", "Q2", "Q02b", "Q10"]);
    }

    #[test]
    fn aggregate_single_record_and_errors() {
        assert!(aggregate(&[]).is_err());
        let r = EvalRecord::transcribed("Q1", Mode::Basic, 0.5, 0.25);
        let report = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(report.mean(Mode::Basic, Metric::Faithfulness), Some(0.5));
        assert_eq!(report.mean(Mode::Basic, Metric::Relevance), Some(0.25));
        assert!(aggregate(&[r.clone(), r]).is_err());
        let bad = EvalRecord::transcribed("Q1", Mode::Basic, 1.5, 0.0);
        assert!(aggregate(&[bad]).is_err());
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let mut r = EvalRecord::from_fractions(
            "Q1",
            Mode::Vanilla,
            Fraction {
                numerator: 1,
                denominator: 3,
            },
            Fraction {
                numerator: 0,
                denominator: 0,
            },
        );
        assert!(r.validate().is_ok());
        assert!(r.relevance_undefined);
        r.faithfulness = 0.5;
        assert!(r.validate().is_err());
    }

    #[test]
    fn missing_cells_are_flagged() {
        let records = [
            EvalRecord::transcribed("Q1", Mode::Vanilla, 0.5, 0.5),
            EvalRecord::transcribed("Q1", Mode::Basic, 1.0, 1.0),
            EvalRecord::transcribed("Q2", Mode::Vanilla, 0.0, 0.0),
        ];
        let report = aggregate(&records).unwrap();
        assert_eq!(
            report.missing,
            [MissingCell {
                question_id: "Q2".into(),
                mode: Mode::Basic
            }]
        );
        assert_eq!(report.mean(Mode::Basic, Metric::Faithfulness), Some(1.0));
        assert!(report.render_text().contains("missing cells\n  Q2 basic"));
    }

    #[test]
    fn zero_baseline_renders_undefined() {
        let records = [
            EvalRecord::transcribed("Q1", Mode::Vanilla, 0.0, 0.5),
            EvalRecord::transcribed("Q1", Mode::Advanced, 1.0, 1.0),
        ];
        let report = aggregate(&records).unwrap();
        let imp = report
            .improvement(Metric::Faithfulness, Mode::Vanilla, Mode::Advanced)
            .unwrap();
        assert_eq!(imp.percent, None);
        assert!(report.render_text().contains("undefined (zero baseline)"));
    }

    struct Scripted(std::sync::Mutex<Vec<&'static str>>);
    impl LlmBackend for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _s: &str, _p: &str, _m: u32, t: f64) -> Result<String> {
            assert_eq!(t, 0.0);
            Ok(self.0.lock().unwrap().remove(0).to_owned())
        }
    }

    #[test]
    fn llm_judge_parses_replies() {
        let judge = LlmJudge::new(Scripted(std::sync::Mutex::new(vec![
            "1. First claim.\n- Second claim\n\n",
            "YES.",
            "no",
            "maybe",
        ])));
        assert_eq!(judge.decompose("x").unwrap(), ["First claim.", "Second claim"]);
        assert!(judge.is_supported("c", "ctx").unwrap());
        assert!(!judge.is_relevant("s", "q").unwrap());
        assert_eq!(judge.is_supported("c", "ctx").unwrap_err().stage(), Some(Stage::Judge));
        assert_eq!(judge.name(), "llm:scripted");
    }

    #[test]
    fn non_verdict_reply_is_an_error() {
        let judge = LlmJudge::new(EchoLlm);
        // echo returns the prompt, which is neither YES nor NO
        assert!(judge.is_relevant("s", "q").is_err());
    }
}
