//! Corpus ingestion, filtering, statistics and synthetic programs.

mod inject;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codegen::{generate_symbolic, CodegenOptions};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::interp::ObjectKey;
use crate::misuse::MisuseLabel;
use crate::syntax::{parse, NodeKind, SyntaxTree};

pub use inject::{inject_misuse, misuse_corpus, Ineligible};
pub use synth::synthesize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Ingested,
    Synthetic,
}

/// Ground truth known for generated scripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Oracle {
    /// Sorted, duplicates kept.
    pub dfg_edges: Vec<(ObjectKey, ObjectKey)>,
    pub statement_count: usize,
    pub misuse: Option<MisuseLabel>,
}

/// Misuse annotation as found in a corpus line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisuseAnnotation {
    pub has_misuse: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misuse_byte_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub id: String,
    pub code: String,
    pub char_count: usize,
    pub origin: Origin,
    pub oracle: Option<Oracle>,
    pub misuse: Option<MisuseAnnotation>,
}

/// First 16 hex digits of the SHA-256 of the source.
pub fn content_id(code: &str) -> String {
    hex::encode(&Sha256::digest(code.as_bytes())[..8])
}

impl Script {
    pub fn new(code: String, origin: Origin) -> Self {
        Script { id: content_id(&code), char_count: code.chars().count(), code, origin, oracle: None, misuse: None }
    }

    pub fn has_misuse(&self) -> bool {
        self.misuse.as_ref().is_some_and(|m| m.has_misuse)
    }

    /// Node id of the annotated misuse occurrence in `tree`.
    pub fn misuse_node(&self, tree: &SyntaxTree) -> Option<u32> {
        let m = self.misuse.as_ref().filter(|m| m.has_misuse)?;
        tree.identifier_at(m.misuse_byte_offset?).map(|n| n.node_id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusLine {
    code: String,
    #[serde(default)]
    has_misuse: Option<bool>,
    #[serde(default)]
    misuse_byte_offset: Option<usize>,
    #[serde(default)]
    correct_name: Option<String>,
}

/// A per-file or per-line problem that did not stop loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

fn py_files(dir: &Path, out: &mut Vec<PathBuf>, issues: &mut Vec<LoadIssue>) {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            issues.push(LoadIssue { path: dir.to_path_buf(), line: None, message: e.to_string() });
            return;
        }
    };
    for entry in entries.flatten() {
        let p = entry.path();
        if p.is_dir() {
            py_files(&p, out, issues);
        } else if p.extension().is_some_and(|e| e == "py") {
            out.push(p);
        }
    }
}

/// Loads a directory of `.py` files (recursively, sorted by path) or a
/// JSON-lines file. Unreadable files and malformed lines are reported, not fatal.
pub fn load_corpus(path: &Path) -> Result<(Vec<Script>, Vec<LoadIssue>)> {
    let mut issues = Vec::new();
    let mut scripts = Vec::new();
    if path.is_dir() {
        let mut files = Vec::new();
        py_files(path, &mut files, &mut issues);
        files.sort();
        for f in files {
            match fs::read_to_string(&f) {
                Ok(code) => scripts.push(Script::new(code, Origin::Ingested)),
                Err(e) => issues.push(LoadIssue { path: f, line: None, message: e.to_string() }),
            }
        }
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CorpusLine>(line) {
                Ok(l) => {
                    let mut s = Script::new(l.code, Origin::Ingested);
                    if let Some(has_misuse) = l.has_misuse {
                        s.misuse = Some(MisuseAnnotation {
                            has_misuse,
                            misuse_byte_offset: l.misuse_byte_offset,
                            correct_name: l.correct_name,
                        });
                    }
                    scripts.push(s);
                }
                Err(e) => issues.push(LoadIssue { path: path.to_path_buf(), line: Some(i + 1), message: e.to_string() }),
            }
        }
    }
    Ok((scripts, issues))
}

/// Writes scripts as JSON lines in the corpus schema.
pub fn write_jsonl(path: &Path, scripts: &[Script]) -> Result<()> {
    let mut out = String::new();
    for s in scripts {
        let line = CorpusLine {
            code: s.code.clone(),
            has_misuse: s.misuse.as_ref().map(|m| m.has_misuse),
            misuse_byte_offset: s.misuse.as_ref().and_then(|m| m.misuse_byte_offset),
            correct_name: s.misuse.as_ref().and_then(|m| m.correct_name.clone()),
        };
        let mut v = serde_json::to_value(&line)?;
        if let Some(obj) = v.as_object_mut() {
            obj.retain(|_, x| !x.is_null());
        }
        out.push_str(&serde_json::to_string(&v)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub too_long: usize,
    pub codegen_error: usize,
    pub misuse_label_error: usize,
    pub retained: usize,
    pub retained_pct: f64,
}

/// Why a script was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    TooLong,
    CodegenError,
    MisuseLabelError,
}

/// Dry-runs one script through the rules, in order: length, then parsing and
/// code generation, then the misuse label.
pub fn check(script: &Script, config: &Config) -> Verdict {
    if script.char_count > config.max_chars {
        return Verdict::TooLong;
    }
    let Ok(tree) = parse(&script.code) else { return Verdict::CodegenError };
    let misuse_node = script.misuse_node(&tree);
    let opts = CodegenOptions { max_args: config.max_args, misuse_node, pause_at: None };
    let gen = generate_symbolic(&tree, &opts);
    if gen.abort.is_some() {
        return Verdict::CodegenError;
    }
    if script.has_misuse() {
        let ok = misuse_node.is_some_and(|n| tree.find(n).is_some_and(|n| n.kind == NodeKind::Identifier))
            && gen.trace.misuse.as_ref().is_some_and(|m| {
                m.source_call.is_some()
                    && script
                        .misuse
                        .as_ref()
                        .and_then(|a| a.correct_name.as_deref())
                        .is_some_and(|c| m.snapshot.iter().any(|(n, _)| n == c))
            });
        if !ok {
            return Verdict::MisuseLabelError;
        }
    }
    Verdict::Keep
}

fn report(total: usize, verdicts: impl Iterator<Item = Verdict>) -> FilterReport {
    let mut r = FilterReport { total, ..Default::default() };
    for v in verdicts {
        match v {
            Verdict::Keep => r.retained += 1,
            Verdict::TooLong => r.too_long += 1,
            Verdict::CodegenError => r.codegen_error += 1,
            Verdict::MisuseLabelError => r.misuse_label_error += 1,
        }
    }
    r.retained_pct = if total == 0 { 0.0 } else { 100.0 * r.retained as f64 / total as f64 };
    r
}

pub fn apply_filters(scripts: Vec<Script>, config: &Config) -> (Vec<Script>, FilterReport) {
    let verdicts: Vec<Verdict> = scripts.iter().map(|s| check(s, config)).collect();
    let r = report(scripts.len(), verdicts.iter().copied());
    let kept = scripts.into_iter().zip(verdicts).filter(|(_, v)| *v == Verdict::Keep).map(|(s, _)| s).collect();
    (kept, r)
}

/// Equal-width histogram over `[0, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<(f64, f64, usize)>,
}

impl Histogram {
    pub fn new(values: &[usize], bins: usize) -> Self {
        let max = values.iter().copied().max().unwrap_or(0) as f64;
        let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v as f64 / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { bins: counts.into_iter().enumerate().map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c)).collect() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (a, b, c) in &self.bins {
            out.push_str(&format!("{a},{b},{c}\n"));
        }
        out
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.2).sum()
    }
}

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone)]
pub struct CorpusStats {
    pub report: FilterReport,
    /// Characters per script, all scripts.
    pub chars: Histogram,
    /// Lambda calls per script, scripts that generate cleanly.
    pub lambdas: Histogram,
}

pub fn corpus_stats(scripts: &[Script], config: &Config) -> CorpusStats {
    let mut lambdas = Vec::new();
    let mut verdicts = Vec::with_capacity(scripts.len());
    for s in scripts {
        let v = check(s, config);
        if v != Verdict::TooLong {
            if let Ok(tree) = parse(&s.code) {
                let opts = CodegenOptions { max_args: config.max_args, misuse_node: s.misuse_node(&tree), pause_at: None };
                let gen = generate_symbolic(&tree, &opts);
                if gen.abort.is_none() {
                    lambdas.push(gen.trace.lambda_calls());
                }
            }
        }
        verdicts.push(v);
    }
    let chars: Vec<usize> = scripts.iter().map(|s| s.char_count).collect();
    CorpusStats {
        report: report(scripts.len(), verdicts.into_iter()),
        chars: Histogram::new(&chars, HISTOGRAM_BINS),
        lambdas: Histogram::new(&lambdas, HISTOGRAM_BINS),
    }
}
