//! Filters a corpus and prints the report and the two histograms. Without an
//! argument, a synthetic corpus with a few broken and oversized scripts is used.
//!
//! ```text
//! cargo run --example corpus_stats -- path/to/dir_or_corpus.jsonl
//! ```

use std::path::Path;

use ni_core::corpus::{corpus_stats, load_corpus, synthesize, Histogram, Origin, Script};
use ni_core::Config;

fn sparkline(h: &Histogram) -> String {
    const BARS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];
    let max = h.bins.iter().map(|b| b.2).max().unwrap_or(0).max(1);
    h.bins.iter().map(|b| if b.2 == 0 { ' ' } else { BARS[(b.2 * 7).div_ceil(max)] }).collect()
}

fn main() -> ni_core::Result<()> {
    let scripts = match std::env::args().nth(1) {
        Some(p) => {
            let (scripts, issues) = load_corpus(Path::new(&p))?;
            for i in issues {
                eprintln!("skipped {}:{:?}: {}", i.path.display(), i.line, i.message);
            }
            scripts
        }
        None => {
            let mut s = synthesize(1, 300, (3, 60));
            s.push(Script::new(format!("x = 1\n{}", "#".repeat(12_000)), Origin::Ingested));
            s.push(Script::new("square = lambda v: v * v\n".into(), Origin::Ingested));
            s.push(Script::new("class Point:\n    pass\n".into(), Origin::Ingested));
            s
        }
    };
    let stats = corpus_stats(&scripts, &Config::default());
    println!("{}", serde_json::to_string_pretty(&stats.report)?);
    let top = |h: &Histogram| h.bins.last().map_or(0.0, |b| b.1);
    println!("characters   0..{:<6.0} |{}|", top(&stats.chars), sparkline(&stats.chars));
    println!("lambda calls 0..{:<6.0} |{}|", top(&stats.lambdas), sparkline(&stats.lambdas));
    Ok(())
}
