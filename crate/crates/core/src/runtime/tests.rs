use super::*;
use crate::config::Config;
use crate::guesser::Vocab;
use crate::syntax::parse;

fn model() -> Model {
    let config = Config { hidden: 8, encoder_heads: 2, executor_heads: 2, encoder_layers: 1, executor_layers: 1, ..Config::default() };
    let vocab = Vocab::build(
        "def f ( x ) : return x + 1 y = f ( 2 ) while y : y = y - 1 for i in range".split(' '),
        1,
        100,
        8,
    );
    Model::new(&config, vocab)
}

const SCRIPTS: [&str; 5] = [
    "def f(x):\n    return x + 1\ny = f(2)\n",
    "y = 3\nwhile y > 0:\n    y = y - 1\n    print(y)\n",
    "",
    "for i in range(10):\n    total = total + i * price\nreport(total)\n",
    "a = [1, 2, b]\nc = a[0] + len(a)\n",
];

fn trees() -> Vec<SyntaxTree> {
    SCRIPTS.iter().map(|s| parse(s).unwrap()).collect()
}

fn run<'m>(m: &'m Model, trees: &[SyntaxTree], mode: ExecMode, cap: Option<usize>) -> BatchRun<'m> {
    let jobs: Vec<ScriptJob> = trees.iter().map(|t| ScriptJob { tree: t, misuse_node: None }).collect();
    run_batch(m, &jobs, &RunOptions { max_args: 16, cap, mode })
}

fn vectors(run: &mut BatchRun) -> Vec<Vec<Vec<f64>>> {
    (0..run.generated.len())
        .map(|s| {
            (0..run.eval.executed_count(s) as u32)
                .map(|r| {
                    let v = run.eval.executed(s, r);
                    run.eval.g.value(v).data.clone()
                })
                .collect()
        })
        .collect()
}

use crate::syntax::SyntaxTree;

#[test]
fn pooled_matches_serial_bit_exactly() {
    let m = model();
    let trees = trees();
    let mut serial = run(&m, &trees, ExecMode::Serial, None);
    let mut pooled = run(&m, &trees, ExecMode::Pooled { workers: 2 }, None);
    for (a, b) in serial.generated.iter().zip(&pooled.generated) {
        assert_eq!(a.trace.text(), b.trace.text());
    }
    assert_eq!(vectors(&mut serial), vectors(&mut pooled));
    assert_eq!(serial.eval.lambda_calls, pooled.eval.lambda_calls);
}

#[test]
fn one_pass_per_round() {
    let m = model();
    let trees = trees();
    let calls: Vec<usize> = trees.iter().map(|t| crate::codegen::generate_symbolic(t, &Default::default()).trace.lambda_calls()).collect();
    let workers = 2;
    let per_worker: Vec<usize> = (0..workers).map(|w| calls.iter().skip(w).step_by(workers).sum()).collect();
    let pooled = run(&m, &trees, ExecMode::Pooled { workers }, None);
    assert_eq!(pooled.eval.executor_forwards, *per_worker.iter().max().unwrap());
    let serial = run(&m, &trees, ExecMode::Serial, None);
    assert_eq!(serial.eval.executor_forwards, calls.iter().sum::<usize>());
}

#[test]
fn cap_truncates_the_batch() {
    let m = model();
    let trees = trees();
    for mode in [ExecMode::Serial, ExecMode::Pooled { workers: 3 }] {
        let r = run(&m, &trees, mode, Some(5));
        assert_eq!(r.eval.lambda_calls, 5);
        assert!(r.generated.iter().any(|g| g.trace.truncated));
        let total: usize = r.generated.iter().map(|g| g.trace.lambda_calls()).sum();
        assert_eq!(total, 5);
    }
}

#[test]
fn guesses_are_pooled_once_per_source() {
    let m = model();
    let trees = trees();
    let mut r = run(&m, &trees, ExecMode::Serial, None);
    let a = r.eval.guess(0, 1);
    let b = r.eval.guess(0, 1);
    assert_eq!(a, b);
}
