//! Function bodies run once, at definition time, however often the function
//! is called. Calls then go through the compiled signature.
//!
//! ```text
//! cargo run --example neural_compilation
//! ```

use ni_core::codegen::{generate_symbolic, CodegenOptions};
use ni_core::interp::FunctionKind;
use ni_core::syntax::{parse, walk};

fn report(label: &str, source: &str) -> ni_core::Result<()> {
    let tree = parse(source)?;
    let gen = generate_symbolic(&tree, &CodegenOptions::default());
    if let Some(abort) = gen.abort {
        return Err(abort.into());
    }
    let mut visits = Vec::new();
    walk(&tree, |n| {
        if n.kind.is_statement() {
            let line = tree.source[..n.span.start].matches('\n').count() + 1;
            visits.push(format!("line {line}: {}", gen.dispatch.get(&n.node_id).copied().unwrap_or(0)));
        }
    });
    let scopes = gen.trace.text().lines().filter(|l| l.contains("PUSH_SCOPE")).count();
    println!("== {label}");
    println!("{source}");
    println!("statement visits: {}", visits.join(", "));
    println!("function scopes entered: {scopes}, lambda calls: {}", gen.trace.lambda_calls());
    for r in &gen.trace.records {
        if r.callee.kind != FunctionKind::Builtin {
            println!("  call #{} {} {:?} with {} args -> #{}", r.id, r.callee.name, r.callee.kind, r.args.len(), r.result);
        }
    }
    println!();
    Ok(())
}

fn main() -> ni_core::Result<()> {
    let def = "def area(width, height):\n    result = width * height\n    return result\n";
    for calls in [0, 1, 5] {
        let mut src = def.to_string();
        for i in 0..calls {
            src.push_str(&format!("a{i} = area({i}, 2)\n"));
        }
        report(&format!("{calls} calls"), &src)?;
    }
    report(
        "recursion",
        "def fact(n):\n    if n <= 1:\n        return 1\n    return n * fact(n - 1)\nsix = fact(3)\n",
    )?;
    Ok(())
}
