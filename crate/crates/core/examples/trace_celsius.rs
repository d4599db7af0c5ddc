//! Lowers a small function to interpreter instructions and prints the trace,
//! the matching pseudocode and the final memory.
//!
//! ```text
//! cargo run --example trace_celsius
//! ```

use ni_core::codegen::{generate_symbolic, CodegenOptions};
use ni_core::interp::format_pseudocode;
use ni_core::syntax::parse;

const SOURCE: &str = "\
def celsius_to_fahrenheit(celsius):
    fahrenheit = celsius * 1.8 + 32
    return fahrenheit

reading = celsius_to_fahrenheit(21)
";

fn main() -> ni_core::Result<()> {
    let tree = parse(SOURCE)?;
    let gen = generate_symbolic(&tree, &CodegenOptions::default());
    if let Some(abort) = gen.abort {
        return Err(abort.into());
    }
    println!("{SOURCE}");
    print!("{}", gen.trace.text());
    println!();
    print!("{}", format_pseudocode(&gen.trace.events));
    println!();
    println!("{}", serde_json::to_string_pretty(&gen.trace.memory_dump(None))?);
    println!(
        "{} lambda calls, {} memory entries for {} names",
        gen.trace.lambda_calls(),
        gen.trace.variables_created,
        gen.trace.distinct_names
    );
    Ok(())
}
