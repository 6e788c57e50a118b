//! The full accumulate, infer and eval cycle on the bundled scripted
//! fixture, through the same entry points the command-line tool uses.
//!
//! `cargo run --example pipeline`

use std::path::Path;

use skillbank::config::RunConfig;
use skillbank::pipeline::{cmd_accumulate, cmd_eval, cmd_infer, cmd_kb_inspect, cmd_kb_validate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e/config.yaml");
    let config = RunConfig::load(&fixture)?;
    let run = tempfile::tempdir()?;

    let acc = cmd_accumulate(&config, Some(run.path()))?;
    println!("accumulate: {}", serde_json::to_string(&acc)?);

    let kb_dir = run.path().join("kb");
    println!("kb inspect: {}", serde_json::to_string(&cmd_kb_inspect(&kb_dir, &config.namespace)?)?);
    println!("kb validate: {:?}", cmd_kb_validate(&kb_dir, &config.namespace, config.max_experiences));

    let with_kb = run.path().join("with-knowledge");
    let without = run.path().join("without-knowledge");
    let config = RunConfig { kb_dir: Some(kb_dir), ..config };
    cmd_infer(&config, Some(&with_kb), false)?;
    cmd_infer(&config, Some(&without), true)?;

    for (label, dir) in [("with knowledge", &with_kb), ("without knowledge", &without)] {
        let report = cmd_eval(dir, None)?;
        println!("\n== {label}\n{}", report.table());
    }
    Ok(())
}
