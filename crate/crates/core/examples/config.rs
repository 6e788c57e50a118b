//! Parses run configurations: defaults, overrides, the derived per-stage
//! settings, and the error kinds reported for bad input.
//!
//! `cargo run --example config`

use skillbank::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let defaults = RunConfig::parse("")?;
    let rt = defaults.runtime();
    println!("exec sampling: {:?}, max turns {}, max images {}", rt.params, rt.max_turns, rt.max_images);
    let acc = defaults.accumulation();
    println!(
        "accumulation: rollouts {}, max ops {}, theta_sim {}, cap {}, experience words {}, skill words {}",
        acc.rollouts, acc.max_ops, acc.theta_sim, acc.max_experiences, acc.max_experience_words, acc.max_skill_words
    );
    let inf = defaults.inference();
    println!("retrieval: top_k {}, tau_min {}, decomposition {:?}", inf.top_k, inf.tau_min, inf.decomposition);

    let tuned = RunConfig::parse(
        "namespace: charts
rollouts: 8
top_k: 5
theta_sim: 0.8
grader: model_judge
tools:
  search: stub
  kernel_command: [python3, kernel.py]
",
    )?;
    println!("\noverridden config echoes as:\n{}", tuned.to_yaml());

    for bad in ["top_kk: 3", "theta_sim: 2.0", "rollouts: many", "models:\n  exec: {provider: scripted}\n  kb: {provider: scripted}"] {
        match RunConfig::parse(bad) {
            Ok(_) => println!("{bad:?} unexpectedly accepted"),
            Err(e) => println!("{bad:?} -> {e}"),
        }
    }
    Ok(())
}
