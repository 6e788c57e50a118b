//! Lists the built-in prompt templates with their slots and renders one.
//! Set `SKILLBANK_TEMPLATE_DIR` to a directory of `.txt` files to see
//! overrides take effect.
//!
//! `cargo run --example templates`

use std::path::PathBuf;

use skillbank::gateway::PromptRegistry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = match std::env::var_os("SKILLBANK_TEMPLATE_DIR") {
        Some(dir) => PromptRegistry::with_overrides(&PathBuf::from(dir))?,
        None => PromptRegistry::builtin(),
    };
    let mut ids: Vec<&str> = registry.ids().collect();
    ids.sort_unstable();
    for id in ids {
        let template = registry.get(id)?;
        println!("{id:<28} {:<36} slots {:?}", PromptRegistry::asset_file(id).unwrap_or("-"), template.slots());
    }

    // Every slot must be bound; a misspelt binding is an error, not a blank.
    let question = "How many apples are on the table?";
    if let Err(e) = registry.render("TASK_DECOMPOSITION_PROMPT", &[("task", question)]) {
        println!("\nwrong binding: {e}");
    }
    let rendered = registry.render("TASK_DECOMPOSITION_PROMPT", &[("task_description", question)])?;
    println!("\n{rendered}");
    Ok(())
}
