//! Builds a small experience bank and skill, saves both, and reads them back.
//!
//! `cargo run --example knowledge_store`

use skillbank::knowledge::{ExperienceId, KnowledgeBase, KnowledgeOp, SkillDocument};

const SKILL: &str = "---
name: chart-reading
description: |
  Read values off bar and line charts.
version: 1.0.0
---

# Chart Reading

## Workflow
1. **Locate**: find the axis labels and legend.
2. **Crop**: zoom into the bars that matter.
3. **Read**: estimate each value against the gridlines.
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut kb = KnowledgeBase::empty("charts");
    for text in [
        "When a chart has two y-axes, match each series to its axis before reading values.",
        "If bars are thin, crop to the plot area before estimating heights.",
        "When gridlines are sparse, interpolate between the two nearest labelled ticks.",
    ] {
        kb.bank.apply(&KnowledgeOp::Add { text: text.into() })?;
    }
    let merged = kb.bank.apply(&KnowledgeOp::Merge {
        text: "Before reading any value, match the series to its axis and crop to the plot area.".into(),
        sources: vec![ExperienceId(0), ExperienceId(1)],
    })?;
    println!("merge removed {:?}, added {:?}", merged.removed, merged.added);
    kb.skill = Some(SkillDocument::parse(SKILL)?);

    for entry in kb.bank.entries() {
        println!("[{}] {}", entry.id, entry.text);
    }
    println!("next id: E{}", kb.bank.next_id());
    println!("violations: {:?}", kb.bank.violations(120));

    let dir = tempfile::tempdir()?;
    kb.save(dir.path())?;
    let loaded = KnowledgeBase::load(dir.path(), "charts")?;
    assert_eq!(loaded, kb);

    let skill = loaded.skill.as_ref().expect("skill saved");
    assert_eq!(skill.render(), SKILL);
    println!("skill round-trips byte-exact, {} words", skill.word_count());
    Ok(())
}
