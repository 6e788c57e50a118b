//! Prepares a test task against an existing knowledge base: decomposition,
//! retrieval, experience rewriting and skill adaptation. Prints the first
//! user message the agent would receive.
//!
//! `cargo run --example infer_with_knowledge`

use std::sync::Arc;

use skillbank::gateway::{Gateway, Matcher, PromptRegistry, ScriptedBackend};
use skillbank::index::{CachedEmbedder, Embedder, EmbeddingBackend, ExperienceIndex, HashingEmbedder};
use skillbank::inference::{prepare_task, InferenceSettings, KnowledgeContext};
use skillbank::knowledge::{KnowledgeBase, KnowledgeOp, SkillDocument};
use skillbank::media::ImagePayload;
use skillbank::runtime::TaskInstance;
use skillbank::tools::ToolName;

const SKILL: &str = "---
name: count-objects
description: Count objects in a photo reliably.
version: 3.0.0
---

# Count Objects

## Workflow
1. **Locate**: crop the region that holds the objects.
2. **Count**: run code on the crop and mark each object.
3. **Check**: recount with a second method when the scene is dense.
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut kb = KnowledgeBase::empty("counting");
    for text in [
        "When counting small objects, crop and zoom before counting.",
        "For dense scenes, verify the count with a second method.",
        "When a chart has two axes, read both legends first.",
    ] {
        kb.bank.apply(&KnowledgeOp::Add { text: text.into() })?;
    }
    kb.skill = Some(SkillDocument::parse(SKILL)?);

    let embedder: Embedder = CachedEmbedder::new(Arc::new(HashingEmbedder::new(256)) as Arc<dyn EmbeddingBackend>);
    let mut index = ExperienceIndex::new();
    index.sync(&kb.bank, &embedder)?;

    let t = Matcher::template;
    let kb_model = Arc::new(
        ScriptedBackend::new()
            .reply(
                t("TASK_DECOMPOSITION_PROMPT"),
                r#"[{"type": "visual_extraction", "query": "crop and zoom to count small objects"},
                    {"type": "verification", "query": "verify a count in a dense scene"}]"#,
            )
            .reply(
                t("EXPERIENCE_REWRITE_PROMPT"),
                r#"{"E0": "Crop the table top and zoom in before counting the apples.",
                    "E1": "Recount the apples by a second method, since the bowl is crowded."}"#,
            )
            .reply(
                t("ADAPT_SKILL_PROMPT"),
                "# Count Apples\n\n1. **Locate**: crop the table top.\n2. **Count**: mark each apple in code.",
            ),
    );
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new()), kb_model.clone());
    let registry = PromptRegistry::builtin();
    let settings = InferenceSettings { top_k: 2, ..InferenceSettings::default() };
    let ctx = KnowledgeContext { gateway: &gateway, registry: &registry, kb: &kb, index: &index, embedder: &embedder, settings: &settings };

    let task = TaskInstance::new("apples", "How many apples are on the table?")
        .with_tools(vec![ToolName::CodeInterpreter])
        .with_images(vec![ImagePayload::png(b"\x89PNG\r\n\x1a\n".to_vec())]);
    let prepared = prepare_task(&ctx, &task)?;

    println!("subtasks:");
    for s in &prepared.subtasks {
        println!("  {}: {}", s.kind, s.query);
    }
    println!("retrieved:");
    for r in &prepared.retrieved {
        println!("  {} {:.3} {}", r.entry.id, r.score, r.entry.text);
    }
    println!("recorded usage ids: {:?}", prepared.usage.retrieved_ids);
    println!("\n--- first user message ---\n{}", prepared.prompt.user_text);
    println!("--- knowledge-model calls: {} ---", kb_model.requests().len());
    Ok(())
}
