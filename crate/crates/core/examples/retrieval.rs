//! Embeds a bank with the offline hashing embedder and runs single-query and
//! multi-query retrieval over it.
//!
//! `cargo run --example retrieval`

use std::sync::Arc;

use skillbank::index::{cosine, top_k, union_retrieve, CachedEmbedder, Embedder, EmbeddingBackend, ExperienceIndex, HashingEmbedder};
use skillbank::knowledge::{ExperienceBank, KnowledgeOp};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let embedder: Embedder = CachedEmbedder::new(Arc::new(HashingEmbedder::new(256)) as Arc<dyn EmbeddingBackend>);

    let mut bank = ExperienceBank::new();
    for text in [
        "When counting small objects, crop and zoom before counting.",
        "For dense scenes, verify the count with a second method.",
        "When a chart has two axes, read both legends first.",
        "If a web search returns nothing, rephrase the query with fewer words.",
        "When the question names a landmark, try reverse image search on the photo.",
    ] {
        bank.apply(&KnowledgeOp::Add { text: text.into() })?;
    }

    let mut index = ExperienceIndex::new();
    index.sync(&bank, &embedder)?;
    println!("indexed {} entries, dim {:?}", index.len(), index.dim());

    let query = embedder.embed("count the apples in a crowded photo")?;
    println!("\ntop 3 for a counting query:");
    for m in top_k(&query, &index, 3, 0.0)? {
        println!("  {:.3}  {}", m.score, bank.get(m.entry_id).unwrap().text);
    }

    let queries = [
        embedder.embed("count the apples in a crowded photo")?,
        embedder.embed("search the web for the landmark")?,
    ];
    println!("\nunion over two subtask queries:");
    for m in union_retrieve(&queries, &index, 2, 0.0)? {
        println!("  {:.3}  {}", m.score, bank.get(m.entry_id).unwrap().text);
    }

    let again = embedder.embed("count the apples in a crowded photo")?;
    println!("\nself-similarity {:.3}, cache hits {}", cosine(&query, &again)?, embedder.hits());
    Ok(())
}
