use serde_json::Value;

use super::extract::{parse_skill_completion, SkillFragment};
use super::{AccumulationError, AccumulationSettings};
use crate::gateway::{templates, Gateway, GatewayError, ModelRole, PromptRegistry};
use crate::index::{Embedder, ExperienceIndex};
use crate::inference::render_bullets;
use crate::knowledge::{
    validate_experience_with, ChangeLog, ChangeRecord, ExperienceBank, ExperienceId, KnowledgeOp, OpKind,
    SkillDocument, WireOp,
};
use crate::textutil::{extract_last_json, JsonShape};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsolidationReport {
    pub ops_applied: Vec<KnowledgeOp>,
    pub merges_triggered: usize,
    pub prunes_triggered: usize,
    pub skill_refined: bool,
    pub changes: ChangeLog,
}

impl ConsolidationReport {
    fn absorb(&mut self, other: ConsolidationReport) {
        self.ops_applied.extend(other.ops_applied);
        self.merges_triggered += other.merges_triggered;
        self.prunes_triggered += other.prunes_triggered;
        self.skill_refined |= other.skill_refined;
        self.changes.extend(other.changes);
    }
}

/// Applies experience ops and skill updates against the knowledge model.
pub struct Consolidator<'a> {
    pub gateway: &'a Gateway,
    pub registry: &'a PromptRegistry,
    pub embedder: &'a Embedder,
    pub settings: &'a AccumulationSettings,
}

impl Consolidator<'_> {
    fn kb_call(&self, template: &str, bindings: &[(&str, &str)]) -> Result<String, GatewayError> {
        let prompt = self.registry.render(template, bindings)?;
        self.gateway
            .complete_prompt(ModelRole::Kb, template, prompt, Vec::new(), self.settings.consolidation)
            .map(|c| c.text)
    }

    /// Removes vectors for changed ids, then embeds whatever is missing.
    fn refresh_index(&self, bank: &ExperienceBank, index: &mut ExperienceIndex, log: &[ChangeRecord]) -> Result<(), AccumulationError> {
        for record in log {
            for id in record.removed.iter().chain(&record.modified) {
                index.remove(*id);
            }
        }
        index.sync(bank, self.embedder)?;
        Ok(())
    }

    fn merged_text(&self, texts: &[&str]) -> Result<Option<String>, AccumulationError> {
        let listing = texts
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. {t}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        for attempt in 0..2 {
            let reply = self.kb_call(templates::MERGE_EXPERIENCES, &[("experiences_text", &listing)])?;
            let text = reply.trim().trim_matches('"').trim().to_string();
            if validate_experience_with(&text, self.settings.max_experience_words).is_ok() {
                return Ok(Some(text));
            }
            tracing::warn!(attempt, "merged experience failed validation");
        }
        Ok(None)
    }

    /// Adds `text`, folding in every entry whose similarity to it is strictly
    /// above the merge threshold.
    pub fn consolidate_add(
        &self,
        bank: &mut ExperienceBank,
        index: &mut ExperienceIndex,
        text: &str,
        source_task: Option<&str>,
    ) -> Result<ConsolidationReport, AccumulationError> {
        let vector = self.embedder.embed(text)?;
        let similar: Vec<ExperienceId> = index
            .score_all(&vector)?
            .into_iter()
            .filter(|m| m.score > self.settings.theta_sim && bank.contains(m.entry_id))
            .map(|m| m.entry_id)
            .collect();
        let add = KnowledgeOp::Add { text: text.to_string() };
        let mut report = ConsolidationReport::default();

        let merged = if similar.is_empty() {
            None
        } else {
            let mut texts: Vec<&str> = similar.iter().filter_map(|id| bank.get(*id)).map(|e| e.text.as_str()).collect();
            texts.push(text);
            self.merged_text(&texts)?
        };

        let added = bank.apply_from(&add, source_task)?;
        let new_id = added.added[0];
        report.changes.push(added);
        report.ops_applied.push(add);
        if let Some(merged) = merged {
            let mut sources = similar;
            sources.push(new_id);
            let op = KnowledgeOp::Merge { text: merged, sources };
            report.changes.push(bank.apply_from(&op, source_task)?);
            report.ops_applied.push(op);
            report.merges_triggered = 1;
        } else {
            index.insert(new_id, vector)?;
        }
        self.refresh_index(bank, index, &report.changes)?;
        Ok(report)
    }

    /// Applies critique ops in order, then prunes if the bank is over its
    /// cap. Ops that do not apply (unknown ids) are skipped with a warning.
    pub fn apply_ops(
        &self,
        bank: &mut ExperienceBank,
        index: &mut ExperienceIndex,
        ops: &[KnowledgeOp],
        source_task: Option<&str>,
    ) -> Result<ConsolidationReport, AccumulationError> {
        let mut report = ConsolidationReport::default();
        for op in ops {
            match op {
                KnowledgeOp::Add { text } => report.absorb(self.consolidate_add(bank, index, text, source_task)?),
                other => match bank.apply_from(other, source_task) {
                    Ok(record) => {
                        self.refresh_index(bank, index, std::slice::from_ref(&record))?;
                        report.changes.push(record);
                        report.ops_applied.push(other.clone());
                    }
                    Err(e) => tracing::warn!(error = %e, op = ?other.kind(), "op skipped"),
                },
            }
        }
        report.absorb(self.prune(bank, index)?);
        Ok(report)
    }

    /// Curates the bank when it exceeds the cap, then evicts the oldest
    /// entries if the model's ops were not enough.
    pub fn prune(&self, bank: &mut ExperienceBank, index: &mut ExperienceIndex) -> Result<ConsolidationReport, AccumulationError> {
        let mut report = ConsolidationReport::default();
        if bank.len() <= self.settings.max_experiences {
            return Ok(report);
        }
        report.prunes_triggered = 1;
        let listing = render_bullets(bank.entries().map(|e| (e.id, e.text.as_str())));
        let count = bank.len().to_string();
        match self.kb_call(templates::EXPERIENCE_MANAGE, &[("exp_count", &count), ("experiences", &listing)]) {
            Ok(reply) => {
                for op in manage_ops(&reply) {
                    match bank.apply(&op) {
                        Ok(record) => {
                            report.changes.push(record);
                            report.ops_applied.push(op);
                        }
                        Err(e) => tracing::warn!(error = %e, "prune op skipped"),
                    }
                }
            }
            Err(e) => tracing::warn!(error = %e, "library curation call failed; evicting oldest"),
        }
        let evicted = bank.evict_oldest(self.settings.max_experiences);
        for record in &evicted {
            report.ops_applied.push(KnowledgeOp::Delete { target: record.removed[0] });
        }
        report.changes.extend(evicted);
        self.refresh_index(bank, index, &report.changes)?;
        Ok(report)
    }

    fn skill_call(&self, template: &str, bindings: &[(&str, &str)]) -> Result<Option<SkillDocument>, AccumulationError> {
        for attempt in 0..2 {
            let reply = self.kb_call(template, bindings)?;
            match parse_skill_completion(&reply) {
                Ok(f) => return Ok(Some(f.document)),
                Err(e) => tracing::warn!(attempt, error = %e, template, "skill completion rejected"),
            }
        }
        Ok(None)
    }

    /// Folds fragments into the global skill. With no global skill the first
    /// fragment becomes it. A failed merge keeps the previous document.
    pub fn merge_skill(
        &self,
        global: Option<&SkillDocument>,
        fragments: &[SkillFragment],
    ) -> Result<Option<SkillDocument>, AccumulationError> {
        let (base, rest) = match (global, fragments) {
            (_, []) => return Ok(global.cloned()),
            (Some(g), all) => (g.clone(), all),
            (None, [first, rest @ ..]) => (first.document.clone(), rest),
        };
        if rest.is_empty() {
            return Ok(Some(base));
        }
        let new_skills = rest.iter().map(|f| f.markdown_text.as_str()).collect::<Vec<_>>().join("\n\n");
        let existing = base.render();
        match self.skill_call(templates::MERGE_SKILL, &[("existing_skill", &existing), ("new_skills", &new_skills)])? {
            Some(mut merged) => {
                merged.metadata.version = base.metadata.version.bump_major();
                Ok(Some(merged))
            }
            None => Ok(Some(base)),
        }
    }

    /// One refinement pass when the skill is over the word budget. Returns
    /// the refined document, or `None` when nothing changed.
    pub fn refine_skill(&self, skill: &SkillDocument) -> Result<Option<SkillDocument>, AccumulationError> {
        let words = skill.word_count();
        if words <= self.settings.max_skill_words {
            return Ok(None);
        }
        let content = skill.render();
        let count = words.to_string();
        let refined = self.skill_call(templates::SKILL_MANAGE, &[("skill_content", &content), ("word_count", &count)])?;
        Ok(refined.map(|mut doc| {
            doc.metadata.version = skill.metadata.version;
            doc
        }))
    }
}

/// Merge and delete ops from a library-curation completion; anything else
/// is ignored.
fn manage_ops(reply: &str) -> Vec<KnowledgeOp> {
    let Some(Value::Array(items)) = extract_last_json(reply, JsonShape::Array) else {
        tracing::warn!("no JSON array in curation reply");
        return Vec::new();
    };
    items
        .into_iter()
        .filter_map(|item| serde_json::from_value::<WireOp>(item).ok())
        .filter_map(|w| KnowledgeOp::from_wire(&w).ok())
        .filter(|op| matches!(op.kind(), OpKind::Merge | OpKind::Delete))
        .collect()
}
