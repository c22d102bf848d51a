//! Event schema: the roles of each event type and how many prompt slots each
//! role receives.
//!
//! Slot counts are data-driven: a role's count is the largest number of gold
//! arguments with that role found in any single training event.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EventInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role: String,
    pub slot_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub event_types: BTreeMap<String, Vec<RoleSpec>>,
}

impl Ontology {
    pub fn roles(&self, event_type: &str) -> Result<&[RoleSpec]> {
        self.event_types
            .get(event_type)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownEventType(event_type.to_string()))
    }

    pub fn slot_count(&self, event_type: &str, role: &str) -> Option<usize> {
        self.event_types
            .get(event_type)?
            .iter()
            .find(|r| r.role == role)
            .map(|r| r.slot_count)
    }

    /// Total number of slots in a joint prompt for `event_type`.
    pub fn total_slots(&self, event_type: &str) -> Result<usize> {
        Ok(self.roles(event_type)?.iter().map(|r| r.slot_count).sum())
    }

    /// Distinct role names across all event types, sorted.
    pub fn all_roles(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .event_types
            .values()
            .flatten()
            .map(|r| r.role.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        v.sort();
        v
    }

    pub fn check(&self) -> Result<()> {
        for (ty, roles) in &self.event_types {
            let mut seen = HashSet::new();
            for r in roles {
                if r.slot_count == 0 {
                    return Err(Error::Schema(format!(
                        "{ty}/{}: slot_count must be >= 1",
                        r.role
                    )));
                }
                if !seen.insert(r.role.as_str()) {
                    return Err(Error::Schema(format!("{ty}: duplicate role `{}`", r.role)));
                }
            }
        }
        Ok(())
    }

    /// Byte-stable JSON (map keys sorted).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ontology serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ont: Ontology = serde_json::from_str(&fs::read_to_string(path)?)?;
        ont.check()?;
        Ok(ont)
    }
}

/// Builds the schema from a training corpus. Roles are listed alphabetically
/// so the result does not depend on corpus order.
pub fn build_schema(corpus: &[EventInstance]) -> Result<Ontology> {
    if corpus.is_empty() {
        return Err(Error::Schema("empty corpus".into()));
    }
    let mut max: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for inst in corpus {
        inst.validate()?;
        let roles = max.entry(inst.trigger.event_type.clone()).or_default();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for a in &inst.arguments {
            *counts.entry(a.role.as_str()).or_default() += 1;
        }
        for (role, n) in counts {
            let slot = roles.entry(role.to_string()).or_default();
            *slot = (*slot).max(n);
        }
    }
    let event_types = max
        .into_iter()
        .map(|(ty, roles)| {
            let specs = roles
                .into_iter()
                .map(|(role, slot_count)| RoleSpec { role, slot_count })
                .collect();
            (ty, specs)
        })
        .collect();
    Ok(Ontology { event_types })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    UnknownEventType {
        event_type: String,
    },
    UnknownRole {
        role: String,
    },
    Overflow {
        role: String,
        count: usize,
        slot_count: usize,
    },
}

/// Whether the instance is headed for training or inference. Slot overflow
/// is fatal only for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Training,
    Inference,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub doc_id: String,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self, phase: Phase) -> bool {
        self.findings.iter().any(|f| match f {
            Finding::Overflow { .. } => phase == Phase::Training,
            _ => true,
        })
    }

    pub fn into_result(self, phase: Phase) -> Result<()> {
        if self.has_errors(phase) {
            Err(Error::Validation(format!(
                "document `{}`: {}",
                self.doc_id,
                serde_json::to_string(&self.findings).expect("findings serialize")
            )))
        } else {
            Ok(())
        }
    }
}

pub fn validate_instance(inst: &EventInstance, ont: &Ontology) -> ValidationReport {
    let mut report = ValidationReport {
        doc_id: inst.doc_id.clone(),
        findings: Vec::new(),
    };
    let Some(roles) = ont.event_types.get(&inst.trigger.event_type) else {
        report.findings.push(Finding::UnknownEventType {
            event_type: inst.trigger.event_type.clone(),
        });
        return report;
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &inst.arguments {
        *counts.entry(a.role.as_str()).or_default() += 1;
    }
    for (role, count) in counts {
        match roles.iter().find(|r| r.role == role) {
            None => report.findings.push(Finding::UnknownRole {
                role: role.to_string(),
            }),
            Some(spec) if count > spec.slot_count => report.findings.push(Finding::Overflow {
                role: role.to_string(),
                count,
                slot_count: spec.slot_count,
            }),
            Some(_) => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Argument, Trigger};
    use crate::span::SpanPair;

    fn inst(ty: &str, args: &[(&str, usize)]) -> EventInstance {
        EventInstance {
            doc_id: "d".into(),
            tokens: (0..20).map(|i| format!("w{i}")).collect(),
            sent_starts: vec![0],
            trigger: Trigger {
                span: SpanPair::new(0, 0),
                event_type: ty.into(),
            },
            arguments: args
                .iter()
                .map(|&(role, at)| Argument {
                    span: SpanPair::new(at, at),
                    role: role.into(),
                })
                .collect(),
        }
    }

    #[test]
    fn slot_count_is_max_per_event() {
        let corpus = vec![
            inst(
                "Conflict.Defeat",
                &[("Victor", 1), ("Victor", 2), ("Place", 3)],
            ),
            inst("Conflict.Defeat", &[("Victor", 1)]),
        ];
        let ont = build_schema(&corpus).unwrap();
        assert_eq!(ont.slot_count("Conflict.Defeat", "Victor"), Some(2));
        assert_eq!(ont.slot_count("Conflict.Defeat", "Place"), Some(1));
        assert_eq!(ont.slot_count("Conflict.Defeat", "Loser"), None);
    }

    #[test]
    fn single_event_gives_unit_counts() {
        let ont = build_schema(&[inst("E", &[("A", 1), ("B", 2)])]).unwrap();
        assert!(ont.event_types["E"].iter().all(|r| r.slot_count == 1));
    }

    #[test]
    fn empty_corpus_and_bad_span() {
        assert!(matches!(build_schema(&[]), Err(Error::Schema(_))));
        let bad = inst("E", &[("A", 99)]);
        assert!(matches!(build_schema(&[bad]), Err(Error::Ingestion { .. })));
    }

    #[test]
    fn order_independent() {
        let a = inst("E", &[("A", 1), ("B", 2), ("A", 3)]);
        let b = inst("F", &[("C", 1)]);
        let c = inst("E", &[("B", 1)]);
        let x = build_schema(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = build_schema(&[c, a, b]).unwrap();
        assert_eq!(x.to_json(), y.to_json());
    }

    #[test]
    fn validation_findings() {
        let ont = build_schema(&[inst("E", &[("Place", 1), ("Place", 2), ("A", 3)])]).unwrap();
        assert!(validate_instance(&inst("E", &[("Place", 1), ("A", 2)]), &ont).is_empty());

        let r = validate_instance(&inst("E", &[("Nope", 1)]), &ont);
        assert_eq!(
            r.findings,
            vec![Finding::UnknownRole {
                role: "Nope".into()
            }]
        );

        let r = validate_instance(
            &inst("E", &[("Place", 1), ("Place", 2), ("Place", 3)]),
            &ont,
        );
        assert_eq!(
            r.findings,
            vec![Finding::Overflow {
                role: "Place".into(),
                count: 3,
                slot_count: 2
            }]
        );
        assert!(r.has_errors(Phase::Training));
        assert!(!r.has_errors(Phase::Inference));

        let r = validate_instance(&inst("G", &[]), &ont);
        assert!(matches!(r.findings[0], Finding::UnknownEventType { .. }));
    }

    #[test]
    fn json_shape_is_sorted() {
        let ont = build_schema(&[inst("Z", &[("b", 1)]), inst("A", &[("a", 1)])]).unwrap();
        let js = ont.to_json();
        assert!(js.find("\"A\"").unwrap() < js.find("\"Z\"").unwrap());
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["event_types"]["Z"][0]["slot_count"], 1);
        assert_eq!(v["event_types"]["Z"][0]["role"], "b");
    }
}
