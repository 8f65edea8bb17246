//! Report structures shared by the CLI and integration tests.
//!
//! The JSON forms are stable: string keys only, emitted with sorted keys so
//! byte-for-byte golden comparisons are meaningful. The text forms are for
//! humans and may use ANSI color when asked to.

use serde::{Deserialize, Serialize};
use std::fmt::Write;

use crate::acyclicity::{CompositeGraph, PairClassification, SystemClassification};
use crate::discovery::{FaithfulnessViolation, OrientOutcome, Skeleton, TemporalViolation};
use crate::unroll::UnrollProposal;

/// Serializes with sorted keys, two-space indentation and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("report serialization");
    let mut text = serde_json::to_string_pretty(&value).expect("report serialization");
    text.push('\n');
    text
}

fn paint(text: &str, code: &str, color: bool) -> String {
    if color {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn yes_no(value: bool, color: bool) -> String {
    if value {
        paint("yes", "32", color)
    } else {
        paint("no", "31", color)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub from: String,
    pub to: String,
    /// Atomic paths demonstrating the edge, as "X@0" node lists.
    pub witnesses: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphVerdicts {
    pub time_acyclic: bool,
    pub acyclic: bool,
    pub effect_acyclic: bool,
    pub total_effect_acyclic: bool,
    pub composite_is_dag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub edges: Vec<EdgeReport>,
    pub graph: GraphVerdicts,
    pub pairs: Vec<PairClassification>,
}

impl ClassifyReport {
    pub fn new(graph: &CompositeGraph, classification: &SystemClassification) -> Self {
        ClassifyReport {
            edges: graph
                .edges
                .iter()
                .map(|((from, to), witnesses)| EdgeReport {
                    from: from.clone(),
                    to: to.clone(),
                    witnesses: witnesses
                        .iter()
                        .map(|path| path.iter().map(|n| n.to_string()).collect())
                        .collect(),
                })
                .collect(),
            graph: GraphVerdicts {
                time_acyclic: classification.graph_time_acyclic,
                acyclic: classification.graph_acyclic,
                effect_acyclic: classification.graph_effect_acyclic,
                total_effect_acyclic: classification.graph_total_effect_acyclic,
                composite_is_dag: classification.composite_is_dag,
            },
            pairs: classification.pairs.clone(),
        }
    }

    pub fn render_text(&self, color: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{}", paint("derived graph", "1", color)).unwrap();
        if self.edges.is_empty() {
            writeln!(out, "  (no edges)").unwrap();
        }
        for edge in &self.edges {
            let witness = edge
                .witnesses
                .first()
                .map(|p| p.join(" -> "))
                .unwrap_or_default();
            writeln!(out, "  {} -> {}    via {}", edge.from, edge.to, witness).unwrap();
        }
        writeln!(out, "{}", paint("pairs", "1", color)).unwrap();
        for pair in &self.pairs {
            writeln!(
                out,
                "  {} / {}: time-acyclic {}, acyclic {}, effect-acyclic {}, total-effect-acyclic {}",
                pair.a,
                pair.b,
                yes_no(pair.time_acyclic, color),
                yes_no(pair.acyclic, color),
                yes_no(pair.effect_acyclic, color),
                yes_no(pair.total_effect_acyclic, color),
            )
            .unwrap();
        }
        writeln!(out, "{}", paint("system", "1", color)).unwrap();
        writeln!(
            out,
            "  time-acyclic {}, acyclic {}, effect-acyclic {}, total-effect-acyclic {}, derived graph is DAG: {}",
            yes_no(self.graph.time_acyclic, color),
            yes_no(self.graph.acyclic, color),
            yes_no(self.graph.effect_acyclic, color),
            yes_no(self.graph.total_effect_acyclic, color),
            yes_no(self.graph.composite_is_dag, color),
        )
        .unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub faithful: bool,
    pub violations: Vec<FaithfulnessViolation>,
}

impl FaithfulnessReport {
    pub fn new(violations: Vec<FaithfulnessViolation>) -> Self {
        FaithfulnessReport {
            faithful: violations.is_empty(),
            violations,
        }
    }

    pub fn render_text(&self, color: bool) -> String {
        let mut out = String::new();
        if self.faithful {
            writeln!(
                out,
                "{}",
                paint("faithful: no violations found", "32", color)
            )
            .unwrap();
        } else {
            writeln!(
                out,
                "{}",
                paint(
                    &format!("unfaithful: {} violation(s)", self.violations.len()),
                    "31",
                    color
                )
            )
            .unwrap();
            for v in &self.violations {
                let given: Vec<&str> = v.conditioning.iter().map(String::as_str).collect();
                writeln!(
                    out,
                    "  {} independent of {} given {{{}}} despite d-connection",
                    v.a,
                    v.b,
                    given.join(", ")
                )
                .unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepsetReport {
    pub a: String,
    pub b: String,
    pub set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdagReport {
    pub directed: Vec<[String; 2]>,
    pub undirected: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverReport {
    pub skeleton: Vec<[String; 2]>,
    pub separating_sets: Vec<SepsetReport>,
    pub v_structures: Vec<[String; 3]>,
    pub pdag: PdagReport,
    pub temporal_violations: Vec<TemporalViolation>,
}

impl DiscoverReport {
    pub fn new(
        skeleton: &Skeleton,
        outcome: &OrientOutcome,
        temporal_violations: Vec<TemporalViolation>,
    ) -> Self {
        DiscoverReport {
            skeleton: skeleton
                .edges
                .iter()
                .map(|(a, b)| [a.clone(), b.clone()])
                .collect(),
            separating_sets: skeleton
                .separating_sets
                .iter()
                .map(|((a, b), set)| SepsetReport {
                    a: a.clone(),
                    b: b.clone(),
                    set: set.iter().cloned().collect(),
                })
                .collect(),
            v_structures: outcome
                .v_structures
                .iter()
                .map(|(a, c, b)| [a.clone(), c.clone(), b.clone()])
                .collect(),
            pdag: PdagReport {
                directed: outcome
                    .pdag
                    .directed
                    .iter()
                    .map(|(a, b)| [a.clone(), b.clone()])
                    .collect(),
                undirected: outcome
                    .pdag
                    .undirected
                    .iter()
                    .map(|(a, b)| [a.clone(), b.clone()])
                    .collect(),
            },
            temporal_violations,
        }
    }

    pub fn render_text(&self, color: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{}", paint("skeleton", "1", color)).unwrap();
        for [a, b] in &self.skeleton {
            writeln!(out, "  {a} -- {b}").unwrap();
        }
        for s in &self.separating_sets {
            writeln!(
                out,
                "  {} _||_ {} | {{{}}}",
                s.a,
                s.b,
                s.set.join(", ")
            )
            .unwrap();
        }
        writeln!(out, "{}", paint("orientations", "1", color)).unwrap();
        for [a, c, b] in &self.v_structures {
            writeln!(out, "  v-structure {a} -> {c} <- {b}").unwrap();
        }
        for [a, b] in &self.pdag.directed {
            writeln!(out, "  {a} -> {b}").unwrap();
        }
        for [a, b] in &self.pdag.undirected {
            writeln!(out, "  {a} -- {b}").unwrap();
        }
        if self.temporal_violations.is_empty() {
            writeln!(out, "{}", paint("temporally consistent", "32", color)).unwrap();
        } else {
            writeln!(out, "{}", paint("temporal violations", "31", color)).unwrap();
            for v in &self.temporal_violations {
                writeln!(
                    out,
                    "  {} -> {} oriented against time order",
                    v.from, v.to
                )
                .unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnrollStep {
    pub variable: String,
    pub partition: Vec<Vec<u64>>,
    pub blocks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnrollReport {
    pub steps: Vec<UnrollStep>,
    pub edges_before: Vec<[String; 2]>,
    pub edges_after: Vec<[String; 2]>,
    pub acyclic_after: bool,
}

impl UnrollReport {
    pub fn step(proposal: &UnrollProposal) -> UnrollStep {
        UnrollStep {
            variable: proposal.variable.clone(),
            partition: proposal
                .partition
                .iter()
                .map(|block| block.iter().map(|t| t.tick()).collect())
                .collect(),
            blocks: (1..=proposal.partition.len())
                .map(|i| format!("{}#{i}", proposal.variable))
                .collect(),
        }
    }

    pub fn render_text(&self, color: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{}", paint("unrolling", "1", color)).unwrap();
        for step in &self.steps {
            let blocks: Vec<String> = step
                .blocks
                .iter()
                .zip(&step.partition)
                .map(|(name, ticks)| {
                    let ticks: Vec<String> = ticks.iter().map(|t| t.to_string()).collect();
                    format!("{name}={{{}}}", ticks.join(","))
                })
                .collect();
            writeln!(out, "  split {} into {}", step.variable, blocks.join(", ")).unwrap();
        }
        writeln!(out, "{}", paint("derived graph after", "1", color)).unwrap();
        for [a, b] in &self.edges_after {
            writeln!(out, "  {a} -> {b}").unwrap();
        }
        writeln!(
            out,
            "  acyclic: {}",
            yes_no(self.acyclic_after, color)
        )
        .unwrap();
        out
    }
}
