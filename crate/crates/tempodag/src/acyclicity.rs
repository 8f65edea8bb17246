//! Derived graphs between composite variables and acyclicity classification.
//!
//! An edge A -> B exists in the derived graph when some jointly supported
//! pair of subsets contains atomic nodes with a directed atomic path between
//! them. On top of that, each variable pair is classified as time-acyclic
//! (strict precedence in one direction), acyclic (no cycle over the product
//! of marginal supports), effect-acyclic, and total-effect-acyclic (no
//! reverse path over all possible time points).
//!
//! Acyclicity is quantified over the product of the marginal supports, which
//! can differ from the joint-support reading when the joint is restricted;
//! both flags are computed and reported side by side.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::AtomicNode;
use crate::composite::{CompositeError, CompositeVariable, TimeSubset, VariableSystem};

/// Cap on enumerated witness paths per derived edge. Existence, not
/// enumeration, drives the boolean result.
pub const WITNESS_CAP: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcyclicityError {
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error("causation between a variable and itself is not defined")]
    SameVariable,
    #[error("pairwise joint support of ({a:?}, {b:?}) is empty")]
    EmptyJointSupport { a: String, b: String },
}

/// An atomic path witnessing a derived edge, endpoints inclusive.
pub type Witness = Vec<AtomicNode>;

/// Directed graph between composite variables, each edge annotated with the
/// atomic paths that give rise to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeGraph {
    pub variables: Vec<String>,
    pub edges: BTreeMap<(String, String), Vec<Witness>>,
}

impl CompositeGraph {
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains_key(&(from.to_string(), to.to_string()))
    }

    pub fn edge_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.keys().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn children<'a>(&'a self, from: &'a str) -> impl Iterator<Item = &'a str> {
        self.edges
            .keys()
            .filter(move |(a, _)| a == from)
            .map(|(_, b)| b.as_str())
    }

    /// Standard any-length directed-cycle check (DFS coloring).
    pub fn is_dag(&self) -> bool {
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        fn visit(graph: &CompositeGraph, at: &str, colors: &mut BTreeMap<String, Color>) -> bool {
            colors.insert(at.to_string(), Color::Gray);
            for child in graph.children(at) {
                match colors.get(child).copied().unwrap_or(Color::White) {
                    Color::Gray => return false,
                    Color::White => {
                        if !visit(graph, child, colors) {
                            return false;
                        }
                    }
                    Color::Black => {}
                }
            }
            colors.insert(at.to_string(), Color::Black);
            true
        }
        let mut colors: BTreeMap<String, Color> = BTreeMap::new();
        for name in &self.variables {
            if !colors.contains_key(name.as_str()) && !visit(self, name, &mut colors) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precedence {
    ABeforeB,
    BBeforeA,
    Neither,
}

/// Per-pair acyclicity verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassification {
    pub a: String,
    pub b: String,
    pub time_acyclic: bool,
    /// No cycle quantified over the product of the marginal supports.
    pub acyclic: bool,
    /// Same check restricted to the jointly supported subset pairs.
    pub acyclic_joint: bool,
    pub effect_acyclic: bool,
    pub total_effect_acyclic: bool,
    pub precedence: Precedence,
}

/// Per-system classification: the pair table plus graph-level verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemClassification {
    pub pairs: Vec<PairClassification>,
    pub graph_time_acyclic: bool,
    pub graph_acyclic: bool,
    pub graph_effect_acyclic: bool,
    pub graph_total_effect_acyclic: bool,
    /// Any-length directed-cycle check on the derived graph; the pairwise
    /// verdicts alone do not exclude cycles through three or more variables.
    pub composite_is_dag: bool,
}

fn subset_nodes(var: &CompositeVariable, subset: &TimeSubset) -> Vec<AtomicNode> {
    subset
        .iter()
        .map(|t| AtomicNode::new(var.process.clone(), *t))
        .collect()
}

/// Atomic-path existence between any node of any `from` subset and any node
/// of any `to` subset, over an explicit list of subset pairs.
fn path_over_pairs(
    system: &VariableSystem,
    from: &CompositeVariable,
    to: &CompositeVariable,
    pairs: &BTreeSet<(TimeSubset, TimeSubset)>,
) -> bool {
    let dag = system.atomic();
    pairs.iter().any(|(s_from, s_to)| {
        subset_nodes(from, s_from).iter().any(|u| {
            subset_nodes(to, s_to)
                .iter()
                .any(|v| dag.has_causal_path(u, v).unwrap_or(false))
        })
    })
}

fn product_pairs(a: &CompositeVariable, b: &CompositeVariable) -> BTreeSet<(TimeSubset, TimeSubset)> {
    let mut pairs = BTreeSet::new();
    for (s_a, _) in &a.marginal_support {
        for (s_b, _) in &b.marginal_support {
            pairs.insert((s_a.clone(), s_b.clone()));
        }
    }
    pairs
}

/// True with witnesses iff `a` causes `b`: some jointly supported subset pair
/// contains atomic nodes linked by a directed atomic path.
pub fn causes(
    system: &VariableSystem,
    a: &str,
    b: &str,
) -> Result<(bool, Vec<Witness>), AcyclicityError> {
    if a == b {
        return Err(AcyclicityError::SameVariable);
    }
    let var_a = system.variable(a)?;
    let var_b = system.variable(b)?;
    let dag = system.atomic();
    let mut witnesses: Vec<Witness> = Vec::new();
    let mut seen_endpoints: BTreeSet<(AtomicNode, AtomicNode)> = BTreeSet::new();
    for (s_a, s_b) in system.pairwise_support(a, b)? {
        for u in subset_nodes(var_a, &s_a) {
            for v in subset_nodes(var_b, &s_b) {
                if !seen_endpoints.insert((u.clone(), v.clone())) {
                    continue;
                }
                if witnesses.len() < WITNESS_CAP {
                    if let Some(path) = dag.find_path(&u, &v) {
                        witnesses.push(path);
                    }
                } else if !witnesses.is_empty() {
                    return Ok((true, witnesses));
                }
            }
        }
    }
    Ok((!witnesses.is_empty(), witnesses))
}

/// Derives the directed graph between the system's composite variables.
pub fn derive_composite_graph(system: &VariableSystem) -> CompositeGraph {
    let names: Vec<String> = system.variables().iter().map(|v| v.name.clone()).collect();
    let mut edges = BTreeMap::new();
    for a in &names {
        for b in &names {
            if a == b {
                continue;
            }
            // Both variables always exist here; causes cannot fail.
            let (holds, witnesses) = causes(system, a, b).expect("valid pair");
            if holds {
                edges.insert((a.clone(), b.clone()), witnesses);
            }
        }
    }
    CompositeGraph {
        variables: names,
        edges,
    }
}

/// Like [`causes`], but the witnessing atomic path may not pass through nodes
/// claimed by the system's composite variables (endpoints excepted).
/// Unclaimed atomic nodes act as latent mediators.
pub fn causes_directly(
    system: &VariableSystem,
    a: &str,
    b: &str,
) -> Result<(bool, Vec<Witness>), AcyclicityError> {
    if a == b {
        return Err(AcyclicityError::SameVariable);
    }
    let var_a = system.variable(a)?;
    let var_b = system.variable(b)?;
    let dag = system.atomic();
    let claimed: BTreeSet<AtomicNode> = system
        .variables()
        .iter()
        .flat_map(|v| v.atomic_nodes())
        .collect();
    let mut witnesses: Vec<Witness> = Vec::new();
    let mut seen_endpoints: BTreeSet<(AtomicNode, AtomicNode)> = BTreeSet::new();
    for (s_a, s_b) in system.pairwise_support(a, b)? {
        for u in subset_nodes(var_a, &s_a) {
            for v in subset_nodes(var_b, &s_b) {
                if !seen_endpoints.insert((u.clone(), v.clone())) {
                    continue;
                }
                if witnesses.len() < WITNESS_CAP {
                    if let Some(path) = dag.find_path_avoiding(&u, &v, &claimed) {
                        witnesses.push(path);
                    }
                } else if !witnesses.is_empty() {
                    return Ok((true, witnesses));
                }
            }
        }
    }
    Ok((!witnesses.is_empty(), witnesses))
}

/// The direct-edge composite graph: an edge A -> B only where the causal path
/// does not run through a third composite variable. This is the graph that
/// Markov/faithfulness statements are read off; [`derive_composite_graph`]
/// additionally contains all transitively implied edges.
pub fn derive_direct_graph(system: &VariableSystem) -> CompositeGraph {
    let names: Vec<String> = system.variables().iter().map(|v| v.name.clone()).collect();
    let mut edges = BTreeMap::new();
    for a in &names {
        for b in &names {
            if a == b {
                continue;
            }
            let (holds, witnesses) = causes_directly(system, a, b).expect("valid pair");
            if holds {
                edges.insert((a.clone(), b.clone()), witnesses);
            }
        }
    }
    CompositeGraph {
        variables: names,
        edges,
    }
}

/// Strict temporal precedence: max(s_a) < min(s_b) for every jointly
/// supported pair. Ties fail in both directions.
pub fn precedes(system: &VariableSystem, a: &str, b: &str) -> Result<bool, AcyclicityError> {
    let pairs = system.pairwise_support(a, b)?;
    if pairs.is_empty() {
        return Err(AcyclicityError::EmptyJointSupport {
            a: a.to_string(),
            b: b.to_string(),
        });
    }
    Ok(pairs.iter().all(|(s_a, s_b)| {
        match (s_a.iter().next_back(), s_b.iter().next()) {
            (Some(max_a), Some(min_b)) => max_a < min_b,
            _ => false,
        }
    }))
}

/// Offending jointly supported subset pairs for which max(s_a) >= min(s_b).
pub fn precedence_violations(
    system: &VariableSystem,
    a: &str,
    b: &str,
) -> Result<Vec<(TimeSubset, TimeSubset)>, AcyclicityError> {
    Ok(system
        .pairwise_support(a, b)?
        .into_iter()
        .filter(|(s_a, s_b)| match (s_a.iter().next_back(), s_b.iter().next()) {
            (Some(max_a), Some(min_b)) => max_a >= min_b,
            _ => true,
        })
        .collect())
}

pub fn classify_pair(
    system: &VariableSystem,
    a: &str,
    b: &str,
) -> Result<PairClassification, AcyclicityError> {
    if a == b {
        return Err(AcyclicityError::SameVariable);
    }
    let var_a = system.variable(a)?;
    let var_b = system.variable(b)?;

    let a_before_b = precedes(system, a, b)?;
    let b_before_a = precedes(system, b, a)?;
    let time_acyclic = a_before_b || b_before_a;

    // Product of marginal supports, both directions.
    let product = product_pairs(var_a, var_b);
    let product_rev: BTreeSet<_> = product
        .iter()
        .map(|(s_a, s_b)| (s_b.clone(), s_a.clone()))
        .collect();
    let fwd_product = path_over_pairs(system, var_a, var_b, &product);
    let bwd_product = path_over_pairs(system, var_b, var_a, &product_rev);
    let acyclic = !(fwd_product && bwd_product);

    // Joint-support variant of the same check.
    let joint = system.pairwise_support(a, b)?;
    let joint_rev: BTreeSet<_> = joint
        .iter()
        .map(|(s_a, s_b)| (s_b.clone(), s_a.clone()))
        .collect();
    let fwd_joint = path_over_pairs(system, var_a, var_b, &joint);
    let bwd_joint = path_over_pairs(system, var_b, var_a, &joint_rev);
    let acyclic_joint = !(fwd_joint && bwd_joint);

    // All possible time points of the two processes.
    let all_pair: BTreeSet<(TimeSubset, TimeSubset)> = [(
        var_a.possible_times.clone(),
        var_b.possible_times.clone(),
    )]
    .into_iter()
    .collect();
    let all_pair_rev: BTreeSet<(TimeSubset, TimeSubset)> = [(
        var_b.possible_times.clone(),
        var_a.possible_times.clone(),
    )]
    .into_iter()
    .collect();
    let fwd_total = path_over_pairs(system, var_a, var_b, &all_pair);
    let bwd_total = path_over_pairs(system, var_b, var_a, &all_pair_rev);
    let total_effect_acyclic = !(fwd_total && bwd_total);

    Ok(PairClassification {
        a: a.to_string(),
        b: b.to_string(),
        time_acyclic,
        acyclic,
        acyclic_joint,
        effect_acyclic: !time_acyclic && acyclic,
        total_effect_acyclic,
        precedence: if a_before_b {
            Precedence::ABeforeB
        } else if b_before_a {
            Precedence::BBeforeA
        } else {
            Precedence::Neither
        },
    })
}

/// Classifies every unordered pair (sorted by name) and aggregates graph-level
/// verdicts.
pub fn classify_system(system: &VariableSystem) -> Result<SystemClassification, AcyclicityError> {
    let mut names: Vec<&str> = system.variable_names();
    names.sort_unstable();
    let mut pairs = Vec::new();
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            pairs.push(classify_pair(system, names[i], names[j])?);
        }
    }
    let graph = derive_composite_graph(system);
    Ok(SystemClassification {
        graph_time_acyclic: pairs.iter().all(|p| p.time_acyclic),
        graph_acyclic: pairs.iter().all(|p| p.acyclic),
        graph_effect_acyclic: pairs.iter().all(|p| p.effect_acyclic),
        graph_total_effect_acyclic: pairs.iter().all(|p| p.total_effect_acyclic),
        composite_is_dag: graph.is_dag(),
        pairs,
    })
}
