//! d-separation, faithfulness auditing, and constraint-based discovery.
//!
//! The PC skeleton phase and the Meek orientation rules are deterministic:
//! variables are processed in lexicographic name order and conditioning
//! subsets in ascending size, then lexicographic order, so repeated runs are
//! bit-stable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acyclicity::{derive_direct_graph, precedence_violations, CompositeGraph};
use crate::composite::{CompositeError, TimeSubset, VariableSystem};
use crate::scm::{ci_test_empirical, ci_test_exact, CompositeSamples, LinearScm, ScmError};

/// Faithfulness audits enumerate all conditioning sets exhaustively up to
/// this many variables; larger systems need an explicit cap.
pub const EXHAUSTIVE_AUDIT_LIMIT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscoveryError {
    #[error("the derived composite graph contains a directed cycle")]
    NotADag,
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error("edge {a} - {b} has conflicting orientation requirements ({a} -> {b} and {b} -> {a})")]
    ConflictingOrientations { a: String, b: String },
    #[error("{count} variables exceed the exhaustive audit limit of {EXHAUSTIVE_AUDIT_LIMIT}; pass a max conditioning size")]
    TooManyVariables { count: usize },
}

/// Partially directed graph: the output shape of constraint-based discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdag {
    pub nodes: Vec<String>,
    pub directed: BTreeSet<(String, String)>,
    /// Stored with endpoints in lexicographic order.
    pub undirected: BTreeSet<(String, String)>,
}

impl Pdag {
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        let key = ordered(a, b);
        self.undirected.contains(&key)
            || self.directed.contains(&(a.to_string(), b.to_string()))
            || self.directed.contains(&(b.to_string(), a.to_string()))
    }

    fn check_invariants(&self) -> Result<(), DiscoveryError> {
        for (a, b) in &self.directed {
            if self.undirected.contains(&ordered(a, b)) || self.directed.contains(&(b.clone(), a.clone())) {
                return Err(DiscoveryError::ConflictingOrientations {
                    a: a.clone(),
                    b: b.clone(),
                });
            }
        }
        if !self.directed_part_is_acyclic() {
            return Err(DiscoveryError::NotADag);
        }
        Ok(())
    }

    fn directed_part_is_acyclic(&self) -> bool {
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (a, b) in &self.directed {
            children.entry(a).or_default().push(b);
        }
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(
            at: &'a str,
            children: &BTreeMap<&'a str, Vec<&'a str>>,
            state: &mut BTreeMap<&'a str, u8>,
        ) -> bool {
            state.insert(at, 1);
            for child in children.get(at).into_iter().flatten() {
                match state.get(child).copied().unwrap_or(0) {
                    1 => return false,
                    0 if !visit(child, children, state) => return false,
                    _ => {}
                }
            }
            state.insert(at, 2);
            true
        }
        for name in &self.nodes {
            if state.get(name.as_str()).copied().unwrap_or(0) == 0
                && !visit(name, &children, &mut state)
            {
                return false;
            }
        }
        true
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Standard d-separation verdict via the moralized ancestral graph.
pub fn d_separated(
    graph: &CompositeGraph,
    a: &str,
    b: &str,
    conditioning: &BTreeSet<String>,
) -> Result<bool, DiscoveryError> {
    if !graph.is_dag() {
        return Err(DiscoveryError::NotADag);
    }
    // Ancestors of {a, b} ∪ conditioning, including the nodes themselves.
    let mut relevant: BTreeSet<&str> = conditioning.iter().map(|s| s.as_str()).collect();
    relevant.insert(a);
    relevant.insert(b);
    let mut ancestral: BTreeSet<&str> = BTreeSet::new();
    let mut stack: Vec<&str> = relevant.iter().copied().collect();
    while let Some(at) = stack.pop() {
        if !ancestral.insert(at) {
            continue;
        }
        for (from, to) in graph.edge_pairs() {
            if to == at {
                stack.push(from);
            }
        }
    }
    // Moralize: connect co-parents, drop directions.
    let mut undirected: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let edges: Vec<(&str, &str)> = graph
        .edge_pairs()
        .filter(|(u, v)| ancestral.contains(u) && ancestral.contains(v))
        .collect();
    for (u, v) in &edges {
        undirected.entry(u).or_default().insert(v);
        undirected.entry(v).or_default().insert(u);
    }
    for node in &ancestral {
        let parents: Vec<&str> = edges
            .iter()
            .filter(|(_, to)| to == node)
            .map(|(from, _)| *from)
            .collect();
        for i in 0..parents.len() {
            for j in (i + 1)..parents.len() {
                undirected.entry(parents[i]).or_default().insert(parents[j]);
                undirected.entry(parents[j]).or_default().insert(parents[i]);
            }
        }
    }
    // Reachability from a to b avoiding conditioned nodes.
    let blocked: BTreeSet<&str> = conditioning.iter().map(|s| s.as_str()).collect();
    if blocked.contains(a) || blocked.contains(b) {
        return Ok(true);
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack = vec![a];
    while let Some(at) = stack.pop() {
        if at == b {
            return Ok(false);
        }
        if !seen.insert(at) {
            continue;
        }
        for next in undirected.get(at).into_iter().flatten() {
            if !blocked.contains(next) && !seen.contains(next) {
                stack.push(*next);
            }
        }
    }
    Ok(true)
}

/// A pair found d-connected in the composite DAG yet independent under the
/// exact oracle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaithfulnessViolation {
    pub a: String,
    pub b: String,
    pub conditioning: BTreeSet<String>,
}

fn subsets_ascending(pool: &[String], cap: usize) -> Vec<BTreeSet<String>> {
    let mut out: Vec<BTreeSet<String>> = Vec::new();
    for size in 0..=pool.len().min(cap) {
        let mut stack: Vec<(usize, BTreeSet<String>)> = vec![(0, BTreeSet::new())];
        let mut of_size: Vec<BTreeSet<String>> = Vec::new();
        while let Some((from, acc)) = stack.pop() {
            if acc.len() == size {
                of_size.push(acc);
                continue;
            }
            for i in from..pool.len() {
                if pool.len() - i < size - acc.len() {
                    break;
                }
                let mut next = acc.clone();
                next.insert(pool[i].clone());
                stack.push((i + 1, next));
            }
        }
        of_size.sort();
        out.extend(of_size);
    }
    out
}

/// Flags every (pair, conditioning set) that is d-connected in the derived
/// composite DAG but independent under the exact oracle. An empty list means
/// the system is faithful.
pub fn audit_faithfulness(
    system: &VariableSystem,
    scm: &LinearScm,
    max_conditioning: Option<usize>,
) -> Result<Vec<FaithfulnessViolation>, DiscoveryError> {
    // Faithfulness statements are relative to the direct-edge graph;
    // transitively implied edges would declare d-connection where the model
    // entails none.
    let graph = derive_direct_graph(system);
    if !graph.is_dag() {
        return Err(DiscoveryError::NotADag);
    }
    let mut names: Vec<String> = graph.variables.clone();
    names.sort();
    if names.len() > EXHAUSTIVE_AUDIT_LIMIT && max_conditioning.is_none() {
        return Err(DiscoveryError::TooManyVariables { count: names.len() });
    }
    let cap = max_conditioning.unwrap_or(names.len());
    let mut violations = Vec::new();
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            let (a, b) = (&names[i], &names[j]);
            let rest: Vec<String> = names
                .iter()
                .filter(|n| *n != a && *n != b)
                .cloned()
                .collect();
            for conditioning in subsets_ascending(&rest, cap) {
                if !d_separated(&graph, a, b, &conditioning)?
                    && ci_test_exact(system, scm, a, b, &conditioning)?.independent
                {
                    violations.push(FaithfulnessViolation {
                        a: a.clone(),
                        b: b.clone(),
                        conditioning,
                    });
                }
            }
        }
    }
    Ok(violations)
}

/// Conditional-independence oracle interface for the PC algorithm.
pub trait CiOracle {
    fn independent(
        &self,
        a: &str,
        b: &str,
        conditioning: &BTreeSet<String>,
    ) -> Result<bool, ScmError>;
}

/// Analytic oracle backed by the exact composite covariance.
pub struct ExactOracle<'a> {
    pub system: &'a VariableSystem,
    pub scm: &'a LinearScm,
}

impl CiOracle for ExactOracle<'_> {
    fn independent(
        &self,
        a: &str,
        b: &str,
        conditioning: &BTreeSet<String>,
    ) -> Result<bool, ScmError> {
        Ok(ci_test_exact(self.system, self.scm, a, b, conditioning)?.independent)
    }
}

/// Empirical oracle backed by Fisher z tests on a sampled batch.
pub struct EmpiricalOracle<'a> {
    pub samples: &'a CompositeSamples,
    pub alpha: f64,
}

impl CiOracle for EmpiricalOracle<'_> {
    fn independent(
        &self,
        a: &str,
        b: &str,
        conditioning: &BTreeSet<String>,
    ) -> Result<bool, ScmError> {
        Ok(ci_test_empirical(self.samples, a, b, conditioning, self.alpha)?.independent)
    }
}

/// Undirected skeleton with the separating sets found while removing edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub nodes: Vec<String>,
    /// Edges with endpoints in lexicographic order.
    pub edges: BTreeSet<(String, String)>,
    pub separating_sets: BTreeMap<(String, String), BTreeSet<String>>,
}

impl Skeleton {
    fn adjacencies(&self, node: &str) -> BTreeSet<String> {
        self.edges
            .iter()
            .filter_map(|(a, b)| {
                if a == node {
                    Some(b.clone())
                } else if b == node {
                    Some(a.clone())
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Classical PC skeleton: start complete, remove an edge as soon as some
/// subset of the current adjacencies separates the pair, sizes ascending.
pub fn pc_skeleton<O: CiOracle>(oracle: &O, names: &[String]) -> Result<Skeleton, ScmError> {
    let mut nodes: Vec<String> = names.to_vec();
    nodes.sort();
    let mut skeleton = Skeleton {
        nodes: nodes.clone(),
        edges: BTreeSet::new(),
        separating_sets: BTreeMap::new(),
    };
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            skeleton.edges.insert((nodes[i].clone(), nodes[j].clone()));
        }
    }
    let mut size = 0usize;
    loop {
        let mut any_candidate = false;
        // Snapshot so removals within one size level follow a fixed order.
        let edges: Vec<(String, String)> = skeleton.edges.iter().cloned().collect();
        for (a, b) in edges {
            if !skeleton.edges.contains(&(a.clone(), b.clone())) {
                continue;
            }
            // Conditioning candidates from either endpoint's adjacencies.
            let mut removed = false;
            for (x, y) in [(&a, &b), (&b, &a)] {
                let mut pool: Vec<String> = skeleton
                    .adjacencies(x)
                    .into_iter()
                    .filter(|n| n != y)
                    .collect();
                pool.sort();
                if pool.len() < size {
                    continue;
                }
                any_candidate = true;
                for conditioning in fixed_size_subsets(&pool, size) {
                    if oracle.independent(x, y, &conditioning)? {
                        skeleton.edges.remove(&(a.clone(), b.clone()));
                        skeleton
                            .separating_sets
                            .insert((a.clone(), b.clone()), conditioning);
                        removed = true;
                        break;
                    }
                }
                if removed {
                    break;
                }
            }
        }
        if !any_candidate {
            break;
        }
        size += 1;
    }
    Ok(skeleton)
}

fn fixed_size_subsets(pool: &[String], size: usize) -> Vec<BTreeSet<String>> {
    fn build(
        pool: &[String],
        from: usize,
        size: usize,
        acc: &mut BTreeSet<String>,
        out: &mut Vec<BTreeSet<String>>,
    ) {
        if acc.len() == size {
            out.push(acc.clone());
            return;
        }
        for i in from..pool.len() {
            if pool.len() - i < size - acc.len() {
                break;
            }
            acc.insert(pool[i].clone());
            build(pool, i + 1, size, acc, out);
            acc.remove(&pool[i]);
        }
    }
    let mut out = Vec::new();
    build(pool, 0, size, &mut BTreeSet::new(), &mut out);
    out
}

/// Orientation result: the Pdag and the v-structures that seeded it.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientOutcome {
    pub pdag: Pdag,
    /// (a, collider, b) triples.
    pub v_structures: Vec<(String, String, String)>,
}

/// Orients unshielded colliders, then applies Meek rules R1-R4 to closure.
pub fn orient(skeleton: &Skeleton) -> Result<OrientOutcome, DiscoveryError> {
    let mut directed: BTreeSet<(String, String)> = BTreeSet::new();
    let mut undirected: BTreeSet<(String, String)> = skeleton.edges.clone();
    let mut v_structures = Vec::new();

    let adjacent = |u: &str, v: &str| skeleton.edges.contains(&ordered(u, v));

    let orient_edge = |from: &str,
                           to: &str,
                           directed: &mut BTreeSet<(String, String)>,
                           undirected: &mut BTreeSet<(String, String)>|
     -> Result<bool, DiscoveryError> {
        if directed.contains(&(from.to_string(), to.to_string())) {
            return Ok(false);
        }
        if directed.contains(&(to.to_string(), from.to_string())) {
            return Err(DiscoveryError::ConflictingOrientations {
                a: from.to_string(),
                b: to.to_string(),
            });
        }
        undirected.remove(&ordered(from, to));
        directed.insert((from.to_string(), to.to_string()));
        Ok(true)
    };

    // Unshielded triples a - c - b with c not in sep(a, b) become a -> c <- b.
    for c in &skeleton.nodes {
        let neighbors: Vec<String> = skeleton.adjacencies(c).into_iter().collect();
        for i in 0..neighbors.len() {
            for j in (i + 1)..neighbors.len() {
                let (a, b) = (&neighbors[i], &neighbors[j]);
                if adjacent(a, b) {
                    continue;
                }
                let sep = skeleton.separating_sets.get(&ordered(a, b));
                if let Some(sep) = sep {
                    if !sep.contains(c) {
                        orient_edge(a, c, &mut directed, &mut undirected)?;
                        orient_edge(b, c, &mut directed, &mut undirected)?;
                        v_structures.push((a.clone(), c.clone(), b.clone()));
                    }
                }
            }
        }
    }

    // Meek rules to closure.
    loop {
        let mut changed = false;
        let undirected_snapshot: Vec<(String, String)> = undirected.iter().cloned().collect();
        for (u, v) in &undirected_snapshot {
            if !undirected.contains(&ordered(u, v)) {
                continue;
            }
            for (a, b) in [(u.as_str(), v.as_str()), (v.as_str(), u.as_str())] {
                // R1: c -> a, a - b, c and b nonadjacent  =>  a -> b.
                let r1 = skeleton.nodes.iter().any(|c| {
                    directed.contains(&(c.clone(), a.to_string())) && !adjacent(c, b) && c != b
                });
                // R2: a -> c -> b and a - b  =>  a -> b.
                let r2 = skeleton.nodes.iter().any(|c| {
                    directed.contains(&(a.to_string(), c.clone()))
                        && directed.contains(&(c.clone(), b.to_string()))
                });
                // R3: a - c, a - d, c -> b, d -> b, c and d nonadjacent  =>  a -> b.
                let mut r3 = false;
                let into_b: Vec<&String> = skeleton
                    .nodes
                    .iter()
                    .filter(|c| directed.contains(&(c.to_string(), b.to_string())))
                    .collect();
                'outer: for (ci, c) in into_b.iter().enumerate() {
                    for d in into_b.iter().skip(ci + 1) {
                        if !adjacent(c, d)
                            && undirected.contains(&ordered(a, c))
                            && undirected.contains(&ordered(a, d))
                        {
                            r3 = true;
                            break 'outer;
                        }
                    }
                }
                // R4: a - c, c -> d, d -> b, a and d adjacent, c and b
                // nonadjacent  =>  a -> b.
                let mut r4 = false;
                'outer4: for c in &skeleton.nodes {
                    if !undirected.contains(&ordered(a, c)) || adjacent(c, b) || c == b {
                        continue;
                    }
                    for d in &skeleton.nodes {
                        if directed.contains(&(c.clone(), d.clone()))
                            && directed.contains(&(d.clone(), b.to_string()))
                            && adjacent(a, d)
                        {
                            r4 = true;
                            break 'outer4;
                        }
                    }
                }
                if r1 || r2 || r3 || r4 {
                    if orient_edge(a, b, &mut directed, &mut undirected)? {
                        changed = true;
                    }
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let pdag = Pdag {
        nodes: skeleton.nodes.clone(),
        directed,
        undirected,
    };
    pdag.check_invariants()?;
    Ok(OrientOutcome { pdag, v_structures })
}

/// A directed Pdag edge that does not respect temporal precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalViolation {
    pub from: String,
    pub to: String,
    /// Jointly supported subset pairs with max(from) >= min(to).
    pub offending: Vec<(TimeSubset, TimeSubset)>,
}

/// Flags directed edges A -> B for which the supported time subsets do not
/// satisfy strict precedence of A before B.
pub fn temporal_consistency_report(
    pdag: &Pdag,
    system: &VariableSystem,
) -> Result<Vec<TemporalViolation>, DiscoveryError> {
    let mut report = Vec::new();
    for (from, to) in &pdag.directed {
        system.variable(from)?;
        system.variable(to)?;
        let offending = precedence_violations(system, from, to).map_err(|e| match e {
            crate::acyclicity::AcyclicityError::Composite(c) => DiscoveryError::Composite(c),
            _ => DiscoveryError::NotADag,
        })?;
        if !offending.is_empty() {
            report.push(TemporalViolation {
                from: from.clone(),
                to: to.clone(),
                offending,
            });
        }
    }
    Ok(report)
}
