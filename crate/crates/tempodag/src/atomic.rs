//! Atomic causal DAG between time-point-specific variables.
//!
//! Every node is a (process, tick) pair and every edge must point strictly
//! forward in time, so the graph is acyclic by construction. Queries are pure
//! and safe to run concurrently once the graph is built.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer tick on the within-realization timeline. Timelines start at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePoint(pub u64);

impl TimePoint {
    pub fn tick(&self) -> u64 {
        self.0
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a stochastic process, unique within a system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub String);

impl ProcessId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if name.is_empty() {
            return Err(GraphError::EmptyProcessName);
        }
        Ok(ProcessId(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A single time-point-specific variable: one process at one tick.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AtomicNode {
    pub process: ProcessId,
    pub time: TimePoint,
}

impl AtomicNode {
    pub fn new(process: ProcessId, time: TimePoint) -> Self {
        AtomicNode { process, time }
    }
}

impl fmt::Display for AtomicNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.process, self.time)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("process names must be non-empty")]
    EmptyProcessName,
    #[error("edge {from} -> {to} does not point strictly forward in time")]
    BackwardInTimeEdge { from: AtomicNode, to: AtomicNode },
    #[error("node {0} is not registered in the graph")]
    UnknownNode(AtomicNode),
    #[error("node {0} is already registered")]
    DuplicateNode(AtomicNode),
}

/// DAG over atomic nodes in which all causes strictly precede their effects.
///
/// Nodes are registered explicitly so isolated time points are representable.
/// `add_edge` rejects any edge whose source tick is not strictly smaller than
/// its target tick, which also rules out edges between simultaneous nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AtomicDag {
    nodes: BTreeSet<AtomicNode>,
    edges: BTreeSet<(AtomicNode, AtomicNode)>,
    children: BTreeMap<AtomicNode, BTreeSet<AtomicNode>>,
    parents: BTreeMap<AtomicNode, BTreeSet<AtomicNode>>,
}

impl AtomicDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: AtomicNode) -> Result<(), GraphError> {
        if !self.nodes.insert(node.clone()) {
            return Err(GraphError::DuplicateNode(node));
        }
        Ok(())
    }

    /// Registers the node if absent; no-op otherwise.
    pub fn ensure_node(&mut self, node: AtomicNode) {
        self.nodes.insert(node);
    }

    pub fn add_edge(&mut self, from: AtomicNode, to: AtomicNode) -> Result<(), GraphError> {
        if !self.nodes.contains(&from) {
            return Err(GraphError::UnknownNode(from));
        }
        if !self.nodes.contains(&to) {
            return Err(GraphError::UnknownNode(to));
        }
        if from.time >= to.time {
            return Err(GraphError::BackwardInTimeEdge { from, to });
        }
        self.children
            .entry(from.clone())
            .or_default()
            .insert(to.clone());
        self.parents
            .entry(to.clone())
            .or_default()
            .insert(from.clone());
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn contains_node(&self, node: &AtomicNode) -> bool {
        self.nodes.contains(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &AtomicNode> {
        self.nodes.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(AtomicNode, AtomicNode)> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn children(&self, node: &AtomicNode) -> impl Iterator<Item = &AtomicNode> {
        self.children.get(node).into_iter().flatten()
    }

    pub fn parents(&self, node: &AtomicNode) -> impl Iterator<Item = &AtomicNode> {
        self.parents.get(node).into_iter().flatten()
    }

    /// Nodes in topological order. Sorting by (tick, process) suffices since
    /// every edge strictly increases the tick.
    pub fn topological_order(&self) -> Vec<AtomicNode> {
        let mut order: Vec<AtomicNode> = self.nodes.iter().cloned().collect();
        order.sort_by(|a, b| (a.time, &a.process).cmp(&(b.time, &b.process)));
        order
    }

    /// True iff a directed path of at least one edge leads from `from` to `to`.
    pub fn has_causal_path(&self, from: &AtomicNode, to: &AtomicNode) -> Result<bool, GraphError> {
        if !self.nodes.contains(from) {
            return Err(GraphError::UnknownNode(from.clone()));
        }
        if !self.nodes.contains(to) {
            return Err(GraphError::UnknownNode(to.clone()));
        }
        let mut queue: VecDeque<&AtomicNode> = self.children(from).collect();
        let mut seen: BTreeSet<&AtomicNode> = queue.iter().copied().collect();
        while let Some(node) = queue.pop_front() {
            if node == to {
                return Ok(true);
            }
            for child in self.children(node) {
                if seen.insert(child) {
                    queue.push_back(child);
                }
            }
        }
        Ok(false)
    }

    /// One shortest directed path from `from` to `to` (inclusive of both
    /// endpoints), if any path exists.
    pub fn find_path(&self, from: &AtomicNode, to: &AtomicNode) -> Option<Vec<AtomicNode>> {
        let mut pred: BTreeMap<&AtomicNode, &AtomicNode> = BTreeMap::new();
        let mut queue: VecDeque<&AtomicNode> = VecDeque::new();
        for child in self.children(from) {
            if !pred.contains_key(child) {
                pred.insert(child, from);
                queue.push_back(child);
            }
        }
        while let Some(node) = queue.pop_front() {
            if node == to {
                let mut path = vec![to.clone()];
                let mut cur = node;
                while let Some(&p) = pred.get(cur) {
                    path.push(p.clone());
                    if p == from {
                        break;
                    }
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for child in self.children(node) {
                if !pred.contains_key(child) && child != from {
                    pred.insert(child, node);
                    queue.push_back(child);
                }
            }
        }
        None
    }

    /// Like [`find_path`](Self::find_path), but every interior node of the
    /// path must avoid `blocked`. The endpoints themselves may be blocked.
    pub fn find_path_avoiding(
        &self,
        from: &AtomicNode,
        to: &AtomicNode,
        blocked: &BTreeSet<AtomicNode>,
    ) -> Option<Vec<AtomicNode>> {
        let mut pred: BTreeMap<&AtomicNode, &AtomicNode> = BTreeMap::new();
        let mut queue: VecDeque<&AtomicNode> = VecDeque::new();
        for child in self.children(from) {
            if !pred.contains_key(child) && (child == to || !blocked.contains(child)) {
                pred.insert(child, from);
                queue.push_back(child);
            }
        }
        while let Some(node) = queue.pop_front() {
            if node == to {
                let mut path = vec![to.clone()];
                let mut cur = node;
                while let Some(&p) = pred.get(cur) {
                    path.push(p.clone());
                    if p == from {
                        break;
                    }
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for child in self.children(node) {
                if !pred.contains_key(child)
                    && child != from
                    && (child == to || !blocked.contains(child))
                {
                    pred.insert(child, node);
                    queue.push_back(child);
                }
            }
        }
        None
    }

    /// For every node, the exact set of nodes reachable by paths of length >= 1.
    pub fn reachability_closure(&self) -> BTreeMap<AtomicNode, BTreeSet<AtomicNode>> {
        let mut closure: BTreeMap<AtomicNode, BTreeSet<AtomicNode>> = BTreeMap::new();
        // Reverse topological order: descendants of later nodes are complete
        // by the time earlier nodes are processed.
        for node in self.topological_order().into_iter().rev() {
            let mut reach = BTreeSet::new();
            for child in self.children(&node) {
                reach.insert(child.clone());
                if let Some(sub) = closure.get(child) {
                    reach.extend(sub.iter().cloned());
                }
            }
            closure.insert(node, reach);
        }
        closure
    }
}

/// Shorthand for tests and fixtures: `node("X", 0)` is X@0.
pub fn node(process: &str, tick: u64) -> AtomicNode {
    AtomicNode::new(ProcessId(process.to_string()), TimePoint(tick))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn running_example() -> AtomicDag {
        // X at {0, 6}, Y at {4, 10}
        let mut dag = AtomicDag::new();
        for n in [node("X", 0), node("X", 6), node("Y", 4), node("Y", 10)] {
            dag.add_node(n).unwrap();
        }
        dag
    }

    /// Independent oracle: brute-force DFS transitive closure.
    fn dfs_closure(dag: &AtomicDag) -> BTreeMap<AtomicNode, BTreeSet<AtomicNode>> {
        fn visit(dag: &AtomicDag, at: &AtomicNode, acc: &mut BTreeSet<AtomicNode>) {
            for child in dag.children(at) {
                if acc.insert(child.clone()) {
                    visit(dag, child, acc);
                }
            }
        }
        dag.nodes()
            .map(|n| {
                let mut acc = BTreeSet::new();
                visit(dag, n, &mut acc);
                (n.clone(), acc)
            })
            .collect()
    }

    #[test]
    fn forward_edge_accepted() {
        let mut dag = running_example();
        dag.add_edge(node("X", 0), node("Y", 4)).unwrap();
        assert_eq!(dag.edge_count(), 1);
    }

    #[test]
    fn simultaneous_edge_rejected() {
        let mut dag = running_example();
        let err = dag.add_edge(node("X", 0), node("X", 0)).unwrap_err();
        assert!(matches!(err, GraphError::BackwardInTimeEdge { .. }));
    }

    #[test]
    fn backward_edge_rejected() {
        let mut dag = running_example();
        let err = dag.add_edge(node("Y", 4), node("X", 0)).unwrap_err();
        assert!(matches!(err, GraphError::BackwardInTimeEdge { .. }));
    }

    #[test]
    fn unknown_endpoint_rejected() {
        let mut dag = running_example();
        let err = dag.add_edge(node("Z", 0), node("Y", 4)).unwrap_err();
        assert!(matches!(err, GraphError::UnknownNode(_)));
    }

    fn fixture_chain() -> AtomicDag {
        let mut dag = running_example();
        dag.add_edge(node("X", 0), node("Y", 4)).unwrap();
        dag.add_edge(node("Y", 4), node("X", 6)).unwrap();
        dag.add_edge(node("X", 6), node("Y", 10)).unwrap();
        dag
    }

    #[test]
    fn causal_path_transitive() {
        let dag = fixture_chain();
        assert!(dag.has_causal_path(&node("X", 0), &node("Y", 10)).unwrap());
        assert!(!dag.has_causal_path(&node("X", 0), &node("X", 0)).unwrap());
        assert!(!dag.has_causal_path(&node("Y", 10), &node("X", 0)).unwrap());
    }

    #[test]
    fn closure_of_empty_dag_is_empty() {
        let dag = running_example();
        for (_, reach) in dag.reachability_closure() {
            assert!(reach.is_empty());
        }
    }

    #[test]
    fn closure_matches_dfs_oracle_on_fixture() {
        let dag = fixture_chain();
        let closure = dag.reachability_closure();
        assert_eq!(
            closure[&node("X", 0)],
            [node("Y", 4), node("X", 6), node("Y", 10)]
                .into_iter()
                .collect()
        );
        assert_eq!(closure, dfs_closure(&dag));
    }

    #[test]
    fn closure_single_edge_tail() {
        let mut dag = AtomicDag::new();
        for n in [node("A", 0), node("B", 1), node("C", 2)] {
            dag.add_node(n).unwrap();
        }
        dag.add_edge(node("A", 0), node("B", 1)).unwrap();
        dag.add_edge(node("B", 1), node("C", 2)).unwrap();
        let closure = dag.reachability_closure();
        assert_eq!(closure[&node("B", 1)], [node("C", 2)].into_iter().collect());
    }

    #[test]
    fn find_path_reconstructs_a_real_path() {
        let dag = fixture_chain();
        let path = dag.find_path(&node("X", 0), &node("Y", 10)).unwrap();
        assert_eq!(path.first().unwrap(), &node("X", 0));
        assert_eq!(path.last().unwrap(), &node("Y", 10));
        for pair in path.windows(2) {
            assert!(dag.edges().any(|(u, v)| u == &pair[0] && v == &pair[1]));
        }
        assert!(dag.find_path(&node("Y", 10), &node("X", 0)).is_none());
    }

    #[test]
    fn closure_agrees_with_has_causal_path_exhaustively() {
        let dag = fixture_chain();
        let closure = dag.reachability_closure();
        let nodes: Vec<_> = dag.nodes().cloned().collect();
        for u in &nodes {
            for v in &nodes {
                assert_eq!(
                    closure[u].contains(v),
                    dag.has_causal_path(u, v).unwrap(),
                    "{u} -> {v}"
                );
            }
        }
    }
}
