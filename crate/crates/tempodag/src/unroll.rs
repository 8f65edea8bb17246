//! Unrolling composite-level cycles in time.
//!
//! A deterministic-support variable can be split into time-partitioned parts
//! named `var#1`, `var#2`, ... in block time order. The atomic DAG is left
//! untouched; only the variable definitions change, after which the derived
//! graph is recomputed. Mixing variables have no fixed components to split
//! and cannot be unrolled.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::acyclicity::derive_composite_graph;
use crate::composite::{
    Aggregation, CompositeError, CompositeVariable, JointAssignment, TimeSubset, VariableSystem,
};
use crate::atomic::TimePoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnrollError {
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error("variable {0:?} has non-deterministic support and cannot be unrolled")]
    NonDeterministicSupport(String),
    #[error("partition is invalid: {reason}")]
    BadPartition { reason: String },
    #[error("the derived graph is already acyclic")]
    AlreadyAcyclic,
    #[error("every remaining cycle involves a mixing variable; unrolling cannot resolve it")]
    UnresolvableWithMixing,
    #[error("unrolled name {0:?} collides with an existing variable")]
    NameCollision(String),
}

/// One proposed unrolling step.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrollProposal {
    pub variable: String,
    pub partition: Vec<TimeSubset>,
}

fn validate_partition(full: &TimeSubset, partition: &[TimeSubset]) -> Result<(), UnrollError> {
    if partition.is_empty() || partition.iter().any(|block| block.is_empty()) {
        return Err(UnrollError::BadPartition {
            reason: "blocks must be nonempty".into(),
        });
    }
    let mut union: TimeSubset = BTreeSet::new();
    let mut count = 0usize;
    for block in partition {
        count += block.len();
        union.extend(block.iter().copied());
    }
    if count != union.len() {
        return Err(UnrollError::BadPartition {
            reason: "blocks are not disjoint".into(),
        });
    }
    if &union != full {
        return Err(UnrollError::BadPartition {
            reason: "blocks do not cover the variable's time set".into(),
        });
    }
    Ok(())
}

/// The aggregation of one block: the original kind restricted to the block.
/// Weighted-sum weights are carried verbatim by ascending-time position, with
/// no renormalization, so block outputs recombine to the original output.
fn block_aggregation(
    original: &Aggregation,
    full: &TimeSubset,
    block: &TimeSubset,
) -> Aggregation {
    match original {
        Aggregation::Identity => Aggregation::Identity,
        Aggregation::Mean => {
            if block.len() == 1 {
                Aggregation::Identity
            } else {
                Aggregation::Mean
            }
        }
        Aggregation::WeightedSum(weights) => {
            let positions: Vec<usize> = full
                .iter()
                .enumerate()
                .filter(|(_, t)| block.contains(t))
                .map(|(i, _)| i)
                .collect();
            if positions.len() == 1 && weights[positions[0]] == 1.0 {
                Aggregation::Identity
            } else {
                Aggregation::WeightedSum(positions.iter().map(|&i| weights[i]).collect())
            }
        }
    }
}

/// Splits `var` into one variable per partition block and rewrites the joint
/// table accordingly. Blocks are ordered by their earliest tick; the new
/// variables are named `var#1`, `var#2`, ... in that order.
pub fn unroll_variable(
    system: &VariableSystem,
    var: &str,
    partition: &[TimeSubset],
) -> Result<VariableSystem, UnrollError> {
    let target = system.variable(var)?.clone();
    let full = target
        .deterministic_subset()
        .ok_or_else(|| UnrollError::NonDeterministicSupport(var.to_string()))?
        .clone();
    validate_partition(&full, partition)?;

    let mut blocks: Vec<TimeSubset> = partition.to_vec();
    blocks.sort_by_key(|block| block.iter().next().copied());

    let mut parts: Vec<CompositeVariable> = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let name = format!("{var}#{}", i + 1);
        if system.variables().iter().any(|v| v.name == name) {
            return Err(UnrollError::NameCollision(name));
        }
        parts.push(CompositeVariable {
            name,
            process: target.process.clone(),
            possible_times: block.clone(),
            arity: block.len(),
            marginal_support: vec![(block.clone(), 1.0)],
            aggregation: block_aggregation(&target.aggregation, &full, block),
        });
    }

    let mut variables: Vec<CompositeVariable> = Vec::new();
    for v in system.variables() {
        if v.name == var {
            variables.extend(parts.iter().cloned());
        } else {
            variables.push(v.clone());
        }
    }

    // Each new part is deterministic: substitute its block into every row.
    let joint: Vec<(JointAssignment, f64)> = system
        .joint_support()
        .iter()
        .map(|(assignment, p)| {
            let mut assignment: JointAssignment = assignment
                .iter()
                .filter(|(name, _)| name.as_str() != var)
                .map(|(name, subset)| (name.clone(), subset.clone()))
                .collect();
            for part in &parts {
                assignment.insert(part.name.clone(), part.possible_times.clone());
            }
            (assignment, *p)
        })
        .collect();

    Ok(VariableSystem::build(
        system.atomic().clone(),
        variables,
        Some(joint),
    )?)
}

/// Splits a deterministic time set at a threshold tick: everything strictly
/// before `tick` in one block, everything at or after it in the other.
pub fn partition_at(full: &TimeSubset, tick: TimePoint) -> Result<Vec<TimeSubset>, UnrollError> {
    let before: TimeSubset = full.iter().copied().filter(|t| *t < tick).collect();
    let after: TimeSubset = full.iter().copied().filter(|t| *t >= tick).collect();
    if before.is_empty() || after.is_empty() {
        return Err(UnrollError::BadPartition {
            reason: format!("threshold {tick} does not split the time set"),
        });
    }
    Ok(vec![before, after])
}

/// Contiguous-in-time partitions of an ordered tick set, by cut positions.
fn contiguous_partitions(full: &TimeSubset) -> Vec<Vec<TimeSubset>> {
    let ticks: Vec<TimePoint> = full.iter().copied().collect();
    let cuts = ticks.len().saturating_sub(1);
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << cuts) {
        let mut partition: Vec<TimeSubset> = Vec::new();
        let mut block: TimeSubset = BTreeSet::new();
        for (i, t) in ticks.iter().enumerate() {
            block.insert(*t);
            if i < cuts && mask & (1 << i) != 0 {
                partition.push(std::mem::take(&mut block));
            }
        }
        partition.push(block);
        out.push(partition);
    }
    out
}

fn cyclic_variables(system: &VariableSystem) -> BTreeSet<String> {
    // Variables on some directed cycle: A with A ~> B and B ~> A in the
    // derived graph's transitive closure.
    let graph = derive_composite_graph(system);
    let mut reach: std::collections::BTreeMap<&str, BTreeSet<&str>> =
        std::collections::BTreeMap::new();
    for name in &graph.variables {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut stack: Vec<&str> = graph.children(name).collect();
        while let Some(at) = stack.pop() {
            if seen.insert(at) {
                stack.extend(graph.children(at));
            }
        }
        reach.insert(name.as_str(), seen);
    }
    let mut cyclic = BTreeSet::new();
    for (a, reach_a) in &reach {
        for b in reach_a {
            if reach[b].contains(a) {
                cyclic.insert(a.to_string());
                cyclic.insert(b.to_string());
            }
        }
    }
    cyclic
}

/// Searches for a minimal sequence of unrolling steps after which the derived
/// graph has no directed cycles. Partitions are contiguous in time; the
/// search prefers the fewest new variables, ties broken by earliest variable
/// name.
pub fn suggest_unrolling(system: &VariableSystem) -> Result<Vec<UnrollProposal>, UnrollError> {
    if derive_composite_graph(system).is_dag() {
        return Err(UnrollError::AlreadyAcyclic);
    }

    // Candidates: deterministic multi-point variables on some cycle.
    let cyclic = cyclic_variables(system);
    let mut candidates: Vec<(String, Vec<Vec<TimeSubset>>)> = Vec::new();
    for var in system.variables() {
        if !cyclic.contains(&var.name) {
            continue;
        }
        if let Some(full) = var.deterministic_subset() {
            if full.len() > 1 {
                let partitions: Vec<Vec<TimeSubset>> = contiguous_partitions(full)
                    .into_iter()
                    .filter(|p| p.len() > 1)
                    .collect();
                candidates.push((var.name.clone(), partitions));
            }
        }
    }

    // Budget = number of extra variables created; grow until a resolving
    // combination is found or the search space is exhausted.
    let max_budget: usize = candidates
        .iter()
        .map(|(name, _)| {
            system
                .variable(name)
                .map(|v| v.possible_times.len() - 1)
                .unwrap_or(0)
        })
        .sum();
    for budget in 1..=max_budget.max(1) {
        if let Some(plan) = search(system, &candidates, 0, budget, &mut Vec::new())? {
            return Ok(plan);
        }
    }
    Err(UnrollError::UnresolvableWithMixing)
}

fn apply_plan(
    system: &VariableSystem,
    plan: &[UnrollProposal],
) -> Result<VariableSystem, UnrollError> {
    let mut current = system.clone();
    for step in plan {
        current = unroll_variable(&current, &step.variable, &step.partition)?;
    }
    Ok(current)
}

fn search(
    system: &VariableSystem,
    candidates: &[(String, Vec<Vec<TimeSubset>>)],
    from: usize,
    budget: usize,
    chosen: &mut Vec<UnrollProposal>,
) -> Result<Option<Vec<UnrollProposal>>, UnrollError> {
    if budget == 0 {
        if chosen.is_empty() {
            return Ok(None);
        }
        let unrolled = apply_plan(system, chosen)?;
        if derive_composite_graph(&unrolled).is_dag() {
            return Ok(Some(chosen.clone()));
        }
        return Ok(None);
    }
    for (i, (name, partitions)) in candidates.iter().enumerate().skip(from) {
        for partition in partitions {
            let cost = partition.len() - 1;
            if cost > budget {
                continue;
            }
            chosen.push(UnrollProposal {
                variable: name.clone(),
                partition: partition.clone(),
            });
            if let Some(found) = search(system, candidates, i + 1, budget - cost, chosen)? {
                return Ok(Some(found));
            }
            chosen.pop();
        }
    }
    Ok(None)
}
