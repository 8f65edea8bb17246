//! The `tempodag/1` system spec file format.
//!
//! A spec is a UTF-8 JSON document describing processes, atomic nodes and
//! edges, optional linear-Gaussian parameters, composite variable blocks, and
//! an optional joint table. Atomic nodes are written `"X@0"`. Probabilities
//! are decimal strings so files survive round trips without float drift.
//! Serialization is canonical: keys sorted, probabilities in shortest
//! round-trip form.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{AtomicDag, AtomicNode, GraphError, ProcessId, TimePoint};
use crate::composite::{
    Aggregation, CompositeError, CompositeVariable, JointAssignment, VariableSystem,
};
use crate::scm::{LinearScm, ScmError};

pub const FORMAT_VERSION: &str = "tempodag/1";

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("JSON parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported spec version {0:?} (expected {FORMAT_VERSION:?})")]
    UnsupportedVersion(String),
    #[error("invalid atomic node reference {0:?} (expected \"process@tick\")")]
    BadNodeReference(String),
    #[error("invalid probability literal {0:?}")]
    BadProbability(String),
    #[error("process {0:?} is declared more than once")]
    DuplicateProcess(String),
    #[error("node references undeclared process {0:?}")]
    UndeclaredProcess(String),
    #[error("spec has no scm block")]
    MissingScm,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SpecError {
    /// Stable diagnostic code for machine-readable output and exit mapping.
    pub fn code(&self) -> &'static str {
        match self {
            SpecError::Parse { .. } => "ParseError",
            SpecError::UnsupportedVersion(_) => "UnsupportedVersion",
            SpecError::BadNodeReference(_) => "BadNodeReference",
            SpecError::BadProbability(_) => "BadProbability",
            SpecError::DuplicateProcess(_) => "DuplicateProcess",
            SpecError::UndeclaredProcess(_) => "UndeclaredProcess",
            SpecError::MissingScm => "MissingScm",
            SpecError::Graph(e) => match e {
                GraphError::EmptyProcessName => "EmptyProcessName",
                GraphError::BackwardInTimeEdge { .. } => "BackwardInTimeEdge",
                GraphError::UnknownNode(_) => "UnknownNode",
                GraphError::DuplicateNode(_) => "DuplicateNode",
            },
            SpecError::Composite(e) => match e {
                CompositeError::TimePointNotPossible { .. } => "TimePointNotPossible",
                CompositeError::BadDistribution { .. } => "BadDistribution",
                CompositeError::ArityMismatch { .. } => "ArityMismatch",
                CompositeError::ZeroWeight => "ZeroWeight",
                CompositeError::DuplicateVariable(_) => "DuplicateVariable",
                CompositeError::UnknownVariable(_) => "UnknownVariable",
                CompositeError::UnknownAtomicNode(_) => "UnknownAtomicNode",
                CompositeError::ProcessTimeCollision { .. } => "ProcessTimeCollision",
                CompositeError::MarginalMismatch { .. } => "MarginalMismatch",
                CompositeError::BadJointAssignment => "BadJointAssignment",
                CompositeError::SubsetNotInSupport => "SubsetNotInSupport",
                CompositeError::MissingAtomicValue(_) => "MissingAtomicValue",
                CompositeError::SupportSizeMismatch { .. } => "SupportSizeMismatch",
            },
            SpecError::Scm(e) => match e {
                ScmError::Composite(_) => "BadScmReference",
                ScmError::CoefficientEdgeMismatch => "CoefficientEdgeMismatch",
                ScmError::ZeroCoefficient { .. } => "ZeroCoefficient",
                ScmError::NonPositiveVariance(_) => "NonPositiveVariance",
                ScmError::VarianceNodeMismatch => "VarianceNodeMismatch",
                ScmError::MixingNotExact(_) => "MixingNotExact",
                ScmError::SingularConditioning => "SingularConditioning",
                ScmError::InsufficientSamples { .. } => "InsufficientSamples",
            },
            SpecError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub name: String,
    /// Display-only unit label for the abstract ticks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub edge: (String, String),
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSpec {
    pub node: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSpec {
    pub coefficients: Vec<CoefficientSpec>,
    pub noise_variances: Vec<VarianceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationSpec {
    Identity,
    Mean,
    WeightedSum(Vec<f64>),
}

impl From<&AggregationSpec> for Aggregation {
    fn from(spec: &AggregationSpec) -> Self {
        match spec {
            AggregationSpec::Identity => Aggregation::Identity,
            AggregationSpec::Mean => Aggregation::Mean,
            AggregationSpec::WeightedSum(w) => Aggregation::WeightedSum(w.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureEntry {
    pub time: u64,
    /// Decimal string, e.g. "0.5".
    pub probability: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariableSpec {
    Selection {
        name: String,
        process: String,
        possible_times: Vec<u64>,
        chosen: u64,
    },
    Mixture {
        name: String,
        process: String,
        possible_times: Vec<u64>,
        mixture: Vec<MixtureEntry>,
    },
    Aggregate {
        name: String,
        process: String,
        times: Vec<u64>,
        aggregation: AggregationSpec,
    },
}

impl VariableSpec {
    pub fn name(&self) -> &str {
        match self {
            VariableSpec::Selection { name, .. }
            | VariableSpec::Mixture { name, .. }
            | VariableSpec::Aggregate { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRow {
    /// Variable name -> realized subset of ticks.
    pub assignment: BTreeMap<String, Vec<u64>>,
    pub probability: String,
}

/// The parsed form of a `tempodag/1` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub version: String,
    pub processes: Vec<ProcessSpec>,
    /// Atomic nodes as "process@tick".
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm: Option<ScmSpec>,
    pub variables: Vec<VariableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<JointRow>>,
}

fn parse_node_ref(text: &str) -> Result<AtomicNode, SpecError> {
    let (process, tick) = text
        .rsplit_once('@')
        .ok_or_else(|| SpecError::BadNodeReference(text.to_string()))?;
    if process.is_empty() {
        return Err(SpecError::BadNodeReference(text.to_string()));
    }
    let tick: u64 = tick
        .parse()
        .map_err(|_| SpecError::BadNodeReference(text.to_string()))?;
    Ok(AtomicNode::new(ProcessId(process.to_string()), TimePoint(tick)))
}

fn parse_probability(text: &str) -> Result<f64, SpecError> {
    let p: f64 = text
        .parse()
        .map_err(|_| SpecError::BadProbability(text.to_string()))?;
    if !p.is_finite() {
        return Err(SpecError::BadProbability(text.to_string()));
    }
    Ok(p)
}

fn ticks(values: &[u64]) -> BTreeSet<TimePoint> {
    values.iter().map(|t| TimePoint(*t)).collect()
}

impl SystemSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let spec: SystemSpec = serde_json::from_str(text).map_err(|e| SpecError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if spec.version != FORMAT_VERSION {
            return Err(SpecError::UnsupportedVersion(spec.version));
        }
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SpecError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialization: sorted keys, two-space indentation, trailing
    /// newline.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("spec serialization");
        let mut text = serde_json::to_string_pretty(&value).expect("spec serialization");
        text.push('\n');
        text
    }

    /// Builds the variable system (and the SCM, when declared).
    pub fn realize(&self) -> Result<(VariableSystem, Option<LinearScm>), SpecError> {
        let mut declared: BTreeSet<&str> = BTreeSet::new();
        for process in &self.processes {
            if process.name.is_empty() {
                return Err(SpecError::Graph(GraphError::EmptyProcessName));
            }
            if !declared.insert(&process.name) {
                return Err(SpecError::DuplicateProcess(process.name.clone()));
            }
        }
        let mut dag = AtomicDag::new();
        for text in &self.nodes {
            let node = parse_node_ref(text)?;
            if !declared.contains(node.process.name()) {
                return Err(SpecError::UndeclaredProcess(node.process.0.clone()));
            }
            dag.add_node(node)?;
        }
        for (from, to) in &self.edges {
            dag.add_edge(parse_node_ref(from)?, parse_node_ref(to)?)?;
        }

        let mut variables = Vec::with_capacity(self.variables.len());
        for spec in &self.variables {
            let variable = match spec {
                VariableSpec::Selection {
                    name,
                    process,
                    possible_times,
                    chosen,
                } => CompositeVariable::selection(
                    name.clone(),
                    ProcessId(process.clone()),
                    ticks(possible_times),
                    TimePoint(*chosen),
                )?,
                VariableSpec::Mixture {
                    name,
                    process,
                    possible_times,
                    mixture,
                } => {
                    let mut weighted = Vec::with_capacity(mixture.len());
                    for entry in mixture {
                        weighted.push((TimePoint(entry.time), parse_probability(&entry.probability)?));
                    }
                    CompositeVariable::mixture(
                        name.clone(),
                        ProcessId(process.clone()),
                        ticks(possible_times),
                        weighted,
                    )?
                }
                VariableSpec::Aggregate {
                    name,
                    process,
                    times,
                    aggregation,
                } => CompositeVariable::aggregate(
                    name.clone(),
                    ProcessId(process.clone()),
                    ticks(times),
                    aggregation.into(),
                )?,
            };
            variables.push(variable);
        }

        let joint = match &self.joint {
            None => None,
            Some(rows) => {
                let mut table: Vec<(JointAssignment, f64)> = Vec::with_capacity(rows.len());
                for row in rows {
                    let assignment: JointAssignment = row
                        .assignment
                        .iter()
                        .map(|(name, subset)| (name.clone(), ticks(subset)))
                        .collect();
                    table.push((assignment, parse_probability(&row.probability)?));
                }
                Some(table)
            }
        };

        let system = VariableSystem::build(dag, variables, joint)?;

        let scm = match &self.scm {
            None => None,
            Some(spec) => {
                let mut coefficients = BTreeMap::new();
                for c in &spec.coefficients {
                    coefficients.insert(
                        (parse_node_ref(&c.edge.0)?, parse_node_ref(&c.edge.1)?),
                        c.value,
                    );
                }
                let mut variances = BTreeMap::new();
                for v in &spec.noise_variances {
                    variances.insert(parse_node_ref(&v.node)?, v.value);
                }
                Some(LinearScm::new(system.atomic(), coefficients, variances)?)
            }
        };
        Ok((system, scm))
    }

    /// Rebuilds a spec document from a system, carrying process declarations
    /// and the optional SCM through. Used when writing transformed systems
    /// (for example after unrolling).
    pub fn from_system(system: &VariableSystem, scm: Option<&LinearScm>) -> Self {
        let dag = system.atomic();
        let processes: BTreeSet<String> = dag
            .nodes()
            .map(|n| n.process.name().to_string())
            .collect();
        let variables: Vec<VariableSpec> = system
            .variables()
            .iter()
            .map(|var| {
                let possible: Vec<u64> = var.possible_times.iter().map(|t| t.tick()).collect();
                if var.marginal_support.len() > 1 {
                    VariableSpec::Mixture {
                        name: var.name.clone(),
                        process: var.process.name().to_string(),
                        possible_times: possible,
                        mixture: var
                            .marginal_support
                            .iter()
                            .map(|(subset, p)| MixtureEntry {
                                time: subset.iter().next().expect("arity 1").tick(),
                                probability: format!("{p}"),
                            })
                            .collect(),
                    }
                } else if var.arity == 1 && var.aggregation == Aggregation::Identity {
                    VariableSpec::Selection {
                        name: var.name.clone(),
                        process: var.process.name().to_string(),
                        possible_times: possible.clone(),
                        chosen: var
                            .deterministic_subset()
                            .and_then(|s| s.iter().next())
                            .expect("deterministic singleton")
                            .tick(),
                    }
                } else {
                    VariableSpec::Aggregate {
                        name: var.name.clone(),
                        process: var.process.name().to_string(),
                        times: possible,
                        aggregation: match &var.aggregation {
                            Aggregation::Identity => AggregationSpec::Identity,
                            Aggregation::Mean => AggregationSpec::Mean,
                            Aggregation::WeightedSum(w) => AggregationSpec::WeightedSum(w.clone()),
                        },
                    }
                }
            })
            .collect();
        let joint = if system.all_deterministic() {
            None
        } else {
            Some(
                system
                    .joint_support()
                    .iter()
                    .map(|(assignment, p)| JointRow {
                        assignment: assignment
                            .iter()
                            .map(|(name, subset)| {
                                (name.clone(), subset.iter().map(|t| t.tick()).collect())
                            })
                            .collect(),
                        probability: format!("{p}"),
                    })
                    .collect(),
            )
        };
        SystemSpec {
            version: FORMAT_VERSION.to_string(),
            processes: processes
                .into_iter()
                .map(|name| ProcessSpec { name, unit: None })
                .collect(),
            nodes: dag.nodes().map(|n| n.to_string()).collect(),
            edges: dag
                .edges()
                .map(|(u, v)| (u.to_string(), v.to_string()))
                .collect(),
            scm: scm.map(|scm| ScmSpec {
                coefficients: scm
                    .coefficients()
                    .iter()
                    .map(|((u, v), value)| CoefficientSpec {
                        edge: (u.to_string(), v.to_string()),
                        value: *value,
                    })
                    .collect(),
                noise_variances: scm
                    .noise_variances()
                    .iter()
                    .map(|(n, value)| VarianceSpec {
                        node: n.to_string(),
                        value: *value,
                    })
                    .collect(),
            }),
            variables,
            joint,
        }
    }
}
