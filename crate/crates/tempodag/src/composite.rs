//! Composite causal variables over an atomic DAG.
//!
//! A composite variable draws a fixed-size subset of its possible time points
//! and aggregates the process values at those points. Selections, mixings and
//! aggregations are the three constructors of the catalog. A `VariableSystem`
//! ties the variables together with the joint distribution of their
//! time-point subsets.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::atomic::{AtomicDag, AtomicNode, ProcessId, TimePoint};

/// Tolerance for probability mass sums.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Tolerance for declared-vs-implied marginal probabilities.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Aggregation functions form a closed catalog so the component-sensitivity
/// condition can be checked analytically: every kind changes its output when
/// any single input component changes.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregation {
    /// The value at the single time point; requires arity 1.
    Identity,
    /// Arithmetic mean over the realized time points.
    Mean,
    /// Weighted sum with all weights nonzero, indexed by ascending time.
    WeightedSum(Vec<f64>),
}

impl Aggregation {
    pub fn validate(&self, arity: usize) -> Result<(), CompositeError> {
        match self {
            Aggregation::Identity if arity != 1 => Err(CompositeError::ArityMismatch {
                expected: 1,
                got: arity,
            }),
            Aggregation::WeightedSum(w) => {
                if w.len() != arity {
                    return Err(CompositeError::ArityMismatch {
                        expected: w.len(),
                        got: arity,
                    });
                }
                if w.iter().any(|x| *x == 0.0 || !x.is_finite()) {
                    return Err(CompositeError::ZeroWeight);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Applies the aggregation to values ordered by ascending time.
    pub fn apply(&self, time_sorted: &[f64]) -> f64 {
        match self {
            Aggregation::Identity => time_sorted[0],
            Aggregation::Mean => time_sorted.iter().sum::<f64>() / time_sorted.len() as f64,
            Aggregation::WeightedSum(w) => time_sorted
                .iter()
                .zip(w)
                .map(|(value, weight)| value * weight)
                .sum(),
        }
    }

    /// The coefficient applied to the i-th component (ascending time) of a
    /// k-point realization. All catalog aggregations are linear functionals.
    pub fn weight(&self, index: usize, arity: usize) -> f64 {
        match self {
            Aggregation::Identity => 1.0,
            Aggregation::Mean => 1.0 / arity as f64,
            Aggregation::WeightedSum(w) => w[index],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositeError {
    #[error("time point {point} is not among the possible time points")]
    TimePointNotPossible { point: TimePoint },
    #[error("probability masses are invalid: {reason}")]
    BadDistribution { reason: String },
    #[error("aggregation arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("weighted-sum weights must be nonzero and finite")]
    ZeroWeight,
    #[error("variable name {0:?} is not unique")]
    DuplicateVariable(String),
    #[error("variable {0:?} does not exist in the system")]
    UnknownVariable(String),
    #[error("atomic node {0} referenced by a variable is not in the atomic DAG")]
    UnknownAtomicNode(AtomicNode),
    #[error("variables {a:?} and {b:?} both claim atomic node {node}")]
    ProcessTimeCollision { a: String, b: String, node: AtomicNode },
    #[error("declared marginal of {variable:?} disagrees with the joint table for subset {{{subset}}}: declared {declared}, implied {implied}")]
    MarginalMismatch {
        variable: String,
        subset: String,
        declared: f64,
        implied: f64,
    },
    #[error("joint assignment does not cover exactly the system's variables")]
    BadJointAssignment,
    #[error("realized subset is not in the variable's support")]
    SubsetNotInSupport,
    #[error("missing atomic value for {0}")]
    MissingAtomicValue(AtomicNode),
    #[error("support subset has {got} elements, arity is {arity}")]
    SupportSizeMismatch { arity: usize, got: usize },
}

/// A time-point subset, ordered ascending.
pub type TimeSubset = BTreeSet<TimePoint>;

/// One composite causal variable: its possible time points, the distribution
/// of the realized subset, and the aggregation applied per realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeVariable {
    pub name: String,
    pub process: ProcessId,
    pub possible_times: BTreeSet<TimePoint>,
    pub arity: usize,
    /// Subsets of size `arity` with positive probability, summing to 1.
    pub marginal_support: Vec<(TimeSubset, f64)>,
    pub aggregation: Aggregation,
}

fn format_subset(subset: &TimeSubset) -> String {
    let ticks: Vec<String> = subset.iter().map(|t| t.to_string()).collect();
    ticks.join(",")
}

impl CompositeVariable {
    fn validate(&self) -> Result<(), CompositeError> {
        self.aggregation.validate(self.arity)?;
        if self.marginal_support.is_empty() {
            return Err(CompositeError::BadDistribution {
                reason: "empty support".into(),
            });
        }
        let mut seen: BTreeSet<&TimeSubset> = BTreeSet::new();
        let mut total = 0.0;
        for (subset, p) in &self.marginal_support {
            if subset.len() != self.arity {
                return Err(CompositeError::SupportSizeMismatch {
                    arity: self.arity,
                    got: subset.len(),
                });
            }
            for t in subset {
                if !self.possible_times.contains(t) {
                    return Err(CompositeError::TimePointNotPossible { point: *t });
                }
            }
            if !seen.insert(subset) {
                return Err(CompositeError::BadDistribution {
                    reason: format!("duplicate support subset {{{}}}", format_subset(subset)),
                });
            }
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(CompositeError::BadDistribution {
                    reason: format!("probability {p} outside (0, 1]"),
                });
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(CompositeError::BadDistribution {
                reason: format!("marginal masses sum to {total}"),
            });
        }
        Ok(())
    }

    /// A selection: the quantity at one fixed time point.
    pub fn selection(
        name: impl Into<String>,
        process: ProcessId,
        possible: BTreeSet<TimePoint>,
        chosen: TimePoint,
    ) -> Result<Self, CompositeError> {
        if !possible.contains(&chosen) {
            return Err(CompositeError::TimePointNotPossible { point: chosen });
        }
        let var = CompositeVariable {
            name: name.into(),
            process,
            possible_times: possible,
            arity: 1,
            marginal_support: vec![([chosen].into_iter().collect(), 1.0)],
            aggregation: Aggregation::Identity,
        };
        var.validate()?;
        Ok(var)
    }

    /// A mixing: a random singleton time point per realization.
    pub fn mixture(
        name: impl Into<String>,
        process: ProcessId,
        possible: BTreeSet<TimePoint>,
        weighted_singletons: Vec<(TimePoint, f64)>,
    ) -> Result<Self, CompositeError> {
        for (t, _) in &weighted_singletons {
            if !possible.contains(t) {
                return Err(CompositeError::TimePointNotPossible { point: *t });
            }
        }
        let var = CompositeVariable {
            name: name.into(),
            process,
            possible_times: possible,
            arity: 1,
            marginal_support: weighted_singletons
                .into_iter()
                .map(|(t, p)| ([t].into_iter().collect(), p))
                .collect(),
            aggregation: Aggregation::Identity,
        };
        var.validate()?;
        Ok(var)
    }

    /// An aggregation: a deterministic multi-point subset combined by `f`.
    pub fn aggregate(
        name: impl Into<String>,
        process: ProcessId,
        times: BTreeSet<TimePoint>,
        aggregation: Aggregation,
    ) -> Result<Self, CompositeError> {
        let var = CompositeVariable {
            name: name.into(),
            process,
            possible_times: times.clone(),
            arity: times.len(),
            marginal_support: vec![(times, 1.0)],
            aggregation,
        };
        var.validate()?;
        Ok(var)
    }

    /// The point-mass subset, if the support is deterministic.
    pub fn deterministic_subset(&self) -> Option<&TimeSubset> {
        match self.marginal_support.as_slice() {
            [(subset, _)] => Some(subset),
            _ => None,
        }
    }

    /// Atomic nodes this variable can ever refer to.
    pub fn atomic_nodes(&self) -> impl Iterator<Item = AtomicNode> + '_ {
        self.possible_times
            .iter()
            .map(|t| AtomicNode::new(self.process.clone(), *t))
    }

    /// Evaluates the aggregation for one realization.
    pub fn evaluate(
        &self,
        atomic_values: &BTreeMap<AtomicNode, f64>,
        realized_subset: &TimeSubset,
    ) -> Result<f64, CompositeError> {
        if !self
            .marginal_support
            .iter()
            .any(|(subset, _)| subset == realized_subset)
        {
            return Err(CompositeError::SubsetNotInSupport);
        }
        // BTreeSet iteration is ascending in time, which is the order the
        // aggregation contracts on.
        let mut values = Vec::with_capacity(realized_subset.len());
        for t in realized_subset {
            let node = AtomicNode::new(self.process.clone(), *t);
            match atomic_values.get(&node) {
                Some(v) => values.push(*v),
                None => return Err(CompositeError::MissingAtomicValue(node)),
            }
        }
        Ok(self.aggregation.apply(&values))
    }

    /// The variable as a linear functional over its realized subset:
    /// node -> coefficient. Defined for every catalog aggregation.
    pub fn functional_over(&self, subset: &TimeSubset) -> BTreeMap<AtomicNode, f64> {
        subset
            .iter()
            .enumerate()
            .map(|(i, t)| {
                (
                    AtomicNode::new(self.process.clone(), *t),
                    self.aggregation.weight(i, subset.len()),
                )
            })
            .collect()
    }
}

/// One row of the joint table: a subset per variable, with its probability.
pub type JointAssignment = BTreeMap<String, TimeSubset>;

/// A set of composite variables over one atomic DAG, with the joint
/// distribution of their time-point subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSystem {
    atomic: AtomicDag,
    variables: Vec<CompositeVariable>,
    joint_support: Vec<(JointAssignment, f64)>,
}

impl VariableSystem {
    /// Builds a system, validating every invariant. With `joint = None` the
    /// joint is the product of the declared marginals.
    pub fn build(
        atomic: AtomicDag,
        variables: Vec<CompositeVariable>,
        joint: Option<Vec<(JointAssignment, f64)>>,
    ) -> Result<Self, CompositeError> {
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for var in &variables {
            var.validate()?;
            if !names.insert(&var.name) {
                return Err(CompositeError::DuplicateVariable(var.name.clone()));
            }
        }
        // Every referenced atomic node must exist, and no node may be claimed
        // by two variables.
        let mut claimed: BTreeMap<AtomicNode, &str> = BTreeMap::new();
        for var in &variables {
            for node in var.atomic_nodes() {
                if !atomic.contains_node(&node) {
                    return Err(CompositeError::UnknownAtomicNode(node));
                }
                if let Some(other) = claimed.insert(node.clone(), &var.name) {
                    return Err(CompositeError::ProcessTimeCollision {
                        a: other.to_string(),
                        b: var.name.clone(),
                        node,
                    });
                }
            }
        }
        let joint_support = match joint {
            Some(joint) => joint,
            None => product_joint(&variables),
        };
        let system = VariableSystem {
            atomic,
            variables,
            joint_support,
        };
        system.validate_joint()?;
        Ok(system)
    }

    fn validate_joint(&self) -> Result<(), CompositeError> {
        let names: BTreeSet<&str> = self.variables.iter().map(|v| v.name.as_str()).collect();
        let mut total = 0.0;
        for (assignment, p) in &self.joint_support {
            if assignment.len() != names.len()
                || !assignment.keys().all(|k| names.contains(k.as_str()))
            {
                return Err(CompositeError::BadJointAssignment);
            }
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(CompositeError::BadDistribution {
                    reason: format!("joint probability {p} outside (0, 1]"),
                });
            }
            for (name, subset) in assignment {
                let var = self.variable(name)?;
                if !var.marginal_support.iter().any(|(s, _)| s == subset) {
                    return Err(CompositeError::SubsetNotInSupport);
                }
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(CompositeError::BadDistribution {
                reason: format!("joint masses sum to {total}"),
            });
        }
        // Joint-implied marginals must match the declared ones.
        for var in &self.variables {
            for (subset, declared) in &var.marginal_support {
                let implied: f64 = self
                    .joint_support
                    .iter()
                    .filter(|(a, _)| a.get(&var.name) == Some(subset))
                    .map(|(_, p)| p)
                    .sum();
                if (implied - declared).abs() > MARGINAL_TOL {
                    return Err(CompositeError::MarginalMismatch {
                        variable: var.name.clone(),
                        subset: format_subset(subset),
                        declared: *declared,
                        implied,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn atomic(&self) -> &AtomicDag {
        &self.atomic
    }

    pub fn variables(&self) -> &[CompositeVariable] {
        &self.variables
    }

    pub fn variable_names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn joint_support(&self) -> &[(JointAssignment, f64)] {
        &self.joint_support
    }

    pub fn variable(&self, name: &str) -> Result<&CompositeVariable, CompositeError> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| CompositeError::UnknownVariable(name.to_string()))
    }

    /// Projection of the joint support onto a pair of variables.
    pub fn pairwise_support(
        &self,
        a: &str,
        b: &str,
    ) -> Result<BTreeSet<(TimeSubset, TimeSubset)>, CompositeError> {
        self.variable(a)?;
        self.variable(b)?;
        Ok(self
            .joint_support
            .iter()
            .map(|(assignment, _)| (assignment[a].clone(), assignment[b].clone()))
            .collect())
    }

    /// True iff every variable has a point-mass subset distribution.
    pub fn all_deterministic(&self) -> bool {
        self.variables
            .iter()
            .all(|v| v.deterministic_subset().is_some())
    }
}

/// The joint table under independence: the product of the marginals.
pub fn product_joint(variables: &[CompositeVariable]) -> Vec<(JointAssignment, f64)> {
    let mut rows: Vec<(JointAssignment, f64)> = vec![(BTreeMap::new(), 1.0)];
    for var in variables {
        let mut next = Vec::with_capacity(rows.len() * var.marginal_support.len());
        for (assignment, p) in &rows {
            for (subset, q) in &var.marginal_support {
                let mut assignment = assignment.clone();
                assignment.insert(var.name.clone(), subset.clone());
                next.push((assignment, p * q));
            }
        }
        rows = next;
    }
    rows
}
