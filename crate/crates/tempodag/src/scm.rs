//! Exact linear-Gaussian independence oracle and seeded sampler.
//!
//! Each atomic node is a linear function of its parents plus independent
//! zero-mean Gaussian noise. Because edges strictly increase the tick, the
//! coefficient matrix is strictly lower triangular in (tick, process) order
//! and the full covariance has the closed form (I-B)^-1 D (I-B)^-T.
//! Deterministic-support composite variables are linear functionals of the
//! atomic nodes, so their covariance and partial correlations are exact;
//! mixing variables are handled only by sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use thiserror::Error;

use crate::atomic::{AtomicDag, AtomicNode};
use crate::composite::{CompositeError, JointAssignment, VariableSystem};

/// Partial correlations within this distance of zero count as independent.
pub const EXACT_CI_TOL: f64 = 1e-9;
/// Below this pivot size the conditioning covariance counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error("coefficient keys must exactly match the atomic edge set")]
    CoefficientEdgeMismatch,
    #[error("coefficient for edge {from} -> {to} must be nonzero and finite")]
    ZeroCoefficient { from: AtomicNode, to: AtomicNode },
    #[error("noise variance for {0} must be strictly positive")]
    NonPositiveVariance(AtomicNode),
    #[error("noise variances must cover exactly the atomic node set")]
    VarianceNodeMismatch,
    #[error("variable {0:?} has a mixing (non-deterministic) support; the exact oracle requires deterministic supports")]
    MixingNotExact(String),
    #[error("conditioning covariance is singular at tolerance {SINGULAR_TOL}")]
    SingularConditioning,
    #[error("need at least {needed} samples for {conditioning} conditioning variables, got {got}")]
    InsufficientSamples {
        needed: usize,
        got: usize,
        conditioning: usize,
    },
}

/// Linear-Gaussian structural model over the atomic nodes of a DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScm {
    coefficients: BTreeMap<(AtomicNode, AtomicNode), f64>,
    noise_variances: BTreeMap<AtomicNode, f64>,
}

impl LinearScm {
    pub fn new(
        dag: &AtomicDag,
        coefficients: BTreeMap<(AtomicNode, AtomicNode), f64>,
        noise_variances: BTreeMap<AtomicNode, f64>,
    ) -> Result<Self, ScmError> {
        let edges: BTreeSet<&(AtomicNode, AtomicNode)> = dag.edges().collect();
        if coefficients.len() != edges.len()
            || !coefficients.keys().all(|edge| edges.contains(edge))
        {
            return Err(ScmError::CoefficientEdgeMismatch);
        }
        for ((from, to), value) in &coefficients {
            if *value == 0.0 || !value.is_finite() {
                return Err(ScmError::ZeroCoefficient {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        let nodes: BTreeSet<&AtomicNode> = dag.nodes().collect();
        if noise_variances.len() != nodes.len()
            || !noise_variances.keys().all(|n| nodes.contains(n))
        {
            return Err(ScmError::VarianceNodeMismatch);
        }
        for (node, variance) in &noise_variances {
            if !(*variance > 0.0 && variance.is_finite()) {
                return Err(ScmError::NonPositiveVariance(node.clone()));
            }
        }
        Ok(LinearScm {
            coefficients,
            noise_variances,
        })
    }

    pub fn coefficient(&self, from: &AtomicNode, to: &AtomicNode) -> Option<f64> {
        self.coefficients
            .get(&(from.clone(), to.clone()))
            .copied()
    }

    pub fn coefficients(&self) -> &BTreeMap<(AtomicNode, AtomicNode), f64> {
        &self.coefficients
    }

    pub fn noise_variances(&self) -> &BTreeMap<AtomicNode, f64> {
        &self.noise_variances
    }
}

/// Exact covariance over all atomic nodes, with the node order it is indexed
/// by.
pub fn atomic_covariance(dag: &AtomicDag, scm: &LinearScm) -> (Vec<AtomicNode>, DMatrix<f64>) {
    let order = dag.topological_order();
    let n = order.len();
    let index: BTreeMap<&AtomicNode, usize> =
        order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    // v = B v + e with B strictly lower triangular in topological order.
    // M = (I - B)^-1 by forward substitution: row j = e_j + sum_i B[j,i] row_i.
    let mut mix = DMatrix::<f64>::identity(n, n);
    for (j, node) in order.iter().enumerate() {
        let parents: Vec<(usize, f64)> = dag
            .parents(node)
            .map(|p| (index[p], scm.coefficient(p, node).expect("validated edge")))
            .collect();
        for (i, coef) in parents {
            for k in 0..n {
                let add = coef * mix[(i, k)];
                mix[(j, k)] += add;
            }
        }
    }
    let noise = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        order.iter().map(|node| scm.noise_variances()[node]),
    ));
    let sigma = &mix * noise * mix.transpose();
    // Symmetrize exactly; floating error can leave asymmetric dust.
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    (order, sigma)
}

/// Exact covariance between deterministic-support composite variables.
pub fn composite_covariance(
    system: &VariableSystem,
    scm: &LinearScm,
) -> Result<(Vec<String>, DMatrix<f64>), ScmError> {
    let (order, sigma) = atomic_covariance(system.atomic(), scm);
    let index: BTreeMap<&AtomicNode, usize> =
        order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let vars = system.variables();
    let mut stack = DMatrix::<f64>::zeros(vars.len(), order.len());
    let mut names = Vec::with_capacity(vars.len());
    for (row, var) in vars.iter().enumerate() {
        let subset = var
            .deterministic_subset()
            .ok_or_else(|| ScmError::MixingNotExact(var.name.clone()))?;
        for (node, weight) in var.functional_over(subset) {
            stack[(row, index[&node])] = weight;
        }
        names.push(var.name.clone());
    }
    let cov = &stack * sigma * stack.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((names, cov))
}

/// Partial correlation of entries `a` and `b` of a covariance matrix given
/// the `conditioning` entries, via the Schur complement.
pub fn partial_correlation(
    cov: &DMatrix<f64>,
    a: usize,
    b: usize,
    conditioning: &[usize],
) -> Result<f64, ScmError> {
    let pair = [a, b];
    let mut s_pp = DMatrix::<f64>::zeros(2, 2);
    for (i, &u) in pair.iter().enumerate() {
        for (j, &v) in pair.iter().enumerate() {
            s_pp[(i, j)] = cov[(u, v)];
        }
    }
    let schur = if conditioning.is_empty() {
        s_pp
    } else {
        let m = conditioning.len();
        let mut s_cc = DMatrix::<f64>::zeros(m, m);
        let mut s_pc = DMatrix::<f64>::zeros(2, m);
        for (i, &u) in conditioning.iter().enumerate() {
            for (j, &v) in conditioning.iter().enumerate() {
                s_cc[(i, j)] = cov[(u, v)];
            }
            for (k, &p) in pair.iter().enumerate() {
                s_pc[(k, i)] = cov[(p, u)];
            }
        }
        let chol = s_cc
            .clone()
            .cholesky()
            .ok_or(ScmError::SingularConditioning)?;
        if chol.l().diagonal().iter().any(|d| d * d < SINGULAR_TOL) {
            return Err(ScmError::SingularConditioning);
        }
        let solved = chol.solve(&s_pc.transpose());
        &s_pp - &s_pc * solved
    };
    let denom = (schur[(0, 0)] * schur[(1, 1)]).sqrt();
    // NaN or non-positive denominator both land here.
    if !matches!(denom.partial_cmp(&0.0), Some(std::cmp::Ordering::Greater)) {
        // Degenerate residual variance: nothing left to correlate.
        return Ok(0.0);
    }
    Ok((schur[(0, 1)] / denom).clamp(-1.0, 1.0))
}

/// Outcome of a conditional-independence query.
#[derive(Debug, Clone, PartialEq)]
pub struct CiDecision {
    pub independent: bool,
    pub partial_correlation: f64,
    /// Fisher z statistic for empirical tests; 0 for exact queries.
    pub statistic: f64,
}

/// Exact conditional-independence test: partial correlation zero within
/// `EXACT_CI_TOL`.
pub fn ci_test_exact(
    system: &VariableSystem,
    scm: &LinearScm,
    a: &str,
    b: &str,
    conditioning: &BTreeSet<String>,
) -> Result<CiDecision, ScmError> {
    let (names, cov) = composite_covariance(system, scm)?;
    let idx = |name: &str| -> Result<usize, ScmError> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ScmError::Composite(CompositeError::UnknownVariable(name.to_string())))
    };
    let cond: Vec<usize> = conditioning
        .iter()
        .map(|n| idx(n))
        .collect::<Result<_, _>>()?;
    let r = partial_correlation(&cov, idx(a)?, idx(b)?, &cond)?;
    Ok(CiDecision {
        independent: r.abs() <= EXACT_CI_TOL,
        partial_correlation: r,
        statistic: 0.0,
    })
}

/// Seeded batch of realizations: atomic values plus the drawn subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationBatch {
    pub seed: u64,
    pub node_order: Vec<AtomicNode>,
    /// One row per realization, columns in `node_order`.
    pub values: Vec<Vec<f64>>,
    /// The drawn joint assignment per realization.
    pub realized: Vec<JointAssignment>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-realization stream seed: realizations are independent and a batch can
/// be partitioned across workers without changing results.
fn realization_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(1)))
}

/// Draws `count` i.i.d. realizations. Within each realization the joint
/// subset assignment is drawn first, then atomic values in topological order.
/// Bit-reproducible for a fixed seed.
pub fn sample(
    system: &VariableSystem,
    scm: &LinearScm,
    seed: u64,
    count: usize,
) -> RealizationBatch {
    let dag = system.atomic();
    let order = dag.topological_order();
    let index: BTreeMap<&AtomicNode, usize> =
        order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let joint = system.joint_support();
    let mut values = Vec::with_capacity(count);
    let mut realized = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha12Rng::seed_from_u64(realization_seed(seed, i as u64));
        // Subset draw from the joint table, independent of the noises.
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut assignment = &joint[joint.len() - 1].0;
        for (candidate, p) in joint {
            cumulative += p;
            if u < cumulative {
                assignment = candidate;
                break;
            }
        }
        realized.push(assignment.clone());
        // Atomic values in topological (time) order.
        let mut row = vec![0.0; order.len()];
        for (j, node) in order.iter().enumerate() {
            let noise = Normal::new(0.0, scm.noise_variances()[node].sqrt())
                .expect("validated variance")
                .sample(&mut rng);
            let mut value = noise;
            for parent in dag.parents(node) {
                value += scm.coefficient(parent, node).expect("validated edge")
                    * row[index[parent]];
            }
            row[j] = value;
        }
        values.push(row);
    }
    RealizationBatch {
        seed,
        node_order: order,
        values,
        realized,
    }
}

/// Composite values computed per realization from a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSamples {
    pub names: Vec<String>,
    /// One row per realization, columns in `names` order.
    pub rows: Vec<Vec<f64>>,
}

pub fn composite_samples(
    system: &VariableSystem,
    batch: &RealizationBatch,
) -> Result<CompositeSamples, ScmError> {
    let names: Vec<String> = system.variables().iter().map(|v| v.name.clone()).collect();
    let mut rows = Vec::with_capacity(batch.values.len());
    for (row, assignment) in batch.values.iter().zip(&batch.realized) {
        let values: BTreeMap<AtomicNode, f64> = batch
            .node_order
            .iter()
            .cloned()
            .zip(row.iter().copied())
            .collect();
        let mut out = Vec::with_capacity(names.len());
        for var in system.variables() {
            out.push(var.evaluate(&values, &assignment[&var.name])?);
        }
        rows.push(out);
    }
    Ok(CompositeSamples { names, rows })
}

impl CompositeSamples {
    /// Sample covariance matrix (n-1 denominator) in `names` order.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let k = self.names.len();
        let mut mean = vec![0.0; k];
        for row in &self.rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = DMatrix::<f64>::zeros(k, k);
        for row in &self.rows {
            for i in 0..k {
                for j in 0..k {
                    cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        cov / (n as f64 - 1.0)
    }

    /// CSV with a header row of variable names and floats at 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Fisher z-transform test of the sample partial correlation at significance
/// `alpha`.
pub fn ci_test_empirical(
    samples: &CompositeSamples,
    a: &str,
    b: &str,
    conditioning: &BTreeSet<String>,
    alpha: f64,
) -> Result<CiDecision, ScmError> {
    let n = samples.rows.len();
    let needed = conditioning.len() + 4;
    if n < needed {
        return Err(ScmError::InsufficientSamples {
            needed,
            got: n,
            conditioning: conditioning.len(),
        });
    }
    let idx = |name: &str| -> Result<usize, ScmError> {
        samples
            .names
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| ScmError::Composite(CompositeError::UnknownVariable(name.to_string())))
    };
    let cond: Vec<usize> = conditioning
        .iter()
        .map(|c| idx(c))
        .collect::<Result<_, _>>()?;
    let cov = samples.covariance();
    let r = partial_correlation(&cov, idx(a)?, idx(b)?, &cond)?;
    let df = (n - conditioning.len()) as f64 - 3.0;
    let statistic = if r.abs() >= 1.0 {
        f64::INFINITY
    } else {
        df.sqrt() * r.atanh().abs()
    };
    let threshold = StdNormal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(CiDecision {
        independent: statistic <= threshold,
        partial_correlation: r,
        statistic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{node, ProcessId, TimePoint};
    use crate::composite::{Aggregation, CompositeVariable};
    use approx::assert_abs_diff_eq;

    fn pid(name: &str) -> ProcessId {
        ProcessId(name.to_string())
    }

    fn times(ticks: &[u64]) -> BTreeSet<TimePoint> {
        ticks.iter().map(|t| TimePoint(*t)).collect()
    }

    fn chain_scm(coef: f64) -> (AtomicDag, LinearScm) {
        let mut dag = AtomicDag::new();
        dag.add_node(node("A", 0)).unwrap();
        dag.add_node(node("B", 1)).unwrap();
        dag.add_edge(node("A", 0), node("B", 1)).unwrap();
        let scm = LinearScm::new(
            &dag,
            [((node("A", 0), node("B", 1)), coef)].into_iter().collect(),
            [(node("A", 0), 1.0), (node("B", 1), 1.0)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        (dag, scm)
    }

    #[test]
    fn single_node_unit_variance() {
        let mut dag = AtomicDag::new();
        dag.add_node(node("A", 0)).unwrap();
        let scm = LinearScm::new(
            &dag,
            BTreeMap::new(),
            [(node("A", 0), 1.0)].into_iter().collect(),
        )
        .unwrap();
        let (_, sigma) = atomic_covariance(&dag, &scm);
        assert_eq!(sigma[(0, 0)], 1.0);
    }

    #[test]
    fn chain_covariance_hand_expansion() {
        // B = 2A + e: cov(A, B) = 2, var(B) = 4 + 1 = 5.
        let (dag, scm) = chain_scm(2.0);
        let (order, sigma) = atomic_covariance(&dag, &scm);
        assert_eq!(order, vec![node("A", 0), node("B", 1)]);
        assert_abs_diff_eq!(sigma[(0, 1)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sigma[(1, 1)], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn scm_validation() {
        let mut dag = AtomicDag::new();
        dag.add_node(node("A", 0)).unwrap();
        dag.add_node(node("B", 1)).unwrap();
        dag.add_edge(node("A", 0), node("B", 1)).unwrap();
        let variances: BTreeMap<_, _> = [(node("A", 0), 1.0), (node("B", 1), 1.0)]
            .into_iter()
            .collect();
        let err = LinearScm::new(
            &dag,
            [((node("A", 0), node("B", 1)), 0.0)].into_iter().collect(),
            variances.clone(),
        )
        .unwrap_err();
        assert!(matches!(err, ScmError::ZeroCoefficient { .. }));
        let err = LinearScm::new(&dag, BTreeMap::new(), variances).unwrap_err();
        assert!(matches!(err, ScmError::CoefficientEdgeMismatch));
        let err = LinearScm::new(
            &dag,
            [((node("A", 0), node("B", 1)), 1.0)].into_iter().collect(),
            [(node("A", 0), 1.0), (node("B", 1), -1.0)]
                .into_iter()
                .collect(),
        )
        .unwrap_err();
        assert!(matches!(err, ScmError::NonPositiveVariance(_)));
    }

    pub(crate) fn collider(a: f64, b: f64) -> (VariableSystem, LinearScm) {
        let mut dag = AtomicDag::new();
        for n in [node("X", 0), node("Y", 2), node("Y", 8), node("Z", 10)] {
            dag.add_node(n).unwrap();
        }
        dag.add_edge(node("X", 0), node("Y", 2)).unwrap();
        dag.add_edge(node("Y", 8), node("Z", 10)).unwrap();
        let scm = LinearScm::new(
            &dag,
            [
                ((node("X", 0), node("Y", 2)), a),
                ((node("Y", 8), node("Z", 10)), b),
            ]
            .into_iter()
            .collect(),
            [
                (node("X", 0), 1.0),
                (node("Y", 2), 1.0),
                (node("Y", 8), 1.0),
                (node("Z", 10), 1.0),
            ]
            .into_iter()
            .collect(),
        )
        .unwrap();
        let variables = vec![
            CompositeVariable::selection("X", pid("X"), times(&[0]), TimePoint(0)).unwrap(),
            CompositeVariable::aggregate("Y", pid("Y"), times(&[2, 8]), Aggregation::Mean)
                .unwrap(),
            CompositeVariable::selection("Z", pid("Z"), times(&[10]), TimePoint(10)).unwrap(),
        ];
        let system = VariableSystem::build(dag, variables, None).unwrap();
        (system, scm)
    }

    #[test]
    fn collider_atomic_x_z_uncorrelated() {
        let (system, scm) = collider(1.3, 0.7);
        let (order, sigma) = atomic_covariance(system.atomic(), &scm);
        let ix = order.iter().position(|n| n == &node("X", 0)).unwrap();
        let iz = order.iter().position(|n| n == &node("Z", 10)).unwrap();
        assert_eq!(sigma[(ix, iz)], 0.0);
    }

    #[test]
    fn collider_composite_covariance() {
        let a = 1.5;
        let b = 0.8;
        let (system, scm) = collider(a, b);
        let (names, cov) = composite_covariance(&system, &scm).unwrap();
        assert_eq!(names, vec!["X", "Y", "Z"]);
        // Y = (Y2 + Y8)/2 with Y2 = aX + e2: cov(X, Y) = a/2 * var(X).
        assert_abs_diff_eq!(cov[(0, 1)], a / 2.0, epsilon = 1e-12);
        // Z = b Y8 + ez: cov(Y, Z) = b/2 * var(Y8).
        assert_abs_diff_eq!(cov[(1, 2)], b / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[(0, 2)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn collider_exact_ci_pattern() {
        let (system, scm) = collider(1.0, 1.0);
        let empty = BTreeSet::new();
        assert!(ci_test_exact(&system, &scm, "X", "Z", &empty)
            .unwrap()
            .independent);
        assert!(!ci_test_exact(&system, &scm, "X", "Y", &empty)
            .unwrap()
            .independent);
        let given_y: BTreeSet<String> = ["Y".to_string()].into_iter().collect();
        assert!(!ci_test_exact(&system, &scm, "X", "Z", &given_y)
            .unwrap()
            .independent);
    }

    #[test]
    fn exact_ci_scale_invariant() {
        for scale in [0.5, 2.0, -3.0] {
            let (system, scm) = collider(scale, scale * 0.7);
            let empty = BTreeSet::new();
            assert!(ci_test_exact(&system, &scm, "X", "Z", &empty)
                .unwrap()
                .independent);
            assert!(!ci_test_exact(&system, &scm, "X", "Y", &empty)
                .unwrap()
                .independent);
        }
    }

    #[test]
    fn cyclic_mean_composite_covariance_nonzero() {
        let mut dag = AtomicDag::new();
        for n in [node("X", 7), node("Y", 0), node("Y", 10)] {
            dag.add_node(n).unwrap();
        }
        dag.add_edge(node("Y", 0), node("X", 7)).unwrap();
        dag.add_edge(node("X", 7), node("Y", 10)).unwrap();
        dag.add_edge(node("Y", 0), node("Y", 10)).unwrap();
        let scm = LinearScm::new(
            &dag,
            [
                ((node("Y", 0), node("X", 7)), 1.0),
                ((node("X", 7), node("Y", 10)), 1.0),
                ((node("Y", 0), node("Y", 10)), 1.0),
            ]
            .into_iter()
            .collect(),
            [
                (node("X", 7), 1.0),
                (node("Y", 0), 1.0),
                (node("Y", 10), 1.0),
            ]
            .into_iter()
            .collect(),
        )
        .unwrap();
        let variables = vec![
            CompositeVariable::selection("X", pid("X"), times(&[7]), TimePoint(7)).unwrap(),
            CompositeVariable::aggregate("Y", pid("Y"), times(&[0, 10]), Aggregation::Mean)
                .unwrap(),
        ];
        let system = VariableSystem::build(dag, variables, None).unwrap();
        let (_, cov) = composite_covariance(&system, &scm).unwrap();
        assert!(cov[(0, 1)].abs() > 0.1);
    }

    #[test]
    fn mixing_not_exact() {
        let mut dag = AtomicDag::new();
        for n in [node("X", 0), node("X", 6)] {
            dag.add_node(n).unwrap();
        }
        let scm = LinearScm::new(
            &dag,
            BTreeMap::new(),
            [(node("X", 0), 1.0), (node("X", 6), 1.0)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let variables = vec![CompositeVariable::mixture(
            "X",
            pid("X"),
            times(&[0, 6]),
            vec![(TimePoint(0), 0.5), (TimePoint(6), 0.5)],
        )
        .unwrap()];
        let system = VariableSystem::build(dag, variables, None).unwrap();
        assert!(matches!(
            composite_covariance(&system, &scm),
            Err(ScmError::MixingNotExact(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let (system, scm) = collider(1.0, 1.0);
        let b1 = sample(&system, &scm, 42, 10);
        let b2 = sample(&system, &scm, 42, 10);
        assert_eq!(b1, b2);
        let b3 = sample(&system, &scm, 43, 10);
        assert_ne!(b1.values, b3.values);
    }

    #[test]
    fn near_degenerate_noise_gives_near_zero_values() {
        let mut dag = AtomicDag::new();
        dag.add_node(node("A", 0)).unwrap();
        let scm = LinearScm::new(
            &dag,
            BTreeMap::new(),
            [(node("A", 0), 1e-12)].into_iter().collect(),
        )
        .unwrap();
        let variables =
            vec![CompositeVariable::selection("A", pid("A"), times(&[0]), TimePoint(0)).unwrap()];
        let system = VariableSystem::build(dag, variables, None).unwrap();
        let batch = sample(&system, &scm, 1, 1);
        assert!(batch.values[0][0].abs() < 1e-5);
    }

    #[test]
    fn monte_carlo_matches_exact_covariance() {
        let (system, scm) = collider(1.0, 1.0);
        let batch = sample(&system, &scm, 7, 100_000);
        let samples = composite_samples(&system, &batch).unwrap();
        let empirical = samples.covariance();
        let (_, exact) = composite_covariance(&system, &scm).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(empirical[(i, j)], exact[(i, j)], epsilon = 0.03);
            }
        }
    }

    #[test]
    fn empirical_ci_collider() {
        let (system, scm) = collider(1.0, 1.0);
        let batch = sample(&system, &scm, 7, 100_000);
        let samples = composite_samples(&system, &batch).unwrap();
        let empty = BTreeSet::new();
        assert!(ci_test_empirical(&samples, "X", "Z", &empty, 0.01)
            .unwrap()
            .independent);
        assert!(!ci_test_empirical(&samples, "X", "Y", &empty, 0.01)
            .unwrap()
            .independent);
    }

    #[test]
    fn empirical_ci_duplicate_variables_dependent() {
        let samples = CompositeSamples {
            names: vec!["A".to_string(), "B".to_string()],
            rows: (0..100).map(|i| vec![i as f64, i as f64]).collect(),
        };
        let decision = ci_test_empirical(&samples, "A", "B", &BTreeSet::new(), 0.01).unwrap();
        assert!(!decision.independent);
    }

    #[test]
    fn empirical_ci_insufficient_samples() {
        let samples = CompositeSamples {
            names: vec!["A".to_string(), "B".to_string(), "C".to_string()],
            rows: (0..3).map(|i| vec![i as f64, 1.0, 2.0]).collect(),
        };
        let cond: BTreeSet<String> = ["C".to_string()].into_iter().collect();
        assert!(matches!(
            ci_test_empirical(&samples, "A", "B", &cond, 0.01),
            Err(ScmError::InsufficientSamples { .. })
        ));
    }
}
