//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use tempodag::acyclicity::classify_system;
use tempodag::atomic::{node, AtomicDag, AtomicNode, ProcessId, TimePoint};
use tempodag::composite::{Aggregation, CompositeVariable, VariableSystem};
use tempodag::discovery::{orient, pc_skeleton, EmpiricalOracle, ExactOracle};
use tempodag::scm::{ci_test_empirical, ci_test_exact, composite_covariance, composite_samples, sample};
use tempodag::SystemSpec;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name),
    )
    .expect("golden file")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempodag"))
        .args(args)
        .env("TEMPODAG_COLOR", "never")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf-8 stdout")
}

fn exit(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn classify_json(path: &Path) -> (serde_json::Value, i32) {
    let out = run(&["classify", path.to_str().unwrap(), "--json"]);
    (
        serde_json::from_str(&stdout(&out)).expect("classify JSON"),
        exit(&out),
    )
}

fn edge_set(report: &serde_json::Value) -> BTreeSet<(String, String)> {
    report["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["from"].as_str().unwrap().to_string(),
                e["to"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn pair0(report: &serde_json::Value) -> &serde_json::Value {
    &report["pairs"][0]
}

fn pass(line: &str) {
    println!("[PASS] {line}");
}

#[test]
fn criterion_1_selection_fixture_is_time_acyclic() {
    let out = run(&[
        "classify",
        fixture("selection.json").to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(exit(&out), 0);
    assert_eq!(stdout(&out), golden("selection_classify.json"));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let edges = edge_set(&report);
    assert!(edges.contains(&("X".into(), "Y".into())));
    assert!(!edges.contains(&("Y".into(), "X".into())));
    assert_eq!(pair0(&report)["time_acyclic"], serde_json::json!(true));
    pass("criterion 1: selection fixture is time-acyclic with edge X -> Y only, golden match");
}

#[test]
fn criterion_2_mixing_joint_controls_time_acyclicity() {
    let (product, _) = classify_json(&fixture("mixing.json"));
    assert_eq!(pair0(&product)["time_acyclic"], serde_json::json!(false));
    let (restricted, code) = classify_json(&fixture("mixing_restricted.json"));
    assert_eq!(pair0(&restricted)["time_acyclic"], serde_json::json!(true));
    assert_eq!(code, 0);
    pass("criterion 2: full mixing joint breaks time-acyclicity, restricted joint restores it");
}

#[test]
fn criterion_3_aggregation_effect_acyclicity_flips_with_reverse_edge() {
    let (report, code) = classify_json(&fixture("aggregation.json"));
    assert_eq!(code, 0);
    assert_eq!(pair0(&report)["effect_acyclic"], serde_json::json!(true));
    assert_eq!(
        edge_set(&report),
        [("X".to_string(), "Y".to_string())].into_iter().collect()
    );

    // Adding the reverse atomic edge Y@4 -> X@6 creates a derived 2-cycle.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aggregation_cyclic.json");
    let text = std::fs::read_to_string(fixture("aggregation.json"))
        .unwrap()
        .replace("[\"X@0\", \"X@6\"],", "[\"X@0\", \"X@6\"],\n    [\"Y@4\", \"X@6\"],");
    std::fs::write(&path, text).unwrap();
    let (cyclic, code) = classify_json(&path);
    assert_eq!(code, 3);
    let edges = edge_set(&cyclic);
    assert!(edges.contains(&("X".into(), "Y".into())));
    assert!(edges.contains(&("Y".into(), "X".into())));
    pass("criterion 3: aggregation fixture is effect-acyclic; reverse atomic edge yields a 2-cycle and exit 3");
}

#[test]
fn criterion_4_unrolling_reproduces_the_three_node_dag() {
    let (cyclic, code) = classify_json(&fixture("cyclic_mean.json"));
    assert_eq!(code, 3);
    assert_eq!(
        edge_set(&cyclic),
        [
            ("X".to_string(), "Y".to_string()),
            ("Y".to_string(), "X".to_string())
        ]
        .into_iter()
        .collect()
    );

    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("unrolled.json");
    let out = run(&[
        "unroll",
        fixture("cyclic_mean.json").to_str().unwrap(),
        "--auto",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(exit(&out), 0);
    let (unrolled, code) = classify_json(&out_path);
    assert_eq!(code, 0);
    assert_eq!(
        edge_set(&unrolled),
        [
            ("Y#1".to_string(), "X".to_string()),
            ("Y#1".to_string(), "Y#2".to_string()),
            ("X".to_string(), "Y#2".to_string())
        ]
        .into_iter()
        .collect()
    );
    pass("criterion 4: 2-cycle X <-> Y unrolls to exactly {Y#1 -> X, Y#1 -> Y#2, X -> Y#2}");
}

#[test]
fn criterion_5_faithfulness_violation_and_discovery_on_the_collider() {
    let spec = SystemSpec::load(&fixture("collider.json")).unwrap();
    let (system, scm) = spec.realize().unwrap();
    let scm = scm.expect("fixture declares an scm");
    let (names, cov) = composite_covariance(&system, &scm).unwrap();
    let x = names.iter().position(|n| n == "X").unwrap();
    let z = names.iter().position(|n| n == "Z").unwrap();
    assert!(cov[(x, z)].abs() <= 1e-12, "cov(X,Z) = {}", cov[(x, z)]);

    let audit = run(&[
        "faithfulness",
        fixture("collider.json").to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(exit(&audit), 5);
    let report: serde_json::Value = serde_json::from_str(&stdout(&audit)).unwrap();
    assert_eq!(
        report["violations"],
        serde_json::json!([{"a": "X", "b": "Z", "conditioning": []}])
    );

    let discover = run(&[
        "discover",
        fixture("collider.json").to_str().unwrap(),
        "--exact",
        "--json",
    ]);
    assert_eq!(exit(&discover), 0);
    assert_eq!(stdout(&discover), golden("collider_discover.json"));
    pass("criterion 5: cov(X,Z)=0, single violation (X,Z | {}), discovery golden match with Z -> Y flagged");
}

#[test]
fn criterion_6_oracle_and_monte_carlo_agree() {
    let spec = SystemSpec::load(&fixture("collider.json")).unwrap();
    let (system, scm) = spec.realize().unwrap();
    let scm = scm.unwrap();
    let names: Vec<String> = system.variables().iter().map(|v| v.name.clone()).collect();
    let exact_skeleton = pc_skeleton(
        &ExactOracle {
            system: &system,
            scm: &scm,
        },
        &names,
    )
    .unwrap();
    let exact_pdag = orient(&exact_skeleton).unwrap().pdag;

    let mut recovered = 0;
    for seed in 0..20u64 {
        let batch = sample(&system, &scm, seed, 100_000);
        let samples = composite_samples(&system, &batch).unwrap();
        // Partial correlations match the analytic values on every pair and
        // conditioning set.
        for i in 0..names.len() {
            for j in (i + 1)..names.len() {
                let rest: Vec<String> = names
                    .iter()
                    .filter(|n| **n != names[i] && **n != names[j])
                    .cloned()
                    .collect();
                for mask in 0..(1u32 << rest.len()) {
                    let conditioning: BTreeSet<String> = rest
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask & (1 << k) != 0)
                        .map(|(_, s)| s.clone())
                        .collect();
                    let exact =
                        ci_test_exact(&system, &scm, &names[i], &names[j], &conditioning)
                            .unwrap();
                    let empirical =
                        ci_test_empirical(&samples, &names[i], &names[j], &conditioning, 0.01)
                            .unwrap();
                    assert!(
                        (exact.partial_correlation - empirical.partial_correlation).abs() <= 0.02,
                        "seed {seed}: partial correlation off for {} / {} | {:?}",
                        names[i],
                        names[j],
                        conditioning
                    );
                }
            }
        }
        let skeleton = pc_skeleton(
            &EmpiricalOracle {
                samples: &samples,
                alpha: 0.01,
            },
            &names,
        )
        .unwrap();
        if let Ok(outcome) = orient(&skeleton) {
            if outcome.pdag == exact_pdag {
                recovered += 1;
            }
        }
    }
    assert!(recovered >= 18, "only {recovered}/20 seeds recovered the Pdag");
    pass(&format!(
        "criterion 6: empirical partial correlations within 0.02 on all 20 seeds; Pdag recovered {recovered}/20"
    ));
}

fn distinct_ticks(rng: &mut ChaCha12Rng, n: usize, range: u64) -> Vec<u64> {
    let mut pool: Vec<u64> = (0..range).collect();
    pool.shuffle(rng);
    pool.truncate(n);
    pool
}

fn random_singleton_system(rng: &mut ChaCha12Rng) -> VariableSystem {
    let n = rng.gen_range(2..=5);
    let assigned = distinct_ticks(rng, n, 40);
    let mut dag = AtomicDag::new();
    let mut nodes = Vec::new();
    for (i, t) in assigned.iter().enumerate() {
        let v = node(&format!("P{i}"), *t);
        dag.add_node(v.clone()).unwrap();
        nodes.push(v);
    }
    for u in &nodes {
        for v in &nodes {
            if u.time < v.time && rng.gen_bool(0.5) {
                dag.add_edge(u.clone(), v.clone()).unwrap();
            }
        }
    }
    let variables = nodes
        .iter()
        .map(|n| {
            CompositeVariable::selection(
                n.process.name(),
                n.process.clone(),
                [n.time].into_iter().collect(),
                n.time,
            )
            .unwrap()
        })
        .collect();
    VariableSystem::build(dag, variables, None).unwrap()
}

fn random_composite_system(rng: &mut ChaCha12Rng) -> VariableSystem {
    let n_proc = rng.gen_range(2..=3);
    let mut dag = AtomicDag::new();
    let mut per_process: Vec<(ProcessId, Vec<u64>)> = Vec::new();
    for i in 0..n_proc {
        let pid = ProcessId(format!("P{i}"));
        let k = rng.gen_range(2..=4);
        let mut times = distinct_ticks(rng, k, 20);
        times.sort_unstable();
        for t in &times {
            dag.add_node(AtomicNode::new(pid.clone(), TimePoint(*t)))
                .unwrap();
        }
        per_process.push((pid, times));
    }
    let nodes: Vec<AtomicNode> = dag.nodes().cloned().collect();
    for u in &nodes {
        for v in &nodes {
            if u.time < v.time && rng.gen_bool(0.4) {
                dag.add_edge(u.clone(), v.clone()).unwrap();
            }
        }
    }
    let mut variables = Vec::new();
    for (pid, times) in &per_process {
        let name = pid.name().to_string();
        let possible: BTreeSet<TimePoint> = times.iter().map(|t| TimePoint(*t)).collect();
        let var = match rng.gen_range(0..3) {
            0 => {
                let chosen = TimePoint(times[rng.gen_range(0..times.len())]);
                CompositeVariable::selection(name, pid.clone(), possible, chosen).unwrap()
            }
            1 => {
                let weights: Vec<u32> = times.iter().map(|_| rng.gen_range(1..=4)).collect();
                let total: u32 = weights.iter().sum();
                let singletons = times
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| (TimePoint(*t), *w as f64 / total as f64))
                    .collect();
                CompositeVariable::mixture(name, pid.clone(), possible, singletons).unwrap()
            }
            _ => CompositeVariable::aggregate(name, pid.clone(), possible, Aggregation::Mean)
                .unwrap(),
        };
        variables.push(var);
    }
    VariableSystem::build(dag, variables, None).unwrap()
}

#[test]
fn criterion_7_singleton_systems_never_cycle_and_backward_edges_never_build() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce_0007);
    for _ in 0..1000 {
        let system = random_singleton_system(&mut rng);
        let classification = classify_system(&system).unwrap();
        assert!(classification.graph_time_acyclic);
        assert!(classification.composite_is_dag);
        for pair in &classification.pairs {
            assert!(pair.time_acyclic);
        }
    }
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let assigned = distinct_ticks(&mut rng, n, 40);
        let mut dag = AtomicDag::new();
        let mut nodes = Vec::new();
        for (i, t) in assigned.iter().enumerate() {
            let v = node(&format!("P{i}"), *t);
            dag.add_node(v.clone()).unwrap();
            nodes.push(v);
        }
        let i = rng.gen_range(0..nodes.len());
        let mut j = rng.gen_range(0..nodes.len() - 1);
        if j >= i {
            j += 1;
        }
        let (late, early) = if nodes[i].time >= nodes[j].time {
            (nodes[i].clone(), nodes[j].clone())
        } else {
            (nodes[j].clone(), nodes[i].clone())
        };
        assert!(dag.add_edge(late, early).is_err());
    }
    pass("criterion 7: 1000 singleton systems cycle-free; 1000 backward-edge attempts rejected");
}

#[test]
fn criterion_8_implication_lattice_has_no_counterexamples() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce_0008);
    for case in 0..500 {
        let system = random_composite_system(&mut rng);
        let classification = classify_system(&system).unwrap();
        for pair in &classification.pairs {
            let ctx = format!("case {case}, pair {}/{}", pair.a, pair.b);
            assert!(!pair.time_acyclic || pair.acyclic, "lattice broken ({ctx})");
            assert!(
                !pair.effect_acyclic || (!pair.time_acyclic && pair.acyclic),
                "lattice broken ({ctx})"
            );
            assert!(
                !pair.total_effect_acyclic || pair.acyclic,
                "lattice broken ({ctx})"
            );
        }
    }
    pass("criterion 8: implication lattice holds on 500 randomized systems");
}

#[test]
fn criterion_9_outputs_are_deterministic_and_specs_round_trip() {
    for fixture_name in [
        "selection.json",
        "mixing.json",
        "mixing_restricted.json",
        "aggregation.json",
        "cyclic_mean.json",
        "collider.json",
    ] {
        let path = fixture(fixture_name);
        let a = run(&["classify", path.to_str().unwrap(), "--json"]);
        let b = run(&["classify", path.to_str().unwrap(), "--json"]);
        assert_eq!(a.stdout, b.stdout, "classify not byte-stable on {fixture_name}");

        let spec = SystemSpec::load(&path).unwrap();
        let reparsed = SystemSpec::parse(&spec.to_canonical_json()).unwrap();
        assert_eq!(spec, reparsed, "round trip not identity on {fixture_name}");
    }
    let path = fixture("collider.json");
    let a = run(&["simulate", path.to_str().unwrap(), "--samples", "1000", "--seed", "7"]);
    let b = run(&["simulate", path.to_str().unwrap(), "--samples", "1000", "--seed", "7"]);
    assert_eq!(exit(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    pass("criterion 9: classify/simulate byte-identical across runs; spec round trip is identity");
}
