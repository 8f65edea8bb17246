//! Command-line front end for the tempodag library.
//!
//! Exit codes are a total function of the outcome: 0 ok, 2 invalid input,
//! 3 cyclic, 4 nothing to do, 5 violations found.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tempodag::acyclicity::{classify_system, derive_composite_graph};
use tempodag::discovery::{
    audit_faithfulness, orient, pc_skeleton, temporal_consistency_report, DiscoveryError,
    EmpiricalOracle, ExactOracle,
};
use tempodag::report::{
    to_sorted_json, ClassifyReport, DiscoverReport, FaithfulnessReport, UnrollReport, UnrollStep,
};
use tempodag::scm::{composite_samples, sample, LinearScm, ScmError};
use tempodag::unroll::{
    partition_at, suggest_unrolling, unroll_variable, UnrollError, UnrollProposal,
};
use tempodag::{SpecError, SystemSpec, TimePoint, VariableSystem};

const EXIT_INVALID: u8 = 2;
const EXIT_CYCLIC: u8 = 3;
const EXIT_NOTHING_TO_DO: u8 = 4;
const EXIT_VIOLATIONS: u8 = 5;

#[derive(Parser)]
#[command(
    name = "tempodag",
    version,
    about = "Classify, unroll, audit, and simulate time-indexed causal variable systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a spec file and report diagnostics.
    Validate { spec: PathBuf },
    /// Derive the composite graph and classify acyclicity.
    Classify {
        spec: PathBuf,
        /// Emit a machine-readable report instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Split a variable (or search automatically) to break derived cycles.
    Unroll {
        spec: PathBuf,
        /// Variable to split (with --at).
        #[arg(long, requires = "at", conflicts_with = "auto")]
        var: Option<String>,
        /// Threshold tick: times strictly before go to the first part.
        #[arg(long, requires = "var")]
        at: Option<u64>,
        /// Search for a minimal unrolling that makes the graph acyclic.
        #[arg(long)]
        auto: bool,
        /// Where to write the transformed spec (default: <spec>.unrolled.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Audit faithfulness of the derived graph against the exact oracle.
    Faithfulness {
        spec: PathBuf,
        #[arg(long)]
        json: bool,
        /// Cap on conditioning-set size (required above 8 variables).
        #[arg(long)]
        max_conditioning: Option<usize>,
    },
    /// Run PC skeleton + orientation and check temporal consistency.
    Discover {
        spec: PathBuf,
        /// Use the analytic independence oracle.
        #[arg(long, conflicts_with = "samples")]
        exact: bool,
        /// Use empirical tests on this many seeded samples.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Significance level for the empirical tests.
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long)]
        json: bool,
    },
    /// Draw composite-variable samples and write them as CSV.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn color_enabled() -> bool {
    match std::env::var("TEMPODAG_COLOR").as_deref() {
        Ok("always") => true,
        Ok("never") => false,
        _ => std::io::stdout().is_terminal(),
    }
}

fn fail(code: &str, message: impl std::fmt::Display, exit: u8) -> ExitCode {
    eprintln!("error[{code}]: {message}");
    ExitCode::from(exit)
}

fn load(path: &Path) -> Result<(VariableSystem, Option<LinearScm>), ExitCode> {
    let realized = SystemSpec::load(path).and_then(|spec| spec.realize());
    realized.map_err(|e| fail(e.code(), &e, EXIT_INVALID))
}

fn require_scm(scm: Option<LinearScm>) -> Result<LinearScm, ExitCode> {
    scm.ok_or_else(|| fail(SpecError::MissingScm.code(), SpecError::MissingScm, EXIT_INVALID))
}

fn scm_exit(e: &ScmError) -> u8 {
    // Every SCM-level failure is an input problem for the CLI.
    let _ = e;
    EXIT_INVALID
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let color = color_enabled();
    match cli.command {
        Command::Validate { spec } => match SystemSpec::load(&spec).and_then(|s| s.realize()) {
            Ok(_) => {
                println!("OK");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.code(), &e, EXIT_INVALID),
        },
        Command::Classify { spec, json } => {
            let (system, _) = match load(&spec) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let graph = derive_composite_graph(&system);
            let classification = match classify_system(&system) {
                Ok(c) => c,
                Err(e) => return fail("Classification", e, EXIT_INVALID),
            };
            let report = ClassifyReport::new(&graph, &classification);
            if json {
                print!("{}", to_sorted_json(&report));
            } else {
                print!("{}", report.render_text(color));
            }
            if report.graph.composite_is_dag {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CYCLIC)
            }
        }
        Command::Unroll {
            spec,
            var,
            at,
            auto,
            out,
            json,
        } => {
            let (system, scm) = match load(&spec) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let before = derive_composite_graph(&system);
            let proposals: Vec<UnrollProposal> = if auto {
                match suggest_unrolling(&system) {
                    Ok(p) => p,
                    Err(UnrollError::AlreadyAcyclic) => {
                        return fail(
                            "AlreadyAcyclic",
                            "derived graph is already acyclic; nothing to unroll",
                            EXIT_NOTHING_TO_DO,
                        )
                    }
                    Err(e @ UnrollError::UnresolvableWithMixing) => {
                        return fail("UnresolvableWithMixing", e, EXIT_CYCLIC)
                    }
                    Err(e) => return fail("Unroll", e, EXIT_INVALID),
                }
            } else {
                let (var, at) = match (var, at) {
                    (Some(var), Some(at)) => (var, at),
                    _ => {
                        return fail(
                            "MissingArgument",
                            "either --auto or both --var and --at are required",
                            EXIT_INVALID,
                        )
                    }
                };
                let full = match system
                    .variable(&var)
                    .map_err(|e| fail("UnknownVariable", e, EXIT_INVALID))
                {
                    Ok(v) => match v.deterministic_subset() {
                        Some(s) => s.clone(),
                        None => {
                            return fail(
                                "NonDeterministicSupport",
                                format!("variable {var:?} has a random time support"),
                                EXIT_INVALID,
                            )
                        }
                    },
                    Err(code) => return code,
                };
                match partition_at(&full, TimePoint(at)) {
                    Ok(partition) => vec![UnrollProposal {
                        variable: var,
                        partition,
                    }],
                    Err(e) => return fail("BadPartition", e, EXIT_INVALID),
                }
            };
            let mut current = system;
            let mut steps: Vec<UnrollStep> = Vec::new();
            for proposal in &proposals {
                current = match unroll_variable(&current, &proposal.variable, &proposal.partition)
                {
                    Ok(next) => next,
                    Err(e) => return fail("Unroll", e, EXIT_INVALID),
                };
                steps.push(UnrollReport::step(proposal));
            }
            let after = derive_composite_graph(&current);
            let report = UnrollReport {
                steps,
                edges_before: before
                    .edge_pairs()
                    .map(|(a, b)| [a.to_string(), b.to_string()])
                    .collect(),
                edges_after: after
                    .edge_pairs()
                    .map(|(a, b)| [a.to_string(), b.to_string()])
                    .collect(),
                acyclic_after: after.is_dag(),
            };
            let out = out.unwrap_or_else(|| {
                let mut name = spec.file_stem().unwrap_or_default().to_os_string();
                name.push(".unrolled.json");
                spec.with_file_name(name)
            });
            let text = SystemSpec::from_system(&current, scm.as_ref()).to_canonical_json();
            if let Err(e) = std::fs::write(&out, text) {
                return fail("IoError", e, EXIT_INVALID);
            }
            if json {
                print!("{}", to_sorted_json(&report));
            } else {
                print!("{}", report.render_text(color));
                println!("wrote {}", out.display());
            }
            ExitCode::SUCCESS
        }
        Command::Faithfulness {
            spec,
            json,
            max_conditioning,
        } => {
            let (system, scm) = match load(&spec) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let scm = match require_scm(scm) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let violations = match audit_faithfulness(&system, &scm, max_conditioning) {
                Ok(v) => v,
                Err(DiscoveryError::NotADag) => {
                    return fail(
                        "NotADag",
                        "derived composite graph is cyclic; unroll first",
                        EXIT_CYCLIC,
                    )
                }
                Err(DiscoveryError::Scm(e)) => return fail("Scm", e, EXIT_INVALID),
                Err(e) => return fail("Faithfulness", e, EXIT_INVALID),
            };
            let report = FaithfulnessReport::new(violations);
            if json {
                print!("{}", to_sorted_json(&report));
            } else {
                print!("{}", report.render_text(color));
            }
            if report.faithful {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATIONS)
            }
        }
        Command::Discover {
            spec,
            exact,
            samples,
            seed,
            alpha,
            json,
        } => {
            let (system, scm) = match load(&spec) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let scm = match require_scm(scm) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let mut names: Vec<String> =
                system.variables().iter().map(|v| v.name.clone()).collect();
            names.sort();
            let skeleton = if exact {
                let oracle = ExactOracle {
                    system: &system,
                    scm: &scm,
                };
                pc_skeleton(&oracle, &names)
            } else {
                let count = match samples {
                    Some(n) if n > 0 => n,
                    _ => {
                        return fail(
                            "MissingArgument",
                            "either --exact or --samples N (N > 0) is required",
                            EXIT_INVALID,
                        )
                    }
                };
                let batch = sample(&system, &scm, seed, count);
                let samples = match composite_samples(&system, &batch) {
                    Ok(s) => s,
                    Err(e) => return fail("Scm", &e, scm_exit(&e)),
                };
                let oracle = EmpiricalOracle {
                    samples: &samples,
                    alpha,
                };
                pc_skeleton(&oracle, &names)
            };
            let skeleton = match skeleton {
                Ok(s) => s,
                Err(e) => return fail("Scm", &e, scm_exit(&e)),
            };
            let outcome = match orient(&skeleton) {
                Ok(o) => o,
                Err(e) => return fail("Orientation", e, EXIT_INVALID),
            };
            let temporal = match temporal_consistency_report(&outcome.pdag, &system) {
                Ok(t) => t,
                Err(e) => return fail("Temporal", e, EXIT_INVALID),
            };
            let report = DiscoverReport::new(&skeleton, &outcome, temporal);
            if json {
                print!("{}", to_sorted_json(&report));
            } else {
                print!("{}", report.render_text(color));
            }
            ExitCode::SUCCESS
        }
        Command::Simulate {
            spec,
            samples,
            seed,
            out,
        } => {
            if samples == 0 {
                return fail("BadArgument", "--samples must be positive", EXIT_INVALID);
            }
            let (system, scm) = match load(&spec) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let scm = match require_scm(scm) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let batch = sample(&system, &scm, seed, samples);
            let composites = match composite_samples(&system, &batch) {
                Ok(s) => s,
                Err(e) => return fail("Scm", &e, scm_exit(&e)),
            };
            let result = match out {
                Some(path) => std::fs::File::create(&path)
                    .and_then(|f| composites.write_csv(std::io::BufWriter::new(f))),
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    composites.write_csv(&mut lock).and_then(|_| lock.flush())
                }
            };
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail("IoError", e, EXIT_INVALID),
            }
        }
    }
}
