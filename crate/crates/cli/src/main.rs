use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cloak::bounds::{fano_packing, lower_bound_emd, upper_bound_emd, BoundInputs, CONSTANT_CONVENTION};
use cloak::diffusion::{graph_diffusion_operator, heat_kernel_matrix, Graph, OperatorKind};
use cloak::harness::{
    emit_csv, emit_summary_csv, graph_demo, run_sweep, ExperimentConfig, GraphDemoConfig,
    InfeasiblePolicy,
};
use cloak::io::{read_operator, read_vector, write_operator, write_vector};
use cloak::privacy::{
    denoise_backdoor, gaussian_sigma, privatize, sensitivity_adjacent_columns, sensitivity_line,
    BackdoorKey, LineNeighbours, NoiseMultiplier, PrivacyParams,
};
use cloak::recovery::{bpd_solve, RecoveryError, RecoveryProblem, SolverTolerances};

#[derive(Parser)]
#[command(name = "cloak", version, about = "Private diffusion measurements and EMD-scored source recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Multiplier {
    Printed,
    Standard,
}

impl From<Multiplier> for NoiseMultiplier {
    fn from(m: Multiplier) -> Self {
        match m {
            Multiplier::Printed => NoiseMultiplier::Printed,
            Multiplier::Standard => NoiseMultiplier::Standard,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Neighbours {
    GridStep,
    EmdRadius,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Complete,
    Star,
    Path,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Relax,
    Degenerate,
}

#[derive(Subcommand)]
enum Command {
    /// Write a diffusion operator as CSV.
    Kernel {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Build `e^{-τL}` for a named graph on `n` nodes instead.
        #[arg(long, value_enum)]
        graph: Option<GraphKind>,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print Δ₂ and the maximizing column pair as JSON.
    Sensitivity {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "grid-step")]
        neighbours: Neighbours,
    },
    /// Add calibrated seeded noise to a measurement vector.
    Privatize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "printed")]
        multiplier: Multiplier,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Sensitivity; computed from `--operator` (adjacent columns) if absent.
        #[arg(long)]
        delta2: Option<f64>,
        #[arg(long)]
        operator: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar JSON; defaults to `<out>.json`.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Subtract seeded noise using a privatize sidecar.
    Unmask {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve box-constrained basis pursuit denoising.
    Recover {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 1e-6)]
        feas_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        opt_tol: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iterations: usize,
        #[arg(long)]
        out: PathBuf,
        /// Diagnostics JSON; defaults to `<out>.json`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Run a parameter sweep and write per-trial and summary CSVs.
    Sweep {
        /// Flat `key = value` config file.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        wall_time: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
    /// Plant a source in an SBM graph and check which community is recovered.
    GraphDemo {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        communities: usize,
        #[arg(long, default_value_t = 0.05)]
        p_in: f64,
        #[arg(long, default_value_t = 0.001)]
        p_out: f64,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        #[arg(long, default_value_t = 4.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "printed")]
        multiplier: Multiplier,
        #[arg(long, value_enum, default_value = "relax")]
        infeasible: Policy,
    },
    /// Evaluate the EMD error upper bound, or the lower bound with `--lower`.
    Bounds {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long = "T")]
        big_t: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sep: f64,
        #[arg(long)]
        lower: bool,
    },
    /// Build the four-point packing and print its pairwise EMDs.
    Packing {
        #[arg(long)]
        a: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn sidecar_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Kernel {
            n,
            m,
            mu,
            t,
            graph,
            tau,
            out,
        } => {
            let op = match graph {
                None => heat_kernel_matrix(n, m, mu, t)?,
                Some(kind) => {
                    let g = match kind {
                        GraphKind::Complete => Graph::complete(n),
                        GraphKind::Star => Graph::star(n),
                        GraphKind::Path => Graph::path(n),
                    };
                    graph_diffusion_operator(&g, tau)?
                }
            };
            write_operator(&out, &op)?;
        }
        Command::Sensitivity {
            n,
            m,
            mu,
            t,
            alpha,
            neighbours,
        } => {
            let op = heat_kernel_matrix(n, m, mu, t)?;
            let mode = match neighbours {
                Neighbours::GridStep => LineNeighbours::GridStep,
                Neighbours::EmdRadius => LineNeighbours::EmdRadius,
            };
            let r = sensitivity_line(&op, alpha, mode)?;
            print_json(&json!({
                "delta2": r.delta2,
                "argmax_pair": [r.argmax_pair.0, r.argmax_pair.1],
                "scale": r.scale,
                "n": n, "m": m, "mu": mu, "t": t, "T": mu * t, "alpha": alpha,
            }))?;
        }
        Command::Privatize {
            input,
            epsilon,
            delta,
            seed,
            multiplier,
            alpha,
            delta2,
            operator,
            out,
            sidecar,
        } => {
            let y = read_vector(&input)?;
            let delta2 = match (delta2, operator) {
                (Some(d), _) => d,
                (None, Some(path)) => {
                    let op = read_operator(&path)?;
                    if !matches!(op.kind(), OperatorKind::Interval { .. }) {
                        bail!("graph operators need an explicit --delta2");
                    }
                    sensitivity_adjacent_columns(op.matrix(), alpha, LineNeighbours::GridStep)?.delta2
                }
                (None, None) => bail!("give --delta2 or --operator"),
            };
            let params = PrivacyParams::new(epsilon, delta, alpha)?;
            let sigma = gaussian_sigma(&params, delta2, multiplier.into())?;
            let release = privatize(&y, sigma, seed)?;
            write_vector(&out, &release.values)?;
            let side = sidecar.unwrap_or_else(|| sidecar_for(&out));
            write_json(
                &side,
                &json!({
                    "sigma": sigma,
                    "seed": seed,
                    "len": release.key.len,
                    "epsilon": epsilon,
                    "delta": delta,
                    "alpha": alpha,
                    "delta2": delta2,
                    "multiplier": NoiseMultiplier::from(multiplier).name(),
                }),
            )?;
        }
        Command::Unmask { input, key, out } => {
            let text = fs::read_to_string(&key).with_context(|| format!("reading {}", key.display()))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let key = BackdoorKey {
                sigma: v["sigma"].as_f64().context("sidecar lacks sigma")?,
                seed: v["seed"].as_u64().context("sidecar lacks seed")?,
                len: v["len"].as_u64().context("sidecar lacks len")? as usize,
            };
            let y = denoise_backdoor(&read_vector(&input)?, &key)?;
            write_vector(&out, &y)?;
        }
        Command::Recover {
            operator,
            measurements,
            radius,
            feas_tol,
            opt_tol,
            max_iterations,
            out,
            diagnostics,
        } => {
            let op = read_operator(&operator)?;
            let y = read_vector(&measurements)?;
            let problem = RecoveryProblem::new(&op, &y, radius)?;
            let tol = SolverTolerances {
                feasibility_rel: feas_tol,
                optimality_rel: opt_tol,
                max_iterations,
            };
            let result = match bpd_solve(&problem, &tol) {
                Ok(r) => r,
                Err(RecoveryError::MaxIterations(best)) => *best,
                Err(e) => return Err(e.into()),
            };
            write_vector(&out, result.estimate.weights())?;
            write_json(
                &diagnostics.unwrap_or_else(|| sidecar_for(&out)),
                &json!({
                    "objective": result.objective,
                    "residual_norm": result.residual_norm,
                    "constraint_violation": result.constraint_violation,
                    "iterations": result.iterations,
                    "converged": result.converged,
                    "duality_gap": result.duality_gap,
                    "radius": radius,
                    "effective_radius": result.effective_radius,
                }),
            )?;
        }
        Command::Sweep {
            config,
            preset,
            trials,
            seed,
            wall_time,
            out,
            summary,
        } => {
            let mut c = match (config, preset) {
                (Some(path), _) => ExperimentConfig::parse(
                    &fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
                )?,
                (None, Some(name)) => ExperimentConfig::preset(&name)?,
                (None, None) => bail!("give --config or --preset"),
            };
            if let Some(t) = trials {
                c.trials = t;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            c.record_wall_time = wall_time;
            let table = run_sweep(&c)?;
            emit_csv(&table.records, &out)?;
            emit_summary_csv(&table.summary, &summary)?;
            eprintln!(
                "{} trials over {} values of {}; CI factor {}",
                table.records.len(),
                table.summary.len(),
                table.sweep_var,
                table.ci_factor
            );
        }
        Command::GraphDemo {
            n,
            communities,
            p_in,
            p_out,
            tau,
            epsilon,
            delta,
            seed,
            multiplier,
            infeasible,
        } => {
            let c = GraphDemoConfig {
                n,
                communities,
                p_in,
                p_out,
                tau,
                epsilon,
                delta,
                seed,
                multiplier: multiplier.into(),
                infeasible: match infeasible {
                    Policy::Relax => InfeasiblePolicy::Relax,
                    Policy::Degenerate => InfeasiblePolicy::Degenerate,
                },
                ..Default::default()
            };
            print_json(&serde_json::to_value(graph_demo(&c)?)?)?;
        }
        Command::Bounds {
            k,
            big_t,
            sigma,
            m,
            n,
            sep,
            lower,
        } => {
            if lower {
                print_json(&json!({
                    "value": lower_bound_emd(big_t, sigma, m)?,
                    "kind": "lower",
                    "convention": CONSTANT_CONVENTION,
                }))?;
            } else {
                let u = upper_bound_emd(&BoundInputs::new(k, big_t, sigma, m, n, sep)?);
                let mut v = serde_json::to_value(&u)?;
                v["kind"] = json!("upper");
                print_json(&v)?;
            }
        }
        Command::Packing { a, n } => {
            let p = fano_packing(a, n)?;
            let positions: Vec<f64> = p.indices.iter().map(|&i| (i + 1) as f64 / n as f64).collect();
            print_json(&json!({
                "a": p.a,
                "n": n,
                "indices": p.indices,
                "positions": positions,
                "snap_error": p.snap_error,
                "pairwise_emd": p.pairwise_emd,
                "members": p.members.iter().map(|m| m.weights()
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(i, w)| json!([i, w]))
                    .collect::<Vec<_>>()).collect::<Vec<_>>(),
            }))?;
        }
    }
    Ok(())
}
