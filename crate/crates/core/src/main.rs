use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use massflow::acceptance::{run_criterion, write_report, AcceptanceOptions, CRITERIA};
use massflow::config::ExperimentConfig;
use massflow::constants::select_lambda_bar;
use massflow::eigen::dirichlet_eigenpairs;
use massflow::flow::{newton_polish, run_flow, FlowConfig};
use massflow::minmax::{
    default_delta, estimate_genus_level, estimate_saddle_level_with, prepare_saddle,
    tau_continuation, ClimbOptions, GenusOptions, MinmaxLevel, SaddleOptions,
};
use massflow::morse::{annotate, multiplier_energy_bridge, BridgeOptions};
use massflow::operator::{multiplier_of, ConstrainedOperator, OperatorConfig};
use massflow::record::{fmt17, read_records, SolutionKind, SolutionRecord};
use massflow::sampling::RandomFields;
use massflow::shooting::{
    default_lambda_end, default_lambda_grid, find_two_positive, mass_curve, shoot,
};
use massflow::{Domain, DomainSpec, Field, MassflowError};

#[derive(Parser)]
#[command(
    name = "massflow",
    version,
    about = "Normalized solutions of nonlinear Schrodinger equations on bounded domains"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Options shared by every subcommand; each overrides the config file.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (the MASSFLOW_OUT environment variable takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment id stored with every record.
    #[arg(long, global = true)]
    id: Option<String>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Interval domain (a, b) with n interior nodes.
    #[arg(long, global = true, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Grid nodes.
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Args)]
struct Radial {
    /// Space dimension of the ball.
    #[arg(long = "N", default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Shoot the positive radial solution at one multiplier.
    Shoot {
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[command(flatten)]
        radial: Radial,
    },
    /// Mass curve of positive radial solutions.
    Curve {
        #[command(flatten)]
        radial: Radial,
    },
    /// The two positive solutions of a given mass.
    Two {
        #[arg(long)]
        mu: f64,
        #[command(flatten)]
        radial: Radial,
    },
    /// Descending flow from a Dirichlet mode or a random field.
    Flow {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Start from the k-th Dirichlet mode.
        #[arg(long, default_value_t = 2)]
        mode: usize,
        /// Start from a random field instead.
        #[arg(long)]
        random: bool,
    },
    /// Genus min-max search for every (mu, k) of the config.
    Genus {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Saddle search; a tau grid with several values runs continuation.
    Saddle {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated tau values.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
        /// Also write the energy profile along the initial path.
        #[arg(long)]
        profile: bool,
    },
    /// Genus sweep over the config's masses and k values, with plot data.
    Sweep,
    /// Multiplier/energy classification of a record family.
    Morse {
        /// JSON-lines records, in family order.
        #[arg(long)]
        records: PathBuf,
    },
    /// Run the acceptance suite.
    Accept {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
        /// Scale the Gagliardo-Nirenberg constant of the sharpness check.
        #[arg(long, default_value_t = 1.0)]
        gn_scale: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration errors, 3 for violated hypotheses, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<MassflowError>()) {
        Some(MassflowError::Config(_)) => 2,
        Some(MassflowError::Hypothesis(_)) => 3,
        _ => 1,
    }
}

fn config_error(msg: String) -> anyhow::Error {
    MassflowError::Config(msg).into()
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &c.id {
        cfg.id.clone_from(v);
    }
    if let Some(v) = c.p {
        cfg.p = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.workers {
        cfg.workers = v;
    }
    if let Some(v) = &c.out {
        cfg.output_dir.clone_from(v);
    }
    if c.a.is_some() || c.b.is_some() || c.n.is_some() {
        cfg.domain = match cfg.domain {
            DomainSpec::Interval { a, b, n } => DomainSpec::Interval {
                a: c.a.unwrap_or(a),
                b: c.b.unwrap_or(b),
                n: c.n.unwrap_or(n),
            },
            DomainSpec::Ball { dim, radius, n } => {
                if c.a.is_some() || c.b.is_some() {
                    return Err(config_error("--a/--b need an interval domain".into()));
                }
                DomainSpec::Ball {
                    dim,
                    radius,
                    n: c.n.unwrap_or(n),
                }
            }
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Files produced by a command, written only after all work succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            dir: cfg.resolved_output_dir(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    /// Write each file through a temporary name and rename it into place.
    fn commit(self) -> Result<()> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))?;
        for (name, contents) in &self.files {
            let target = self.dir.join(name);
            let tmp = self.dir.join(format!(".{name}.tmp"));
            std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
            std::fs::rename(&tmp, &target)?;
            eprintln!("wrote {}", target.display());
        }
        Ok(())
    }
}

fn jsonl(recs: &[SolutionRecord]) -> Result<String> {
    let mut s = String::new();
    for r in recs {
        s.push_str(&r.to_json_line()?);
        s.push('\n');
    }
    Ok(s)
}

fn levels_jsonl(levels: &[MinmaxLevel]) -> Result<String> {
    let mut s = String::new();
    for l in levels {
        s.push_str(&serde_json::to_string(l)?);
        s.push('\n');
    }
    Ok(s)
}

/// Attach the config hash and, when the profile is known, the Morse indices.
fn stamp(mut rec: SolutionRecord, cfg: &ExperimentConfig) -> Result<SolutionRecord> {
    if rec.u.is_some() && rec.morse.is_none() {
        annotate(&mut rec)?;
    }
    rec.config_sha256 = Some(cfg.sha256()?);
    Ok(rec)
}

fn radial_domain(cfg: &ExperimentConfig, r: &Radial, n_flag: Option<usize>) -> Result<Arc<Domain>> {
    let n = match (&cfg.domain, n_flag) {
        (_, Some(n)) => n,
        (DomainSpec::Ball { n, .. }, None) => *n,
        _ => 4096,
    };
    Ok(Domain::ball(r.dim, r.radius, n)?)
}

fn interval_domain(cfg: &ExperimentConfig) -> Result<Arc<Domain>> {
    match cfg.domain {
        DomainSpec::Interval { .. } => Ok(cfg.domain.build()?),
        DomainSpec::Ball { .. } => {
            Err(config_error("this command needs an interval domain".into()))
        }
    }
}

fn first_mu(cfg: &ExperimentConfig, flag: Option<f64>) -> f64 {
    flag.unwrap_or(cfg.mu_list[0])
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = load_config(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    pool.install(|| dispatch(&cli, &cfg))
}

fn dispatch(cli: &Cli, cfg: &ExperimentConfig) -> Result<u8> {
    let mut out = Outputs::new(cfg);
    let p = cfg.p;
    let code = match &cli.cmd {
        Cmd::Shoot { lambda, radial } => {
            let d = radial_domain(cfg, radial, cli.common.n)?;
            let s = shoot(&d, *lambda, radial.tau, p)?;
            let u = s.u.as_ref().context("shot produced no profile")?;
            let mut csv = String::from("r,u\n");
            for (r, v) in d.nodes().iter().zip(&u.values) {
                csv.push_str(&format!("{},{}\n", fmt17(*r), fmt17(*v)));
            }
            out.add("shoot.csv", csv);
            let rec = stamp(
                s.to_record(&cfg.id, SolutionKind::PositiveLow, s.mass, &d),
                cfg,
            )?;
            println!("{}", rec.to_json_line()?);
            out.add("shoot.jsonl", jsonl(&[rec])?);
            0
        }
        Cmd::Curve { radial } => {
            let d = radial_domain(cfg, radial, cli.common.n)?;
            let l1 = dirichlet_eigenpairs(&d, 1)?.0[0];
            let end = default_lambda_end(&d, radial.tau, p)?;
            let curve = mass_curve(
                &d,
                radial.tau,
                p,
                &default_lambda_grid(l1, end, cfg.curve_points),
            )?;
            println!(
                "max mass {} over {} samples",
                fmt17(curve.max_mass()),
                curve.samples.len()
            );
            out.add("curve.csv", curve.to_csv());
            0
        }
        Cmd::Two { mu, radial } => {
            let d = radial_domain(cfg, radial, cli.common.n)?;
            let l1 = dirichlet_eigenpairs(&d, 1)?.0[0];
            let end = default_lambda_end(&d, radial.tau, p)?;
            let curve = mass_curve(
                &d,
                radial.tau,
                p,
                &default_lambda_grid(l1, end, cfg.curve_points),
            )?;
            let two = find_two_positive(&d, &curve, *mu)?;
            let recs = vec![
                stamp(
                    two.u_low.to_record(
                        &format!("{}-low", cfg.id),
                        SolutionKind::PositiveLow,
                        *mu,
                        &d,
                    ),
                    cfg,
                )?,
                stamp(
                    two.u_high.to_record(
                        &format!("{}-high", cfg.id),
                        SolutionKind::PositiveHigh,
                        *mu,
                        &d,
                    ),
                    cfg,
                )?,
            ];
            for r in &recs {
                println!("{}", r.to_json_line()?);
            }
            out.add("two.jsonl", jsonl(&recs)?);
            0
        }
        Cmd::Flow {
            mu,
            tau,
            mode,
            random,
        } => {
            let d = interval_domain(cfg)?;
            let mu = first_mu(cfg, *mu);
            let (eigs, modes) = dirichlet_eigenpairs(&d, (*mode).max(1))?;
            let rho = 4.0 * eigs[eigs.len() - 1] * mu;
            let lambda_bar = select_lambda_bar(rho, mu, p, &d)?;
            let op = ConstrainedOperator::new(
                d.clone(),
                OperatorConfig {
                    tau: *tau,
                    lambda_bar,
                    rho,
                    mu,
                    p,
                },
            )?;
            let delta = match cfg.delta.fixed() {
                Some(v) => v,
                None => default_delta(&op, eigs[0], cfg.seed)?,
            };
            let u0 = if *random {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                Field {
                    domain: d.clone(),
                    values: RandomFields::new(&d, 16)?.sample(&mut rng, mu),
                }
            } else {
                modes[*mode - 1].normalized(mu)?
            };
            let mut fc = FlowConfig::defaults(eigs[0], mu, delta, rho);
            fc.max_steps = cfg.flow.max_steps;
            fc.tol_pg = cfg.flow.tol_pg_rel * (eigs[0] * mu).sqrt();
            let o = run_flow(&op, &u0, &fc)?;
            out.add("flow.csv", o.trace.to_csv());
            let nr = newton_polish(
                &o.best,
                Some(multiplier_of(&d, &o.best.values, *tau, p)),
                mu,
                *tau,
                p,
            )?;
            let mut rec = SolutionRecord::from_solution(
                &cfg.id,
                SolutionKind::Flow,
                &nr.u,
                nr.lambda,
                mu,
                *tau,
                p,
                nr.residual,
            );
            rec.k = (!*random).then_some(*mode);
            let rec = stamp(rec, cfg)?;
            println!(
                "flow {:?} after {} steps; polished: converged {}",
                o.status, o.steps, nr.converged
            );
            println!("{}", rec.to_json_line()?);
            out.add("flow.jsonl", jsonl(&[rec])?);
            0
        }
        Cmd::Genus { mu, k, tau } => {
            let d = interval_domain(cfg)?;
            let masses = mu.map_or_else(|| cfg.mu_list.clone(), |m| vec![m]);
            let ks = k.map_or_else(|| cfg.k_list.clone(), |k| vec![k]);
            let tau = tau.unwrap_or(*cfg.tau_grid.last().unwrap());
            let (recs, levels) = genus_jobs(cfg, &d, &masses, &ks, tau)?;
            for r in &recs {
                println!("{}", r.to_json_line()?);
            }
            out.add("genus.jsonl", jsonl(&recs)?);
            out.add("levels.jsonl", levels_jsonl(&levels)?);
            0
        }
        Cmd::Saddle {
            mu,
            k,
            tau,
            profile,
        } => {
            let d = interval_domain(cfg)?;
            let mu = first_mu(cfg, *mu);
            let k = k.unwrap_or(cfg.k_list[0]);
            let grid = tau.clone().unwrap_or_else(|| cfg.tau_grid.clone());
            let opts = SaddleOptions {
                delta: cfg.delta.fixed(),
                seed: cfg.seed,
                id: cfg.id.clone(),
                climb: ClimbOptions {
                    max_iterations: cfg.flow.climb_iterations,
                    ..ClimbOptions::default()
                },
                ..SaddleOptions::default()
            };
            let runs = if grid.len() == 1 {
                let setup = prepare_saddle(&d, k, mu, p, &opts)?;
                if *profile {
                    out.add("saddle_profile.csv", setup.path.profile_csv(grid[0], 33));
                }
                vec![estimate_saddle_level_with(&setup, grid[0], &opts)?]
            } else {
                let c = tau_continuation(&d, k, mu, p, &grid, &opts)?;
                println!(
                    "levels nonincreasing in tau: {}; smallest multiplier {}",
                    c.monotone,
                    fmt17(c.min_lambda)
                );
                c.runs
            };
            let mut recs = Vec::new();
            for r in &runs {
                for n in &r.notes {
                    eprintln!("note (tau = {}): {n}", r.level.tau);
                }
                if let Some(rec) = &r.record {
                    let rec = stamp(rec.clone(), cfg)?;
                    println!("{}", rec.to_json_line()?);
                    recs.push(rec);
                }
            }
            let levels: Vec<MinmaxLevel> = runs.iter().map(|r| r.level.clone()).collect();
            out.add("saddle.jsonl", jsonl(&recs)?);
            out.add("levels.jsonl", levels_jsonl(&levels)?);
            0
        }
        Cmd::Sweep => {
            let d = interval_domain(cfg)?;
            let tau = *cfg.tau_grid.last().unwrap();
            let (recs, levels) = genus_jobs(cfg, &d, &cfg.mu_list, &cfg.k_list, tau)?;
            let (eigs, _) = dirichlet_eigenpairs(&d, *cfg.k_list.iter().max().unwrap())?;
            let mut csv = String::from(
                "k,mu,lambda,energy,energy_over_mu,lambda_rel_gap,level,morse,sign_changes\n",
            );
            for (r, l) in recs.iter().zip(&levels) {
                let k = r.k.unwrap_or(0);
                let lk = eigs[k - 1];
                csv.push_str(&format!(
                    "{k},{},{},{},{},{},{},{},{}\n",
                    fmt17(r.mu),
                    fmt17(r.lambda),
                    fmt17(r.energy),
                    fmt17(r.energy / r.mu),
                    fmt17((r.lambda + lk).abs() / lk),
                    fmt17(l.value),
                    r.morse.map_or(String::new(), |m| m.to_string()),
                    r.sign_changes
                ));
            }
            print!("{csv}");
            out.add("sweep.jsonl", jsonl(&recs)?);
            out.add("levels.jsonl", levels_jsonl(&levels)?);
            out.add("sweep.csv", csv);
            0
        }
        Cmd::Morse { records } => {
            let recs =
                read_records(records).with_context(|| format!("reading {}", records.display()))?;
            let lambda_scale = recs.first().map_or(1.0, |r| {
                r.domain
                    .build()
                    .map_or(1.0, |d| massflow::eigen::dirichlet_eigenvalue(&d, 1))
            });
            let report = multiplier_energy_bridge(
                &recs,
                BridgeOptions {
                    lambda_scale,
                    ..BridgeOptions::default()
                },
            )?;
            let bad = recs
                .iter()
                .filter(|r| match (r.morse, r.constrained_morse) {
                    (Some(m), Some(c)) => !(c <= m && m <= c + 1),
                    _ => false,
                })
                .count();
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            println!("records violating constrained <= morse <= constrained + 1: {bad}");
            out.add("morse.json", text + "\n");
            u8::from(bad > 0)
        }
        Cmd::Accept { only, gn_scale } => {
            let ids = only.clone().unwrap_or_else(|| (1..=CRITERIA).collect());
            if let Some(bad) = ids.iter().find(|i| **i == 0 || **i > CRITERIA) {
                return Err(config_error(format!("no criterion {bad}")));
            }
            let dir = out.dir.join("acceptance");
            let opts = AcceptanceOptions {
                dir: dir.clone(),
                seed: cfg.seed,
                gn_scale: *gn_scale,
            };
            let mut reports = Vec::new();
            for id in ids {
                let r = run_criterion(id, &opts);
                println!("{}", r.line());
                reports.push(r);
            }
            write_report(&dir, &reports)?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!(
                "{} of {} criteria passed",
                reports.len() - failed,
                reports.len()
            );
            u8::from(failed > 0)
        }
    };
    out.commit()?;
    Ok(code)
}

/// Independent genus runs over `masses x ks`, on the configured worker pool.
fn genus_jobs(
    cfg: &ExperimentConfig,
    d: &Arc<Domain>,
    masses: &[f64],
    ks: &[usize],
    tau: f64,
) -> Result<(Vec<SolutionRecord>, Vec<MinmaxLevel>)> {
    let jobs: Vec<(usize, f64)> = ks
        .iter()
        .flat_map(|k| masses.iter().map(move |m| (*k, *m)))
        .collect();
    let opts = GenusOptions {
        delta: cfg.delta.fixed(),
        max_steps: cfg.flow.max_steps,
        candidates: cfg.flow.candidates,
        seed: cfg.seed,
        id: cfg.id.clone(),
    };
    let runs = jobs
        .par_iter()
        .map(|(k, mu)| estimate_genus_level(d, *k, *mu, tau, cfg.p, &opts))
        .collect::<massflow::Result<Vec<_>>>()?;
    let mut recs = Vec::new();
    let mut levels = Vec::new();
    for r in runs {
        recs.push(stamp(r.record, cfg)?);
        levels.push(r.level);
    }
    Ok((recs, levels))
}
