//! Command-line surface. Every command writes its reports under
//! `--out-dir` together with a `manifest.json`, and prints the main report
//! to stdout.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_model, gain_from_fits, FitConfig, ModelFit, ModelKind};
use crate::formats::{read_game, read_table, LoadedTable, TableFormat};
use crate::manifest::OutputSink;
use crate::montecarlo::{
    bootstrap_csv, bootstrap_stability, calibration_csv, calibration_study, phase_csv,
    phase_diagram, poisson_sigma_s, BootstrapSummary, PhaseConfig, PhaseRow, RegimeSummary,
    RngConfig, SyntheticRegime,
};
use crate::selection::{
    crossover_n, mdl_crossover_sim, predicted_crossover, ComparisonReport, CrossoverQuery,
};
use crate::tables::{
    chsh_score, correlators, empirical_table, signed_chsh, win_rate, win_rate_weighted, Design,
};
use crate::witness::{
    chsh_certificate, game_certificate, hoeffding_certificate, BinaryGame, WitnessCertificate,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const SIGN_CONVENTION: &str = "S = |-E00 + E01 + E10 + E11|; the win indicator uses g(0,0) = -1, \
     g = +1 otherwise, after relabeling Alice's outputs if the signed combination is negative";

#[derive(Debug, Parser)]
#[command(
    name = "chsh-mdl",
    version,
    about = "KL witness certificates and model comparison for CHSH count tables"
)]
pub struct Cli {
    /// Directory for reports, CSVs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// raw_phase or counts; required only when the file has no "format" tag.
    #[arg(long)]
    pub format: Option<TableFormat>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CHSH score, win rate and witness certificate for a count table.
    Witness {
        #[command(flatten)]
        input: InputArgs,
        /// Setting weights p00,p01,p10,p11.
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_effective: Option<u64>,
    },
    /// Witness-only certificates from reported CHSH values.
    Benchmark {
        #[arg(long = "s-value", required = true)]
        s_values: Vec<f64>,
        #[arg(long)]
        design: Option<String>,
    },
    /// Fit model classes to a count table.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated subset of q2,q4,local,nosig,saturated.
        #[arg(long, default_value = "q2,q4,local,nosig,saturated")]
        models: String,
    },
    /// Fit and rank model classes by BIC and AIC.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "q2,q4,local,nosig,saturated")]
        models: String,
    },
    /// Setting-preserving bootstrap of the Q2 / Q4 / LOCAL BIC ranking.
    Bootstrap {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
    },
    /// Poisson Monte-Carlo spread of S from a raw phase matrix.
    Sigma {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
    },
    /// Witness bound against full-table gain on synthetic tables.
    Calibrate {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        replicates: usize,
        #[arg(long)]
        concentration: Option<f64>,
        #[arg(long)]
        trials_per_setting: Option<u64>,
    },
    /// Local-versus-saturated BIC phase diagram over (S, n).
    Phase {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        replicates: Option<usize>,
        /// Comma-separated CHSH values.
        #[arg(long)]
        s_grid: Option<String>,
        /// Comma-separated total trial counts.
        #[arg(long)]
        n_grid: Option<String>,
        #[arg(long)]
        concentration: Option<f64>,
    },
    /// Sample size at which a witness rate pays for extra dimensions.
    Crossover {
        #[arg(long = "s-value", alias = "s")]
        s_value: Option<f64>,
        /// Witness rate in bits/trial, instead of --s-value.
        #[arg(long)]
        delta_bits: Option<f64>,
        #[arg(long, default_value_t = 4.0)]
        delta_d: f64,
        #[arg(long, default_value_t = 1u64 << 40)]
        n_max: u64,
        #[arg(long)]
        design: Option<String>,
        /// Also write n_crit curves for delta_d in {4, 8, 12}.
        #[arg(long)]
        sweep: bool,
    },
    /// Witness rate versus S for several input designs.
    Robustness {
        /// Extra designs p00,p01,p10,p11 (repeatable).
        #[arg(long = "design")]
        designs: Vec<String>,
    },
    /// Certificate for a binary game (Mermin-GHZ by default).
    Ghz {
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        game: Option<PathBuf>,
    },
    /// Two-part MDL race between a source and a rival distribution.
    Mdl {
        /// Comma-separated probabilities of the true source.
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
        #[arg(long)]
        l_p: f64,
        #[arg(long)]
        l_q: f64,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSampleBlock {
    pub alpha: f64,
    pub n_effective: u64,
    pub omega_lower: f64,
    pub delta_lower_bits: f64,
    pub total_lower_bits: f64,
    /// "effective-trial" for blocked phase-scan counts, "independent-trials"
    /// otherwise.
    pub trial_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub format: TableFormat,
    pub n: u64,
    pub setting_totals: [u64; 4],
    pub correlators: [f64; 4],
    pub s: f64,
    pub signed_s: f64,
    pub relabeled: bool,
    pub sign_convention: String,
    pub design: Design,
    pub certificate: WitnessCertificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite_sample: Option<FiniteSampleBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub s: f64,
    pub omega: f64,
    pub omega_loc: f64,
    pub delta_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub design: Design,
    pub rows: Vec<BenchmarkRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub n: u64,
    pub fits: Vec<ModelFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
    /// Saturated-over-local gain in bits/trial, when both were fitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_table_gain_bits: Option<f64>,
    /// Gain over the uniform-design witness rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_to_witness_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    pub s_hat: f64,
    pub sigma_s: f64,
    pub resamples: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub master_seed: u64,
    pub summary: BootstrapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub master_seed: u64,
    pub replicates_per_regime: usize,
    pub regimes: Vec<RegimeSummary>,
    /// Replicates where the full-table gain fell below the witness bound.
    pub floor_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub master_seed: u64,
    pub config: PhaseConfig,
    pub rows: Vec<PhaseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub delta_bits: f64,
    pub delta_d: f64,
    pub n_crit: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub game: String,
    pub parties: usize,
    pub strategies: u64,
    pub local_value: f64,
    pub certificate: WitnessCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdlReport {
    pub master_seed: u64,
    pub divergence_bits: f64,
    pub code_length_gap_bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_crossing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_crossing: Option<u64>,
    pub final_excess_bits: f64,
}

/// Result of a successful command: whether every optimizer converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub converged: bool,
}

impl Outcome {
    fn clean() -> Self {
        Self { converged: true }
    }

    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NUMERICAL
        }
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    if err.is_usage_error() {
        EXIT_USAGE
    } else if err.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

fn parse_design(spec: Option<&str>) -> Result<Design> {
    spec.map_or_else(|| Ok(Design::uniform()), Design::parse)
}

pub fn parse_models(spec: &str) -> Result<Vec<ModelKind>> {
    let mut models = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind: ModelKind = part.parse()?;
        if !models.contains(&kind) {
            models.push(kind);
        }
    }
    if models.is_empty() {
        return Err(Error::Usage("model list is empty".into()));
    }
    Ok(models)
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>> {
    spec.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::invalid(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

fn load_input(input: &InputArgs, sink: &mut OutputSink) -> Result<LoadedTable> {
    let table = read_table(&input.input, input.format)?;
    sink.record_input(&input.input)?;
    Ok(table)
}

/// Witness report for a loaded table. Non-uniform designs use the weighted
/// win rate of the oriented table; the uniform design uses `1/2 + S/8`.
pub fn witness_report(
    table: &LoadedTable,
    design: Design,
    alpha: Option<f64>,
    n_effective: Option<u64>,
) -> Result<WitnessReport> {
    let emp = empirical_table(&table.counts)?;
    let s = chsh_score(&emp);
    let (oriented, relabeled) = emp.oriented();
    let omega = if design == Design::uniform() {
        win_rate(s)
    } else {
        win_rate_weighted(&oriented, &design)
    };
    let n = n_effective.unwrap_or(table.counts.total());
    let certificate = chsh_certificate(omega, &design)?.with_trials(n);
    let finite_sample = match alpha {
        Some(alpha) => {
            let cert = hoeffding_certificate(omega, n, alpha, &design)?;
            Some(FiniteSampleBlock {
                alpha,
                n_effective: n,
                omega_lower: cert.omega_lower.unwrap_or(f64::NAN),
                delta_lower_bits: cert.delta_lower_bits.unwrap_or(0.0),
                total_lower_bits: cert.total_lower_bits().unwrap_or(0.0),
                trial_model: match table.format {
                    TableFormat::RawPhase => "effective-trial",
                    TableFormat::Counts => "independent-trials",
                }
                .to_string(),
            })
        }
        None => None,
    };
    Ok(WitnessReport {
        format: table.format,
        n: table.counts.total(),
        setting_totals: table.counts.setting_totals(),
        correlators: correlators(&emp),
        s,
        signed_s: signed_chsh(&emp),
        relabeled,
        sign_convention: SIGN_CONVENTION.to_string(),
        design,
        certificate,
        finite_sample,
    })
}

pub fn benchmark_report(s_values: &[f64], design: Design) -> Result<BenchmarkReport> {
    let rows = s_values
        .iter()
        .map(|&s| {
            if !(0.0..=4.0).contains(&s) {
                return Err(Error::invalid(format!("S value {s} outside [0, 4]")));
            }
            let cert = chsh_certificate(win_rate(s), &design)?;
            Ok(BenchmarkRow {
                s,
                omega: cert.omega,
                omega_loc: cert.omega_loc,
                delta_bits: cert.delta_bits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport { design, rows })
}

pub fn model_report(
    table: &LoadedTable,
    models: &[ModelKind],
    compare: bool,
) -> Result<ModelReport> {
    let cfg = FitConfig {
        angles: table.angles,
        ..FitConfig::default()
    };
    let c = &table.counts;
    let fits = models
        .iter()
        .map(|&k| fit_model(k, c, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let comparison = if compare {
        Some(ComparisonReport::from_fits(c.total(), &fits)?)
    } else {
        None
    };
    let find = |k: ModelKind| fits.iter().find(|f| f.model == k);
    let full_table_gain_bits = match (find(ModelKind::Local), find(ModelKind::Saturated)) {
        (Some(l), Some(s)) => Some(gain_from_fits(l, s, c.total())),
        _ => None,
    };
    let gain_to_witness_ratio = match full_table_gain_bits {
        Some(gain) => {
            let s = chsh_score(&empirical_table(c)?);
            let witness = chsh_certificate(win_rate(s), &Design::uniform())?.delta_bits;
            (witness > 0.0).then(|| gain / witness)
        }
        None => None,
    };
    Ok(ModelReport {
        n: c.total(),
        fits,
        comparison,
        full_table_gain_bits,
        gain_to_witness_ratio,
    })
}

fn emit<T: Serialize>(sink: &mut OutputSink, name: &str, value: &T) -> Result<()> {
    let text = sink.write_json(name, value)?;
    print!("{text}");
    Ok(())
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<Outcome> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Witness {
            input,
            design,
            alpha,
            n_effective,
        } => {
            let mut sink = OutputSink::new(&out_dir, "witness");
            let table = load_input(&input, &mut sink)?;
            let design = parse_design(design.as_deref())?;
            sink.record_config("design", format!("{:?}", design.weights()));
            if let Some(a) = alpha {
                sink.record_config("alpha", a);
            }
            if let Some(n) = n_effective {
                sink.record_config("n_effective", n);
            }
            let report = witness_report(&table, design, alpha, n_effective)?;
            emit(&mut sink, "witness.json", &report)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
        Command::Benchmark { s_values, design } => {
            let mut sink = OutputSink::new(&out_dir, "benchmark");
            let design = parse_design(design.as_deref())?;
            sink.record_config("s_values", format!("{s_values:?}"));
            let report = benchmark_report(&s_values, design)?;
            emit(&mut sink, "benchmark.json", &report)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
        Command::Fit { input, models } => run_models(&out_dir, &input, &models, false),
        Command::Compare { input, models } => run_models(&out_dir, &input, &models, true),
        Command::Bootstrap {
            input,
            seed,
            resamples,
        } => {
            let mut sink = OutputSink::new(&out_dir, "bootstrap");
            let table = load_input(&input, &mut sink)?;
            sink.set_seed(seed);
            sink.record_config("resamples", resamples);
            let cfg = FitConfig {
                angles: table.angles,
                ..FitConfig::default()
            };
            let study = bootstrap_stability(&table.counts, resamples, &cfg, &RngConfig::new(seed))?;
            sink.write("bootstrap_replicates.csv", &bootstrap_csv(&study))?;
            let report = BootstrapReport {
                master_seed: seed,
                summary: study.summary.clone(),
            };
            emit(&mut sink, "bootstrap.json", &report)?;
            sink.finish()?;
            Ok(Outcome {
                converged: study.summary.nonconverged == 0,
            })
        }
        Command::Sigma {
            input,
            seed,
            resamples,
        } => {
            let mut sink = OutputSink::new(&out_dir, "sigma");
            let table = load_input(&input, &mut sink)?;
            let raw = table
                .raw
                .ok_or_else(|| Error::invalid("sigma needs a raw_phase input"))?;
            sink.set_seed(seed);
            sink.record_config("resamples", resamples);
            let sigma_s = poisson_sigma_s(&raw, resamples, &RngConfig::new(seed))?;
            let report = SigmaReport {
                s_hat: chsh_score(&empirical_table(&table.counts)?),
                sigma_s,
                resamples,
                master_seed: seed,
            };
            emit(&mut sink, "sigma.json", &report)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
        Command::Calibrate {
            seed,
            replicates,
            concentration,
            trials_per_setting,
        } => {
            let mut sink = OutputSink::new(&out_dir, "calibrate");
            sink.set_seed(seed);
            sink.record_config("replicates", replicates);
            let mut regimes = SyntheticRegime::defaults();
            for r in regimes.iter_mut() {
                if let Some(k) = concentration {
                    r.concentration = k;
                }
                if let Some(t) = trials_per_setting {
                    r.trials_per_setting = t;
                }
                *r = SyntheticRegime::new(
                    r.name.clone(),
                    r.s_range,
                    r.concentration,
                    r.trials_per_setting,
                )?;
            }
            let study = calibration_study(
                &regimes,
                replicates,
                &FitConfig::default(),
                &RngConfig::new(seed),
            )?;
            sink.write("calibration_scatter.csv", &calibration_csv(&study))?;
            let report = CalibrationReport {
                master_seed: seed,
                replicates_per_regime: replicates,
                floor_violations: study
                    .records
                    .iter()
                    .filter(|r| r.fulltable_bits < r.witness_bits - 1e-9)
                    .count(),
                regimes: study.summary.clone(),
            };
            emit(&mut sink, "calibration.json", &report)?;
            sink.finish()?;
            Ok(Outcome {
                converged: study.records.iter().all(|r| r.converged),
            })
        }
        Command::Phase {
            seed,
            replicates,
            s_grid,
            n_grid,
            concentration,
        } => {
            let mut sink = OutputSink::new(&out_dir, "phase");
            sink.set_seed(seed);
            let mut pcfg = PhaseConfig::default();
            if let Some(r) = replicates {
                pcfg.replicates = r;
            }
            if let Some(s) = s_grid.as_deref() {
                pcfg.s_grid = parse_list(s, "S grid")?;
            }
            if let Some(n) = n_grid.as_deref() {
                pcfg.n_grid = parse_list(n, "n grid")?;
            }
            if let Some(k) = concentration {
                pcfg.concentration = k;
            }
            sink.record_config("replicates", pcfg.replicates);
            sink.record_config("s_grid", format!("{:?}", pcfg.s_grid));
            sink.record_config("n_grid", format!("{:?}", pcfg.n_grid));
            sink.record_config("concentration", pcfg.concentration);
            let study = phase_diagram(&pcfg, &FitConfig::default(), &RngConfig::new(seed))?;
            sink.write("phase_grid.csv", &phase_csv(&study))?;
            let report = PhaseReport {
                master_seed: seed,
                config: pcfg,
                rows: study.summary.clone(),
            };
            emit(&mut sink, "phase.json", &report)?;
            sink.finish()?;
            Ok(Outcome {
                converged: study.records.iter().all(|c| c.nonconverged == 0),
            })
        }
        Command::Crossover {
            s_value,
            delta_bits,
            delta_d,
            n_max,
            design,
            sweep,
        } => {
            let mut sink = OutputSink::new(&out_dir, "crossover");
            let design = parse_design(design.as_deref())?;
            let delta = match (s_value, delta_bits) {
                (Some(s), None) => chsh_certificate(win_rate(s), &design)?.delta_bits,
                (None, Some(d)) => d,
                _ => {
                    return Err(Error::Usage(
                        "give exactly one of --s-value or --delta-bits".into(),
                    ))
                }
            };
            sink.record_config("delta_d", delta_d);
            sink.record_config("n_max", n_max);
            let n_crit = crossover_n(&CrossoverQuery {
                delta_bits_per_trial: delta,
                delta_d,
                n_max,
            })?;
            if sweep {
                sink.write("crossover_curves.csv", &crossover_sweep_csv(&design, n_max)?)?;
            }
            let report = CrossoverReport {
                s: s_value,
                delta_bits: delta,
                delta_d,
                n_crit,
            };
            emit(&mut sink, "crossover.json", &report)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
        Command::Robustness { designs } => {
            let mut sink = OutputSink::new(&out_dir, "robustness");
            let mut all = vec![Design::uniform()];
            if designs.is_empty() {
                all.push(Design::new([0.3, 0.25, 0.25, 0.2], "min 0.20")?);
                all.push(Design::new([0.4, 0.2, 0.25, 0.15], "min 0.15")?);
            } else {
                for d in &designs {
                    all.push(Design::parse(d)?);
                }
            }
            sink.record_config(
                "designs",
                format!("{:?}", all.iter().map(|d| d.weights()).collect::<Vec<_>>()),
            );
            sink.write("design_robustness.csv", &robustness_csv(&all)?)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
        Command::Ghz { omega, game } => {
            let mut sink = OutputSink::new(&out_dir, "ghz");
            let (name, g) = match &game {
                Some(path) => {
                    sink.record_input(path)?;
                    (path.display().to_string(), read_game(path)?)
                }
                None => ("mermin-ghz".to_string(), BinaryGame::mermin_ghz()),
            };
            sink.record_config("omega", omega);
            let report = GameReport {
                game: name,
                parties: g.parties(),
                strategies: 4u64.pow(g.parties() as u32),
                local_value: g.local_value(),
                certificate: game_certificate(&g, omega)?,
            };
            emit(&mut sink, "game.json", &report)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
        Command::Mdl {
            p,
            q,
            l_p,
            l_q,
            n,
            seed,
        } => {
            let mut sink = OutputSink::new(&out_dir, "mdl");
            sink.set_seed(seed);
            let p: Vec<f64> = parse_list(&p, "p")?;
            let q: Vec<f64> = parse_list(&q, "q")?;
            sink.record_config("p", format!("{p:?}"));
            sink.record_config("q", format!("{q:?}"));
            sink.record_config("l_p", l_p);
            sink.record_config("l_q", l_q);
            let mut rng = RngConfig::new(seed).stream(0);
            let traj = mdl_crossover_sim(&p, &q, l_p, l_q, n, &mut rng)?;
            let mut csv = String::from("n,excess_bits\n");
            for (i, v) in traj.excess_bits.iter().enumerate() {
                csv.push_str(&format!("{i},{v:.9}\n"));
            }
            sink.write("mdl_trajectory.csv", &csv)?;
            let report = MdlReport {
                master_seed: seed,
                divergence_bits: traj.divergence_bits,
                code_length_gap_bits: l_p - l_q,
                predicted_crossing: predicted_crossover(&p, &q, l_p, l_q).ok(),
                first_crossing: traj.first_crossing,
                final_excess_bits: *traj.excess_bits.last().unwrap_or(&(l_p - l_q)),
            };
            emit(&mut sink, "mdl.json", &report)?;
            sink.finish()?;
            Ok(Outcome::clean())
        }
    }
}

fn run_models(out_dir: &Path, input: &InputArgs, models: &str, compare: bool) -> Result<Outcome> {
    let name = if compare { "compare" } else { "fit" };
    let models = parse_models(models)?;
    let mut sink = OutputSink::new(out_dir, name);
    let table = load_input(input, &mut sink)?;
    sink.record_config(
        "models",
        models.iter().map(|m| m.tag()).collect::<Vec<_>>().join(","),
    );
    let report = model_report(&table, &models, compare)?;
    if let Some(cmp) = &report.comparison {
        sink.write("comparison.csv", &cmp.to_csv())?;
    }
    emit(&mut sink, &format!("{name}.json"), &report)?;
    sink.finish()?;
    Ok(Outcome {
        converged: report.fits.iter().all(ModelFit::converged),
    })
}

/// `n_crit` against S for `delta_d` in {4, 8, 12}.
pub fn crossover_sweep_csv(design: &Design, n_max: u64) -> Result<String> {
    let mut out = String::from("S,delta_bits,n_crit_dd4,n_crit_dd8,n_crit_dd12\n");
    for i in 0..=80 {
        let s = 2.02 + 0.01 * i as f64;
        let delta = chsh_certificate(win_rate(s).min(1.0), design)?.delta_bits;
        let mut cols = Vec::new();
        for dd in [4.0, 8.0, 12.0] {
            let n = if delta > 0.0 {
                crossover_n(&CrossoverQuery {
                    delta_bits_per_trial: delta,
                    delta_d: dd,
                    n_max,
                })
                .map(|n| n.to_string())
                .unwrap_or_default()
            } else {
                String::new()
            };
            cols.push(n);
        }
        out.push_str(&format!("{s:.2},{delta:.9e},{}\n", cols.join(",")));
    }
    Ok(out)
}

/// Witness rate against S for a CHSH-symmetric table, whose win rate is
/// `1/2 + S/8` under every design; only the benchmark moves.
pub fn robustness_csv(designs: &[Design]) -> Result<String> {
    let mut out = String::from("design,min_weight,omega_loc,S,delta_bits\n");
    for d in designs {
        for i in 0..=83 {
            let s = 2.0 + 0.01 * i as f64;
            let cert = chsh_certificate(win_rate(s), d)?;
            out.push_str(&format!(
                "\"{}\",{:.4},{:.4},{:.2},{:.9e}\n",
                d.label(),
                d.min_weight(),
                cert.omega_loc,
                s,
                cert.delta_bits
            ));
        }
    }
    Ok(out)
}
