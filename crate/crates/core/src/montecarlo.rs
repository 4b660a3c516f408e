//! Stochastic studies: Poisson spread of S, bootstrap stability of the BIC
//! ranking, Dirichlet-perturbed synthetic tables, witness calibration and
//! the local-versus-saturated phase diagram.
//!
//! Replicate `i` of every study draws from its own ChaCha stream
//! `(master_seed, i)`, so results do not depend on the rayon schedule.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_local, fit_q2, fit_q4, fit_saturated, gain_from_fits, q2_table, FitConfig};
use crate::selection::{bic_bits, crossover_n, CrossoverQuery};
use crate::tables::{
    chsh_score, chsh_score_from_counts_lenient, empirical_table, reconstruct_counts, win_rate,
    Angles, CountsTable, Design, RawPhaseMatrix,
};
use crate::witness::chsh_certificate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngConfig {
    pub master_seed: u64,
}

impl RngConfig {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        rng
    }
}

/// Generator settings for Dirichlet-perturbed nonlocal tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRegime {
    pub name: String,
    pub s_range: (f64, f64),
    /// Dirichlet concentration; `f64::INFINITY` disables the perturbation.
    pub concentration: f64,
    pub trials_per_setting: u64,
}

pub const DEFAULT_CONCENTRATION: f64 = 1000.0;
pub const DEFAULT_TRIALS_PER_SETTING: u64 = 828;

impl SyntheticRegime {
    pub fn new(
        name: impl Into<String>,
        s_range: (f64, f64),
        concentration: f64,
        trials_per_setting: u64,
    ) -> Result<Self> {
        let (lo, hi) = s_range;
        if !(lo > 2.0 && lo <= hi && hi <= 2.0 * SQRT_2) {
            return Err(Error::invalid(format!(
                "S range [{lo}, {hi}] must lie inside (2, 2*sqrt(2)]"
            )));
        }
        if concentration.is_nan() || concentration <= 0.0 {
            return Err(Error::invalid("Dirichlet concentration must be positive"));
        }
        if trials_per_setting == 0 {
            return Err(Error::invalid("trials_per_setting must be positive"));
        }
        Ok(Self {
            name: name.into(),
            s_range,
            concentration,
            trials_per_setting,
        })
    }

    pub fn weak() -> Self {
        Self::preset("weak", (2.02, 2.10))
    }

    pub fn wang_like() -> Self {
        Self::preset("wang_like", (2.20, 2.35))
    }

    pub fn strong() -> Self {
        Self::preset("strong", (2.50, 2.70))
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::weak(), Self::wang_like(), Self::strong()]
    }

    fn preset(name: &str, s_range: (f64, f64)) -> Self {
        Self {
            name: name.into(),
            s_range,
            concentration: DEFAULT_CONCENTRATION,
            trials_per_setting: DEFAULT_TRIALS_PER_SETTING,
        }
    }
}

/// Records plus a summary and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult<R, S> {
    pub master_seed: u64,
    pub records: Vec<R>,
    pub summary: S,
}

/// Entrywise Poisson resampling of the raw matrix; returns the standard
/// deviation of the reconstructed S.
pub fn poisson_sigma_s(raw: &RawPhaseMatrix, resamples: usize, rng: &RngConfig) -> Result<f64> {
    if resamples < 100 {
        return Err(Error::invalid(
            "poisson_sigma_s needs at least 100 resamples",
        ));
    }
    let scores: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng.stream(i as u64);
            let mut n = raw.n;
            for v in n.iter_mut().flatten() {
                *v = poisson_draw(*v as f64, &mut stream);
            }
            chsh_score_from_counts_lenient(&reconstruct_counts(&RawPhaseMatrix {
                n,
                angles: raw.angles,
            }))
        })
        .collect();
    Ok(sample_std(&scores))
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive Poisson mean");
    d.sample(rng) as u64
}

pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64; 4], rng: &mut R) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut mass = 1.0;
    for k in 0..3 {
        if remaining == 0 {
            break;
        }
        let p = if mass > 0.0 {
            (probs[k] / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, p)
            .expect("valid binomial")
            .sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= probs[k];
    }
    out[3] = remaining;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRecord {
    pub bic_q2: f64,
    pub bic_q4: f64,
    pub bic_local: f64,
    pub setting_totals: [u64; 4],
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub p_q2_beats_local: f64,
    pub p_q2_beats_q4: f64,
    /// Replicates with a flagged fit; they stay in the denominators.
    pub nonconverged: usize,
}

/// Resamples each setting pair with its original total fixed, refits Q2,
/// Q4 and LOCAL, and records how often Q2 wins each BIC comparison.
pub fn bootstrap_stability(
    c: &CountsTable,
    resamples: usize,
    cfg: &FitConfig,
    rng: &RngConfig,
) -> Result<StudyResult<BootstrapRecord, BootstrapSummary>> {
    if resamples == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    let base = empirical_table(c)?;
    let totals = c.setting_totals();
    let records = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng.stream(i as u64);
            let mut counts = [[0u64; 4]; 4];
            for s in 0..4 {
                counts[s] = multinomial(totals[s], &base.as_array()[s], &mut stream);
            }
            let table = CountsTable::from_array(counts);
            let n = table.total();
            let q2 = fit_q2(&table, cfg)?;
            let q4 = fit_q4(&table)?;
            let local = fit_local(&table, cfg)?;
            Ok(BootstrapRecord {
                bic_q2: bic_bits(q2.neg_log2_lik, q2.dim as f64, n),
                bic_q4: bic_bits(q4.neg_log2_lik, q4.dim as f64, n),
                bic_local: bic_bits(local.neg_log2_lik, local.dim as f64, n),
                setting_totals: table.setting_totals(),
                converged: q2.converged() && q4.converged() && local.converged(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let frac = |pred: &dyn Fn(&BootstrapRecord) -> bool| {
        records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64
    };
    let summary = BootstrapSummary {
        resamples,
        p_q2_beats_local: frac(&|r| r.bic_q2 < r.bic_local),
        p_q2_beats_q4: frac(&|r| r.bic_q2 < r.bic_q4),
        nonconverged: records.iter().filter(|r| !r.converged).count(),
    };
    Ok(StudyResult {
        master_seed: rng.master_seed,
        records,
        summary,
    })
}

/// Counts drawn around the cosine table with CHSH value `s`.
fn synthesize_at<R: Rng + ?Sized>(
    s: f64,
    concentration: f64,
    trials_per_setting: u64,
    rng: &mut R,
) -> Result<CountsTable> {
    let v = (s / (2.0 * SQRT_2)).min(1.0);
    let base = q2_table(v, 0.0, &Angles::wang())?;
    let mut counts = [[0u64; 4]; 4];
    for (s_idx, row) in base.as_array().iter().enumerate() {
        let probs = if concentration.is_finite() {
            dirichlet(row, concentration, rng)
        } else {
            *row
        };
        counts[s_idx] = multinomial(trials_per_setting, &probs, rng);
    }
    Ok(CountsTable::from_array(counts))
}

fn dirichlet<R: Rng + ?Sized>(mean: &[f64; 4], concentration: f64, rng: &mut R) -> [f64; 4] {
    let mut g = [0.0; 4];
    for k in 0..4 {
        let shape = concentration * mean[k];
        if shape > 0.0 {
            g[k] = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        }
    }
    let total: f64 = g.iter().sum();
    if total > 0.0 {
        g.map(|v| v / total)
    } else {
        *mean
    }
}

/// Draws S uniformly in the regime's range, builds the cosine table with
/// `V = S / 2sqrt(2)`, `phi = 0`, perturbs each setting by a Dirichlet draw
/// and samples counts.
pub fn synthesize_table<R: Rng + ?Sized>(
    regime: &SyntheticRegime,
    rng: &mut R,
) -> Result<(CountsTable, f64)> {
    let (lo, hi) = regime.s_range;
    let s = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    let table = synthesize_at(s, regime.concentration, regime.trials_per_setting, rng)?;
    Ok((table, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub regime: String,
    pub s_true: f64,
    pub s_hat: f64,
    pub witness_bits: f64,
    pub fulltable_bits: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: SyntheticRegime,
    pub replicates: usize,
    pub median_witness_bits: f64,
    pub median_fulltable_bits: f64,
    /// Median full-table gain over median witness bound.
    pub median_ratio: f64,
    /// 10/50/90% quantiles of per-replicate ratios over replicates with a
    /// positive witness.
    pub ratio_quantiles: [f64; 3],
    pub nonconverged: usize,
}

/// Witness lower bound against the fitted full-table gain on synthetic
/// tables from each regime.
pub fn calibration_study(
    regimes: &[SyntheticRegime],
    replicates: usize,
    cfg: &FitConfig,
    rng: &RngConfig,
) -> Result<StudyResult<CalibrationRecord, Vec<RegimeSummary>>> {
    if replicates == 0 {
        return Err(Error::invalid("calibration needs at least one replicate"));
    }
    let mut records = Vec::with_capacity(regimes.len() * replicates);
    let mut summary = Vec::with_capacity(regimes.len());
    for (r_idx, regime) in regimes.iter().enumerate() {
        let batch = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut stream = rng.stream(((r_idx as u64) << 32) | i as u64);
                let (table, s_true) = synthesize_table(regime, &mut stream)?;
                calibration_point(&regime.name, &table, s_true, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        summary.push(summarize_regime(regime, &batch));
        records.extend(batch);
    }
    Ok(StudyResult {
        master_seed: rng.master_seed,
        records,
        summary,
    })
}

fn calibration_point(
    regime: &str,
    table: &CountsTable,
    s_true: f64,
    cfg: &FitConfig,
) -> Result<CalibrationRecord> {
    let s_hat = chsh_score(&empirical_table(table)?);
    let witness = chsh_certificate(win_rate(s_hat).min(1.0), &Design::uniform())?;
    let local = fit_local(table, cfg)?;
    let sat = fit_saturated(table)?;
    Ok(CalibrationRecord {
        regime: regime.to_string(),
        s_true,
        s_hat,
        witness_bits: witness.delta_bits,
        fulltable_bits: gain_from_fits(&local, &sat, table.total()),
        converged: local.converged(),
    })
}

fn summarize_regime(regime: &SyntheticRegime, batch: &[CalibrationRecord]) -> RegimeSummary {
    let witness: Vec<f64> = batch.iter().map(|r| r.witness_bits).collect();
    let full: Vec<f64> = batch.iter().map(|r| r.fulltable_bits).collect();
    let ratios: Vec<f64> = batch
        .iter()
        .filter(|r| r.witness_bits > 0.0)
        .map(|r| r.fulltable_bits / r.witness_bits)
        .collect();
    let median_witness_bits = quantile(&witness, 0.5);
    let median_fulltable_bits = quantile(&full, 0.5);
    RegimeSummary {
        regime: regime.clone(),
        replicates: batch.len(),
        median_witness_bits,
        median_fulltable_bits,
        median_ratio: median_fulltable_bits / median_witness_bits,
        ratio_quantiles: [
            quantile(&ratios, 0.1),
            quantile(&ratios, 0.5),
            quantile(&ratios, 0.9),
        ],
        nonconverged: batch.iter().filter(|r| !r.converged).count(),
    }
}

/// Linear-interpolated quantile; NaN on empty input.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub s: f64,
    pub n: u64,
    pub replicates: usize,
    /// Fraction of replicates with `BIC(SATURATED) < BIC(LOCAL)`.
    pub frequency: f64,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub s: f64,
    pub witness_bits: f64,
    /// Witness crossover for `delta_d = 4`.
    pub witness_line_n: Option<u64>,
    /// Log-interpolated `n` where the frequency first reaches 1/2.
    pub contour_50_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub s_grid: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    pub concentration: f64,
    pub n_max: u64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            s_grid: vec![2.10, 2.16, 2.22, 2.28, 2.34, 2.40, 2.50, 2.60],
            n_grid: vec![
                200, 400, 800, 1200, 1600, 2000, 2400, 2800, 3200, 3600, 4000, 4800, 5600, 6400,
                8000, 9600, 12000, 16000, 20000,
            ],
            replicates: 200,
            concentration: DEFAULT_CONCENTRATION,
            n_max: 1 << 40,
        }
    }
}

/// Frequency with which the saturated model beats locality by BIC on a
/// grid of (S, n), alongside the witness-only crossover line.
pub fn phase_diagram(
    pcfg: &PhaseConfig,
    cfg: &FitConfig,
    rng: &RngConfig,
) -> Result<StudyResult<PhaseCell, Vec<PhaseRow>>> {
    if pcfg.s_grid.is_empty() || pcfg.n_grid.is_empty() || pcfg.replicates == 0 {
        return Err(Error::invalid(
            "phase diagram needs nonempty grids and replicates",
        ));
    }
    if pcfg.n_grid.iter().any(|&n| n < 4) {
        return Err(Error::invalid("grid sizes must be at least 4 trials"));
    }
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for (si, &s) in pcfg.s_grid.iter().enumerate() {
        let regime = SyntheticRegime::new("phase", (s, s), pcfg.concentration, 1)?;
        let mut row_cells = Vec::with_capacity(pcfg.n_grid.len());
        for (ni, &n) in pcfg.n_grid.iter().enumerate() {
            let per_setting = n / 4;
            let outcomes = (0..pcfg.replicates)
                .into_par_iter()
                .map(|i| {
                    let index = ((si as u64) << 48) | ((ni as u64) << 32) | i as u64;
                    let mut stream = rng.stream(index);
                    let table = synthesize_at(s, regime.concentration, per_setting, &mut stream)?;
                    let total = table.total();
                    let local = fit_local(&table, cfg)?;
                    let sat = fit_saturated(&table)?;
                    let wins = bic_bits(sat.neg_log2_lik, sat.dim as f64, total)
                        < bic_bits(local.neg_log2_lik, local.dim as f64, total);
                    Ok((wins, local.converged()))
                })
                .collect::<Result<Vec<_>>>()?;
            let wins = outcomes.iter().filter(|o| o.0).count();
            row_cells.push(PhaseCell {
                s,
                n: per_setting * 4,
                replicates: pcfg.replicates,
                frequency: wins as f64 / pcfg.replicates as f64,
                nonconverged: outcomes.iter().filter(|o| !o.1).count(),
            });
        }
        let witness = chsh_certificate(win_rate(s), &Design::uniform())?.delta_bits;
        let witness_line_n = if witness > 0.0 {
            crossover_n(&CrossoverQuery {
                delta_bits_per_trial: witness,
                delta_d: 4.0,
                n_max: pcfg.n_max,
            })
            .ok()
        } else {
            None
        };
        rows.push(PhaseRow {
            s,
            witness_bits: witness,
            witness_line_n,
            contour_50_n: contour_crossing(&row_cells, 0.5),
        });
        cells.extend(row_cells);
    }
    Ok(StudyResult {
        master_seed: rng.master_seed,
        records: cells,
        summary: rows,
    })
}

/// First grid point reaching `level`, interpolated linearly in `log n`
/// from the previous point.
pub fn contour_crossing(cells: &[PhaseCell], level: f64) -> Option<f64> {
    let k = cells.iter().position(|c| c.frequency >= level)?;
    if k == 0 {
        return Some(cells[0].n as f64);
    }
    let (a, b) = (&cells[k - 1], &cells[k]);
    let t = (level - a.frequency) / (b.frequency - a.frequency);
    let (la, lb) = ((a.n as f64).ln(), (b.n as f64).ln());
    Some((la + t * (lb - la)).exp())
}

pub fn calibration_csv(result: &StudyResult<CalibrationRecord, Vec<RegimeSummary>>) -> String {
    let mut out = String::from("regime,s_true,s_hat,witness_bits,fulltable_bits\n");
    for r in &result.records {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.9e},{:.9e}\n",
            r.regime, r.s_true, r.s_hat, r.witness_bits, r.fulltable_bits
        ));
    }
    out
}

pub fn phase_csv(result: &StudyResult<PhaseCell, Vec<PhaseRow>>) -> String {
    let mut out = String::from("S,n,frequency,witness_line_n\n");
    for c in &result.records {
        let line = result
            .summary
            .iter()
            .find(|r| r.s == c.s)
            .and_then(|r| r.witness_line_n)
            .map(|n| n.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{:.4},{},{:.6},{}\n", c.s, c.n, c.frequency, line));
    }
    out
}

pub fn bootstrap_csv(result: &StudyResult<BootstrapRecord, BootstrapSummary>) -> String {
    let mut out = String::from("replicate,bic_q2,bic_q4,bic_local,converged\n");
    for (i, r) in result.records.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            i, r.bic_q2, r.bic_q4, r.bic_local, r.converged
        ));
    }
    out
}
