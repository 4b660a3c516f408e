//! Complexity accounting: BIC/AIC code lengths, posterior odds, and the
//! crossover rules that say when a KL advantage pays for extra dimensions.

use std::f64::consts::LOG2_E;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_model, FitConfig, ModelFit, ModelKind};
use crate::tables::CountsTable;

/// `-log2 L + (d/2) log2 n`.
pub fn bic_bits(neg_log2_lik: f64, d: f64, n: u64) -> f64 {
    neg_log2_lik + 0.5 * d * (n.max(1) as f64).log2()
}

/// `-log2 L + d log2 e`: the AIC penalty of `2d` nats on the deviance
/// scale, halved and expressed in bits.
pub fn aic_bits(neg_log2_lik: f64, d: f64) -> f64 {
    neg_log2_lik + d * LOG2_E
}

/// Odds beyond this many bits are reported on the log scale.
pub const LOG_ODDS_LIMIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Odds {
    Linear(f64),
    Log2(f64),
}

impl Odds {
    pub fn log2(&self) -> f64 {
        match *self {
            Odds::Linear(v) => v.log2(),
            Odds::Log2(v) => v,
        }
    }
}

/// Posterior odds of `T_i` over `T_j` with priors `2^-L`:
/// `2^-(L_i - L_j) * 2^loglik_ratio_bits`.
pub fn posterior_odds(l_i: f64, l_j: f64, loglik_ratio_bits: f64) -> Result<Odds> {
    if !(l_i.is_finite() && l_j.is_finite() && loglik_ratio_bits.is_finite()) {
        return Err(Error::invalid("posterior odds need finite inputs"));
    }
    let log_odds = loglik_ratio_bits - (l_i - l_j);
    if log_odds.abs() > LOG_ODDS_LIMIT {
        Ok(Odds::Log2(log_odds))
    } else {
        Ok(Odds::Linear(log_odds.exp2()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverQuery {
    pub delta_bits_per_trial: f64,
    pub delta_d: f64,
    pub n_max: u64,
}

impl CrossoverQuery {
    /// `m * delta - (delta_d / 2) log2 m`; nonnegative where the witness
    /// pays for the extra dimensions.
    pub fn margin(&self, m: f64) -> f64 {
        m * self.delta_bits_per_trial - 0.5 * self.delta_d * m.log2()
    }
}

/// Smallest `n >= 2` from which `m delta >= (delta_d/2) log2 m` holds for
/// every `m >= n`.
///
/// The margin is convex in `m` with its minimum at
/// `delta_d / (2 delta ln 2)`, so past that point it is increasing and the
/// upper crossing is found by integer bisection.
pub fn crossover_n(q: &CrossoverQuery) -> Result<u64> {
    if !(q.delta_bits_per_trial.is_finite() && q.delta_bits_per_trial > 0.0) {
        return Err(Error::invalid(
            "delta_bits_per_trial must be positive and finite",
        ));
    }
    if !(q.delta_d.is_finite() && q.delta_d >= 0.0) {
        return Err(Error::invalid("delta_d must be nonnegative"));
    }
    if q.n_max < 2 {
        return Err(Error::NoCrossover(q.n_max));
    }
    // Integer margins decrease up to the real minimizer and increase after
    // it, so the failing integers form one contiguous run.
    let turning = q.delta_d / (2.0 * q.delta_bits_per_trial * std::f64::consts::LN_2);
    let rising_from = (turning.ceil() as u64).max(2);
    if rising_from > q.n_max {
        return Err(Error::NoCrossover(q.n_max));
    }
    if q.margin(rising_from as f64) >= 0.0 {
        let below = rising_from - 1;
        return Ok(if below >= 2 && q.margin(below as f64) < 0.0 {
            rising_from
        } else {
            2
        });
    }
    let (mut lo, mut hi) = (rising_from, q.n_max);
    if q.margin(hi as f64) < 0.0 {
        return Err(Error::NoCrossover(q.n_max));
    }
    // Invariant: margin(lo) < 0 <= margin(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if q.margin(mid as f64) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Two-part MDL race between a true source `p` and a rival `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdlTrajectory {
    /// `MDL_n(p) - MDL_n(q)` for `n = 0, 1, ..., n_max`.
    pub excess_bits: Vec<f64>,
    /// First `n` with `MDL_n(p) <= MDL_n(q)`.
    pub first_crossing: Option<u64>,
    pub divergence_bits: f64,
}

/// `D(p || q)` in bits; infinite when `q` misses mass of `p`.
pub fn kl_bits(p: &[f64], q: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    check_distribution(q)?;
    if p.len() != q.len() {
        return Err(Error::invalid("distributions have different alphabets"));
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi == 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += pi * (pi / qi).log2();
        }
    }
    Ok(acc.max(0.0))
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("distribution entries must be nonnegative"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("distribution sums to {sum}")));
    }
    Ok(())
}

/// Simulates `n_max` i.i.d. draws from `p` and tracks the MDL difference
/// with explicit code lengths `l_p`, `l_q` standing in for program length.
/// Identical sources give a flat trajectory at `l_p - l_q`.
pub fn mdl_crossover_sim<R: Rng + ?Sized>(
    p: &[f64],
    q: &[f64],
    l_p: f64,
    l_q: f64,
    n_max: u64,
    rng: &mut R,
) -> Result<MdlTrajectory> {
    let divergence_bits = kl_bits(p, q)?;
    let sampler =
        WeightedIndex::new(p).map_err(|e| Error::invalid(format!("bad distribution: {e}")))?;
    let step: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { (pi / qi).log2() } else { 0.0 })
        .collect();

    let mut excess = Vec::with_capacity(n_max as usize + 1);
    let mut current = l_p - l_q;
    excess.push(current);
    let mut first_crossing = (current <= 0.0).then_some(0);
    for n in 1..=n_max {
        current -= step[sampler.sample(rng)];
        excess.push(current);
        if first_crossing.is_none() && current <= 0.0 {
            first_crossing = Some(n);
        }
    }
    Ok(MdlTrajectory {
        excess_bits: excess,
        first_crossing,
        divergence_bits,
    })
}

/// Law-of-large-numbers crossing scale `(l_p - l_q) / D(p || q)`.
pub fn predicted_crossover(p: &[f64], q: &[f64], l_p: f64, l_q: f64) -> Result<f64> {
    let d = kl_bits(p, q)?;
    if d == 0.0 {
        return Err(Error::NoDivergence);
    }
    Ok(((l_p - l_q) / d).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub dim: u32,
    pub neg_log2_lik: f64,
    pub bic_bits: f64,
    pub aic_bits: f64,
    pub delta_bic: f64,
    pub delta_aic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: u64,
    pub rows: Vec<ComparisonRow>,
    pub winner_bic: ModelKind,
    pub winner_aic: ModelKind,
}

impl ComparisonReport {
    /// Ties go to the row listed first.
    pub fn from_fits(n: u64, fits: &[ModelFit]) -> Result<Self> {
        if fits.is_empty() {
            return Err(Error::invalid("no model fits to compare"));
        }
        let mut rows: Vec<ComparisonRow> = fits
            .iter()
            .map(|f| ComparisonRow {
                model: f.model,
                dim: f.dim,
                neg_log2_lik: f.neg_log2_lik,
                bic_bits: bic_bits(f.neg_log2_lik, f.dim as f64, n),
                aic_bits: aic_bits(f.neg_log2_lik, f.dim as f64),
                delta_bic: 0.0,
                delta_aic: 0.0,
                converged: f.converged(),
            })
            .collect();
        let argmin = |key: fn(&ComparisonRow) -> f64| {
            let mut best = 0;
            for (i, r) in rows.iter().enumerate() {
                if key(r) < key(&rows[best]) {
                    best = i;
                }
            }
            best
        };
        let best_bic = argmin(|r| r.bic_bits);
        let best_aic = argmin(|r| r.aic_bits);
        let (bic0, aic0) = (rows[best_bic].bic_bits, rows[best_aic].aic_bits);
        for r in rows.iter_mut() {
            r.delta_bic = r.bic_bits - bic0;
            r.delta_aic = r.aic_bits - aic0;
        }
        Ok(Self {
            n,
            winner_bic: rows[best_bic].model,
            winner_aic: rows[best_aic].model,
            rows,
        })
    }

    pub fn row(&self, model: ModelKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    /// Table-style CSV: model, d, -log2 L, L_BIC, dBIC, L_AIC, dAIC.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,d,neg_log2_lik,L_BIC,delta_BIC,L_AIC,delta_AIC\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.model, r.dim, r.neg_log2_lik, r.bic_bits, r.delta_bic, r.aic_bits, r.delta_aic
            ));
        }
        out
    }
}

/// Fits the requested classes and ranks them by BIC and AIC.
pub fn compare_subset(
    c: &CountsTable,
    models: &[ModelKind],
    cfg: &FitConfig,
) -> Result<(ComparisonReport, Vec<ModelFit>)> {
    if models.is_empty() {
        return Err(Error::invalid("model list is empty"));
    }
    let fits = models
        .iter()
        .map(|&k| fit_model(k, c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let report = ComparisonReport::from_fits(c.total(), &fits)?;
    Ok((report, fits))
}

pub fn compare_models(c: &CountsTable, cfg: &FitConfig) -> Result<ComparisonReport> {
    compare_subset(c, &ModelKind::ALL, cfg).map(|(r, _)| r)
}
