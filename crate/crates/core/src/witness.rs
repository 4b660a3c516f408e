//! Witness-level KL certificates.
//!
//! A binary win/loss witness coarse-grains the full table, so the Bernoulli
//! divergence between the observed win rate and the best local win rate is
//! a lower bound on the divergence from the whole local polytope.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{win_sign, Design};

/// Default ceiling on the number of deterministic strategies enumerated.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

/// `D(Bern(p) || Bern(q))` in bits with `0 ln 0 = 0`.
pub fn bernoulli_kl_bits(p: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DegenerateBenchmark(q));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("win rate {p} outside [0, 1]")));
    }
    let term = |x: f64, y: f64| if x > 0.0 { x * (x / y).ln() } else { 0.0 };
    let nats = term(p, q) + term(1.0 - p, 1.0 - q);
    Ok(nats.max(0.0) / LN_2)
}

/// Best local CHSH win rate under design `d`: `1 - min r_xy`.
pub fn local_benchmark(d: &Design) -> f64 {
    1.0 - d.min_weight()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessCertificate {
    pub omega: f64,
    pub omega_loc: f64,
    pub delta_bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_effective: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_lower_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_bits: Option<f64>,
}

impl WitnessCertificate {
    /// One-sided certificate: zero at or below the benchmark.
    pub fn asymptotic(omega: f64, omega_loc: f64) -> Result<Self> {
        let delta_bits = if omega > omega_loc {
            bernoulli_kl_bits(omega, omega_loc)?
        } else {
            // Still validate the benchmark.
            bernoulli_kl_bits(omega_loc, omega_loc)?
        };
        Ok(Self {
            omega,
            omega_loc,
            delta_bits,
            n_effective: None,
            alpha: None,
            omega_lower: None,
            delta_lower_bits: None,
            total_bits: None,
        })
    }

    /// Attaches a trial count and the total asymptotic evidence.
    pub fn with_trials(mut self, n: u64) -> Self {
        self.n_effective = Some(n);
        self.total_bits = Some(n as f64 * self.delta_bits);
        self
    }

    /// Finite-sample evidence `n * delta_lower_bits`, when available.
    pub fn total_lower_bits(&self) -> Option<f64> {
        Some(self.n_effective? as f64 * self.delta_lower_bits?)
    }
}

pub fn chsh_certificate(omega: f64, d: &Design) -> Result<WitnessCertificate> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::invalid(format!("win rate {omega} outside [0, 1]")));
    }
    WitnessCertificate::asymptotic(omega, local_benchmark(d))
}

/// Hoeffding radius `sqrt(ln(1/alpha) / 2n)`.
pub fn hoeffding_radius(n: u64, alpha: f64) -> f64 {
    ((1.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Finite-sample lower certificate valid at confidence `1 - alpha` for `n`
/// independent trials with known design.
pub fn hoeffding_certificate(
    omega_hat: f64,
    n: u64,
    alpha: f64,
    d: &Design,
) -> Result<WitnessCertificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if n == 0 {
        return Err(Error::invalid("trial count must be positive"));
    }
    let mut cert = chsh_certificate(omega_hat, d)?.with_trials(n);
    let omega_lower = cert.omega_loc.max(omega_hat - hoeffding_radius(n, alpha));
    let delta_lower = bernoulli_kl_bits(omega_lower, cert.omega_loc)?;
    cert.alpha = Some(alpha);
    cert.omega_lower = Some(omega_lower);
    cert.delta_lower_bits = Some(delta_lower.min(cert.delta_bits));
    Ok(cert)
}

/// Probability and win table for one input tuple of a binary game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInput {
    /// One bit per party.
    pub inputs: Vec<u8>,
    pub prob: f64,
    /// Indexed by the output bits with party 0 as the most significant bit.
    pub wins: Vec<bool>,
}

/// A k-party game with binary inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryGame {
    parties: usize,
    support: Vec<GameInput>,
    local_value: f64,
}

impl BinaryGame {
    pub fn from_truth_table(parties: usize, support: Vec<GameInput>) -> Result<Self> {
        Self::with_cap(parties, support, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(parties: usize, support: Vec<GameInput>, cap: u64) -> Result<Self> {
        if parties == 0 {
            return Err(Error::invalid("a game needs at least one party"));
        }
        if support.is_empty() {
            return Err(Error::invalid("input support is empty"));
        }
        let outputs = 1usize << parties;
        for entry in &support {
            if entry.inputs.len() != parties || entry.inputs.iter().any(|&b| b > 1) {
                return Err(Error::invalid(format!(
                    "input {:?} is not a {parties}-bit tuple",
                    entry.inputs
                )));
            }
            if entry.wins.len() != outputs {
                return Err(Error::invalid(format!(
                    "win table for input {:?} has {} entries, expected {outputs}",
                    entry.inputs,
                    entry.wins.len()
                )));
            }
            if !(entry.prob.is_finite() && entry.prob >= 0.0) {
                return Err(Error::invalid("input probabilities must be nonnegative"));
            }
        }
        let total: f64 = support.iter().map(|e| e.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "input probabilities sum to {total}, not 1"
            )));
        }
        let mut game = Self {
            parties,
            support,
            local_value: f64::NAN,
        };
        game.local_value = enumerate_local_value(&game, cap)?;
        Ok(game)
    }

    /// Builds the truth table from a predicate over (inputs, outputs).
    pub fn from_predicate(
        parties: usize,
        support: Vec<(Vec<u8>, f64)>,
        predicate: impl Fn(&[u8], &[u8]) -> bool,
    ) -> Result<Self> {
        let outputs = 1usize << parties;
        let support = support
            .into_iter()
            .map(|(inputs, prob)| {
                let wins = (0..outputs)
                    .map(|o| predicate(&inputs, &output_bits(o, parties)))
                    .collect();
                GameInput { inputs, prob, wins }
            })
            .collect();
        Self::from_truth_table(parties, support)
    }

    /// CHSH as a binary game: outputs `0 -> +1`, `1 -> -1`; win when
    /// `ab = g(x,y)`.
    pub fn chsh(d: &Design) -> Result<Self> {
        let support = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(x, y)| (vec![x as u8, y as u8], d.weight(x, y)))
            .collect();
        Self::from_predicate(2, support, |inp, out| {
            let same = out[0] == out[1];
            same == (win_sign(inp[0] as usize, inp[1] as usize) > 0)
        })
    }

    /// Three-party Mermin-GHZ game on even-parity inputs.
    pub fn mermin_ghz() -> Self {
        let support = [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]]
            .iter()
            .map(|x| (x.to_vec(), 0.25))
            .collect();
        Self::from_predicate(3, support, |inp, out| {
            let parity = out.iter().fold(0, |acc, b| acc ^ b);
            let target = u8::from(inp.contains(&1));
            parity == target
        })
        .expect("GHZ game definition is valid")
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn support(&self) -> &[GameInput] {
        &self.support
    }

    pub fn local_value(&self) -> f64 {
        self.local_value
    }

    /// Win probability of one deterministic strategy.
    pub fn strategy_value(&self, strategy: u64) -> f64 {
        self.support
            .iter()
            .filter(|e| {
                let mut out = 0usize;
                for (j, &x) in e.inputs.iter().enumerate() {
                    let code = (strategy >> (2 * j)) & 3;
                    let bit = ((code >> x) & 1) as usize;
                    out |= bit << (self.parties - 1 - j);
                }
                e.wins[out]
            })
            .map(|e| e.prob)
            .sum()
    }
}

fn output_bits(index: usize, parties: usize) -> Vec<u8> {
    (0..parties)
        .map(|j| ((index >> (parties - 1 - j)) & 1) as u8)
        .collect()
}

/// Each party picks one of four response functions `{0,1} -> {0,1}`;
/// strategy `s` gives party `j` the function coded by bits `2j..2j+2` of `s`.
fn enumerate_local_value(g: &BinaryGame, cap: u64) -> Result<f64> {
    let strategies = 4u128.checked_pow(g.parties as u32).unwrap_or(u128::MAX);
    if strategies > cap as u128 {
        return Err(Error::EnumerationTooLarge { strategies, cap });
    }
    let count = strategies as u64;
    let best = if count >= 1 << 14 {
        (0..count)
            .into_par_iter()
            .map(|s| g.strategy_value(s))
            .reduce(|| 0.0, f64::max)
    } else {
        (0..count).map(|s| g.strategy_value(s)).fold(0.0, f64::max)
    };
    Ok(best)
}

/// Exact local value under a custom enumeration cap.
pub fn game_local_value(g: &BinaryGame, cap: u64) -> Result<f64> {
    enumerate_local_value(g, cap)
}

pub fn game_certificate(g: &BinaryGame, omega_obs: f64) -> Result<WitnessCertificate> {
    if !(0.0..=1.0).contains(&omega_obs) {
        return Err(Error::invalid(format!(
            "win rate {omega_obs} outside [0, 1]"
        )));
    }
    WitnessCertificate::asymptotic(omega_obs, g.local_value())
}
