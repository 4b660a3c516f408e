//! Count and probability tables for the two-party, two-setting, two-outcome
//! scenario, plus the empirical statistics computed from them.
//!
//! Cells within a setting pair are always ordered `(+,+), (+,-), (-,+), (-,-)`
//! and setting pairs are ordered `(0,0), (0,1), (1,0), (1,1)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums of a conditional table.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Output pairs `(a, b)` in cell order.
pub const OUTCOMES: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Setting pairs `(x, y)` in setting order.
pub const SETTINGS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

#[inline]
pub fn setting_index(x: usize, y: usize) -> usize {
    debug_assert!(x < 2 && y < 2);
    2 * x + y
}

#[inline]
pub fn cell_index(a: i8, b: i8) -> usize {
    debug_assert!(a.abs() == 1 && b.abs() == 1);
    (if a > 0 { 0 } else { 2 }) + (if b > 0 { 0 } else { 1 })
}

/// Nonnegative coincidence counts `n(a,b|x,y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountsTable {
    counts: [[u64; 4]; 4],
}

impl CountsTable {
    /// Builds a table from `counts[setting][cell]`. At least one setting pair
    /// must be nonempty.
    pub fn new(counts: [[u64; 4]; 4]) -> Result<Self> {
        let table = Self { counts };
        if table.total() == 0 {
            return Err(Error::invalid("counts table is empty"));
        }
        Ok(table)
    }

    /// Builds a table without the nonempty check. Used for reconstructed
    /// tables, which may legitimately be all zero.
    pub fn from_array(counts: [[u64; 4]; 4]) -> Self {
        Self { counts }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize, i8, i8) -> u64) -> Self {
        let mut counts = [[0u64; 4]; 4];
        for (s, &(x, y)) in SETTINGS.iter().enumerate() {
            for (c, &(a, b)) in OUTCOMES.iter().enumerate() {
                counts[s][c] = f(x, y, a, b);
            }
        }
        Self { counts }
    }

    pub fn as_array(&self) -> &[[u64; 4]; 4] {
        &self.counts
    }

    pub fn get(&self, x: usize, y: usize, a: i8, b: i8) -> u64 {
        self.counts[setting_index(x, y)][cell_index(a, b)]
    }

    pub fn setting(&self, x: usize, y: usize) -> [u64; 4] {
        self.counts[setting_index(x, y)]
    }

    pub fn setting_total(&self, x: usize, y: usize) -> u64 {
        self.setting(x, y).iter().sum()
    }

    pub fn setting_totals(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for (s, row) in self.counts.iter().enumerate() {
            out[s] = row.iter().sum();
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Fails with `ZeroSettingTotal` on the first empty setting pair.
    pub fn require_all_settings(&self) -> Result<()> {
        for &(x, y) in &SETTINGS {
            if self.setting_total(x, y) == 0 {
                return Err(Error::ZeroSettingTotal { x, y });
            }
        }
        Ok(())
    }

    /// Same-sign and opposite-sign counts for one setting pair.
    pub fn same_diff(&self, x: usize, y: usize) -> (u64, u64) {
        let row = self.setting(x, y);
        (row[0] + row[3], row[1] + row[2])
    }

    /// Applies `a -> -a, b -> -b` in every setting.
    pub fn flip_outputs(&self) -> Self {
        let mut counts = self.counts;
        for row in counts.iter_mut() {
            row.swap(0, 3);
            row.swap(1, 2);
        }
        Self { counts }
    }

    /// Negative log-likelihood in bits of these counts under `table`.
    /// Cells with zero counts contribute nothing; probabilities of occupied
    /// cells are floored at 1e-300.
    pub fn neg_log2_likelihood(&self, table: &ConditionalTable) -> f64 {
        let mut acc = 0.0;
        for s in 0..4 {
            for c in 0..4 {
                let n = self.counts[s][c];
                if n > 0 {
                    acc -= n as f64 * table.probs[s][c].max(1e-300).log2();
                }
            }
        }
        acc
    }
}

/// Conditional distribution `P(a,b|x,y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    probs: [[f64; 4]; 4],
}

impl ConditionalTable {
    pub fn new(probs: [[f64; 4]; 4]) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(Error::invalid(format!(
                    "setting {s}: probabilities must lie in [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::invalid(format!(
                    "setting {s}: probabilities sum to {sum}, not 1"
                )));
            }
        }
        Ok(Self { probs })
    }

    /// Explicit renormalization of each setting row. Rows must be
    /// nonnegative with positive mass.
    pub fn renormalized(raw: [[f64; 4]; 4]) -> Result<Self> {
        let mut probs = raw;
        for (s, row) in probs.iter_mut().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::invalid(format!("setting {s}: negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::invalid(format!("setting {s}: zero mass")));
            }
            row.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self {
            probs: [[0.25; 4]; 4],
        }
    }

    /// Unbiased-marginal table with the given correlators.
    pub fn from_correlators(e: [f64; 4]) -> Result<Self> {
        let mut probs = [[0.0; 4]; 4];
        for s in 0..4 {
            if !(-1.0..=1.0).contains(&e[s]) {
                return Err(Error::invalid(format!(
                    "correlator {} outside [-1, 1]",
                    e[s]
                )));
            }
            let same = (1.0 + e[s]) / 4.0;
            let diff = (1.0 - e[s]) / 4.0;
            probs[s] = [same, diff, diff, same];
        }
        Ok(Self { probs })
    }

    pub fn as_array(&self) -> &[[f64; 4]; 4] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize, a: i8, b: i8) -> f64 {
        self.probs[setting_index(x, y)][cell_index(a, b)]
    }

    pub fn setting(&self, x: usize, y: usize) -> [f64; 4] {
        self.probs[setting_index(x, y)]
    }

    /// Applies `a -> -a` in every setting, negating all correlators.
    pub fn flip_alice(&self) -> Self {
        let mut probs = self.probs;
        for row in probs.iter_mut() {
            row.swap(0, 2);
            row.swap(1, 3);
        }
        Self { probs }
    }

    /// Relabels Alice's outputs if needed so that `-E00 + E01 + E10 + E11`
    /// is nonnegative. Returns the table and whether it was relabeled.
    pub fn oriented(&self) -> (Self, bool) {
        if signed_chsh(self) < 0.0 {
            (self.flip_alice(), true)
        } else {
            (*self, false)
        }
    }

    pub fn flip_outputs(&self) -> Self {
        let mut probs = self.probs;
        for row in probs.iter_mut() {
            row.swap(0, 3);
            row.swap(1, 2);
        }
        Self { probs }
    }
}

/// Known input-setting distribution `r_xy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    r: [f64; 4],
    label: String,
}

impl Design {
    pub fn new(r: [f64; 4], label: impl Into<String>) -> Result<Self> {
        if r.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("design weights must be nonnegative"));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "design weights sum to {sum}, not 1"
            )));
        }
        Ok(Self {
            r,
            label: label.into(),
        })
    }

    pub fn uniform() -> Self {
        Self {
            r: [0.25; 4],
            label: "uniform".into(),
        }
    }

    /// Empirical setting frequencies `n_xy / n` of a counts table.
    pub fn empirical(c: &CountsTable) -> Result<Self> {
        let n = c.total();
        if n == 0 {
            return Err(Error::invalid("counts table is empty"));
        }
        let totals = c.setting_totals();
        let mut r = [0.0; 4];
        for s in 0..4 {
            r[s] = totals[s] as f64 / n as f64;
        }
        // Absorb rounding into the largest weight so the sum check holds.
        let sum: f64 = r.iter().sum();
        let imax = (0..4).max_by(|&i, &j| r[i].total_cmp(&r[j])).unwrap_or(0);
        r[imax] += 1.0 - sum;
        Self::new(r, "empirical")
    }

    /// Parses `p00,p01,p10,p11`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::invalid(format!(
                "design needs four comma-separated weights, got {:?}",
                spec
            )));
        }
        let mut r = [0.0; 4];
        for (slot, part) in r.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::invalid(format!("bad design weight {part:?}")))?;
        }
        Self::new(r, spec)
    }

    pub fn weights(&self) -> [f64; 4] {
        self.r
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.r[setting_index(x, y)]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn min_weight(&self) -> f64 {
        self.r.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Analyzer angles for the two settings of each party (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

impl Angles {
    /// `x=0 -> 0`, `x=1 -> pi/2`, `y=0 -> pi/4`, `y=1 -> 3pi/4`.
    pub fn wang() -> Self {
        Self {
            alpha: [0.0, FRAC_PI_2],
            beta: [FRAC_PI_4, 3.0 * FRAC_PI_4],
        }
    }

    /// `alpha_x + beta_y` for each setting pair.
    pub fn sums(&self) -> [f64; 4] {
        SETTINGS.map(|(x, y)| self.alpha[x] + self.beta[y])
    }
}

impl Default for Angles {
    fn default() -> Self {
        Self::wang()
    }
}

/// Phase-scan coincidence matrix. Rows are `alpha_1, alpha_1+pi, alpha_2,
/// alpha_2+pi`; columns are `beta_1, beta_1+pi, beta_2, beta_2+pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPhaseMatrix {
    pub n: [[u64; 4]; 4],
    pub angles: Angles,
}

impl RawPhaseMatrix {
    pub fn new(n: [[u64; 4]; 4]) -> Self {
        Self {
            n,
            angles: Angles::wang(),
        }
    }

    /// The published 60 s four-fold coincidence table.
    pub fn wang_phase_scan() -> Self {
        Self::new([
            [77, 295, 271, 63],
            [371, 58, 107, 364],
            [331, 139, 333, 54],
            [129, 327, 97, 296],
        ])
    }

    pub fn scaled(&self, factor: u64) -> Self {
        let mut n = self.n;
        n.iter_mut().flatten().for_each(|v| *v *= factor);
        Self {
            n,
            angles: self.angles,
        }
    }
}

/// Outcome `a=+` reads row `2x`, `a=-` reads row `2x+1` (phase shifted by
/// pi); likewise for `b` on columns.
pub fn reconstruct_counts(raw: &RawPhaseMatrix) -> CountsTable {
    CountsTable::from_fn(|x, y, a, b| {
        let row = 2 * x + usize::from(a < 0);
        let col = 2 * y + usize::from(b < 0);
        raw.n[row][col]
    })
}

pub fn empirical_table(c: &CountsTable) -> Result<ConditionalTable> {
    c.require_all_settings()?;
    let mut probs = [[0.0; 4]; 4];
    for (s, row) in c.as_array().iter().enumerate() {
        let n: u64 = row.iter().sum();
        for k in 0..4 {
            probs[s][k] = row[k] as f64 / n as f64;
        }
    }
    Ok(ConditionalTable { probs })
}

/// `E_xy = sum_ab a*b*P(a,b|x,y)` in setting order.
pub fn correlators(t: &ConditionalTable) -> [f64; 4] {
    t.probs.map(|row| row[0] - row[1] - row[2] + row[3])
}

/// Signed combination `-E00 + E01 + E10 + E11`.
pub fn signed_chsh(t: &ConditionalTable) -> f64 {
    let e = correlators(t);
    -e[0] + e[1] + e[2] + e[3]
}

pub fn chsh_score(t: &ConditionalTable) -> f64 {
    signed_chsh(t).abs()
}

/// Uniform-design win rate `1/2 + S/8`.
pub fn win_rate(s: f64) -> f64 {
    0.5 + s / 8.0
}

/// Inverse of [`win_rate`].
pub fn chsh_from_win_rate(omega: f64) -> f64 {
    8.0 * (omega - 0.5)
}

/// Sign pattern `g(0,0) = -1`, `g = +1` otherwise.
pub fn win_sign(x: usize, y: usize) -> i8 {
    if x == 0 && y == 0 {
        -1
    } else {
        1
    }
}

/// `sum_xy r_xy P(ab = g(x,y) | x, y)` with the fixed sign pattern.
pub fn win_rate_weighted(t: &ConditionalTable, d: &Design) -> f64 {
    SETTINGS
        .iter()
        .map(|&(x, y)| {
            let row = t.setting(x, y);
            let p_same = row[0] + row[3];
            let p_win = if win_sign(x, y) > 0 {
                p_same
            } else {
                1.0 - p_same
            };
            d.weight(x, y) * p_win
        })
        .sum()
}

/// CHSH score straight from counts; empty settings contribute a
/// zero correlator.
pub(crate) fn chsh_score_from_counts_lenient(c: &CountsTable) -> f64 {
    let mut e = [0.0; 4];
    for (s, row) in c.as_array().iter().enumerate() {
        let n: u64 = row.iter().sum();
        if n > 0 {
            e[s] = (row[0] as f64 + row[3] as f64 - row[1] as f64 - row[2] as f64) / n as f64;
        }
    }
    (-e[0] + e[1] + e[2] + e[3]).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wang_counts() -> CountsTable {
        reconstruct_counts(&RawPhaseMatrix::wang_phase_scan())
    }

    #[test]
    fn reconstruct_first_setting() {
        let c = wang_counts();
        assert_eq!(c.setting(0, 0), [77, 295, 371, 58]);
        assert_eq!(c.setting(0, 1), [271, 63, 107, 364]);
        assert_eq!(c.setting(1, 0), [331, 139, 129, 327]);
        assert_eq!(c.setting(1, 1), [333, 54, 97, 296]);
        assert_eq!(c.total(), 3312);
    }

    #[test]
    fn reconstruct_zero_and_indicator() {
        let zero = reconstruct_counts(&RawPhaseMatrix::new([[0; 4]; 4]));
        assert_eq!(zero.total(), 0);

        let mut n = [[0; 4]; 4];
        n[0][0] = 5;
        let c = reconstruct_counts(&RawPhaseMatrix::new(n));
        assert_eq!(c.get(0, 0, 1, 1), 5);
        assert_eq!(c.total(), 5);
    }

    #[test]
    fn reconstruct_is_a_bijection() {
        // Each raw entry gets a distinct value; all 16 must appear once.
        let mut n = [[0; 4]; 4];
        for (i, v) in n.iter_mut().flatten().enumerate() {
            *v = 1 << i;
        }
        let c = reconstruct_counts(&RawPhaseMatrix::new(n));
        let mut seen: Vec<u64> = c.as_array().iter().flatten().copied().collect();
        seen.sort_unstable();
        let expected: Vec<u64> = (0..16).map(|i| 1u64 << i).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn empirical_frequencies() {
        let t = empirical_table(&wang_counts()).unwrap();
        assert_eq!(t.setting(0, 0)[0], 77.0 / 801.0);
        assert_eq!(t.setting(0, 0)[3], 58.0 / 801.0);

        let uniform = CountsTable::new([[3; 4]; 4]).unwrap();
        let t = empirical_table(&uniform).unwrap();
        assert!(t.as_array().iter().flatten().all(|&p| p == 0.25));
    }

    #[test]
    fn empirical_rejects_empty_setting() {
        let mut counts = [[3; 4]; 4];
        counts[1] = [0; 4];
        let c = CountsTable::new(counts).unwrap();
        assert!(matches!(
            empirical_table(&c),
            Err(Error::ZeroSettingTotal { x: 0, y: 1 })
        ));
    }

    #[test]
    fn correlator_cases() {
        let mut probs = [[0.25; 4]; 4];
        probs[0] = [0.5, 0.0, 0.0, 0.5];
        let t = ConditionalTable::new(probs).unwrap();
        let e = correlators(&t);
        assert_eq!(e[0], 1.0);
        assert_eq!(e[1], 0.0);

        let t = empirical_table(&wang_counts()).unwrap();
        let e = correlators(&t);
        assert!((e[0] - (135.0 - 666.0) / 801.0).abs() < 1e-15);
    }

    #[test]
    fn chsh_score_cases() {
        let t = empirical_table(&wang_counts()).unwrap();
        assert!((chsh_score(&t) - 2.274548).abs() < 1e-5);
        assert_eq!(chsh_score(&ConditionalTable::uniform()), 0.0);

        let angles = Angles::wang();
        let e = angles.sums().map(f64::cos);
        let ideal = ConditionalTable::from_correlators(e).unwrap();
        assert!((chsh_score(&ideal) - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn win_rate_cases() {
        assert!((win_rate(2.274548) - 0.784318).abs() < 1e-6);
        assert_eq!(win_rate(2.0), 0.75);
        let tsirelson = 2.0 * 2f64.sqrt();
        assert!((win_rate(tsirelson) - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_matches_uniform_when_signed_sum_nonnegative() {
        let t = empirical_table(&wang_counts()).unwrap();
        assert!(signed_chsh(&t) > 0.0);
        let w = win_rate_weighted(&t, &Design::uniform());
        assert!((w - win_rate(chsh_score(&t))).abs() < 1e-14);
    }

    #[test]
    fn design_validation() {
        assert!(Design::new([0.5, 0.5, 0.1, 0.0], "bad").is_err());
        assert!(Design::new([-0.1, 0.5, 0.3, 0.3], "bad").is_err());
        let d = Design::parse("0.4,0.2,0.2,0.2").unwrap();
        assert_eq!(d.min_weight(), 0.2);
        assert!(Design::parse("0.5,0.5").is_err());
    }

    #[test]
    fn conditional_table_rejects_unnormalized() {
        let mut probs = [[0.25; 4]; 4];
        probs[2][0] = 0.26;
        assert!(ConditionalTable::new(probs).is_err());
        let t = ConditionalTable::renormalized(probs).unwrap();
        let sum: f64 = t.setting(1, 0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }
}
