mod common;

use chsh_mdl::fit::{deterministic_table, fit_model, gain_from_fits, FitConfig, ModelKind};
use chsh_mdl::tables::{
    chsh_score, empirical_table, win_rate_weighted, ConditionalTable, CountsTable, Design,
};
use chsh_mdl::witness::{
    bernoulli_kl_bits, chsh_certificate, hoeffding_certificate, local_benchmark, BinaryGame,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn design_strategy() -> impl Strategy<Value = Design> {
    prop::array::uniform4(0.05f64..1.0).prop_map(|w| {
        let s: f64 = w.iter().sum();
        let mut r = w.map(|v| v / s);
        r[3] = 1.0 - r[0] - r[1] - r[2];
        Design::new(r, "random").unwrap()
    })
}

fn table_strategy() -> impl Strategy<Value = ConditionalTable> {
    prop::array::uniform4(prop::array::uniform4(0.01f64..1.0))
        .prop_map(|raw| ConditionalTable::renormalized(raw).unwrap())
}

fn counts_strategy() -> impl Strategy<Value = CountsTable> {
    prop::array::uniform4(prop::array::uniform4(0u64..40))
        .prop_filter("every setting observed", |c| {
            c.iter().all(|r| r.iter().sum::<u64>() > 0)
        })
        .prop_map(CountsTable::from_array)
}

/// Design-weighted KL divergence between conditional tables, in bits.
fn table_kl_bits(p: &ConditionalTable, q: &ConditionalTable, d: &Design) -> f64 {
    let mut total = 0.0;
    for s in 0..4 {
        let r = d.weights()[s];
        for k in 0..4 {
            let (pp, qq) = (p.as_array()[s][k], q.as_array()[s][k]);
            if pp > 0.0 {
                total += r * pp * (pp / qq).log2();
            }
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn witness_is_monotone_in_win_rate(d in design_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let dl = chsh_certificate(lo, &d).unwrap().delta_bits;
        let dh = chsh_certificate(hi, &d).unwrap().delta_bits;
        prop_assert!(dl <= dh + 1e-15);
        if lo <= local_benchmark(&d) {
            prop_assert_eq!(dl, 0.0);
        }
    }

    #[test]
    fn witness_never_exceeds_full_table_divergence(
        p in table_strategy(),
        w in prop::array::uniform16(0.01f64..1.0),
        d in design_strategy(),
    ) {
        let total: f64 = w.iter().sum();
        let mut mix = [[0.0; 4]; 4];
        for (lambda, wl) in w.iter().enumerate() {
            let t = deterministic_table(lambda);
            for (row, t_row) in mix.iter_mut().zip(t.as_array()) {
                for (m, p) in row.iter_mut().zip(t_row) {
                    *m += wl / total * p;
                }
            }
        }
        let q = ConditionalTable::renormalized(mix).unwrap();
        let omega = win_rate_weighted(&p, &d);
        let delta = chsh_certificate(omega, &d).unwrap().delta_bits;
        prop_assert!(table_kl_bits(&p, &q, &d) >= delta - 1e-12);
    }

    #[test]
    fn skewed_designs_weaken_the_witness(omega in 0.5f64..1.0, d in design_strategy()) {
        let uniform = chsh_certificate(omega, &Design::uniform()).unwrap().delta_bits;
        let skewed = chsh_certificate(omega, &d).unwrap().delta_bits;
        prop_assert!(skewed <= uniform + 1e-15);
    }

    #[test]
    fn hoeffding_bound_is_below_point_estimate(
        omega in 0.5f64..1.0,
        n in 1u64..100_000,
        alpha in 0.001f64..0.5,
    ) {
        let d = Design::uniform();
        let cert = hoeffding_certificate(omega, n, alpha, &d).unwrap();
        prop_assert!(cert.omega_lower.unwrap() <= omega.max(cert.omega_loc));
        prop_assert!(cert.delta_lower_bits.unwrap() <= cert.delta_bits);
        let more = hoeffding_certificate(omega, n * 2, alpha, &d).unwrap();
        prop_assert!(more.delta_lower_bits.unwrap() >= cert.delta_lower_bits.unwrap() - 1e-15);
    }

    #[test]
    fn chsh_local_value_is_one_minus_min_weight(d in design_strategy()) {
        let game = BinaryGame::chsh(&d).unwrap();
        let min = d.weights().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((game.local_value() - (1.0 - min)).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn chsh_local_value_exact_on_dyadic_designs(k in prop::array::uniform3(1u32..20)) {
        let r = [k[0] as f64 / 64.0, k[1] as f64 / 64.0, k[2] as f64 / 64.0,
            (64 - k[0] - k[1] - k[2]) as f64 / 64.0];
        let d = Design::new(r, "dyadic").unwrap();
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(BinaryGame::chsh(&d).unwrap().local_value(), 1.0 - min);
    }

    #[test]
    fn s_is_invariant_under_output_relabeling(t in table_strategy()) {
        let s = chsh_score(&t);
        prop_assert!((chsh_score(&t.flip_outputs()) - s).abs() < 1e-12);
        prop_assert!((chsh_score(&t.flip_alice()) - s).abs() < 1e-12);
    }

    #[test]
    fn kl_vanishes_at_the_benchmark(q in 0.01f64..0.99) {
        prop_assert_eq!(bernoulli_kl_bits(q, q).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn full_table_gain_dominates_witness(c in counts_strategy()) {
        let cfg = FitConfig::default();
        let local = fit_model(ModelKind::Local, &c, &cfg).unwrap();
        let sat = fit_model(ModelKind::Saturated, &c, &cfg).unwrap();
        let gain = gain_from_fits(&local, &sat, c.total());
        // Empirical design: every trial is weighted by its observed setting.
        let d = Design::empirical(&c).unwrap();
        let (oriented, _) = empirical_table(&c).unwrap().oriented();
        let omega = win_rate_weighted(&oriented, &d);
        let delta = chsh_certificate(omega, &d).unwrap().delta_bits;
        prop_assert!(gain >= delta - 1e-9, "gain {gain} < witness {delta}");
    }

    #[test]
    fn nested_classes_are_ordered(c in counts_strategy()) {
        let cfg = FitConfig::default();
        let nll = |k| fit_model(k, &c, &cfg).unwrap().neg_log2_lik;
        let (q2, q4, l, ns, sat) = (
            nll(ModelKind::Q2), nll(ModelKind::Q4), nll(ModelKind::Local),
            nll(ModelKind::NoSig), nll(ModelKind::Saturated),
        );
        let tol = 1e-5;
        prop_assert!(sat <= ns + tol);
        prop_assert!(ns <= l + tol);
        prop_assert!(ns <= q4 + tol);
        prop_assert!(q4 <= q2 + tol);
    }
}

#[test]
fn deterministic_strategies_are_vertices() {
    for lambda in 0..16 {
        let t = deterministic_table(lambda);
        for row in t.as_array() {
            assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
        }
        assert!(chsh_score(&t) <= 2.0 + 1e-12);
    }
}

#[test]
fn hoeffding_coverage_at_five_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let table = chsh_mdl::fit::q2_table(0.9, 0.0, &chsh_mdl::tables::Angles::wang()).unwrap();
    let coverage = common::hoeffding_coverage(&table, 400, 0.05, 500, &mut rng);
    assert!(coverage >= 0.94, "coverage {coverage}");
}
