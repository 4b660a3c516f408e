mod common;

use chsh_mdl::fit::{fit_local, fit_nosig, fit_q4, FitConfig, ModelParams};
use chsh_mdl::tables::SETTINGS;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn em_local_fit_matches_facet_barrier_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = FitConfig::default();
    for i in 0..60 {
        let c = common::random_counts(&mut rng, 0, 12);
        let em = fit_local(&c, &cfg).unwrap();
        let oracle = common::local_facet_oracle(&c);
        assert!(
            (em.neg_log2_lik - oracle).abs() < 1e-4,
            "table {i}: em {} oracle {} ({:?})",
            em.neg_log2_lik,
            oracle,
            c.as_array()
        );
    }
}

#[test]
fn nosig_fit_matches_direct_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = FitConfig::default();
    for i in 0..8 {
        let c = common::random_counts(&mut rng, 1, 40);
        let ns = fit_nosig(&c, &cfg).unwrap();
        assert!(ns.converged());
        let search = common::nosig_direct_search(&c, 6, &mut rng);
        // The search can only land above the optimum.
        assert!(
            ns.neg_log2_lik <= search + 1e-6 && search - ns.neg_log2_lik < 0.01,
            "table {i}: barrier {} search {search}",
            ns.neg_log2_lik
        );
    }
}

#[test]
fn q4_closed_form_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let c = common::random_counts(&mut rng, 0, 50);
        let fit = fit_q4(&c).unwrap();
        let ModelParams::Q4(p) = &fit.params else {
            panic!("wrong params")
        };
        for (s, &(x, y)) in SETTINGS.iter().enumerate() {
            let (same, diff) = c.same_diff(x, y);
            let e = common::q4_grid_oracle(same, diff);
            assert!((p.e[s] - e).abs() < 1e-6, "setting {s}: {} vs {e}", p.e[s]);
        }
    }
}

#[test]
fn local_oracle_agrees_with_chsh_bound_on_extreme_table() {
    // PR-box-like counts: the local optimum sits on a CHSH facet.
    let c = chsh_mdl::tables::CountsTable::new([
        [0, 50, 50, 0],
        [50, 0, 0, 50],
        [50, 0, 0, 50],
        [50, 0, 0, 50],
    ])
    .unwrap();
    let em = fit_local(&c, &FitConfig::default()).unwrap();
    let oracle = common::local_facet_oracle(&c);
    assert!(
        (em.neg_log2_lik - oracle).abs() < 1e-4,
        "{} {oracle}",
        em.neg_log2_lik
    );
}
