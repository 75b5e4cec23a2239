mod common;

use common::{brute_force_wilcoxon_p, gaussian, random_deltas};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sewave::baselines::{garch_fit, garch_nll, iid_gaussian_nll, simulate_garch};
use sewave::stats::{block_bootstrap_ci, holm_bonferroni, ks_distance, tail_energy_distance, wilcoxon_signed_rank};
use sewave::util::norm_cdf;

#[test]
fn exact_wilcoxon_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let d = random_deltas(&mut rng, trial);
        let got = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!(got.method, "wilcoxon_signed_rank_exact");
        let want = brute_force_wilcoxon_p(&d);
        assert!((got.p_value - want).abs() < 1e-12, "{d:?}: {} vs {want}", got.p_value);
    }
}

#[test]
fn wilcoxon_drops_zeros_and_switches_to_normal() {
    let d = [0.0, 0.5, -0.2, 0.9, 1.1, 0.3, 0.0];
    let r = wilcoxon_signed_rank(&d).unwrap();
    assert_eq!(r.n, 5);
    assert!(wilcoxon_signed_rank(&[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]).is_err());

    let big: Vec<f64> = gaussian(40, 9).iter().map(|v| v + 0.1).collect();
    let r = wilcoxon_signed_rank(&big).unwrap();
    assert_eq!(r.method, "wilcoxon_signed_rank_normal");
    assert!(r.p_value > 0.0 && r.p_value <= 1.0);
}

/// With 12 blocks of 21 a single interval width has a relative spread near
/// 17%, so the check is on the mean width over replications.
#[test]
fn bootstrap_width_matches_gaussian_theory() {
    let n = 252;
    let theory = 2.0 * 1.96 / (n as f64).sqrt();
    let reps = 40;
    let mut total = 0.0;
    for seed in 0..reps {
        let x = gaussian(n, 100 + seed);
        let (lo, hi) = block_bootstrap_ci(&x, 21, 1000, 0.95, seed).unwrap();
        let m = x.iter().sum::<f64>() / n as f64;
        assert!(lo < m && m < hi);
        total += hi - lo;
    }
    let rel = total / reps as f64 / theory;
    assert!((0.75..=1.25).contains(&rel), "mean width ratio {rel}");
}

#[test]
fn ks_of_true_cdf_is_small() {
    let x = gaussian(10_000, 4);
    assert!(ks_distance(norm_cdf, &x).unwrap() <= 0.02);
    let shifted = ks_distance(|r| norm_cdf(r - 0.5), &x).unwrap();
    assert!(shifted > 0.15);
}

#[test]
fn tail_energy_null_and_alternative() {
    let model = gaussian(20_000, 5);
    let targets = gaussian(20_000, 6);
    let null = tail_energy_distance(&model, &targets, 1.0).unwrap();
    assert!(null.abs() <= 0.02, "null {null}");
    let wide: Vec<f64> = targets.iter().map(|v| 2.0 * v).collect();
    let alt = tail_energy_distance(&model, &wide, 1.0).unwrap();
    assert!(alt > 10.0 * null.abs().max(0.005), "alternative {alt}, null {null}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn holm_is_monotone_and_dominates(p in proptest::collection::vec(0.0f64..=1.0, 1..12), alpha in 0.01f64..0.2) {
        let h = holm_bonferroni(&p, alpha).unwrap();
        let m = p.len();
        for i in 0..m {
            prop_assert!(h.adjusted[i] >= p[i] && h.adjusted[i] <= 1.0);
            prop_assert_eq!(h.reject[i], h.adjusted[i] <= alpha);
            for j in 0..m {
                if p[i] <= p[j] {
                    prop_assert!(h.adjusted[i] <= h.adjusted[j]);
                }
            }
        }
        // step-down definition: reject the k smallest while p_(i) <= alpha / (m - i)
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.iter().enumerate().take_while(|(i, v)| **v * (m - i) as f64 <= alpha).count();
        prop_assert_eq!(h.reject.iter().filter(|r| **r).count(), k);
    }
}

#[test]
fn garch_recovers_simulated_parameters() {
    let x = simulate_garch(0.05, 0.1, 0.85, 10_000, 17).unwrap();
    let g = garch_fit(&x).unwrap();
    let p = g.params;
    assert!((p.omega - 0.05).abs() <= 0.05, "omega {}", p.omega);
    assert!((p.alpha - 0.1).abs() <= 0.05, "alpha {}", p.alpha);
    assert!((p.beta - 0.85).abs() <= 0.05, "beta {}", p.beta);
    assert!(p.persistence() < 1.0);
}

#[test]
fn garch_beats_iid_on_clustered_returns() {
    let x = simulate_garch(0.02, 0.15, 0.8, 4000, 2).unwrap();
    let (train, boundary) = (&x[..3000], 3000);
    let g = garch_fit(train).unwrap();
    let origins: Vec<usize> = (boundary..x.len() - 5).collect();
    for t in [1, 5] {
        let targets: Vec<f64> = origins.iter().map(|&o| x[o..o + t].iter().sum()).collect();
        let garch = garch_nll(&g, &x, &origins, t).unwrap();
        let iid = iid_gaussian_nll(train, &targets, t).unwrap();
        assert!(garch < iid, "T={t}: garch {garch} vs iid {iid}");
    }
}

#[test]
fn garch_on_white_noise_is_close_to_iid() {
    let x = gaussian(3000, 12);
    let g = garch_fit(&x[..2500]).unwrap();
    let origins: Vec<usize> = (2500..x.len() - 1).collect();
    let targets: Vec<f64> = origins.iter().map(|&o| x[o]).collect();
    let garch = garch_nll(&g, &x, &origins, 1).unwrap();
    let iid = iid_gaussian_nll(&x[..2500], &targets, 1).unwrap();
    assert!((garch - iid).abs() < 0.02, "garch {garch} vs iid {iid}");
}
