use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use transit_core::survival::{concordance, km_estimate};

/// Harrell's C by enumerating every ordered pair.
fn brute_force(risk: &[f64], times: &[f64], events: &[bool]) -> (u64, u64, u64) {
    let (mut conc, mut disc, mut tied) = (0, 0, 0);
    for i in 0..risk.len() {
        for j in 0..risk.len() {
            if events[i] && times[i] < times[j] {
                if risk[i] > risk[j] {
                    conc += 1;
                } else if risk[i] < risk[j] {
                    disc += 1;
                } else {
                    tied += 1;
                }
            }
        }
    }
    (conc, disc, tied)
}

fn fixture(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let risk = (0..n).map(|_| f64::from(rng.random_range(0..8u8))).collect();
    let times = (0..n).map(|_| f64::from(rng.random_range(1..15u8))).collect();
    let events = (0..n).map(|_| rng.random_bool(0.6)).collect();
    (risk, times, events)
}

#[test]
fn c_index_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    while checked < 100 {
        let (risk, times, events) = fixture(&mut rng, 30);
        let (conc, disc, tied) = brute_force(&risk, &times, &events);
        if conc + disc + tied == 0 {
            continue;
        }
        let r = concordance(&risk, &times, &events).unwrap();
        assert_eq!((r.concordant, r.discordant, r.tied_risk), (conc, disc, tied));
        assert_eq!(r.c_index, (conc as f64 + 0.5 * tied as f64) / (conc + disc + tied) as f64);
        checked += 1;
    }
}

#[test]
fn product_limit_hand_example() {
    let curve = km_estimate(&[(1.0, true), (2.0, false), (3.0, true)]).unwrap();
    assert!((curve.at(1.0) - 2.0 / 3.0).abs() < 1e-15);
    assert!((curve.at(2.5) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(curve.at(0.5), 1.0);
    assert_eq!(curve.at(3.0), 0.0);
}

#[test]
fn product_limit_tracks_exponential_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lambda = 0.5;
    let exp = Exp::new(lambda).unwrap();
    let obs: Vec<(f64, bool)> = (0..1000).map(|_| (exp.sample(&mut rng), true)).collect();
    let curve = km_estimate(&obs).unwrap();
    let mut sup: f64 = 0.0;
    let mut previous = 1.0;
    for &(t, s) in &curve.points {
        let truth = (-lambda * t).exp();
        sup = sup.max((s - truth).abs()).max((previous - truth).abs());
        previous = s;
    }
    assert!(sup < 0.06, "sup-norm {sup}");
}

proptest! {
    #[test]
    fn shifting_risk_keeps_concordance(seed in any::<u64>(), shift in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (risk, times, mut events) = fixture(&mut rng, 25);
        events[0] = true;
        let base = concordance(&risk, &times, &events);
        let moved: Vec<f64> = risk.iter().map(|r| r + shift).collect();
        let cubed: Vec<f64> = risk.iter().map(|r| r.powi(3) * 2.0 + 1.0).collect();
        match base {
            Ok(b) => {
                prop_assert_eq!(concordance(&moved, &times, &events).unwrap(), b);
                prop_assert_eq!(concordance(&cubed, &times, &events).unwrap(), b);
            }
            Err(_) => prop_assert!(concordance(&moved, &times, &events).is_err()),
        }
    }

    #[test]
    fn uncensored_product_limit_is_one_minus_ecdf(times in prop::collection::vec(0.0f64..50.0, 1..60)) {
        let obs: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let curve = km_estimate(&obs).unwrap();
        let n = times.len() as f64;
        for &t in &times {
            let ecdf = times.iter().filter(|&&u| u <= t).count() as f64 / n;
            prop_assert!((curve.at(t) - (1.0 - ecdf)).abs() < 1e-12);
        }
        prop_assert!(curve.is_non_increasing());
    }
}
