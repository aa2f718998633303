use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skypattern_core::pattern::{accumulate, apply_min_count, GainAccumulator, GainObservation};

fn observation() -> impl Strategy<Value = GainObservation> {
    (0.0f64..360.0, -90.0f64..=90.0, -40.0f64..20.0).prop_map(|(phi_u, theta_u, gain_sample)| {
        GainObservation {
            phi_u,
            theta_u,
            gain_sample,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn permutation_invariant(obs in prop::collection::vec(observation(), 1..200), seed in any::<u64>()) {
        let mut shuffled = obs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = accumulate(&obs, 5.0, 2.0).unwrap();
        let b = accumulate(&shuffled, 5.0, 2.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn merged_halves_match_whole(obs in prop::collection::vec(observation(), 2..200), cut in 0.0f64..1.0) {
        let k = ((obs.len() as f64) * cut) as usize;
        let whole = accumulate(&obs, 10.0, 10.0).unwrap();
        let left = accumulate(&obs[..k], 10.0, 10.0).unwrap();
        let right = accumulate(&obs[k..], 10.0, 10.0).unwrap();
        let merged = left.merge_weighted(&right).unwrap();
        prop_assert_eq!(merged.counts(), whole.counts());
        for (m, w) in merged.gains().iter().zip(whole.gains()) {
            match (m, w) {
                (Some(m), Some(w)) => prop_assert!((m - w).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false, "presence differs"),
            }
        }
        for (m, w) in merged.variances().iter().zip(whole.variances()) {
            match (m, w) {
                (Some(m), Some(w)) => prop_assert!((m - w).abs() < 1e-7 * (1.0 + w.abs())),
                (None, None) => {}
                _ => prop_assert!(false, "variance presence differs"),
            }
        }

        let mut acc = GainAccumulator::new(10.0, 10.0).unwrap();
        acc.extend(&obs[..k]);
        let mut rest = GainAccumulator::new(10.0, 10.0).unwrap();
        rest.extend(&obs[k..]);
        acc.merge(rest).unwrap();
        prop_assert_eq!(acc.finish(), whole);
    }

    #[test]
    fn min_count_only_demotes(obs in prop::collection::vec(observation(), 1..300), k_min in 1u64..6) {
        let g = accumulate(&obs, 30.0, 30.0).unwrap();
        let f = apply_min_count(&g, k_min);
        for k in 0..g.len() {
            if g.counts()[k] >= k_min {
                prop_assert_eq!(f.gains()[k], g.gains()[k]);
                prop_assert_eq!(f.counts()[k], g.counts()[k]);
            } else {
                prop_assert_eq!(f.gains()[k], None);
            }
        }
    }
}

#[test]
fn noisy_bin_mean_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let truth = -4.25;
    let obs: Vec<GainObservation> = (0..10_000)
        .map(|k| GainObservation {
            phi_u: 181.0 + (k % 3) as f64,
            theta_u: 30.5,
            gain_sample: truth + noise.sample(&mut rng),
        })
        .collect();
    let g = accumulate(&obs, 5.0, 2.0).unwrap();
    let (i, j) = g.bin_of(181.0, 30.5);
    assert_eq!(g.count(i, j), 10_000);
    assert!((g.gain(i, j).unwrap() - truth).abs() < 0.1);
    let var = g.variance(i, j).unwrap();
    assert!((var - 4.0).abs() < 0.25, "sample variance {var}");
}
