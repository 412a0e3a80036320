use commgraph::laws::{CommunityLaw, DensityLaw, SizeLaw};
use commgraph::rng::RandomState;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn any_law() -> impl Strategy<Value = CommunityLaw> {
    let size = prop_oneof![
        (0u64..200).prop_map(|value| SizeLaw::Point { value }),
        (1.1f64..3.0, 1u64..5, 5u64..300).prop_map(|(exponent, xmin, xmax)| SizeLaw::Zipf {
            exponent,
            xmin,
            xmax
        }),
        (0.5f64..50.0, 1u64..200).prop_map(|(mean, cap)| SizeLaw::Poisson { mean, cap }),
    ];
    let density = prop_oneof![
        (0.0f64..=1.0).prop_map(|value| DensityLaw::Point { value }),
        (0.0f64..0.5, 0.5f64..=1.0).prop_map(|(a, b)| DensityLaw::Uniform { a, b }),
    ];
    (size, density).prop_map(|(x, q)| CommunityLaw::iid(x, q))
}

proptest! {
    // Statistical assertions: a fixed generator seed keeps the run reproducible.
    #![proptest_config(ProptestConfig {
        cases: 24,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    })]

    #[test]
    fn truncated_sizes_stay_in_range(law in any_law(), n in 1u64..100, seed: u64) {
        let law = law.prepare().unwrap();
        let mut rng = RandomState::from_seed(seed);
        for i in 0..100_000 {
            let (x, q) = law.sample_pair(i, n, &mut rng);
            prop_assert!(x <= n);
            prop_assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn sampling_is_reproducible(law in any_law(), seed: u64) {
        let law = law.prepare().unwrap();
        let mut a = RandomState::from_seed(seed);
        let mut b = RandomState::from_seed(seed);
        for i in 0..1000 {
            prop_assert_eq!(law.sample_pair(i, 50, &mut a), law.sample_pair(i, 50, &mut b));
        }
    }

    #[test]
    fn uniform_density_mean(a in 0.0f64..0.9, width in 0.01f64..0.1, seed: u64) {
        let b = (a + width).min(1.0);
        let law = CommunityLaw::iid(SizeLaw::Point { value: 3 }, DensityLaw::Uniform { a, b })
            .prepare()
            .unwrap();
        let draws = 100_000u64;
        let mut rng = RandomState::from_seed(seed);
        let mean = (0..draws).map(|i| law.sample_pair(i, 10, &mut rng).1).sum::<f64>() / draws as f64;
        let tol = 3.0 * (b - a) / (12.0 * draws as f64).sqrt();
        prop_assert!((mean - (a + b) / 2.0).abs() <= tol, "{} vs {}", mean, (a + b) / 2.0);
    }
}
