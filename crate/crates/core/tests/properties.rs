use fluc_core::agent::Indicators;
use fluc_core::compression::{effectiveness, SizePoint};
use fluc_core::federation::attention_weights;
use fluc_core::nn::{read_snapshot, write_snapshot, Mlp};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sizes() -> impl Strategy<Value = Vec<usize>> {
    (1usize..8, 2usize..12, 2usize..12, 1usize..5).prop_map(|(a, b, c, d)| vec![a, b, c, d])
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_keeps_the_function(
        sizes in sizes(),
        seed in any::<u64>(),
        layer in 1usize..=2,
        pick in any::<prop::sample::Index>(),
        delta in 0.01f64..0.99,
        x in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let mut m = Mlp::random(&sizes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let input = &x[..sizes[0]];
        let before = m.predict(input).unwrap();
        let neuron = pick.index(sizes[layer]);
        m.split_neuron(layer, neuron, delta).unwrap();
        prop_assert_eq!(m.hidden_width(layer).unwrap(), sizes[layer] + 1);
        prop_assert!(close(&m.predict(input).unwrap(), &before, 1e-12));
    }

    #[test]
    fn prune_removes_exactly_one_neuron(
        sizes in sizes(),
        seed in any::<u64>(),
        layer in 1usize..=2,
        pick in any::<prop::sample::Index>(),
    ) {
        let mut m = Mlp::random(&sizes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let total = m.hidden_neurons();
        let neuron = pick.index(sizes[layer]);
        let r = m.prune_neuron(layer, neuron);
        if sizes[layer] > 2 {
            prop_assert!(r.is_ok());
            prop_assert_eq!(m.hidden_neurons(), total - 1);
        } else {
            prop_assert!(r.is_err());
            prop_assert_eq!(m.hidden_neurons(), total);
        }
    }

    #[test]
    fn snapshots_round_trip_exactly(sizes in sizes(), seed in any::<u64>()) {
        let m = Mlp::random(&sizes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let back = read_snapshot(&write_snapshot(&m)).unwrap();
        prop_assert_eq!(back.flat_params(), m.flat_params());
        prop_assert_eq!(back.layer_sizes(), m.layer_sizes());
    }

    #[test]
    fn attention_is_a_distribution(
        raw in prop::collection::vec((0.0f64..2.0, 0.0f64..0.02, 0.0f64..1.0), 1..30),
    ) {
        let ind: Vec<Indicators> = raw
            .iter()
            .map(|&(r, e, a)| Indicators { mean_reward: r, experience: e, achievement: a })
            .collect();
        let w = attention_weights(&ind, 3.0);
        prop_assert_eq!(w.len(), ind.len());
        prop_assert!((w.iter().map(|a| a.weight).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|a| a.weight > 0.0));
        // Normalised indicators never exceed 1.
        let unit = |a: &fluc_core::federation::Attention| {
            let n = a.normalized;
            [n.mean_reward, n.experience, n.achievement].iter().all(|v| (0.0..=1.0).contains(v))
        };
        prop_assert!(w.iter().all(unit));
    }

    #[test]
    fn better_indicators_never_get_less_weight(
        a in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        bump in 0.0f64..1.0,
    ) {
        let lo = Indicators { mean_reward: a.0, experience: a.1, achievement: a.2 };
        let hi = Indicators { mean_reward: a.0 + bump, ..lo };
        let w = attention_weights(&[lo, hi], 3.0);
        prop_assert!(w[1].weight >= w[0].weight);
    }

    #[test]
    fn effectiveness_is_bounded_by_one(rewards in prop::collection::vec(0.01f64..1.0, 1..20)) {
        let history: Vec<SizePoint> = rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| SizePoint { n1: 2 + rewards.len() - i, n2: 2, reward })
            .collect();
        let curve = effectiveness(&history);
        prop_assert!(curve.iter().all(|p| p.effectiveness <= 1.0 && p.compression_rate >= 1.0));
        prop_assert!(curve.iter().any(|p| p.effectiveness == 1.0));
    }
}
