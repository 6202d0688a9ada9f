use fluc_core::agent::{batch_loss, DqnParams, Experience, UeAgent};
use fluc_core::nn::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn batch(r: &mut ChaCha8Rng, dim: usize, actions: usize, n: usize) -> Vec<Experience> {
    (0..n)
        .map(|_| Experience {
            state: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
            next_state: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
            action: r.random_range(0..actions),
            reward: r.random_range(0.0..1.0),
        })
        .collect()
}

fn with_bias_noise(m: &mut Mlp, r: &mut ChaCha8Rng) {
    let p: Vec<f64> = m
        .flat_params()
        .iter()
        .map(|v| v + r.random_range(-0.05..0.05))
        .collect();
    m.set_flat_params(&p).unwrap();
}

/// Central differences of `f` at `p`.
fn numeric_gradient(p: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..p.len())
        .map(|k| {
            let mut q = p.to_vec();
            q[k] = p[k] + h;
            let up = f(&q);
            q[k] = p[k] - h;
            (up - f(&q)) / (2.0 * h)
        })
        .collect()
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

#[test]
fn semi_gradient_matches_finite_differences_with_frozen_target() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let mut local = Mlp::random(&[5, 7, 9, 3], &mut r).unwrap();
        with_bias_noise(&mut local, &mut r);
        let frozen = local.clone();
        let b = batch(&mut r, 5, 3, 16);
        let mut agent = UeAgent::new(local.clone(), DqnParams::default(), rng(1), rng(2));
        let (loss, tape) = agent.loss_gradient(&b, false);
        assert!((loss - batch_loss(&local, &frozen, None, 0.5, &b)).abs() < 1e-9);
        let mut probe = local.clone();
        let numeric = numeric_gradient(&local.flat_params(), 1e-5, |p| {
            probe.set_flat_params(p).unwrap();
            batch_loss(&probe, &frozen, None, 0.5, &b)
        });
        assert!(relative_gap(&tape.flat(), &numeric) < 1e-5, "seed {seed}");
    }
}

#[test]
fn full_gradient_matches_finite_differences_through_the_target() {
    for seed in 10..15 {
        let mut r = rng(seed);
        let mut local = Mlp::random(&[4, 6, 6, 3], &mut r).unwrap();
        with_bias_noise(&mut local, &mut r);
        let b = batch(&mut r, 4, 3, 12);
        let params = DqnParams {
            semi_gradient: false,
            ..DqnParams::default()
        };
        let mut agent = UeAgent::new(local.clone(), params, rng(1), rng(2));
        let (_, tape) = agent.loss_gradient(&b, false);
        let mut probe = local.clone();
        let numeric = numeric_gradient(&local.flat_params(), 1e-5, |p| {
            probe.set_flat_params(p).unwrap();
            batch_loss(&probe, &probe, None, 0.5, &b)
        });
        assert!(relative_gap(&tape.flat(), &numeric) < 1e-5, "seed {seed}");
    }
}

#[test]
fn transfer_gradient_matches_finite_differences_with_fixed_expert() {
    let mut r = rng(21);
    let local = Mlp::random(&[4, 6, 5, 2], &mut r).unwrap();
    let expert = Mlp::random(&[4, 6, 5, 2], &mut r).unwrap();
    let b = batch(&mut r, 4, 2, 10);
    let mut agent = UeAgent::new(local.clone(), DqnParams::default(), rng(3), rng(4));
    agent.expert = Some(expert.clone());
    let (loss, tape) = agent.loss_gradient(&b, true);
    let frozen = local.clone();
    assert!((loss - batch_loss(&local, &frozen, Some(&expert), 0.5, &b)).abs() < 1e-9);
    let mut probe = local.clone();
    let numeric = numeric_gradient(&local.flat_params(), 1e-5, |p| {
        probe.set_flat_params(p).unwrap();
        batch_loss(&probe, &frozen, Some(&expert), 0.5, &b)
    });
    assert!(relative_gap(&tape.flat(), &numeric) < 1e-5);
}

/// Two states, one action each way: from 0 the only move leads to 1 with
/// reward 0, from 1 back to 0 with reward 1.
#[test]
fn two_state_chain_reaches_the_bellman_fixed_point() {
    // Q(0) = 0 + 0.5 Q(1), Q(1) = 1 + 0.5 Q(0)  =>  Q(0) = 2/3, Q(1) = 4/3.
    let oracle = [2.0 / 3.0, 4.0 / 3.0];
    let local = Mlp::random(&[2, 8, 8, 1], &mut rng(5)).unwrap();
    let mut agent = UeAgent::new(local, DqnParams::default(), rng(6), rng(7));
    let s = [vec![1.0, 0.0], vec![0.0, 1.0]];
    for t in 0..8000 {
        let from = t % 2;
        agent.observe(
            Experience {
                state: s[from].clone(),
                next_state: s[1 - from].clone(),
                action: 0,
                reward: from as f64,
            },
            true,
        );
        agent.train_local();
    }
    for (st, want) in s.iter().zip(oracle) {
        let q = agent.local_q(st)[0];
        assert!((q - want).abs() < 0.05, "{q} vs {want}");
    }
}

#[test]
fn combined_q_of_zero_expert_is_local_q() {
    let local = Mlp::random(&[3, 4, 4, 2], &mut rng(8)).unwrap();
    let mut agent = UeAgent::new(local.clone(), DqnParams::default(), rng(9), rng(10));
    agent.expert = Some(Mlp::zeros(&[3, 4, 4, 2]).unwrap());
    let s = [0.2, -0.4, 0.9];
    assert_eq!(agent.combined_q(&s), local.predict(&s).unwrap());
}
