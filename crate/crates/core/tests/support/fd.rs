// Central finite-difference checks of network gradients.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use riskgym::td3::{Mlp, OutputActivation, Tape, Td3Agent, Td3Config};
use riskgym::SimRng;

const H: f64 = 1e-6;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + H;
            let up = f(&probe);
            probe[i] = x[i] - H;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn random_vec(n: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn weighted_output(net: &Mlp, input: &[f64], weights: &[f64]) -> f64 {
    let batch = input.len() / net.input_dim();
    let mut tape = Tape::default();
    net.forward_batch(input, batch, &mut tape);
    tape.output().iter().zip(weights).map(|(y, w)| y * w).sum()
}

/// Worst of the parameter- and input-gradient errors of a random network.
pub fn network_error(dims: &[usize], activation: OutputActivation, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let net = Mlp::new(dims, activation, &mut rng).unwrap();
    let batch = 5;
    let input = random_vec(batch * dims[0], &mut rng);
    let upstream = random_vec(batch * dims[dims.len() - 1], &mut rng);

    let analytic = net.gradients(&input, &upstream).unwrap();
    let numeric = numeric_gradient(net.params(), |p| {
        let probe = Mlp::from_params(dims, activation, p.to_vec()).unwrap();
        weighted_output(&probe, &input, &upstream)
    });
    let param_err = rel_error(&analytic, &numeric);

    let mut tape = Tape::default();
    net.forward_batch(&input, batch, &mut tape);
    let mut input_grad = Vec::new();
    net.backward(&tape, &upstream, None, Some(&mut input_grad));
    let numeric = numeric_gradient(&input, |x| weighted_output(&net, x, &upstream));
    param_err.max(rel_error(&input_grad, &numeric))
}

/// Error of the actor update direction `∇θ −mean Q1(s, μθ(s))` on a
/// 4-dimensional state with 8-8 hidden layers.
pub fn policy_gradient_error(seed: u64) -> f64 {
    let cfg = Td3Config {
        hidden: vec![8, 8],
        ..Td3Config::default()
    };
    let mut rng = SimRng::seed_from_u64(seed);
    let mut agent = Td3Agent::new(4, cfg, &mut rng).unwrap();
    let batch = 6;
    let states = random_vec(batch * 4, &mut rng);
    let (analytic, objective) = agent.actor_gradient(&states, batch);

    let critic = agent.critic1.clone();
    let dims = agent.actor.dims().to_vec();
    let loss = |p: &[f64]| {
        let actor = Mlp::from_params(&dims, OutputActivation::Tanh, p.to_vec()).unwrap();
        let mut q = 0.0;
        for s in states.chunks_exact(4) {
            let mut input = s.to_vec();
            input.extend(actor.forward(s).unwrap());
            q += critic.forward(&input).unwrap()[0];
        }
        -q / batch as f64
    };
    assert!((loss(agent.actor.params()) + objective).abs() < 1e-12);
    rel_error(&analytic, &numeric_gradient(agent.actor.params(), loss))
}
