use gaitlab::rl::*;
use gaitlab::rng::Rng;
use std::time::Instant;

fn main() {
    let obs_dim = 40;
    let act_dim = 8;
    for (hidden, batch) in [(vec![64usize, 64], 128usize), (vec![64, 64], 256), (vec![48, 48], 128)] {
        let cfg = RlConfig { hidden: hidden.clone(), batch_size: batch, ..RlConfig::default() };
        let mut rng = Rng::new(1);
        let mut state = RlState::new(obs_dim, act_dim, 0.05, cfg, &mut rng);
        let data: Vec<Transition> = (0..batch)
            .map(|_| Transition {
                obs: (0..obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
                action: (0..act_dim).map(|_| rng.uniform_range(-0.05, 0.05)).collect(),
                reward: rng.uniform_range(-1.0, 1.0),
                next_obs: (0..obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
                done: false,
                source: ActionSource::Learner,
            })
            .collect();
        let refs: Vec<&Transition> = data.iter().collect();
        // warmup
        for _ in 0..20 {
            state.critic_update(&refs, &mut rng).unwrap();
            state.actor_update(&refs, &mut rng).unwrap();
            state.soft_update(0.005);
        }
        let n = 300;
        let t0 = Instant::now();
        for _ in 0..n {
            state.critic_update(&refs, &mut rng).unwrap();
            state.actor_update(&refs, &mut rng).unwrap();
            state.soft_update(0.005);
        }
        let dt = t0.elapsed().as_secs_f64() / n as f64;
        let per_run_150k = dt * 150_000.0 / 60.0;
        let per_run_300k = dt * 300_000.0 / 60.0;
        println!("hidden {hidden:?} batch {batch}: {:.3} ms/grad-step | 150k grad steps: {per_run_150k:.1} min | 300k: {per_run_300k:.1} min", dt * 1e3);
    }
}
