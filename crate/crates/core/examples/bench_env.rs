use gaitlab::env::*;
use gaitlab::kinematics::HandModel;
use gaitlab::rng::Rng;
use std::time::Instant;

fn main() {
    let mut env = Env::new(HandModel::default_hand(), EnvConfig::default(), 0).unwrap();
    env.reset().unwrap();
    let mut rng = Rng::new(4);
    let n = 20_000;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        let a: Vec<f64> = (0..8).map(|_| rng.uniform_range(-0.01, 0.01)).collect();
        let r = env.step(&a).unwrap();
        acc += r.reward;
        if r.done { env.reset().unwrap(); }
    }
    let dt = t0.elapsed().as_secs_f64() / n as f64;
    println!("env step: {:.1} us  (300k steps = {:.1} min; evals add {:.1} min)  [{acc:.3}]",
             dt * 1e6, dt * 300_000.0 / 60.0, dt * 360_000.0 / 60.0);
}
