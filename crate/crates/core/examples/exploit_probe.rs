use gaitlab::checkpoint::load_checkpoint;
use gaitlab::config::RunConfig;
use gaitlab::env::*;
use gaitlab::nn::mean_action;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.env.action_bound = 0.08;
    cfg.env.max_joint_speed = 3.0;
    cfg.env.horizon = 900;
    let (state, _) = load_checkpoint(std::path::Path::new("/tmp/glruns3/rl-v3/ckpt/latest.ckpt"), cfg.rl.clone()).unwrap();
    let mut env = Env::new(cfg.hand.clone(), cfg.env.clone(), 5).unwrap();
    let mut obs = env.reset().unwrap();
    let mut total = 0.0;
    let mut big_steps = 0;
    let mut max_dtheta = 0.0f64;
    let mut hist = [0usize; 6]; // <0.01, <0.03, <0.06, <0.12, <0.3, >=0.3
    for t in 0..900 {
        let a = mean_action(&state.policy, &obs.flatten(), state.action_scale).unwrap();
        let r = env.step(&a).unwrap();
        total += r.reward;
        let d = r.reward.abs();
        max_dtheta = max_dtheta.max(d);
        let bin = if d < 0.01 {0} else if d < 0.03 {1} else if d < 0.06 {2} else if d < 0.12 {3} else if d < 0.3 {4} else {5};
        hist[bin] += 1;
        if d > 0.12 { big_steps += 1; if big_steps < 8 {
            println!("t={t} dtheta={:.3} contacts={} converged={} limits={}", r.reward, r.info.contact_count, r.info.settle_converged, r.info.limits_hit);
        }}
        obs = r.observation;
        if r.done { println!("done at {t}: {:?}", r.info.termination); break; }
    }
    println!("total={total:.2} max|dtheta|={max_dtheta:.3} hist(<.01,<.03,<.06,<.12,<.3,>=.3)={hist:?}");
}
