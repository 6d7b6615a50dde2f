use gaitlab::checkpoint::load_checkpoint;
use gaitlab::config::RunConfig;
use gaitlab::env::*;
use gaitlab::kinematics::fingertip_positions;
use gaitlab::nn::mean_action;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.env.action_bound = 0.08;
    cfg.env.max_joint_speed = 3.0;
    cfg.env.horizon = 900;
    let (state, _) = load_checkpoint(std::path::Path::new("/tmp/glruns3/rl-v3/ckpt/latest.ckpt"), cfg.rl.clone()).unwrap();
    let mut env = Env::new(cfg.hand.clone(), cfg.env.clone(), 5).unwrap();
    let mut obs = env.reset().unwrap();
    for t in 0..40 {
        let tips_before = fingertip_positions(env.model(), env.joints()).unwrap();
        let pose_before = env.object().pose;
        let a = mean_action(&state.policy, &obs.flatten(), state.action_scale).unwrap();
        let r = env.step(&a).unwrap();
        if r.reward.abs() > 0.05 {
            println!("t={t} dθ={:+.3} loaded={} detected={} conv={}", r.reward, r.info.loaded_contact_count, r.info.contact_count, r.info.settle_converged);
            let shape = &env.object().shape;
            for (f, tip) in tips_before.iter().enumerate() {
                let qb = surface_query(shape, &pose_before, *tip);
                let qa = surface_query(shape, &env.object().pose, *tip);
                println!("   f{f}: pen_before={:+.4} pen_after={:+.4}", 0.012-qb.dist, 0.012-qa.dist);
            }
        }
        obs = r.observation;
        if r.done { break; }
    }
}
