// Sweep hand geometry parameters; report IGM rotation before saturation.
use gaitlab::controllers::*;
use gaitlab::env::*;
use gaitlab::kinematics::*;

fn make_hand(tilt: f64) -> HandModel {
    let n = 4;
    let radius = 0.18;
    let fingers = (0..n)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            FingerModel {
                base: Pose2::new(radius * phi.cos(), radius * phi.sin(), phi + std::f64::consts::PI + tilt),
                link_lengths: vec![0.10, 0.08],
                lower_limits: vec![-1.2, -1.6],
                upper_limits: vec![1.2, 1.6],
            }
        })
        .collect();
    HandModel { fingers, fingertip_radius: 0.012 }
}

fn main() {
    for &tilt in &[0.0f64, 0.3, 0.5, 0.7, -0.3, -0.5, -0.7] {
        let model = make_hand(tilt);
        let cfg = EnvConfig { reset_jitter_pos: 0.0, reset_jitter_theta: 0.0, ..EnvConfig::default() };
        let igm_cfg = IgmConfig::default();
        let mut env = match Env::new(model.clone(), cfg.clone(), 0) { Ok(e) => e, Err(_) => { println!("tilt {tilt}: env invalid"); continue; } };
        if env.reset().is_err() { println!("tilt {tilt:+.1}: reset failed"); continue; }
        let q0 = env.joints().clone();
        let mut ret = 0.0;
        let mut sat_step = 0;
        let mut rot_raw_mean = 0.0;
        let mut steps = 0;
        for t in 0..600 {
            let contacts = reachable_contacts(&model, env.joints(), env.contacts());
            let center = [env.object().pose.x, env.object().pose.y];
            let m = match grasp_matrices(&model, env.joints(), center, &contacts) { Ok(m) => m, Err(_) => break };
            let out = match igm_action(&contacts, &m, &igm_cfg) { Ok(o) => o, Err(_) => break };
            let raw = rotation_action(&m.j, &m.g, igm_cfg.delta_o, igm_cfg.damping_lambda);
            rot_raw_mean += raw.iter().fold(0.0f64, |a,v| a.max(v.abs()));
            let r = env.step(&out.dq).unwrap();
            ret += r.reward;
            if r.info.limits_hit && sat_step == 0 { sat_step = t; }
            steps += 1;
            if r.done { break; }
        }
        println!("tilt {tilt:+.1}: q0[f0]=({:+.2},{:+.2}) return {ret:+.4} sat@{sat_step} steps {steps} |rot_raw| {:.3}",
                 q0[0], q0[1], rot_raw_mean / steps as f64);
    }
}
