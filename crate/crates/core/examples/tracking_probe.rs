// Measure how well the object tracks commanded rotation under IGM.
use gaitlab::controllers::*;
use gaitlab::env::*;
use gaitlab::kinematics::*;

fn main() {
    let model = HandModel::default_hand();
    let cfg = EnvConfig { reset_jitter_pos: 0.0, reset_jitter_theta: 0.0, grasp_azimuth_offset: -1.0, ..EnvConfig::default() };
    let igm_cfg = IgmConfig::default();
    let mut env = Env::new(model.clone(), cfg.clone(), 0).unwrap();
    env.reset().unwrap();
    let mut commanded = 0.0;
    for t in 0..600 {
        let contacts = reachable_contacts(&model, env.joints(), env.contacts());
        let center = [env.object().pose.x, env.object().pose.y];
        let m = grasp_matrices(&model, env.joints(), center, &contacts).unwrap();
        let out = igm_action(&contacts, &m, &igm_cfg).unwrap();
        commanded += igm_cfg.delta_o[2];
        let r = env.step(&out.dq).unwrap();
        if t % 50 == 0 || r.done {
            let forces: Vec<String> = env.contacts().iter().map(|c| format!("{:.2}", c.force)).collect();
            let q = env.joints();
            let qt = env.setpoints();
            let lag: f64 = (0..model.dof()).map(|i| (qt[i]-q[i]).abs()).fold(0.0, f64::max);
            let raw_stable = stability_action(&m.j, &contacts.iter().map(|c| c.normal).collect::<Vec<_>>(),
                &contacts.iter().map(|c| c.force).collect::<Vec<f64>>(),
                &gaitlab::qp::solve_stability_qp(&m.g, &contacts.iter().map(|c| c.normal).collect::<Vec<_>>()).map(|s| s.c_star).unwrap_or(vec![0.0; contacts.len()]),
                igm_cfg.alpha, igm_cfg.damping_lambda);
            let raw_rot = rotation_action(&m.j, &m.g, igm_cfg.delta_o, igm_cfg.damping_lambda);
            let ns = raw_stable.iter().fold(0.0f64, |a,v| a.max(v.abs()));
            let nr = raw_rot.iter().fold(0.0f64, |a,v| a.max(v.abs()));
            println!("t={t:3} cmd={commanded:6.3} theta={:7.4} k={} F=[{}] lag={lag:.4} |stab|={ns:.4} |rot|={nr:.4} done={}",
                r.info.object_theta, r.info.contact_count, forces.join(","), r.done);
            if r.done { break; }
        }
    }
}
