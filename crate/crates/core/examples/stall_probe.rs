use gaitlab::controllers::*;
use gaitlab::env::*;
use gaitlab::kinematics::*;

fn main() {
    let model = HandModel::default_hand();
    let cfg = EnvConfig { reset_jitter_pos: 0.0, reset_jitter_theta: 0.0, ..EnvConfig::default() };
    let igm_cfg = IgmConfig::default();
    let mut env = Env::new(model.clone(), cfg.clone(), 0).unwrap();
    env.reset().unwrap();
    for t in 0..200 {
        let contacts = reachable_contacts(&model, env.joints(), env.contacts());
        let center = [env.object().pose.x, env.object().pose.y];
        let m = grasp_matrices(&model, env.joints(), center, &contacts).unwrap();
        let out = igm_action(&contacts, &m, &igm_cfg).unwrap();
        let r = env.step(&out.dq).unwrap();
        if t >= 120 && t < 126 || t == 30 {
            let q = env.joints();
            let qt = env.setpoints();
            println!("t={t} theta={:.4} limits_hit={}", r.info.object_theta, r.info.limits_hit);
            println!("  q  = {:?}", q.0.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  qt = {:?}", qt.0.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  dq = {:?}", out.dq.iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
        }
    }
}
