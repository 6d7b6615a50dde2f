// Probe: run each controller open-loop from reset; report rotation and saturation.
use gaitlab::controllers::*;
use gaitlab::env::*;
use gaitlab::kinematics::*;
use gaitlab::rng::Rng;

fn main() {
    let model = HandModel::default_hand();
    let mut cfg = EnvConfig::default();
    let mut igm_base = IgmConfig::default();
    for arg in std::env::args().skip(1) {
        if let Some(v) = arg.strip_prefix("sides=") { 
            if let ObjectShape::Polygon { sides, .. } = &mut cfg.object { *sides = v.parse().unwrap(); }
        }
        if let Some(v) = arg.strip_prefix("dtheta=") { igm_base.delta_o[2] = v.parse().unwrap(); }
        if let Some(v) = arg.strip_prefix("alpha=") { igm_base.alpha = v.parse().unwrap(); }
        if let Some(v) = arg.strip_prefix("kc=") { cfg.contact_stiffness = v.parse().unwrap(); }
    }
    let igm_cfg = igm_base.clone();
    let cs_cfg = CsConfig::default();

    for kind in ["IGM", "CS", "FG"] {
        let mut total = 0.0;
        for seed in 0..3u64 {
            let mut env = Env::new(model.clone(), cfg.clone(), seed).unwrap();
            env.reset().unwrap();
            let mut rng = Rng::new(1000 + seed);
            let mut ret = 0.0;
            let mut plan: Option<CsPlan> = None;
            let mut h = 0usize;
            let mut limit_steps = 0;
            let mut min_contacts = 99;
            let mut steps = 0;
            for _t in 0..cfg.horizon {
                let contacts = reachable_contacts(&model, env.joints(), env.contacts());
                let center = [env.object().pose.x, env.object().pose.y];
                let q = env.joints().clone();
                let action = match kind {
                    "IGM" => {
                        let m = grasp_matrices(&model, &q, center, &contacts).unwrap();
                        igm_action(&contacts, &m, &igm_cfg).map(|o| o.dq).unwrap_or(vec![0.0; model.dof()])
                    }
                    "CS" => {
                        if plan.is_none() || h >= cs_cfg.h_steps {
                            plan = cs_begin(&model, &q, &contacts, &mut rng, &cs_cfg).ok();
                            h = 0;
                        }
                        h += 1;
                        plan.as_ref().map(|p| cs_action(p, h).unwrap().dq).unwrap_or(vec![0.0; model.dof()])
                    }
                    _ => {
                        if plan.is_none() || h >= cs_cfg.h_steps {
                            plan = cs_begin(&model, &q, &contacts, &mut rng, &cs_cfg).ok();
                            h = 0;
                        }
                        h += 1;
                        match &plan {
                            Some(p) => fg_action(&model, &q, center, &contacts, p, h, &igm_cfg).map(|o| o.dq).unwrap_or(vec![0.0; model.dof()]),
                            None => vec![0.0; model.dof()],
                        }
                    }
                };
                let r = env.step(&action).unwrap();
                ret += r.reward;
                if r.info.limits_hit { limit_steps += 1; }
                
                min_contacts = min_contacts.min(r.info.contact_count);
                steps += 1;
                if r.done { break; }
            }
            println!("{kind} seed {seed}: return {ret:.4} rad, steps {steps}, limit_steps {limit_steps}, min_contacts {min_contacts}, theta {:.3}", env.object().pose.theta);
            total += ret;
        }
        println!("{kind} mean return: {:.4}\n", total / 3.0);
    }
}
