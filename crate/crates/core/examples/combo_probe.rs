use gaitlab::controllers::*;
use gaitlab::env::*;
use gaitlab::kinematics::*;
use gaitlab::rng::Rng;

fn run_kind(model: &HandModel, cfg: &EnvConfig, igm_cfg: &IgmConfig, kind: &str, seed: u64) -> Option<(f64, usize, usize, f64)> {
    let cs_cfg = CsConfig::default();
    let mut env = Env::new(model.clone(), cfg.clone(), seed).ok()?;
    env.reset().ok()?;
    let mut rng = Rng::new(900 + seed);
    let mut ret = 0.0; let mut lim = 0usize; let mut steps = 0usize;
    let mut plan: Option<CsPlan> = None; let mut h = 0usize;
    let mut detach_sign_sum = 0.0;
    for _t in 0..cfg.horizon {
        let contacts = reachable_contacts(model, env.joints(), env.contacts());
        let center = [env.object().pose.x, env.object().pose.y];
        let action = match kind {
            "IGM" => {
                let m = grasp_matrices(model, env.joints(), center, &contacts).ok()?;
                igm_action(&contacts, &m, igm_cfg).map(|o| o.dq).unwrap_or(vec![0.0; model.dof()])
            }
            "CS" => {
                if plan.is_none() || h >= cs_cfg.h_steps {
                    plan = cs_begin(model, env.joints(), &contacts, &mut rng, &cs_cfg).ok();
                    h = 0;
                }
                h += 1;
                if let Some(p) = &plan {
                    if h == cs_cfg.h_steps / 4 {
                        detach_sign_sum += p.velocities[0].signum();
                    }
                    cs_action(p, h).unwrap().dq
                } else { vec![0.0; model.dof()] }
            }
            _ => {
                if plan.is_none() || h >= cs_cfg.h_steps {
                    plan = cs_begin(model, env.joints(), &contacts, &mut rng, &cs_cfg).ok();
                    h = 0;
                }
                h += 1;
                match &plan {
                    Some(p) => fg_action(model, env.joints(), center, &contacts, p, h, igm_cfg).map(|o| o.dq).unwrap_or(vec![0.0; model.dof()]),
                    None => vec![0.0; model.dof()],
                }
            }
        };
        let r = env.step(&action).ok()?;
        ret += r.reward;
        if r.info.limits_hit { lim += 1; }
        steps += 1;
        if r.done { break; }
    }
    Some((ret, lim, steps, detach_sign_sum))
}

fn main() {
    let model = HandModel::default_hand();
    for &(off, elbow) in &[(-0.8, 1.0), (-0.8, -1.0), (0.8, -1.0), (0.8, 1.0), (-0.6, 1.0), (-1.0, 1.0)] {
        let cfg = EnvConfig { grasp_azimuth_offset: off, grasp_elbow_sign: elbow, ..EnvConfig::default() };
        let igm = IgmConfig::default();
        let mut line = format!("off {off:+.1} elbow {elbow:+.0}:");
        let mut ok = true;
        for kind in ["IGM", "CS", "FG"] {
            let mut rets = vec![];
            let mut lims = 0;
            let mut signs = 0.0;
            for seed in 0..3 {
                match run_kind(&model, &cfg, &igm, kind, seed) {
                    Some((r, l, _s, ds)) => { rets.push(r); lims += l.min(1); signs += ds; }
                    None => { ok = false; }
                }
            }
            if !ok { break; }
            let mean = rets.iter().sum::<f64>() / rets.len().max(1) as f64;
            line += &format!("  {kind} {mean:+.3} lim{lims}{}", if kind == "CS" { format!(" sgn{signs:+.0}") } else { String::new() });
        }
        println!("{}", if ok { line } else { format!("off {off:+.1} elbow {elbow:+.0}: reset/run failed") });
    }
}
