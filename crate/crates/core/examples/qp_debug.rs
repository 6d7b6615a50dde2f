// quick probe of the stalled instance
use gaitlab::kinematics::{grasp_map, Contact};
use gaitlab::qp::*;
use gaitlab::rng::Rng;
use gaitlab::linalg::Mat;

fn random_instance(rng: &mut Rng) -> (Mat, Vec<[f64; 2]>) {
    let k = 3 + rng.uniform_index(3);
    let contacts: Vec<Contact> = (0..k)
        .map(|i| {
            let a = rng.uniform_range(0.0, std::f64::consts::TAU);
            let r = rng.uniform_range(0.03, 0.08);
            let na = a + std::f64::consts::PI + rng.uniform_range(-0.4, 0.4);
            Contact { finger: i, position: [r * a.cos(), r * a.sin()], normal: [na.cos(), na.sin()], force: 0.0 }
        })
        .collect();
    let normals = contacts.iter().map(|c| c.normal).collect();
    let g = grasp_map([0.0, 0.0], &contacts).unwrap();
    (g, normals)
}

fn main() {
    let mut rng = Rng::new(77);
    for trial in 0..50 {
        let (g, normals) = random_instance(&mut rng);
        match solve_stability_qp(&g, &normals) {
            Ok(sol) => {
                let resid = optimality_residual(&g, &normals, &sol, 1.0);
                if resid > 1e-6 { println!("trial {trial}: converged but residual {resid:.3e}"); }
            }
            Err(e) => println!("trial {trial}: k={} FAILED {e}", normals.len()),
        }
    }
    println!("done");
}
