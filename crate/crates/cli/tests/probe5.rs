use mrfil_core::envs::{ContinuousEnv, EnvKind, EnvSession, rollout_task_return};

fn deadband(x: f64, width: f64) -> f64 {
    if x > width { x - width } else if x < -width { x + width } else { 0.0 }
}

#[test]
#[ignore]
fn probe_expert_variants() {
    let env = ContinuousEnv::new(EnvKind::PointMass2d);
    let eval = |name: &str, ctrl: &dyn Fn(&[f64]) -> Vec<f64>| {
        let mut total = 0.0;
        for seed in 0..100u64 {
            let mut s = EnvSession::new(env.clone(), seed);
            total += rollout_task_return(&mut s, |obs| ctrl(obs)).unwrap();
        }
        println!("{name}: {:.4}", total / 100.0);
    };
    let goal = [1.0, 1.0];
    eval("plain PD (4,4)", &|obs| {
        (0..2).map(|i| (4.0 * (goal[i] - obs[i]) - 4.0 * obs[2 + i]).clamp(-1.0, 1.0)).collect()
    });
    for db_pos in [0.05, 0.1, 0.15, 0.2] {
        for db_vel in [0.0, 0.05, 0.1] {
            let name = format!("deadband pos {db_pos} vel {db_vel} PD(4,4)");
            eval(&name, &move |obs| {
                (0..2).map(|i| {
                    let e = deadband(goal[i] - obs[i], db_pos);
                    let v = deadband(obs[2 + i], db_vel);
                    (4.0 * e - 4.0 * v).clamp(-1.0, 1.0)
                }).collect()
            });
        }
    }
    for (kp, kd) in [(6.0, 6.0), (8.0, 8.0), (6.0, 4.0)] {
        let name = format!("deadband 0.1/0.05 PD({kp},{kd})");
        eval(&name, &move |obs| {
            (0..2).map(|i| {
                let e = deadband(goal[i] - obs[i], 0.1);
                let v = deadband(obs[2 + i], 0.05);
                (kp * e - kd * v).clamp(-1.0, 1.0)
            }).collect()
        });
    }
}
