use mrfil_core::agent::{evaluate_policy, load_policy};
use mrfil_core::demos::DemoSet;
use mrfil_core::envs::{ContinuousEnv, EnvKind};
use std::path::Path;

#[test]
#[ignore]
fn probe_run1() {
    let dir = Path::new("/tmp/smoke/run1");
    let env = ContinuousEnv::new(EnvKind::PointMass2d);
    let demos = DemoSet::load(&dir.join("demos_train.csv")).unwrap();
    let bc = load_policy(dir, "bc").unwrap();
    let pre = load_policy(dir, "policy_pre").unwrap();
    let post = load_policy(dir, "policy").unwrap();

    let mut dist_pre = 0.0;
    let mut dist_post = 0.0;
    let mut n = 0.0;
    for t in demos.iter_transitions() {
        let mb = bc.mean(&t.state).unwrap();
        let mp = pre.mean(&t.state).unwrap();
        let mq = post.mean(&t.state).unwrap();
        dist_pre += mb.iter().zip(&mp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        dist_post += mb.iter().zip(&mq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        n += 1.0;
    }
    println!("mean |mu_pre - mu_bc| over demo states: {:.4}", dist_pre / n);
    println!("mean |mu_post - mu_bc| over demo states: {:.4}", dist_post / n);
    println!("pre log_std: {:?}", pre.log_std);
    println!("post log_std: {:?}", post.log_std);
    println!("bc   eval return: {:.4}", evaluate_policy(&env, &bc, 40, 99).unwrap());
    println!("pre  eval return: {:.4}", evaluate_policy(&env, &pre, 40, 99).unwrap());
    println!("post eval return: {:.4}", evaluate_policy(&env, &post, 40, 99).unwrap());
    // What do the policies do at the origin?
    println!("bc mean at origin: {:?}", bc.mean(&[0.0, 0.0, 0.0, 0.0]).unwrap());
    println!("pre mean at origin: {:?}", pre.mean(&[0.0, 0.0, 0.0, 0.0]).unwrap());
    println!("post mean at origin: {:?}", post.mean(&[0.0, 0.0, 0.0, 0.0]).unwrap());
}
