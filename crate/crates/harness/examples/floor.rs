use hebb_envlab::{make_variation, random_policy_floor, TaskId, FLOOR_EPISODES, FLOOR_SEED};

fn main() {
    for task in TaskId::ALL {
        for id in 1..=5 {
            let spec = make_variation(task, id).unwrap();
            let f = random_policy_floor(&spec, FLOOR_EPISODES, FLOOR_SEED);
            println!(
                "{:<12} {:<18} mean {:>10.3} std {:>8.3}",
                task.to_string(),
                spec.label(),
                f.mean,
                f.std
            );
        }
    }
}
