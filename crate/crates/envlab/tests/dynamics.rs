use hebb_envlab::cartpole::{self, CartpolePhysics, CartpoleState};
use hebb_envlab::reacher::{ReacherPhysics, ReacherState};
use hebb_envlab::{make_variation, run_episode, CartpoleVariation, Env, EnvSpec, EnvState, TaskId, VariationParams};
use proptest::prelude::*;

fn cartpole_spec(id: usize) -> EnvSpec {
    make_variation(TaskId::CartpoleVar, id).unwrap()
}

fn cartpole_variation(id: usize) -> CartpoleVariation {
    match cartpole_spec(id).variation {
        VariationParams::CartpoleVar(v) => v,
        _ => unreachable!(),
    }
}

/// Cart-pole written as `M(q) q_acc = f(q, q_dot)` and solved by Cramer's
/// rule, then integrated with the same semi-implicit Euler scheme.
fn oracle_step(s: [f64; 4], force: f64, friction: f64, half_length: f64) -> [f64; 4] {
    let (mc, mp, g) = (1.0, 0.1, 9.8);
    let l = half_length;
    let h = 0.02 / cartpole::SUBSTEPS as f64;
    let [mut x, mut xd, mut th, mut thd] = s;
    for _ in 0..cartpole::SUBSTEPS {
        let a11 = mc + mp;
        let a12 = mp * l * th.cos();
        let a22 = 4.0 / 3.0 * mp * l * l;
        let b1 = force - friction * xd + mp * l * thd * thd * th.sin();
        let b2 = mp * g * l * th.sin();
        let det = a11 * a22 - a12 * a12;
        let xdd = (b1 * a22 - a12 * b2) / det;
        let thdd = (a11 * b2 - a12 * b1) / det;
        xd += h * xdd;
        thd += h * thdd;
        x += h * xd;
        th += h * thd;
    }
    [x, xd, th, thd]
}

#[test]
fn cartpole_step_matches_independent_integrator() {
    let states = [
        [0.0, 0.0, 0.0, 0.0],
        [0.3, -0.5, 0.1, 0.4],
        [-1.2, 1.5, -0.18, -1.1],
        [2.0, 0.2, 0.05, 2.0],
    ];
    for id in 1..=5 {
        let v = cartpole_variation(id);
        let p = CartpolePhysics::new(&v);
        for s in states {
            for a in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                let ours = p.step(&CartpoleState::from_array(s), a).to_array();
                let oracle = oracle_step(s, 10.0 * a + v.push, 1.0 * v.friction, 0.5 * v.pole_length);
                for (u, w) in ours.iter().zip(&oracle) {
                    assert!((u - w).abs() < 1e-12 * (1.0 + w.abs()), "{ours:?} vs {oracle:?}");
                }
            }
        }
    }
}

#[test]
fn cartpole_energy_is_conserved_without_friction() {
    let mut p = CartpolePhysics::new(&CartpoleVariation::DEFAULT);
    p.friction = 0.0;
    for theta0 in [0.05, 0.2, 1.0] {
        let mut s = CartpoleState {
            theta: theta0,
            ..CartpoleState::REST
        };
        let e0 = p.energy(&s);
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            s = p.step(&s, 0.0);
            worst = worst.max((p.energy(&s) - e0).abs() / e0.abs());
        }
        assert!(worst < 0.01, "theta0 {theta0}: drift {worst}");
    }
}

#[test]
fn push_variations_mirror_each_other() {
    let (west, east) = (cartpole_spec(4), cartpole_spec(5));
    let s = CartpoleState {
        x: 0.4,
        x_dot: -0.3,
        theta: 0.07,
        theta_dot: 0.5,
    };
    let mirror = CartpoleState::from_array(s.to_array().map(|v| -v));
    let mut a = Env::from_state(&west, EnvState::Cartpole(s));
    let mut b = Env::from_state(&east, EnvState::Cartpole(mirror));
    for k in 0..50 {
        let act = 0.8 * ((k as f64) * 0.3).sin();
        let ra = a.step(&[act]).unwrap();
        let rb = b.step(&[-act]).unwrap();
        assert_eq!(ra, rb);
        match (a.state(), b.state()) {
            (EnvState::Cartpole(p), EnvState::Cartpole(q)) => {
                assert_eq!(p.to_array(), q.to_array().map(|v| -v));
            }
            _ => unreachable!(),
        }
        if ra.done {
            break;
        }
    }
}

#[test]
fn zero_action_at_rest_stays_at_rest() {
    for id in [1, 2, 3] {
        let mut env = Env::from_state(&cartpole_spec(id), EnvState::Cartpole(CartpoleState::REST));
        for _ in 0..100 {
            env.step(&[0.0]).unwrap();
        }
        assert_eq!(env.state(), EnvState::Cartpole(CartpoleState::REST));
    }
    // a push accelerates the cart from rest at (push / total mass) initially
    let mut env = Env::from_state(&cartpole_spec(5), EnvState::Cartpole(CartpoleState::REST));
    env.step(&[0.0]).unwrap();
    match env.state() {
        EnvState::Cartpole(s) => assert!(s.x_dot > 0.0 && s.theta_dot < 0.0),
        _ => unreachable!(),
    }
}

#[test]
fn reacher_step_matches_closed_form() {
    // with constant torque the damped joint velocity has an exact recurrence:
    // v' = v + h (T - b v) / I
    for id in 1..=5 {
        let spec = make_variation(TaskId::ReacherVar, id).unwrap();
        let VariationParams::ReacherVar(v) = spec.variation else {
            unreachable!()
        };
        let p = ReacherPhysics::new(&v);
        let s0 = ReacherState {
            q: [0.2, -0.4],
            q_dot: [0.5, -1.0],
        };
        let act = [0.6, -0.9];
        let next = p.step(&s0, act);
        for j in 0..2 {
            let len = 0.1 * [v.link1, v.link2][j];
            let inertia = len * len / 3.0;
            let torque = 0.05 * v.motor_mask[j] * act[j];
            let h = 0.02 / 4.0;
            let (mut q, mut w) = (s0.q[j], s0.q_dot[j]);
            for _ in 0..4 {
                w += h * (torque - 0.02 * w) / inertia;
                q += h * w;
            }
            assert!((next.q[j] - q).abs() < 1e-14 && (next.q_dot[j] - w).abs() < 1e-13);
        }
    }
}

#[test]
fn reset_is_deterministic_and_zero_noise_is_exact() {
    for task in TaskId::ALL {
        for id in 1..=5 {
            let spec = make_variation(task, id).unwrap();
            assert_eq!(Env::reset(&spec, 7).state(), Env::reset(&spec, 7).state());
            assert_ne!(Env::reset(&spec, 7).state(), Env::reset(&spec, 8).state());
            let quiet = EnvSpec::new(spec.variation_id, &spec.name, spec.variation, spec.max_steps, 0.0).unwrap();
            let rest = match task {
                TaskId::CartpoleVar => EnvState::Cartpole(CartpoleState::REST),
                TaskId::ReacherVar => EnvState::Reacher(ReacherState::REST),
            };
            assert_eq!(Env::reset(&quiet, 7).state(), rest);
        }
    }
}

#[test]
fn reset_moments_match_uniform_perturbation() {
    let spec = cartpole_spec(1);
    let n = 10_000;
    let mut sum = [0.0; 4];
    for s in 0..n {
        let EnvState::Cartpole(c) = Env::reset(&spec, s).state() else {
            unreachable!()
        };
        for (acc, v) in sum.iter_mut().zip(c.to_array()) {
            *acc += v;
        }
    }
    // U(-a, a) has mean 0 and std a / sqrt(3)
    let se = spec.reset_noise / 3f64.sqrt() / (n as f64).sqrt();
    for acc in sum {
        assert!((acc / n as f64).abs() < 3.0 * se);
    }
}

#[test]
fn variation_one_is_unmodified_physics() {
    let p = CartpolePhysics::new(&cartpole_variation(1));
    assert_eq!(
        (p.friction, p.push, p.half_length),
        (cartpole::CART_FRICTION, 0.0, cartpole::HALF_LENGTH)
    );
}

#[test]
fn non_finite_action_aborts_with_floor() {
    for task in TaskId::ALL {
        let spec = make_variation(task, 1).unwrap();
        let mut calls = 0;
        let r = run_episode(&spec, 3, |_, act| {
            calls += 1;
            act.fill(if calls == 5 { f64::NAN } else { 0.0 });
            true
        });
        assert!(r.aborted && r.terminated_early);
        assert_eq!(r.fitness, spec.floor_fitness());
        assert_eq!(r.steps, 4);
    }
}

#[test]
fn episodes_respect_step_limits() {
    let spec = cartpole_spec(1);
    let r = run_episode(&spec, 0, |obs, act| {
        // a reasonable hand-tuned controller keeps the pole up for the whole episode
        act[0] = (2.0 * obs[2] + 0.5 * obs[3] + 0.1 * obs[0] + 0.3 * obs[1]).clamp(-1.0, 1.0);
        true
    });
    assert_eq!(r.steps, spec.max_steps);
    assert!(!r.terminated_early);
    assert!(r.fitness > 0.99 * spec.max_steps as f64);
    let mut env = Env::reset(&spec, 0);
    let passive = run_episode(&spec, 0, |_, act| {
        act[0] = 0.0;
        true
    });
    assert!(passive.terminated_early && passive.steps < spec.max_steps);
    while !env.is_done() {
        env.step(&[0.0]).unwrap();
    }
    assert!(env.step(&[0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rewards_are_bounded_and_replay_is_bitwise(
        task_idx in 0usize..2,
        id in 1usize..=5,
        seed in any::<u64>(),
        actions in prop::collection::vec(-3.0..3.0f64, 400),
    ) {
        let task = TaskId::ALL[task_idx];
        let spec = make_variation(task, id).unwrap();
        let play = || {
            let mut env = Env::reset(&spec, seed);
            let mut trace = Vec::new();
            let mut k = 0;
            while !env.is_done() {
                let a: Vec<f64> = (0..spec.act_dim).map(|j| actions[(k * spec.act_dim + j) % actions.len()]).collect();
                let out = env.step(&a).unwrap();
                trace.push(out.reward);
                k += 1;
            }
            (trace, env.state())
        };
        let (t1, s1) = play();
        let (t2, s2) = play();
        prop_assert_eq!(&t1, &t2);
        prop_assert_eq!(s1, s2);
        prop_assert!(t1.len() <= spec.max_steps);
        let bound = task.reward_bound();
        prop_assert!(t1.iter().all(|r| r.abs() <= bound));
        let total: f64 = t1.iter().sum();
        prop_assert!(total.abs() <= bound * spec.max_steps as f64);
    }
}
