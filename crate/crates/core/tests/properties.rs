use gac_core::critic::{target_sync, ActionValue, CriticNetwork, TargetCritic};
use gac_core::envs::{make_env, ENV_NAMES};
use gac_core::gauss::{gauss_entropy, gauss_kl, isotropic_entropy, Gaussian};
use gac_core::guide::{guide_from_dual, taylor_at, DualProblem, TaylorModel};
use gac_core::linalg::{Cholesky, Matrix};
use gac_core::replay::{ReplayBuffer, Transition};
use gac_core::seeded_rng;
use gac_core::trainer::{base_entropy, kappa_schedule};
use proptest::prelude::*;
use rand::Rng;

fn spd(d: usize, entries: &[f64], floor: f64) -> Matrix {
    let b = Matrix::from_row_major(d, d, entries[..d * d].to_vec()).unwrap();
    let mut m = b.matmul(&b.transpose());
    m.add_diagonal(floor);
    m
}

fn gaussian(d: usize, mean: &[f64], entries: &[f64]) -> Gaussian {
    Gaussian::new(mean[..d].to_vec(), spd(d, entries, 0.1)).unwrap()
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        d in 1usize..=3,
        m1 in prop::collection::vec(-2.0f64..2.0, 3),
        m2 in prop::collection::vec(-2.0f64..2.0, 3),
        c1 in prop::collection::vec(-1.0f64..1.0, 9),
        c2 in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let p = gaussian(d, &m1, &c1);
        let q = gaussian(d, &m2, &c2);
        prop_assert!(gauss_kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(gauss_kl(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_follows_the_log_determinant(d in 1usize..=3, m in prop::collection::vec(-2.0f64..2.0, 3), c in prop::collection::vec(-1.0f64..1.0, 9)) {
        let p = gaussian(d, &m, &c);
        let log_det = Cholesky::new(p.cov()).unwrap().log_det();
        let expected = 0.5 * d as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln()) + 0.5 * log_det;
        prop_assert!((gauss_entropy(&p) - expected).abs() < 1e-12);
    }

    #[test]
    fn solved_guides_respect_both_constraints(
        d in 1usize..=2,
        phi in prop::collection::vec(-0.5f64..0.5, 2),
        c in prop::collection::vec(-0.8f64..0.8, 4),
        hc in prop::collection::vec(-1.0f64..1.0, 4),
        psi in prop::collection::vec(-1.0f64..1.0, 2),
        eps in 1e-3f64..0.1,
        drop in 0.01f64..2.0,
    ) {
        let pol = gaussian(d, &phi, &c);
        let tm = TaylorModel { h: spd(d, &hc, 0.2).scale(-1.0), psi: psi[..d].to_vec(), xi: 0.0, anchors: vec![phi[..d].to_vec()] };
        let kappa = pol.entropy() - drop;
        let sol = DualProblem::new(std::slice::from_ref(&tm), &[&phi[..d]], pol.cov(), eps, kappa).unwrap().solve().unwrap();
        prop_assert!(sol.converged);
        let guide = guide_from_dual(&tm, &pol, sol.eta, sol.omega).unwrap().gaussian().unwrap();
        prop_assert!(guide.cov().is_symmetric());
        prop_assert!(gauss_kl(&guide, &pol).unwrap() <= eps * (1.0 + 1e-3));
        prop_assert!(gauss_entropy(&guide) >= kappa - 1e-3);
    }

    #[test]
    fn kappa_never_drops_below_the_base(e in -10.0f64..10.0, d in 1usize..=4) {
        let e0 = base_entropy(d);
        prop_assert!(kappa_schedule(e, e0) >= e0);
        prop_assert!((base_entropy(d) - isotropic_entropy(d, 0.01)).abs() == 0.0);
    }

    #[test]
    fn target_sync_contracts(seed in any::<u64>(), tau in 0.01f64..1.0, rounds in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let net = CriticNetwork::new(2, 1, &[5, 4], &mut rng);
        let mut target = TargetCritic::from_network(&CriticNetwork::new(2, 1, &[5, 4], &mut rng));
        let gap = |t: &TargetCritic| t.mlp().params().iter().zip(net.mlp().params()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        let mut before = gap(&target);
        for _ in 0..rounds {
            target_sync(&net, &mut target, tau).unwrap();
            let after = gap(&target);
            prop_assert!(after <= (1.0 - tau) * before + 1e-15);
            prop_assert_eq!(target.mlp().sizes(), net.mlp().sizes());
            before = after;
        }
    }

    #[test]
    fn replay_never_exceeds_capacity(cap in 1usize..20, pushes in 0usize..60) {
        let mut buf = ReplayBuffer::new(cap, 1, 1);
        for i in 0..pushes {
            buf.push(Transition::new(vec![i as f64], vec![0.0], 0.0, vec![0.0], false)).unwrap();
            prop_assert!(buf.len() <= cap);
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        if pushes > 0 {
            let newest = (pushes - 1) as f64;
            prop_assert!(buf.iter().any(|t| t.state[0] == newest));
        }
    }

    #[test]
    fn taylor_model_reproduces_the_critic_at_its_anchor(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let critic = CriticNetwork::new(2, 2, &[6, 6], &mut rng);
        let s = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let a0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let tm = taylor_at(&critic, &s, &a0).unwrap();
        let q = critic.q_value(&s, &a0).unwrap();
        prop_assert!((tm.value(&a0) - q).abs() <= 1e-12 * (1.0 + q.abs()));
        let g = critic.q_grad_action(&s, &a0).unwrap();
        for (x, y) in tm.gradient(&a0).iter().zip(&g) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn environments_are_deterministic_given_seed_and_actions() {
    for name in ENV_NAMES {
        let run = || {
            let mut env = make_env(name).unwrap();
            let mut rng = seeded_rng(7);
            let mut trace = env.reset(11);
            for _ in 0..env.spec().max_steps {
                let a = env.spec().action_box.sample_uniform(&mut rng);
                let r = env.step(&a).unwrap();
                trace.extend(&r.next_state);
                trace.push(r.reward);
                if r.terminal {
                    break;
                }
            }
            trace
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
    }
}
