use gac::config::{format_config, load_config, parse_config};
use gac::log::{load_log, CsvLog, HEADER};
use gac::tensor_io::{load_actor, load_critic, save_actor, save_critic};
use gac_core::actor::GaussianPolicy;
use gac_core::critic::{ActionValue, CriticNetwork};
use gac_core::envs::ActionBox;
use gac_core::guide::Expansion;
use gac_core::seeded_rng;
use gac_core::trainer::{LogRow, TrainConfig};

#[test]
fn config_survives_a_file_round_trip() {
    let cfg = TrainConfig {
        env: "reacher2d".into(),
        seed: 42,
        expansion: Expansion::Averaged(7),
        critic_hidden: vec![32, 16],
        actor_hidden: vec![],
        epsilon: 3.5e-4,
        state_noise: 0.01,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.txt");
    std::fs::write(&path, format_config(&cfg)).unwrap();
    let back = load_config(&path).unwrap();
    assert_eq!(format_config(&back), format_config(&cfg));
    assert_eq!(back.expansion, Expansion::Averaged(7));
    assert!(back.actor_hidden.is_empty());
}

#[test]
fn defaults_fill_unset_keys() {
    let cfg = parse_config("env = pendulum\n# comment\n\nmode = gac-1\n").unwrap();
    assert_eq!(cfg.expansion, Expansion::Sample);
    assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);
}

#[test]
fn saved_networks_reload_bit_for_bit() {
    let mut rng = seeded_rng(5);
    let actor = GaussianPolicy::new(3, &[6, 5], ActionBox::symmetric(2, 1.5), &mut rng);
    let critic = CriticNetwork::new(3, 2, &[7], &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let (ap, cp) = (dir.path().join("actor.txt"), dir.path().join("critic.txt"));
    save_actor(&ap, &actor).unwrap();
    save_critic(&cp, &critic).unwrap();
    let (a2, c2) = (load_actor(&ap).unwrap(), load_critic(&cp).unwrap());
    let s = [0.3, -0.7, 0.1];
    let (m1, m2) = (actor.policy_mean(&s).unwrap(), a2.policy_mean(&s).unwrap());
    assert!(m1.iter().zip(&m2).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(actor.covariance(), a2.covariance());
    assert_eq!(critic.q_value(&s, &[0.2, 0.4]).unwrap().to_bits(), c2.q_value(&s, &[0.2, 0.4]).unwrap().to_bits());
    assert_eq!(c2.action_dim(), 2);
}

#[test]
fn log_rows_reload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    let rows: Vec<LogRow> = (0..3)
        .map(|i| LogRow {
            step: 100 * i,
            test_return_mean: -10.0 / (i + 1) as f64,
            test_return_stderr: 0.5,
            critic_loss: f64::NAN,
            actor_loss: 1.0,
            eta: 0.1,
            omega: 0.2,
            kl_realized: 1e-4,
            entropy: 1.4,
            kappa: 1.3,
        })
        .collect();
    let mut log = CsvLog::new(std::fs::File::create(&path).unwrap()).unwrap();
    for r in &rows {
        log.write_row(r).unwrap();
    }
    drop(log);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with(HEADER));
    let back = load_log(&path).unwrap();
    assert_eq!(back.len(), 3);
    assert_eq!(back[2].step, 200);
    assert!(back[0].critic_loss.is_nan());
    assert!((back[1].test_return_mean + 5.0).abs() < 1e-7);
}
