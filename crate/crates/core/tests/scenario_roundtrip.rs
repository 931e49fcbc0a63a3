use fluid_mec::ippso::{run_ippso, IppsoConfig, RoundingMode};
use fluid_mec::scenario::{load_config, sample_scenario, ScenarioConfig};

#[test]
fn written_config_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    let cfg = ScenarioConfig {
        antenna_count: 8,
        user_count: 4,
        rounding_threshold: Some(0.5),
        rng_seed: 99,
        ..ScenarioConfig::default()
    };
    std::fs::write(&path, cfg.to_config_string()).unwrap();
    assert_eq!(load_config(&path).unwrap(), cfg);
    assert_eq!(load_config("default").unwrap(), ScenarioConfig::default());
}

#[test]
fn config_drives_solver_settings() {
    let cfg = ScenarioConfig::parse("rounding = threshold:0.3\nparticle_count = 7\nvelocity_clamp_m = 0.02\n").unwrap();
    let solver: IppsoConfig<f64> = cfg.ippso_config();
    assert_eq!(solver.rounding_mode, RoundingMode::Threshold(0.3));
    assert_eq!(solver.swarm.particle_count, 7);
    assert_eq!(solver.swarm.velocity_clamp, 0.02);
    let auto: IppsoConfig<f64> = ScenarioConfig::default().ippso_config();
    assert!((auto.swarm.velocity_clamp - 0.075).abs() < 1e-15);
}

#[test]
fn f32_and_f64_pipelines_agree_roughly() {
    let cfg = ScenarioConfig { pso_iterations: 0, outer_iterations: 1, ..ScenarioConfig::default() };
    let a = run_ippso(&sample_scenario::<f64>(&cfg, 5).unwrap(), &cfg.ippso_config()).unwrap();
    let b = run_ippso(&sample_scenario::<f32>(&cfg, 5).unwrap(), &cfg.ippso_config()).unwrap();
    assert!(((b.total_latency as f64) - a.total_latency).abs() <= 1e-4 * a.total_latency);
}
