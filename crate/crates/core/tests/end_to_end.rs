use bl_lddmm::harness::run::{register, Inputs};
use bl_lddmm::harness::{PairKind, RunConfig, SynthConfig};
use bl_lddmm::objective::Variant;

fn translation(variant: Variant) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.input.synthetic = Some(SynthConfig {
        kind: PairKind::Translation,
        size: 64,
        ..Default::default()
    });
    cfg.domain.bounds = vec![16, 16];
    cfg.problem.variant = variant;
    cfg
}

#[test]
fn translation_pair_reaches_ten_percent_within_thirty_iterations() {
    let cfg = translation(Variant::Deformation);
    let inputs = Inputs::load(&cfg).unwrap();
    let (_, outcome, report) = register(&cfg, &inputs, |_| {}).unwrap();
    let hit = outcome.history.iter().find(|r| r.mse_rel < 10.0).map(|r| r.outer);
    assert!(matches!(hit, Some(i) if i <= 30), "{hit:?}, final {}", report.mse_rel);
    assert!(outcome.history.windows(2).all(|w| w[1].energy <= w[0].energy));
}

#[test]
fn translation_pair_with_state_objective_stays_diffeomorphic() {
    let cfg = translation(Variant::State);
    let inputs = Inputs::load(&cfg).unwrap();
    let (_, _, report) = register(&cfg, &inputs, |_| {}).unwrap();
    assert!(report.mse_rel < 10.0, "{}", report.mse_rel);
    assert!(report.jacobian_min > 0.0, "{}", report.jacobian_min);
}

#[test]
fn incompressible_run_keeps_unit_jacobian() {
    let mut cfg = RunConfig::default();
    cfg.input.synthetic = Some(SynthConfig {
        kind: PairKind::Swirl,
        size: 32,
        ..Default::default()
    });
    cfg.domain.bounds = vec![8, 8];
    cfg.problem.gamma = 1;
    cfg.optimizer.max_outer = 10;
    let inputs = Inputs::load(&cfg).unwrap();
    let (_, outcome, report) = register(&cfg, &inputs, |_| {}).unwrap();
    assert!(outcome.max_divergence <= 1e-10);
    assert!(report.jacobian_min >= 0.95 && report.jacobian_max <= 1.05, "{report:?}");
}
