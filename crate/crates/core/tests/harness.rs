use std::path::PathBuf;

use scatterkin::harness::{run_convergence, run_suite, Config};
use scatterkin::Error;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn quick() -> Config {
    Config::load(&config_path("quick.toml")).unwrap()
}

#[test]
fn shipped_configs_validate() {
    let c = Config::load(&config_path("convergence.toml")).unwrap();
    let d = Config::convergence_default();
    assert_eq!(c.alpha, d.alpha);
    assert_eq!(c.epsilons, d.epsilons);
    assert_eq!(c.t_end, d.t_end);
    assert_eq!(c.space, d.space);
    assert_eq!(c.initial, d.initial);
    quick();
}

#[test]
fn invalid_configs_are_rejected() {
    let text = std::fs::read_to_string(config_path("quick.toml")).unwrap();
    for (from, to) in [
        ("alpha = 1.0", "alpha = 0.0"),
        ("n_per_axis = 8", "n_per_axis = 7"),
        ("n_cells = 16", "n_cells = 0"),
        ("t_end = 0.02", "t_end = -1.0"),
    ] {
        assert!(text.contains(from), "{from}");
        let bad = text.replace(from, to);
        assert!(matches!(Config::from_toml(&bad), Err(Error::Config(_))), "{to}");
    }
}

#[test]
fn equilibrium_data_gives_a_degenerate_report() {
    let mut c = quick();
    c.initial.rho_modes.clear();
    c.initial.temp_modes.clear();
    let report = run_convergence(&c).unwrap();
    assert!(!report.partial);
    assert!(report.degenerate);
    assert!(report.fitted_order.is_none());
    assert!(report.rows.iter().all(|r| r.error.unwrap() <= 1e-6));
}

#[test]
fn sweep_is_complete_deterministic_and_first_order() {
    let c = quick();
    let a = run_convergence(&c).unwrap();
    let b = run_convergence(&c).unwrap();
    let eps: Vec<f64> = a.rows.iter().map(|r| r.epsilon).collect();
    assert_eq!(eps, [0.2, 0.1, 0.05]);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.error.unwrap().to_bits(), y.error.unwrap().to_bits());
    }
    assert!(a.fitted_order.unwrap() >= 0.8);
}

#[test]
fn halving_the_time_step_changes_errors_by_less_than_ten_percent() {
    let c = quick();
    let mut fine = c.clone();
    fine.kinetic.cfl = 0.5 * c.kinetic.cfl;
    let a = run_convergence(&c).unwrap();
    let b = run_convergence(&fine).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let (ex, ey) = (x.error.unwrap(), y.error.unwrap());
        assert!((ex - ey).abs() / ey < 0.1, "epsilon {}: {ex:e} vs {ey:e}", x.epsilon);
        assert!(y.steps > x.steps);
    }
}

#[test]
fn suite_passes_on_the_quick_grid() {
    let ledger = run_suite(&quick(), 7).unwrap();
    for c in &ledger.checks {
        assert!(c.passed, "{}", c.line());
    }
    assert!(ledger.checks.len() >= 15);
}

#[test]
fn doubling_the_cells_changes_errors_by_less_than_ten_percent() {
    let c = quick();
    let mut fine = c.clone();
    fine.space.n_cells *= 2;
    let a = run_convergence(&c).unwrap();
    let b = run_convergence(&fine).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let (ex, ey) = (x.error.unwrap(), y.error.unwrap());
        assert!((ex - ey).abs() / ey < 0.1, "epsilon {}: {ex:e} vs {ey:e}", x.epsilon);
    }
}
