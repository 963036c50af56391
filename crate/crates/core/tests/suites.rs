use granulesim_core::validation::{run_suite, Check, Suite};
use granulesim_core::PanelRule;

fn failures(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "{}/{}: {} vs {} ({})",
                c.suite, c.name, c.measured, c.threshold, c.detail
            )
        })
        .collect()
}

#[test]
fn all_suites_pass_with_trapezoid() {
    let checks = run_suite(Suite::All, PanelRule::TRAPEZOID);
    assert!(checks.len() >= 19);
    let bad = failures(&checks);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn perturbed_weights_fail_the_oracle_suite() {
    let rule = PanelRule { left: 0.6, right: 0.4 };
    let checks = run_suite(Suite::Oracle, rule);
    assert!(!failures(&checks).is_empty(), "{checks:#?}");
}

#[test]
fn perturbed_weights_fail_the_analytic_suite() {
    let rule = PanelRule {
        left: 0.52,
        right: 0.48,
    };
    let checks = run_suite(Suite::Analytic, rule);
    let bad = failures(&checks);
    assert!(!bad.is_empty(), "{checks:#?}");
}
