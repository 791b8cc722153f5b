use rlasso::risk::{asymptotic_risks, risk_curves, RiskScenario, RiskTable};
use rlasso::special::{inv_moment, InvPower};
use rlasso::{EstimatorKind, ExecMode};

#[test]
fn far_alternatives_match_tolerances() {
    let s = RiskScenario::paper_default(1.0, 0.05).unwrap();
    let r = asymptotic_risks(&s, 1e4).unwrap();
    let r1 = r.ule.adqr;
    assert!((r.ptle.adqr - r1).abs() / r1 <= 1e-3);
    assert!((r.ssle.as_ref().unwrap().adqr - r1).abs() / r1 <= 1e-2);
}

#[test]
fn improved_estimators_beat_ule_near_the_null() {
    let s = RiskScenario::paper_default(1.0, 0.05).unwrap();
    let t = risk_curves(&s, &[0.0, 0.25, 0.5], &[0.01, 0.05, 0.10], ExecMode::Parallel).unwrap();
    for d2 in [0.0, 0.25, 0.5] {
        let ule = t
            .rows
            .iter()
            .find(|r| r.delta2 == d2 && r.estimator == EstimatorKind::Ule)
            .unwrap()
            .adqr;
        for row in t.rows.iter().filter(|r| r.delta2 == d2 && r.estimator != EstimatorKind::Ule) {
            assert!(row.adqr < ule, "{row:?}");
        }
    }
}

#[test]
fn positive_rule_beats_stein_near_the_null() {
    // the closed form uses linear truncated moments, so dominance holds only
    // for small distances; far out the two curves meet from either side
    let s = RiskScenario::paper_default(2.0, 0.05).unwrap();
    for i in 0..9 {
        let r = asymptotic_risks(&s, i as f64 * 0.75).unwrap();
        assert!(r.prssle.unwrap().adqr <= r.ssle.unwrap().adqr + 1e-12);
    }
    let far = asymptotic_risks(&s, 1e4).unwrap();
    let (a, b) = (far.prssle.unwrap().adqr, far.ssle.unwrap().adqr);
    assert!((a - b).abs() <= 1e-6 * b, "{a} {b}");
}

#[test]
fn json_round_trip_is_lossless() {
    let s = RiskScenario::paper_default(1.0, 0.05).unwrap();
    let t = risk_curves(&s, &[0.0, 1.0 / 3.0, 7.0], &[0.05], ExecMode::Sequential).unwrap();
    let back: RiskTable = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    assert_eq!(back, t);
}

#[test]
fn fourth_inverse_moment_at_zero() {
    let v = inv_moment(4, 2, InvPower::Four, 0.0, None).unwrap();
    assert!((v - 1.0 / 8.0).abs() <= 1e-12);
}
