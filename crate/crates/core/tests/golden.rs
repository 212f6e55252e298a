//! Regression of preset metrics against stored outputs.

use std::path::Path;

use smfsync::scenario::{self, MetricsReport};

fn rows(report: &MetricsReport) -> Vec<(String, String)> {
    report.to_rows()
}

fn check(name: &str, file: &str) {
    let golden = MetricsReport::from_csv(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file)).unwrap();
    let cfg = scenario::preset(name, 1).unwrap();
    let fresh = scenario::run_scenario(&cfg).unwrap().report;
    let (g, f) = (rows(&golden), rows(&fresh));
    assert_eq!(g.iter().map(|r| &r.0).collect::<Vec<_>>(), f.iter().map(|r| &r.0).collect::<Vec<_>>(), "metric names");
    for ((key, gv), (_, fv)) in g.iter().zip(&f) {
        match (gv.parse::<f64>(), fv.parse::<f64>()) {
            (Ok(a), Ok(b)) => assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12), "{name}.{key}: {a} vs {b}"),
            _ => assert_eq!(gv, fv, "{name}.{key}"),
        }
    }
}

#[test]
fn example1_metrics_match_golden() {
    check("example1", "example1_metrics.csv");
}

#[test]
fn example2_metrics_match_golden() {
    check("example2", "example2_metrics.csv");
}
