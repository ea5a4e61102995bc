use perfdiff_web::{parse_program, Demo};
use serde_json::Value;

const DEEP: &str = "int f(int n, int a[]) { int s = 0; for (int i = 0; i < n; i++) { for (int j = 0; j < n; j++) { s += a[j]; a[i] = s; } } return s; }";
const FLAT: &str = "int f(int n) { int s = n; s = s + 1; return s; }";

#[test]
fn parse_reports_costs() {
    let v: Value = serde_json::from_str(&parse_program(DEEP).unwrap()).unwrap();
    // Declaration outside, two statements at depth 2, the return.
    assert_eq!(v["cost"]["loop-depth"], 1.0 + 200.0 + 1.0);
    assert_eq!(v["cost"]["statement-count"], 4.0);
    assert_eq!(v["kinds"]["for_statement"], 2);
    let canonical = v["canonical"].as_str().unwrap();
    assert!(parse_program(canonical).is_ok());
    assert!(parse_program("int f( {").is_err());
}

#[test]
fn train_then_compare() {
    let mut demo = Demo::default();
    assert!(demo.compare(DEEP, FLAT).is_err());
    let v: Value = serde_json::from_str(&demo.train(1, 40, 3).unwrap()).unwrap();
    assert_eq!(v["log"].as_array().unwrap().len(), 3);
    let roc = v["roc"].as_array().unwrap();
    assert_eq!(roc[0], serde_json::json!([0.0, 0.0]));
    assert_eq!(roc[roc.len() - 1], serde_json::json!([1.0, 1.0]));
    let c: Value = serde_json::from_str(&demo.compare(DEEP, FLAT).unwrap()).unwrap();
    let p = c["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(demo.train(1, 5, 3).is_err());
}
