use serde_json::Value;
use setkernel_web::{draw_json, rff_error_json, test_json};

#[test]
fn draw_has_both_samples() {
    let v: Value = serde_json::from_str(&draw_json(1.0, 1.5, 0.1, 12, 3).unwrap()).unwrap();
    assert_eq!(v["x"].as_array().unwrap().len(), 12);
    let first = &v["y"][0];
    assert_eq!(first["times"].as_array().unwrap().len(), first["values"].as_array().unwrap().len());
}

#[test]
fn test_returns_null_distribution() {
    let v: Value = serde_json::from_str(&test_json(1.0, 2.0, 0.1, 40, 99, true, 1).unwrap()).unwrap();
    assert_eq!(v["null_stats"].as_array().unwrap().len(), 99);
    let p = v["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    // Identical seeds reproduce the same output.
    assert_eq!(
        test_json(1.0, 2.0, 0.1, 40, 99, true, 1).unwrap(),
        test_json(1.0, 2.0, 0.1, 40, 99, true, 1).unwrap()
    );
}

#[test]
fn rff_error_shrinks_with_features() {
    let v: Value = serde_json::from_str(&rff_error_json(&[10, 1000], 1.0, 20, 5).unwrap()).unwrap();
    let e: Vec<f64> = v.as_array().unwrap().iter().map(|p| p["mean_abs_error"].as_f64().unwrap()).collect();
    assert!(e[1] < e[0]);
}

#[test]
fn bad_input_is_an_error() {
    assert!(draw_json(1.0, 1.0, 0.1, 1, 0).is_err());
    assert!(rff_error_json(&[0], 1.0, 2, 0).is_err());
}
