use peelperc_web::{exploration_path, models, peel_law, theta_curve};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn peel_law_lists_cases_and_thresholds() {
    let v = parse(peel_law("tri2", 5));
    assert_eq!(v["cases"][0]["exact"], "2/3");
    assert_eq!(v["cases"].as_array().unwrap().len(), 11);
    let t = v["thresholds"].as_array().unwrap();
    assert_eq!(t.len(), 5);
    assert!(t
        .iter()
        .any(|r| r["model"] == "bond" && r["exact"] == "1/4"));
    let quad = parse(peel_law("quad", 3));
    assert!(quad["thresholds"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["exact"] == "unknown (open problem)"));
}

#[test]
fn errors_come_back_as_json() {
    assert!(parse(peel_law("hex", 3))["error"].is_string());
    let v = parse(exploration_path("quad", "site", 0.5, 100, 100, 1));
    assert!(v["error"].as_str().unwrap().contains("open problem"));
    assert!(parse(theta_curve(0.9, 0.5, 3, 10, 10, 1))["error"].is_string());
}

#[test]
fn path_is_deterministic_and_ends_correctly() {
    let a = exploration_path("tri2", "site", 0.5, 10_000, 1_000, 9);
    assert_eq!(a, exploration_path("tri2", "site", 0.5, 10_000, 1_000, 9));
    let v = parse(a);
    let s = v["s"].as_array().unwrap();
    assert_eq!(s[0], 1);
    assert_eq!(s.len() as u64 - 1, v["steps"].as_u64().unwrap());
    match v["status"].as_str().unwrap() {
        "absorbed_finite" => assert_eq!(s.last().unwrap(), 0),
        "escaped_supercritical" => assert!(s.last().unwrap().as_u64().unwrap() >= 1_000),
        other => assert_eq!(other, "running"),
    }
}

#[test]
fn theta_curve_tracks_exact_values() {
    let v = parse(theta_curve(0.5, 1.0, 3, 400, 200, 3));
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    assert_eq!(pts[2]["theta_exact"], 0.5);
    assert!(pts[0]["theta_mc"].as_f64().unwrap() < pts[2]["theta_mc"].as_f64().unwrap());
    assert_eq!(parse(models()).as_array().unwrap().len(), 14);
}
