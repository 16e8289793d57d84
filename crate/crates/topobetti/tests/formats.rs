use tempfile::tempdir;
use topobetti::format::{complex_to_json, load_network, network_from_json, network_to_json, save_network, stability_to_json};
use topobetti_core::arrangement::{signed_complex, BuildOptions};
use topobetti_core::constructions::{build_folding_layer, build_topo_network, CuttingSpec, FoldingSpec};
use topobetti_core::exact::BoxDomain;
use topobetti_core::stability::check_stability;

#[test]
fn network_file_round_trip() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("h.json");
    let net = build_folding_layer(4, 2).unwrap();
    save_network(&net, &path).unwrap();
    assert_eq!(load_network(&path).unwrap(), net);
    let offset = build_topo_network(&FoldingSpec::new(2, vec![4]).unwrap(), &CuttingSpec::new(2, vec![3]).unwrap(), true).unwrap();
    let text = network_to_json(&offset);
    assert!(text.contains("\"1/96\""));
    assert_eq!(network_from_json(&text).unwrap(), offset);
}

#[test]
fn shape_errors_name_the_layer() {
    let bad = r#"{"architecture":[1,2,1],"layers":[
        {"weights":[["1"],["2"]],"bias":["0","0"]},
        {"weights":[["1","1","1"]],"bias":["0"]}]}"#;
    let err = format!("{:#}", network_from_json(bad).unwrap_err());
    assert!(err.contains("layer 2"), "{err}");
    let short_bias = r#"{"architecture":[1,2,1],"layers":[
        {"weights":[["1"],["2"]],"bias":["0"]},
        {"weights":[["1","1"]],"bias":["0"]}]}"#;
    assert!(format!("{:#}", network_from_json(short_bias).unwrap_err()).contains("layer 1"));
    let arch = r#"{"architecture":[1,1],"layers":[
        {"weights":[["1"]],"bias":["0"]},{"weights":[["1"]],"bias":["0"]}]}"#;
    assert!(network_from_json(arch).is_err());
}

#[test]
fn non_canonical_rationals_are_rejected() {
    let text = r#"{"architecture":[1,1],"layers":[{"weights":[["2/4"]],"bias":["0"]}]}"#;
    let err = format!("{:#}", network_from_json(text).unwrap_err());
    assert!(err.contains("layer 1") && err.contains("2/4"), "{err}");
    for bad in ["1/-2", "0/5", "+1", "1.5", "3/1", " 1"] {
        let t = format!(r#"{{"architecture":[1,1],"layers":[{{"weights":[["1"]],"bias":["{bad}"]}}]}}"#);
        assert!(network_from_json(&t).is_err(), "{bad}");
    }
    assert!(network_from_json("{").is_err());
    assert!(network_from_json(r#"{"architecture":[1,1],"layers":[],"extra":1}"#).is_err());
}

#[test]
fn complex_and_stability_dumps() {
    let net = build_folding_layer(2, 1).unwrap();
    let sc = signed_complex(&net, &BoxDomain::unit(1), BuildOptions::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&complex_to_json(sc.complex())).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), sc.complex().len());
    assert_eq!(v["cells"][0]["vertices"][0][0], "0");
    assert!(v["faces"].as_array().unwrap().iter().all(|f| f.as_array().unwrap().len() == 2));
    let r = check_stability(&net, &BoxDomain::unit(1), BuildOptions::default()).unwrap();
    let s: serde_json::Value = serde_json::from_str(&stability_to_json(&r)).unwrap();
    for key in ["combinatorially_stable", "topologically_stable", "violations", "certified_delta", "trials", "seed"] {
        assert!(s.get(key).is_some(), "{key}");
    }
    assert!(s["certified_delta"].is_null());
}
