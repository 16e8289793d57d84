//! Versioned analysis report.

use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};
use topobetti_core::constructions::{euler_characteristic, BettiVector};
use topobetti_core::exact::BoxDomain;
use topobetti_core::homology::AnalysisReport;
use topobetti_core::network::ReluNetwork;
use topobetti_core::verify::Reconciliation;

use crate::format::{BoxJson, NetworkJson};

pub const SCHEMA: u32 = 1;

/// SHA-256 of the compact canonical network JSON, lowercase hex.
pub fn fingerprint(net: &ReluNetwork) -> String {
    let canonical = serde_json::to_string(&NetworkJson::from_network(net)).expect("network JSON serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkRef {
    pub architecture: Vec<usize>,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub big_m: u64,
    pub w: Vec<u64>,
    pub betti: Vec<usize>,
    pub euler: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Oracle {
    pub resolution: u64,
    pub beta0: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Checks {
    pub predicted_agree: Option<Vec<bool>>,
    pub oracle_agree: Option<bool>,
    pub serra_ok: bool,
    pub binomial_ok: Vec<bool>,
    pub cell_bound_ok: Vec<bool>,
    pub euler_ok: bool,
    pub all_agree: bool,
    pub disagreements: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub analyze_ms: u128,
    pub oracle_ms: Option<u128>,
}

impl Timings {
    pub fn new(analyze: Duration, oracle: Option<Duration>) -> Timings {
        Timings { analyze_ms: analyze.as_millis(), oracle_ms: oracle.map(|d| d.as_millis()) }
    }
}

/// Everything `analyze` writes. Big integers are decimal strings.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub network: NetworkRef,
    #[serde(rename = "box")]
    pub domain: BoxJson,
    pub betti: Vec<usize>,
    pub euler: i64,
    pub sublevel_euler: i64,
    pub empty_sublevel: bool,
    pub region_count: usize,
    pub serra_bound: String,
    pub binomial_bounds: Vec<String>,
    pub complement_cells: Vec<usize>,
    pub signed_f_vector: Vec<usize>,
    pub sublevel_f_vector: Vec<usize>,
    pub predicted: Option<Prediction>,
    pub oracle: Option<Oracle>,
    pub checks: Checks,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl Report {
    pub fn new(
        net: &ReluNetwork,
        domain: &BoxDomain,
        analysis: &AnalysisReport,
        predicted: Option<(u64, Vec<u64>, BettiVector)>,
        oracle: Option<Oracle>,
        rec: &Reconciliation,
    ) -> Report {
        Report {
            schema: SCHEMA,
            network: NetworkRef { architecture: net.architecture(), sha256: fingerprint(net) },
            domain: BoxJson::new(domain),
            betti: analysis.betti.values().to_vec(),
            euler: analysis.euler,
            sublevel_euler: analysis.sublevel_euler,
            empty_sublevel: analysis.sublevel_f_vector.iter().all(|&n| n == 0),
            region_count: analysis.region_count,
            serra_bound: analysis.serra_bound.to_string(),
            binomial_bounds: analysis.binomial_bounds.iter().map(ToString::to_string).collect(),
            complement_cells: analysis.complement_cells.clone(),
            signed_f_vector: analysis.signed_f_vector.clone(),
            sublevel_f_vector: analysis.sublevel_f_vector.clone(),
            predicted: predicted.map(|(big_m, w, b)| Prediction { big_m, w, euler: euler_characteristic(&b), betti: b.values().to_vec() }),
            oracle,
            checks: Checks {
                predicted_agree: rec.predicted_agree.clone(),
                oracle_agree: rec.oracle_agree,
                serra_ok: rec.serra_ok,
                binomial_ok: rec.binomial_ok.clone(),
                cell_bound_ok: rec.cell_bound_ok.clone(),
                euler_ok: rec.euler_ok,
                all_agree: rec.all_agree(),
                disagreements: rec.disagreements(),
            },
            timings: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report JSON serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use topobetti_core::constructions::build_folding_layer;

    #[test]
    fn fingerprint_is_stable_and_content_sensitive() {
        let a = build_folding_layer(2, 1).unwrap();
        let b = build_folding_layer(4, 1).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&a.clone()));
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
    }
}
