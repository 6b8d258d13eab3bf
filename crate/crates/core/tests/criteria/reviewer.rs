use std::collections::BTreeMap;

use num_rational::Ratio;
use protoml_core::dataflow::build_dependency_graph;
use protoml_core::reviewer::{persona_scores, run_review, Catalog, Finding, Persona, Score, Severity};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use super::{common, Outcome};

pub fn catalog_with_personas(personas: serde_json::Value) -> Catalog {
    let mut doc: serde_json::Value = serde_json::from_str(Catalog::shipped_text()).unwrap();
    doc["personas"] = personas;
    Catalog::parse(&doc.to_string()).unwrap()
}

pub fn rule_ids() -> Vec<String> {
    Catalog::shipped().rules.iter().map(|r| r.rule_id.clone()).collect()
}

/// `round_half_up(1000 × passed / total)` over integer weights.
pub fn oracle_tenths(weights: &[(String, i128)], passed: &BTreeMap<String, bool>) -> u32 {
    let total: i128 = weights.iter().map(|w| w.1).sum();
    if total == 0 {
        return 1000;
    }
    let got: i128 = weights.iter().filter(|(id, _)| passed[id]).map(|w| w.1).sum();
    ((2000 * got + total) / (2 * total)) as u32
}

pub fn finding(rule_id: &str, passed: bool) -> Finding {
    Finding {
        rule_id: rule_id.into(),
        title: rule_id.into(),
        severity: Severity::Warning,
        passed,
        locations: Vec::new(),
        message: String::new(),
    }
}

/// A persona weighting all eight rules equally scores exactly 87.5 on the fixture failing one rule.
pub fn uniform_seven_of_eight() -> Outcome {
    let uniform: serde_json::Map<String, serde_json::Value> = rule_ids().into_iter().map(|id| (id, json!(1))).collect();
    let catalog = catalog_with_personas(json!([
        {"persona_id": "uniform", "display_name": "Uniform", "weights": uniform},
        {"persona_id": "desc-only", "display_name": "Description only", "weights": {"R-DESC": 1}},
    ]));
    let nb = common::fixture("seven_of_eight.ipynb");
    let report = run_review(&nb, &catalog, &build_dependency_graph(&nb));
    let failed: Vec<&str> = report.findings.iter().filter(|f| !f.passed).map(|f| f.rule_id.as_str()).collect();
    ensure_eq!(failed, ["R-DESC"], "failed rules");
    ensure_eq!(report.findings.len(), 8, "findings");
    ensure_eq!(report.persona_scores["uniform"], Score::from_tenths(875), "uniform score");
    ensure_eq!(report.persona_scores["uniform"].as_f64(), 87.5, "uniform score as number");
    ensure_eq!(report.persona_scores["desc-only"].as_f64(), 0.0, "desc-only score");
    ensure_eq!(report.to_json_value()["persona_scores"]["uniform"], json!(87.5), "serialized score");
    Ok("uniform persona 87.5 exactly".into())
}

/// Scores match an integer oracle and flipping a failure to a pass never lowers one.
pub fn monotonicity(reports: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(200);
    let ids = rule_ids();
    let shipped = Catalog::shipped().personas;
    let mut flips = 0;
    for report_no in 0..reports {
        let mut personas: Vec<Persona> = Vec::new();
        let mut integer_weights = Vec::new();
        for p in 0..4 {
            let weights: Vec<(String, i128)> = ids.iter().map(|id| (id.clone(), rng.gen_range(0..5))).collect();
            personas.push(Persona {
                persona_id: format!("p{p}"),
                display_name: format!("P{p}"),
                weights: weights.iter().map(|(id, w)| (id.clone(), Ratio::from_integer(*w))).collect(),
            });
            integer_weights.push(weights);
        }
        personas.extend(shipped.iter().cloned());
        let passed: BTreeMap<String, bool> = ids.iter().map(|id| (id.clone(), rng.gen_bool(0.5))).collect();
        let findings: Vec<Finding> = ids.iter().map(|id| finding(id, passed[id])).collect();
        let before = persona_scores(&personas, &findings);
        for (p, weights) in integer_weights.iter().enumerate() {
            ensure_eq!(before[&format!("p{p}")].tenths(), oracle_tenths(weights, &passed), "report {report_no}, p{p}");
        }
        for i in (0..findings.len()).filter(|&i| !findings[i].passed) {
            let mut flipped = findings.clone();
            flipped[i].passed = true;
            let after = persona_scores(&personas, &flipped);
            for (id, score) in &before {
                ensure!(after[id] >= *score, "report {report_no}, flipping {} lowered {id}", findings[i].rule_id);
            }
            flips += 1;
        }
    }
    Ok(format!("{reports} reports, {flips} flips"))
}
