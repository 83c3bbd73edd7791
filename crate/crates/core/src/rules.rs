//! Conjunctive threshold rules and sparse linear rule models.
//!
//! A rule is a product of indicator conditions `feature ≤ t` / `feature > t`
//! and evaluates to 0 or 1. A [`RuleModel`] scores a vertebra as
//! `intercept + Σ coefficient_k · rule_k(x)` and flags it positive when the
//! score exceeds the decision threshold.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{display_name, FeatureVector, RATIO_A0_P, REF_RATIO_C};

pub const MODEL_VERSION: u32 = 1;
pub const FEATURE_SCHEMA_ID: &str = "vcfscan-features-v1";

/// Threshold on `avg(A0)/avg(P)` in the published model.
pub const PUBLISHED_A0_P_THRESHOLD: f64 = 0.91;
/// Threshold on `avg(C)/avg(C̄)` in the published model.
pub const PUBLISHED_REF_C_THRESHOLD: f64 = 0.81;
pub const PUBLISHED_COEFFICIENTS: [f64; 3] = [1.49471001, 0.36870275, -4.10884354];

/// Anything that can look up a feature value by schema name.
pub trait FeatureSource {
    fn feature(&self, name: &str) -> Option<f64>;
}

impl FeatureSource for FeatureVector {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name)
    }
}

impl FeatureSource for BTreeMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<T: FeatureSource + ?Sized> FeatureSource for &T {
    fn feature(&self, name: &str) -> Option<f64> {
        (**self).feature(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
        }
    }

    pub fn negated(self) -> Comparator {
        match self {
            Comparator::Le => Comparator::Gt,
            Comparator::Gt => Comparator::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Le => "\u{2264}",
            Comparator::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub op: Comparator,
    pub threshold: f64,
}

impl Condition {
    pub fn new(feature: &str, op: Comparator, threshold: f64) -> Self {
        Condition { feature: feature.into(), op, threshold }
    }

    pub fn text(&self) -> String {
        format!("{} {} {}", display_name(&self.feature), self.op.symbol(), self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
}

impl Rule {
    pub fn new(conditions: Vec<Condition>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::InvalidConfig("a rule needs at least one condition".into()));
        }
        Ok(Rule { conditions })
    }

    pub fn human_text(&self) -> String {
        let parts: Vec<String> = self.conditions.iter().map(Condition::text).collect();
        parts.join(" AND ")
    }

    /// Canonical form: one condition per (feature, comparator), keeping the
    /// tightest threshold, sorted by feature then comparator.
    pub fn normalized(&self) -> Rule {
        let mut tight: BTreeMap<(String, Comparator), f64> = BTreeMap::new();
        for c in &self.conditions {
            tight
                .entry((c.feature.clone(), c.op))
                .and_modify(|t| {
                    *t = match c.op {
                        Comparator::Le => t.min(c.threshold),
                        Comparator::Gt => t.max(c.threshold),
                    }
                })
                .or_insert(c.threshold);
        }
        Rule {
            conditions: tight
                .into_iter()
                .map(|((feature, op), threshold)| Condition { feature, op, threshold })
                .collect(),
        }
    }
}

/// Indicator product of the rule's conditions. A referenced feature that is
/// missing is an error, never a silent 0.
pub fn evaluate_rule(rule: &Rule, x: &impl FeatureSource) -> Result<bool> {
    let mut all = true;
    for c in &rule.conditions {
        let v = x.feature(&c.feature).ok_or_else(|| Error::MissingFeature(c.feature.clone()))?;
        all &= c.op.holds(v, c.threshold);
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleModel {
    pub version: u32,
    pub feature_schema_id: String,
    pub rules: Vec<Rule>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub decision_threshold: f64,
}

impl RuleModel {
    pub fn new(rules: Vec<Rule>, coefficients: Vec<f64>, intercept: f64) -> Result<Self> {
        let m = RuleModel {
            version: MODEL_VERSION,
            feature_schema_id: FEATURE_SCHEMA_ID.into(),
            rules,
            coefficients,
            intercept,
            decision_threshold: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.len() != self.coefficients.len() {
            return Err(Error::InvalidConfig(format!(
                "{} rules but {} coefficients",
                self.rules.len(),
                self.coefficients.len()
            )));
        }
        if self.rules.iter().any(|r| r.conditions.is_empty()) {
            return Err(Error::InvalidConfig("rule without conditions".into()));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported model version {}", self.version)));
        }
        Ok(())
    }

    /// Distinct feature names referenced by the rules.
    pub fn features(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.rules.iter().flat_map(|r| r.conditions.iter().map(|c| c.feature.clone())).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// The fixed three-rule model: rules on `avg(A0)/avg(P)` at 0.91 and
/// `avg(C)/avg(C̄)` at 0.81 that partition the feature plane.
pub fn published_model() -> RuleModel {
    let a = |op| Condition::new(RATIO_A0_P, op, PUBLISHED_A0_P_THRESHOLD);
    let c = |op| Condition::new(REF_RATIO_C, op, PUBLISHED_REF_C_THRESHOLD);
    RuleModel {
        version: MODEL_VERSION,
        feature_schema_id: FEATURE_SCHEMA_ID.into(),
        rules: alloc::vec![
            Rule { conditions: alloc::vec![a(Comparator::Le)] },
            Rule { conditions: alloc::vec![a(Comparator::Gt), c(Comparator::Le)] },
            Rule { conditions: alloc::vec![a(Comparator::Gt), c(Comparator::Gt)] },
        ],
        coefficients: PUBLISHED_COEFFICIENTS.to_vec(),
        intercept: 0.0,
        decision_threshold: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedCondition {
    pub condition: Condition,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiredRule {
    /// Zero-based position in the model.
    pub index: usize,
    pub coefficient: f64,
    pub conditions: Vec<ObservedCondition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub positive: bool,
    pub decision_threshold: f64,
    pub intercept: f64,
    pub fired: Vec<FiredRule>,
}

pub fn predict(model: &RuleModel, x: &impl FeatureSource) -> Result<Prediction> {
    model.validate()?;
    let mut score = model.intercept;
    let mut fired = Vec::new();
    for (index, (rule, &coefficient)) in model.rules.iter().zip(&model.coefficients).enumerate() {
        if evaluate_rule(rule, x)? {
            score += coefficient;
            let conditions = rule
                .conditions
                .iter()
                .map(|c| ObservedCondition {
                    condition: c.clone(),
                    value: x.feature(&c.feature).expect("checked by evaluate_rule"),
                })
                .collect();
            fired.push(FiredRule { index, coefficient, conditions });
        }
    }
    Ok(Prediction {
        score,
        positive: score > model.decision_threshold,
        decision_threshold: model.decision_threshold,
        intercept: model.intercept,
        fired,
    })
}

/// Deterministic text: verdict, then one line per fired condition with the
/// observed value.
pub fn render_explanation(p: &Prediction) -> String {
    let mut s = String::new();
    let verdict = if p.positive { "positive" } else { "negative" };
    let _ = writeln!(s, "prediction: {verdict} (score {:.8} vs threshold {})", p.score, p.decision_threshold);
    if p.fired.is_empty() {
        let _ = writeln!(s, "no rule fired; score is the intercept {}", p.intercept);
    }
    for f in &p.fired {
        let _ = writeln!(s, "rule {} fired (coefficient {:+.8}):", f.index + 1, f.coefficient);
        for oc in &f.conditions {
            let c = &oc.condition;
            let _ = writeln!(s, "  {} = {:.2} {} {}", display_name(&c.feature), oc.value, c.op.symbol(), c.threshold);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(a0p: f64, refc: f64) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert(RATIO_A0_P.into(), a0p);
        m.insert(REF_RATIO_C.into(), refc);
        m
    }

    #[test]
    fn single_rule_evaluation() {
        let r = Rule::new(alloc::vec![Condition::new(RATIO_A0_P, Comparator::Le, 0.91)]).unwrap();
        assert!(evaluate_rule(&r, &x(0.84, 1.0)).unwrap());
        assert!(!evaluate_rule(&r, &x(0.95, 1.0)).unwrap());
        assert!(evaluate_rule(&r, &x(0.91, 1.0)).unwrap());
        let two = Rule::new(alloc::vec![
            Condition::new(RATIO_A0_P, Comparator::Le, 0.91),
            Condition::new(REF_RATIO_C, Comparator::Gt, 0.81),
        ])
        .unwrap();
        assert!(!evaluate_rule(&two, &x(0.84, 0.5)).unwrap());
        assert!(Rule::new(Vec::new()).is_err());
    }

    #[test]
    fn missing_feature_is_error() {
        let r = Rule::new(alloc::vec![Condition::new("ref_L", Comparator::Le, 1.0)]).unwrap();
        assert_eq!(evaluate_rule(&r, &x(1.0, 1.0)), Err(Error::MissingFeature("ref_L".into())));
    }

    #[test]
    fn published_model_canonical_inputs() {
        let m = published_model();
        let p1 = predict(&m, &x(0.84, 0.95)).unwrap();
        assert_eq!(p1.score, 1.49471001);
        assert!(p1.positive);
        assert_eq!(p1.fired.len(), 1);
        assert_eq!(p1.fired[0].index, 0);

        let p2 = predict(&m, &x(0.95, 0.78)).unwrap();
        assert_eq!(p2.score, 0.36870275);
        assert!(p2.positive);
        assert_eq!(p2.fired[0].index, 1);

        let p3 = predict(&m, &x(0.95, 0.95)).unwrap();
        assert_eq!(p3.score, -4.10884354);
        assert!(!p3.positive);
        assert_eq!(p3.fired[0].index, 2);
    }

    #[test]
    fn boundary_values_use_less_or_equal() {
        let m = published_model();
        assert_eq!(predict(&m, &x(0.91, 0.95)).unwrap().fired[0].index, 0);
        assert_eq!(predict(&m, &x(0.92, 0.81)).unwrap().fired[0].index, 1);
    }

    #[test]
    fn explanation_text() {
        let m = published_model();
        let t1 = render_explanation(&predict(&m, &x(0.84, 0.95)).unwrap());
        assert!(t1.contains("avg(A0)/avg(P) = 0.84 \u{2264} 0.91"), "{t1}");
        let t3 = render_explanation(&predict(&m, &x(0.95, 0.95)).unwrap());
        assert!(t3.contains("avg(A0)/avg(P) = 0.95 > 0.91"), "{t3}");
        assert!(t3.contains("avg(C)/avg(C\u{304}) = 0.95 > 0.81"), "{t3}");
        assert!(t3.starts_with("prediction: negative"));
    }

    #[test]
    fn normalization_merges_redundant_conditions() {
        let r = Rule::new(alloc::vec![
            Condition::new("b", Comparator::Le, 0.5),
            Condition::new("a", Comparator::Gt, 0.2),
            Condition::new("b", Comparator::Le, 0.4),
            Condition::new("a", Comparator::Gt, 0.3),
        ])
        .unwrap();
        let n = r.normalized();
        assert_eq!(
            n.conditions,
            alloc::vec![Condition::new("a", Comparator::Gt, 0.3), Condition::new("b", Comparator::Le, 0.4)]
        );
    }

    #[test]
    fn model_validation() {
        assert!(RuleModel::new(published_model().rules, alloc::vec![1.0], 0.0).is_err());
        assert_eq!(published_model().features(), alloc::vec![String::from(RATIO_A0_P), String::from(REF_RATIO_C)]);
    }
}
