//! Rule-model training: boosted trees, rule harvesting, ranking and a
//! LASSO fit over the selected rule indicators.

pub mod boosting;
pub mod lasso;
pub mod synthetic;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, Confusion, Metrics};
use crate::rules::{Comparator, Condition, FeatureSource, Rule, RuleModel};
use boosting::{fit_boosting, BoostingConfig, Ensemble, Node};
use lasso::{cross_validate, default_lambda_grid, kkt_violation, lasso_cd, CrossValidation, LassoSolution};

/// Column-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, columns: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(Error::InvalidConfig("feature name count does not match column count".into()));
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != labels.len() {
                return Err(Error::InvalidConfig(format!("column {name} has the wrong length")));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::MissingFeature(name.clone()));
            }
        }
        Ok(Dataset { feature_names, columns, labels })
    }

    /// Gathers the named features from each row.
    pub fn from_rows<S: FeatureSource>(feature_names: &[String], rows: &[S], labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidConfig("row count does not match label count".into()));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); feature_names.len()];
        for row in rows {
            for (col, name) in columns.iter_mut().zip(feature_names) {
                col.push(row.feature(name).ok_or_else(|| Error::MissingFeature(name.clone()))?);
            }
        }
        Dataset::new(feature_names.to_vec(), columns, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn row(&self, row: usize) -> RowView<'_> {
        RowView { data: self, row }
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    data: &'a Dataset,
    row: usize,
}

impl FeatureSource for RowView<'_> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.data.feature_index(name).map(|f| self.data.value(self.row, f))
    }
}

/// Indicator of `rule` on every row.
pub fn rule_indicator(rule: &Rule, data: &Dataset) -> Result<Vec<bool>> {
    let mut resolved = Vec::with_capacity(rule.conditions.len());
    for c in &rule.conditions {
        let f = data.feature_index(&c.feature).ok_or_else(|| Error::MissingFeature(c.feature.clone()))?;
        resolved.push((data.column(f), c.op, c.threshold));
    }
    Ok((0..data.n_rows()).map(|i| resolved.iter().all(|(col, op, t)| op.holds(col[i], *t))).collect())
}

fn support(indicator: &[bool]) -> f64 {
    indicator.iter().filter(|&&b| b).count() as f64 / indicator.len() as f64
}

/// Every root-to-node path (depth ≥ 1) of every tree, before deduplication.
pub fn harvest_paths(ensemble: &Ensemble) -> Vec<Rule> {
    fn walk(tree: &[Node], node: usize, path: &mut Vec<Condition>, names: &[String], out: &mut Vec<Rule>) {
        if !path.is_empty() {
            out.push(Rule { conditions: path.clone() });
        }
        if let Node::Split { feature, threshold, left, right } = tree[node] {
            for (child, op) in [(left, Comparator::Le), (right, Comparator::Gt)] {
                path.push(Condition::new(&names[feature], op, threshold));
                walk(tree, child, path, names, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for tree in &ensemble.trees {
        walk(&tree.nodes, 0, &mut Vec::new(), &ensemble.feature_names, &mut out);
    }
    out
}

fn rule_key(rule: &Rule) -> Vec<(String, Comparator, u64)> {
    rule.conditions.iter().map(|c| (c.feature.clone(), c.op, c.threshold.to_bits())).collect()
}

/// Normalizes every rule and keeps the first occurrence of each.
pub fn dedupe_rules(rules: &[Rule]) -> Vec<Rule> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in rules {
        let n = r.normalized();
        if seen.insert(rule_key(&n)) {
            out.push(n);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harvest {
    /// Σ over trees of (nodes − 1).
    pub raw_count: usize,
    pub unique_count: usize,
    pub rules: Vec<Rule>,
}

/// Harvests, deduplicates and drops rules whose support on `data` lies
/// outside `[min_support, max_support]`.
pub fn harvest_rules(ensemble: &Ensemble, data: &Dataset, min_support: f64, max_support: f64) -> Result<Harvest> {
    let raw = harvest_paths(ensemble);
    let unique = dedupe_rules(&raw);
    let mut rules = Vec::new();
    for r in &unique {
        let s = support(&rule_indicator(r, data)?);
        if s >= min_support && s <= max_support {
            rules.push(r.clone());
        }
    }
    Ok(Harvest { raw_count: raw.len(), unique_count: unique.len(), rules })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMethod {
    /// Balanced accuracy of the rule as a classifier, max over the rule and
    /// its complement.
    #[default]
    BalancedAccuracy,
    /// Entropy reduction of the labels when split by the rule.
    InformationGain,
    /// `|β| · sqrt(s(1 − s))` from a LASSO fit over all candidate rules.
    FriedmanImportance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRule {
    pub rule: Rule,
    pub score: f64,
    pub support: f64,
}

pub fn balanced_accuracy(indicator: &[bool], labels: &[bool]) -> f64 {
    let (mut tp, mut pos, mut tn, mut neg) = (0i128, 0i128, 0i128, 0i128);
    for (&f, &y) in indicator.iter().zip(labels) {
        if y {
            pos += 1;
            tp += f as i128;
        } else {
            neg += 1;
            tn += !f as i128;
        }
    }
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    // (TPR + TNR − 1)·pos·neg in integers, so a rule and its complement
    // score exactly the same.
    let excess = (tp * neg + tn * pos - pos * neg).abs();
    0.5 + excess as f64 / (2 * pos * neg) as f64
}

fn entropy(pos: usize, n: usize) -> f64 {
    if n == 0 || pos == 0 || pos == n {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    -(p * libm::log2(p) + (1.0 - p) * libm::log2(1.0 - p))
}

pub fn information_gain(indicator: &[bool], labels: &[bool]) -> f64 {
    let n = labels.len();
    let pos = labels.iter().filter(|&&y| y).count();
    let fired = indicator.iter().filter(|&&f| f).count();
    let fired_pos = indicator.iter().zip(labels).filter(|(&f, &y)| f && y).count();
    let rest = n - fired;
    entropy(pos, n)
        - (fired as f64 * entropy(fired_pos, fired) + rest as f64 * entropy(pos - fired_pos, rest)) / n as f64
}

fn signed_targets(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&y| if y { 1.0 } else { -1.0 }).collect()
}

fn indicator_columns(rules: &[Rule], data: &Dataset) -> Result<Vec<Vec<f64>>> {
    rules.iter().map(|r| Ok(rule_indicator(r, data)?.into_iter().map(|b| b as u8 as f64).collect())).collect()
}

/// Total order used whenever scores tie: fewer conditions first, then the
/// conditions compared feature name, comparator, threshold.
pub fn rule_order(a: &Rule, b: &Rule) -> Ordering {
    a.conditions.len().cmp(&b.conditions.len()).then_with(|| {
        for (x, y) in a.conditions.iter().zip(&b.conditions) {
            let o = x.feature.cmp(&y.feature).then(x.op.cmp(&y.op)).then(x.threshold.total_cmp(&y.threshold));
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    })
}

/// Scores every rule and sorts by descending score.
pub fn rank_rules(rules: &[Rule], data: &Dataset, method: RankingMethod) -> Result<Vec<ScoredRule>> {
    let indicators: Vec<Vec<bool>> = rules.iter().map(|r| rule_indicator(r, data)).collect::<Result<_>>()?;
    let labels = data.labels();
    let scores: Vec<f64> = match method {
        RankingMethod::BalancedAccuracy => indicators.iter().map(|ind| balanced_accuracy(ind, labels)).collect(),
        RankingMethod::InformationGain => indicators.iter().map(|ind| information_gain(ind, labels)).collect(),
        RankingMethod::FriedmanImportance => {
            let cols = indicator_columns(rules, data)?;
            let y = signed_targets(labels);
            let lambda = lasso::lambda_max(&cols, &y, true) * 0.01;
            let sol = lasso_cd(&cols, &y, lambda, true)?;
            sol.coefficients
                .iter()
                .zip(&indicators)
                .map(|(b, ind)| {
                    let s = support(ind);
                    b.abs() * libm::sqrt(s * (1.0 - s))
                })
                .collect()
        }
    };
    let mut out: Vec<ScoredRule> = rules
        .iter()
        .zip(scores)
        .zip(&indicators)
        .map(|((r, score), ind)| ScoredRule { rule: r.clone(), score, support: support(ind) })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| rule_order(&a.rule, &b.rule)));
    Ok(out)
}

/// Greedy top-`k` in rank order, skipping a candidate that shares more than
/// `max_overlap` of its support with a selected rule or that agrees with the
/// complement of a selected rule on more than `1 − max_overlap` of rows.
/// Falls back to plain rank order when fewer than `k` survive.
pub fn select_rules(ranked: &[ScoredRule], data: &Dataset, k: usize, max_overlap: f64) -> Result<Vec<ScoredRule>> {
    let n = data.n_rows() as f64;
    let mut chosen: Vec<usize> = Vec::new();
    let mut chosen_ind: Vec<Vec<bool>> = Vec::new();
    for (i, cand) in ranked.iter().enumerate() {
        if chosen.len() == k {
            break;
        }
        let ind = rule_indicator(&cand.rule, data)?;
        let fired = ind.iter().filter(|&&b| b).count() as f64;
        let redundant = chosen_ind.iter().any(|sel| {
            let overlap = ind.iter().zip(sel).filter(|(&a, &b)| a && b).count() as f64;
            let complementary = ind.iter().zip(sel).filter(|(&a, &b)| a != b).count() as f64;
            overlap > max_overlap * fired || complementary > (1.0 - max_overlap) * n
        });
        if !redundant {
            chosen.push(i);
            chosen_ind.push(ind);
        }
    }
    for i in 0..ranked.len() {
        if chosen.len() >= k {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    Ok(chosen.into_iter().map(|i| ranked[i].clone()).collect())
}

/// Removes, one at a time, any condition whose removal changes the rule's
/// indicator on at most `tolerance · n` rows, preferring the condition with
/// the smallest change. A single remaining condition is always kept.
pub fn prune_rule(rule: &Rule, data: &Dataset, tolerance: f64) -> Result<Rule> {
    let limit = tolerance * data.n_rows() as f64;
    let mut current = rule.clone();
    let mut ind = rule_indicator(&current, data)?;
    while current.conditions.len() > 1 {
        let mut best: Option<(usize, usize, Vec<bool>)> = None;
        for drop in 0..current.conditions.len() {
            let mut conds = current.conditions.clone();
            conds.remove(drop);
            let trial = rule_indicator(&Rule { conditions: conds }, data)?;
            let changed = trial.iter().zip(&ind).filter(|(a, b)| a != b).count();
            if best.as_ref().is_none_or(|b| changed < b.1) {
                best = Some((drop, changed, trial));
            }
        }
        match best {
            Some((drop, changed, trial)) if changed as f64 <= limit => {
                current.conditions.remove(drop);
                ind = trial;
            }
            _ => break,
        }
    }
    Ok(current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub boosting: BoostingConfig,
    pub n_rules: usize,
    pub min_support: f64,
    pub max_support: f64,
    /// Row fraction below which a condition is pruned from a harvested rule.
    pub prune_tolerance: f64,
    pub ranking: RankingMethod,
    pub max_overlap: f64,
    /// Explicit LASSO grid; when absent a geometric grid below λ_max is used.
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_count: usize,
    pub cv_folds: usize,
    pub cv_seed: u64,
    /// Fit without intercept when the selected rules partition the training
    /// rows (up to `max_overlap` of rows firing zero or several rules).
    pub absorb_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            boosting: BoostingConfig::default(),
            n_rules: 3,
            min_support: 0.02,
            max_support: 0.98,
            prune_tolerance: 0.02,
            ranking: RankingMethod::BalancedAccuracy,
            max_overlap: 0.05,
            lambda_grid: None,
            lambda_count: 20,
            cv_folds: 5,
            cv_seed: 0,
            absorb_intercept: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.boosting.validate()?;
        if self.n_rules == 0 {
            return Err(Error::InvalidConfig("n_rules must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_support) || !(self.min_support..=1.0).contains(&self.max_support) {
            return Err(Error::InvalidConfig("need 0 <= min_support <= max_support <= 1".into()));
        }
        if !(0.0..1.0).contains(&self.max_overlap) || !(0.0..1.0).contains(&self.prune_tolerance) {
            return Err(Error::InvalidConfig("max_overlap and prune_tolerance must lie in [0, 1)".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidConfig("cv_folds must be at least 2".into()));
        }
        if let Some(g) = &self.lambda_grid {
            if g.is_empty() || g.iter().any(|l| !(*l >= 0.0)) {
                return Err(Error::InvalidConfig("lambda grid must be non-empty and non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub harvested_rule_count: usize,
    pub unique_rule_count: usize,
    /// Distinct rules left after pruning and the support filter.
    pub candidate_rule_count: usize,
    pub selected_rules: Vec<ScoredRule>,
    pub lasso_lambda: f64,
    pub cross_validation: CrossValidation,
    /// Validation metrics per fold at the chosen lambda, sign threshold 0.
    pub fold_metrics: Vec<Metrics>,
    pub fit: LassoSolution,
    pub kkt_violation: f64,
    pub intercept_absorbed: bool,
    pub boosting_final_loss: f64,
    pub model: RuleModel,
}

/// Fraction of rows on which exactly one column is 1.
fn single_cover_fraction(cols: &[Vec<f64>]) -> f64 {
    let n = cols.first().map_or(0, Vec::len);
    let single = (0..n).filter(|&i| cols.iter().filter(|c| c[i] != 0.0).count() == 1).count();
    single as f64 / n.max(1) as f64
}

/// Boosting → harvest → prune → rank → select → LASSO. Labels enter the
/// LASSO as ±1 so that the sign of the score is the prediction.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let ensemble = fit_boosting(data, &cfg.boosting)?;
    let raw = harvest_paths(&ensemble);
    let unique = dedupe_rules(&raw);
    let pruned: Vec<Rule> = unique.iter().map(|r| prune_rule(r, data, cfg.prune_tolerance)).collect::<Result<_>>()?;
    let mut candidates = Vec::new();
    for r in dedupe_rules(&pruned) {
        let s = support(&rule_indicator(&r, data)?);
        if s >= cfg.min_support && s <= cfg.max_support {
            candidates.push(r);
        }
    }
    if candidates.is_empty() {
        return Err(Error::DegenerateGeometry("no rule survived the support filter".into()));
    }
    let ranked = rank_rules(&candidates, data, cfg.ranking)?;
    let mut selected = select_rules(&ranked, data, cfg.n_rules, cfg.max_overlap)?;
    selected.sort_by(|a, b| rule_order(&a.rule, &b.rule));
    let rules: Vec<Rule> = selected.iter().map(|s| s.rule.clone()).collect();

    let cols = indicator_columns(&rules, data)?;
    let y = signed_targets(data.labels());
    let absorb = cfg.absorb_intercept && single_cover_fraction(&cols) >= 1.0 - cfg.max_overlap;
    let with_intercept = !absorb;
    let grid = match &cfg.lambda_grid {
        Some(g) => g.clone(),
        None => default_lambda_grid(&cols, &y, cfg.lambda_count, with_intercept),
    };
    let cv = cross_validate(&cols, &y, &grid, cfg.cv_folds, cfg.cv_seed, with_intercept)?;
    let fit = lasso_cd(&cols, &y, cv.best_lambda, with_intercept)?;
    let kkt = kkt_violation(&cols, &y, &fit, with_intercept);

    let mut fold_metrics = Vec::with_capacity(cfg.cv_folds);
    for fold in 0..cfg.cv_folds {
        let train_rows: Vec<usize> = (0..y.len()).filter(|&i| cv.folds[i] != fold).collect();
        let sub: Vec<Vec<f64>> = cols.iter().map(|c| train_rows.iter().map(|&i| c[i]).collect()).collect();
        let ys: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();
        let sol = lasso_cd(&sub, &ys, cv.best_lambda, with_intercept)?;
        let conf = Confusion::from_pairs((0..y.len()).filter(|&i| cv.folds[i] == fold).map(|i| {
            let score = sol.intercept + cols.iter().zip(&sol.coefficients).map(|(c, b)| c[i] * b).sum::<f64>();
            (data.labels()[i], score > 0.0)
        }));
        fold_metrics.push(compute_metrics(conf));
    }

    let model = RuleModel::new(rules, fit.coefficients.clone(), fit.intercept)?;
    Ok(TrainReport {
        harvested_rule_count: raw.len(),
        unique_rule_count: unique.len(),
        candidate_rule_count: candidates.len(),
        selected_rules: selected,
        lasso_lambda: cv.best_lambda,
        cross_validation: cv,
        fold_metrics,
        fit,
        kkt_violation: kkt,
        intercept_absorbed: absorb,
        boosting_final_loss: *ensemble.train_loss.last().expect("loss recorded per stage"),
        model,
    })
}
