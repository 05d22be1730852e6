//! Cross-validation planning over case metadata.
//!
//! A plan assigns cases to test sets so that the test-set means of the
//! chosen covariates are as even as possible across folds. The quality
//! measure is the balance score: for each covariate, the spread (max - min)
//! of the per-fold test means divided by the covariate's range over the
//! whole cohort; the score is the worst covariate. Lower is better.

mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{Registry, UnknownStrategy};

pub use search::{DisjointPlanner, OverlappingPlanner, RESTARTS};

/// Covariates balanced when none are requested explicitly.
pub const DEFAULT_COVARIATES: [&str; 4] = ["age", "operation_minutes", "bleeding_ml", "bmi"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("fold count and test size must both be at least 1")]
    InvalidParameters,
    #[error("test size {test_size} leaves no training cases among {cases}")]
    TooFewCases { test_size: usize, cases: usize },
    #[error("exhaustive mode needs folds x test size = cases ({folds} x {test_size} != {cases})")]
    NotExhaustive { folds: usize, test_size: usize, cases: usize },
    #[error("unknown covariate {0:?}")]
    UnknownCovariate(String),
    #[error("unknown case id {0:?}")]
    UnknownCase(String),
    #[error("case id {0:?} appears more than once")]
    DuplicateCase(String),
    #[error("covariate {covariate} of case {case_id} must be finite and non-negative")]
    InvalidValue { case_id: String, covariate: String },
    #[error("covariate {0:?} has no value in any case")]
    NoValues(String),
    #[error(transparent)]
    UnknownStrategy(#[from] UnknownStrategy),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordingSystem {
    Si,
    Xi,
    #[default]
    Other,
}

impl RecordingSystem {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordingSystem::Si => "si",
            RecordingSystem::Xi => "xi",
            RecordingSystem::Other => "other",
        }
    }
}

impl fmt::Display for RecordingSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordingSystem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "si" => Ok(RecordingSystem::Si),
            "xi" => Ok(RecordingSystem::Xi),
            "other" | "" => Ok(RecordingSystem::Other),
            other => Err(format!("unknown recording system {other:?}")),
        }
    }
}

/// Patient and recording covariates of one case. Missing values are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseMetadata {
    pub case_id: String,
    pub age: Option<f64>,
    pub operation_minutes: Option<f64>,
    /// Estimated blood loss.
    pub bleeding_ml: Option<f64>,
    pub bmi: Option<f64>,
    #[serde(default)]
    pub recording_system: RecordingSystem,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl CaseMetadata {
    pub fn new(case_id: impl Into<String>) -> Self {
        Self { case_id: case_id.into(), ..Default::default() }
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        match name {
            "age" => self.age,
            "operation_minutes" => self.operation_minutes,
            "bleeding_ml" => self.bleeding_ml,
            "bmi" => self.bmi,
            other => self.extra.get(other).copied(),
        }
    }

    fn numeric_fields(&self) -> impl Iterator<Item = (&str, f64)> {
        DEFAULT_COVARIATES
            .iter()
            .filter_map(|&n| self.covariate(n).map(|v| (n, v)))
            .chain(self.extra.iter().map(|(k, v)| (k.as_str(), *v)))
    }
}

/// Checks id uniqueness and that every present value is finite and non-negative.
pub fn check_cases(cases: &[CaseMetadata]) -> Result<(), SplitError> {
    let mut ids = BTreeSet::new();
    for c in cases {
        if !ids.insert(c.case_id.as_str()) {
            return Err(SplitError::DuplicateCase(c.case_id.clone()));
        }
        for (name, v) in c.numeric_fields() {
            if !v.is_finite() || v < 0.0 {
                return Err(SplitError::InvalidValue {
                    case_id: c.case_id.clone(),
                    covariate: name.to_string(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRequest {
    pub fold_count: usize,
    pub test_size: usize,
    /// Empty means [`DEFAULT_COVARIATES`].
    pub covariates: Vec<String>,
    pub seed: u64,
}

impl SplitRequest {
    pub fn new(fold_count: usize, test_size: usize, seed: u64) -> Self {
        Self { fold_count, test_size, covariates: Vec::new(), seed }
    }

    pub fn with_covariates<S: Into<String>>(mut self, covariates: impl IntoIterator<Item = S>) -> Self {
        self.covariates = covariates.into_iter().map(Into::into).collect();
        self
    }

    pub(crate) fn effective_covariates(&self) -> Vec<String> {
        if self.covariates.is_empty() {
            DEFAULT_COVARIATES.iter().map(|s| s.to_string()).collect()
        } else {
            self.covariates.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputedValue {
    pub case_id: String,
    pub covariate: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: String,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub folds: Vec<Fold>,
    pub balance_score: f64,
    /// Missing covariate values replaced by the cohort mean.
    pub imputed: Vec<ImputedValue>,
    /// Balance score after initialization and after every accepted swap
    /// of the winning restart.
    pub score_trace: Vec<f64>,
}

impl SplitPlan {
    /// Every fold partitions `case_ids` into disjoint train and test sets of
    /// equal test size.
    pub fn check_folds(&self, case_ids: &[&str]) -> Result<(), String> {
        let all: BTreeSet<&str> = case_ids.iter().copied().collect();
        let test_size = self.folds.first().map_or(0, |f| f.test_ids.len());
        for f in &self.folds {
            let train: BTreeSet<&str> = f.train_ids.iter().map(String::as_str).collect();
            let test: BTreeSet<&str> = f.test_ids.iter().map(String::as_str).collect();
            if train.len() != f.train_ids.len() || test.len() != f.test_ids.len() {
                return Err(format!("{} lists a case twice", f.name));
            }
            if !train.is_disjoint(&test) {
                return Err(format!("{} shares cases between train and test", f.name));
            }
            if train.union(&test).copied().collect::<BTreeSet<_>>() != all {
                return Err(format!("{} does not cover the cohort", f.name));
            }
            if f.test_ids.len() != test_size {
                return Err(format!("{} has a different test size", f.name));
            }
        }
        Ok(())
    }
}

/// Covariate matrix after mean imputation, with per-covariate cohort ranges.
pub(crate) struct Cohort {
    pub ids: Vec<String>,
    pub covariates: Vec<String>,
    /// `values[case][covariate]`
    pub values: Vec<Vec<f64>>,
    pub spans: Vec<f64>,
    pub imputed: Vec<ImputedValue>,
}

impl Cohort {
    pub fn build(cases: &[CaseMetadata], covariates: &[String]) -> Result<Self, SplitError> {
        check_cases(cases)?;
        for cov in covariates {
            let known =
                DEFAULT_COVARIATES.contains(&cov.as_str()) || cases.iter().any(|c| c.extra.contains_key(cov));
            if !known {
                return Err(SplitError::UnknownCovariate(cov.clone()));
            }
        }
        let mut values = vec![vec![0.0; covariates.len()]; cases.len()];
        let mut spans = Vec::with_capacity(covariates.len());
        let mut imputed = Vec::new();
        for (j, cov) in covariates.iter().enumerate() {
            let present: Vec<f64> = cases.iter().filter_map(|c| c.covariate(cov)).collect();
            if present.is_empty() {
                return Err(SplitError::NoValues(cov.clone()));
            }
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            for (i, c) in cases.iter().enumerate() {
                values[i][j] = match c.covariate(cov) {
                    Some(v) => v,
                    None => {
                        imputed.push(ImputedValue {
                            case_id: c.case_id.clone(),
                            covariate: cov.clone(),
                            value: mean,
                        });
                        mean
                    }
                };
            }
            let (lo, hi) = present
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            spans.push(hi - lo);
        }
        Ok(Self {
            ids: cases.iter().map(|c| c.case_id.clone()).collect(),
            covariates: covariates.to_vec(),
            values,
            spans,
            imputed,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Balance score of the given test sets (indices into the cohort).
    pub fn balance(&self, test_sets: &[Vec<usize>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &span) in self.spans.iter().enumerate() {
            if span <= 0.0 || test_sets.len() < 2 {
                continue;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for set in test_sets {
                let mean = set.iter().map(|&i| self.values[i][j]).sum::<f64>() / set.len() as f64;
                lo = lo.min(mean);
                hi = hi.max(mean);
            }
            worst = worst.max((hi - lo) / span);
        }
        worst
    }

    pub fn plan(
        &self,
        strategy: &str,
        request: &SplitRequest,
        test_sets: Vec<Vec<usize>>,
        score_trace: Vec<f64>,
    ) -> SplitPlan {
        let folds = test_sets
            .iter()
            .enumerate()
            .map(|(f, set)| {
                let mut in_test = vec![false; self.len()];
                for &i in set {
                    in_test[i] = true;
                }
                Fold {
                    name: format!("split{}", f + 1),
                    train_ids: (0..self.len())
                        .filter(|&i| !in_test[i])
                        .map(|i| self.ids[i].clone())
                        .collect(),
                    test_ids: (0..self.len()).filter(|&i| in_test[i]).map(|i| self.ids[i].clone()).collect(),
                }
            })
            .collect();
        SplitPlan {
            strategy: strategy.to_string(),
            seed: request.seed,
            covariates: self.covariates.clone(),
            folds,
            balance_score: self.balance(&test_sets),
            imputed: self.imputed.clone(),
            score_trace,
        }
    }
}

/// Balance score of explicit test sets, given by case id.
pub fn balance_score(
    cases: &[CaseMetadata],
    covariates: &[String],
    test_sets: &[Vec<String>],
) -> Result<f64, SplitError> {
    let covariates = if covariates.is_empty() {
        DEFAULT_COVARIATES.iter().map(|s| s.to_string()).collect()
    } else {
        covariates.to_vec()
    };
    let cohort = Cohort::build(cases, &covariates)?;
    let index: BTreeMap<&str, usize> =
        cohort.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let sets = test_sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|id| index.get(id.as_str()).copied().ok_or_else(|| SplitError::UnknownCase(id.clone())))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cohort.balance(&sets))
}

/// A way of choosing test sets for a cross-validation plan.
pub trait SplitStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn plan(&self, cases: &[CaseMetadata], request: &SplitRequest) -> Result<SplitPlan, SplitError>;
}

/// Every case is tested exactly once: folds x test size must equal the cohort size.
pub struct Exhaustive;

impl SplitStrategy for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn plan(&self, cases: &[CaseMetadata], request: &SplitRequest) -> Result<SplitPlan, SplitError> {
        check_request(cases, request)?;
        if request.fold_count * request.test_size != cases.len() {
            return Err(SplitError::NotExhaustive {
                folds: request.fold_count,
                test_size: request.test_size,
                cases: cases.len(),
            });
        }
        let cohort = Cohort::build(cases, &request.effective_covariates())?;
        let (sets, trace) = DisjointPlanner::new(&cohort, request).run();
        Ok(cohort.plan(self.name(), request, sets, trace))
    }
}

/// Test sets drawn per fold without covering the cohort. Sets are kept
/// disjoint when the cohort is large enough, otherwise they may overlap.
pub struct Independent;

impl SplitStrategy for Independent {
    fn name(&self) -> &'static str {
        "independent"
    }

    fn plan(&self, cases: &[CaseMetadata], request: &SplitRequest) -> Result<SplitPlan, SplitError> {
        check_request(cases, request)?;
        let cohort = Cohort::build(cases, &request.effective_covariates())?;
        let (sets, trace) = if request.fold_count * request.test_size <= cases.len() {
            DisjointPlanner::new(&cohort, request).run()
        } else {
            OverlappingPlanner::new(&cohort, request).run()
        };
        Ok(cohort.plan(self.name(), request, sets, trace))
    }
}

fn check_request(cases: &[CaseMetadata], request: &SplitRequest) -> Result<(), SplitError> {
    if request.fold_count == 0 || request.test_size == 0 {
        return Err(SplitError::InvalidParameters);
    }
    if request.test_size >= cases.len() {
        return Err(SplitError::TooFewCases { test_size: request.test_size, cases: cases.len() });
    }
    Ok(())
}

pub fn split_strategies() -> &'static Registry<dyn SplitStrategy> {
    static REGISTRY: OnceLock<Registry<dyn SplitStrategy>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn SplitStrategy> = Registry::new("split");
        r.register("exhaustive", Arc::new(Exhaustive));
        r.register("independent", Arc::new(Independent));
        r
    })
}

/// Plans splits, using the exhaustive strategy when folds x test size
/// equals the cohort size and independent draws otherwise.
pub fn stratified_splits(cases: &[CaseMetadata], request: &SplitRequest) -> Result<SplitPlan, SplitError> {
    let name =
        if request.fold_count * request.test_size == cases.len() { "exhaustive" } else { "independent" };
    split_strategies().get(name)?.plan(cases, request)
}
