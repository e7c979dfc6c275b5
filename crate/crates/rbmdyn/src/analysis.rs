//! Turns per-step classifier records into the summary metrics.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rbmdyn_core::biasing::{BiasKind, BiasTarget};
use rbmdyn_core::metrics::{self, TransitionMatrix, TransitionPolicy};
use rbmdyn_core::stats::{self, Alternative};
use rbmdyn_core::{CLASS_COUNT, DIGIT_COUNT, NON_DIGIT};
use serde::{Deserialize, Serialize};

use crate::config::{Correlation, TransitionCounting};
use crate::error::{AppError, Result};

/// Classifier output of every step of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub states: Vec<u8>,
    pub entropy: Vec<f64>,
    /// Active-hidden percentage per step; empty for one-step trajectories.
    pub active: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRecords {
    pub kind: BiasKind,
    pub target: BiasTarget,
    pub samples: Vec<SampleRecord>,
}

impl ConditionRecords {
    pub fn name(&self) -> String {
        format!("{}/{}", self.kind.as_str(), self.target.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    /// Absent for fewer than two values.
    pub sem: Option<f64>,
    pub n: usize,
}

impl MeanSem {
    pub fn of(x: &[f64]) -> Self {
        Self {
            mean: stats::mean(x).unwrap_or(f64::NAN),
            sem: stats::sem(x).ok(),
            n: x.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub name: String,
    pub kind: String,
    pub target: String,
    pub n_samples: usize,
    pub visited_states: MeanSem,
    pub transitions: MeanSem,
    pub non_digit_time: MeanSem,
    /// Mean steps per state (0–9, non-digit).
    pub state_time: Vec<f64>,
    /// Fraction of trajectories classified as a target digit, per step.
    pub accuracy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub active_fraction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    pub counts: Vec<Vec<u64>>,
    pub probabilities: Vec<Vec<f64>>,
    /// Self-transition probability of each digit state.
    pub digit_self: MeanSem,
    pub non_digit_self: f64,
    /// All 110 off-diagonal probabilities.
    pub off_diagonal: MeanSem,
    pub empty_rows: Vec<usize>,
}

impl MatrixStats {
    fn of(m: &TransitionMatrix) -> Self {
        Self {
            counts: m.counts().iter().map(|r| r.to_vec()).collect(),
            probabilities: m.probabilities().iter().map(|r| r.to_vec()).collect(),
            digit_self: MeanSem::of(&m.digit_self_probabilities()),
            non_digit_self: m.probability(usize::from(NON_DIGIT), usize::from(NON_DIGIT)),
            off_diagonal: MeanSem::of(&m.off_diagonal()),
            empty_rows: m.empty_rows(),
        }
    }
}

/// Aggregates over the conditions of one biasing method; spreads are SEMs
/// of the per-condition means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n_conditions: usize,
    pub n_trajectories: usize,
    pub visited_states: MeanSem,
    pub transitions: MeanSem,
    pub non_digit_time: MeanSem,
    pub accuracy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub active_fraction: Option<Vec<f64>>,
    pub active_fraction_first: Option<MeanSem>,
    pub active_fraction_last: Option<MeanSem>,
    pub transition_matrix: Option<MatrixStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleDigitStats {
    /// Non-digit state time over the digits 1–9.
    pub non_digit_time_digits_1_9: MeanSem,
    pub digit0_accuracy_last: f64,
    pub mean_accuracy_last: f64,
    /// Correlation between the mean entropy and mean accuracy curves.
    pub entropy_accuracy_correlation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub u: f64,
    pub p: f64,
    pub exact: bool,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rbm_final_rmse: f64,
    pub classifier_best_epoch: usize,
    pub classifier_validation_accuracy: f64,
    pub classifier_test_accuracy: f64,
    pub non_digit_holdout_accuracy: f64,
    pub readout_test_accuracy: f64,
    /// Skewness of each single-digit biasing vector's activations.
    pub biasing_skewness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub chimera_k: Option<usize>,
    pub transition_counting: TransitionCounting,
    pub correlation: Correlation,
    pub evaluation: Option<Evaluation>,
    pub groups: BTreeMap<String, GroupStats>,
    pub single_digit: Option<SingleDigitStats>,
    /// One-sided Mann–Whitney tests over per-condition means.
    pub tests: BTreeMap<String, TestResult>,
    pub conditions: Vec<ConditionStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub transitions: TransitionCounting,
    pub correlation: Correlation,
}

pub fn condition_stats(c: &ConditionRecords, policy: TransitionPolicy) -> Result<ConditionStats> {
    if c.samples.is_empty() {
        return Err(AppError::data(format!("condition {} has no trajectories", c.name())));
    }
    let n = c.samples.len();
    let visited: Vec<f64> = c.samples.iter().map(|s| metrics::states_visited(&s.states) as f64).collect();
    let transitions: Vec<f64> = c
        .samples
        .iter()
        .map(|s| metrics::transition_count_with(&s.states, policy) as f64)
        .collect();
    let times: Vec<[usize; CLASS_COUNT]> = c.samples.iter().map(|s| metrics::state_times(&s.states)).collect();
    let non_digit: Vec<f64> = times.iter().map(|t| t[usize::from(NON_DIGIT)] as f64).collect();
    let state_time = (0..CLASS_COUNT)
        .map(|k| times.iter().map(|t| t[k] as f64).sum::<f64>() / n as f64)
        .collect();
    let states: Vec<&[u8]> = c.samples.iter().map(|s| s.states.as_slice()).collect();
    let entropy: Vec<&[f64]> = c.samples.iter().map(|s| s.entropy.as_slice()).collect();
    let active: Vec<&[f64]> = c.samples.iter().map(|s| s.active.as_slice()).collect();
    let active_fraction = if active.iter().all(|a| a.is_empty()) {
        None
    } else {
        Some(metrics::mean_curve(&active)?)
    };
    Ok(ConditionStats {
        name: c.name(),
        kind: c.kind.as_str().to_string(),
        target: c.target.label(),
        n_samples: n,
        visited_states: MeanSem::of(&visited),
        transitions: MeanSem::of(&transitions),
        non_digit_time: MeanSem::of(&non_digit),
        state_time,
        accuracy: metrics::accuracy_curve_any(&states, &c.target.digits())?,
        entropy: metrics::entropy_curve(&entropy)?,
        active_fraction,
    })
}

fn group_stats(conds: &[&ConditionRecords], stats: &[&ConditionStats]) -> Result<GroupStats> {
    let means = |f: fn(&ConditionStats) -> f64| -> Vec<f64> { stats.iter().map(|s| f(s)).collect() };
    let accuracy: Vec<&[f64]> = stats.iter().map(|s| s.accuracy.as_slice()).collect();
    let entropy: Vec<&[f64]> = stats.iter().map(|s| s.entropy.as_slice()).collect();
    let active: Option<Vec<&[f64]>> = stats.iter().map(|s| s.active_fraction.as_deref()).collect();
    let active_fraction = active.as_ref().map(|a| metrics::mean_curve(a)).transpose()?;
    let endpoint = |last: bool| {
        active.as_ref().map(|a| {
            let v: Vec<f64> = a.iter().map(|c| if last { c[c.len() - 1] } else { c[0] }).collect();
            MeanSem::of(&v)
        })
    };
    let sequences: Vec<&[u8]> = conds.iter().flat_map(|c| c.samples.iter().map(|s| s.states.as_slice())).collect();
    let transition_matrix = metrics::transition_matrix(&sequences).ok().map(|m| MatrixStats::of(&m));
    Ok(GroupStats {
        n_conditions: stats.len(),
        n_trajectories: sequences.len(),
        visited_states: MeanSem::of(&means(|s| s.visited_states.mean)),
        transitions: MeanSem::of(&means(|s| s.transitions.mean)),
        non_digit_time: MeanSem::of(&means(|s| s.non_digit_time.mean)),
        accuracy: metrics::mean_curve(&accuracy)?,
        entropy: metrics::mean_curve(&entropy)?,
        active_fraction_first: endpoint(false),
        active_fraction_last: endpoint(true),
        active_fraction,
        transition_matrix,
    })
}

fn single_digit_stats(stats: &[&ConditionStats], group: &GroupStats, correlation: Correlation) -> SingleDigitStats {
    let digit = |s: &ConditionStats| s.target.parse::<u8>().ok();
    let non_digit: Vec<f64> = stats
        .iter()
        .filter(|s| matches!(digit(s), Some(d) if d >= 1))
        .map(|s| s.non_digit_time.mean)
        .collect();
    let last = |s: &ConditionStats| s.accuracy[s.accuracy.len() - 1];
    let digit0_accuracy_last = stats.iter().find(|s| digit(s) == Some(0)).map_or(f64::NAN, |s| last(s));
    let all_last: Vec<f64> = stats.iter().map(|s| last(s)).collect();
    let corr = match correlation {
        Correlation::Pearson => stats::pearson(&group.entropy, &group.accuracy),
        Correlation::Spearman => stats::spearman(&group.entropy, &group.accuracy),
    };
    SingleDigitStats {
        non_digit_time_digits_1_9: MeanSem::of(&non_digit),
        digit0_accuracy_last,
        mean_accuracy_last: stats::mean(&all_last).unwrap_or(f64::NAN),
        entropy_accuracy_correlation: corr.ok(),
    }
}

fn test(a: &[f64], b: &[f64], alternative: Alternative) -> Option<TestResult> {
    let r = stats::mann_whitney_one_sided(a, b, alternative).ok()?;
    Some(TestResult {
        u: r.u,
        p: r.p,
        exact: r.exact,
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Everything in the summary except the evaluation block and run identity.
pub fn analyze(
    conditions: &[ConditionRecords],
    opts: AnalysisOptions,
) -> Result<(Vec<ConditionStats>, BTreeMap<String, GroupStats>, Option<SingleDigitStats>, BTreeMap<String, TestResult>)> {
    let policy = TransitionPolicy::from(opts.transitions);
    let stats = conditions
        .iter()
        .map(|c| condition_stats(c, policy))
        .collect::<Result<Vec<_>>>()?;
    let mut groups = BTreeMap::new();
    let mut single = None;
    for kind in [BiasKind::SingleDigit, BiasKind::ChimeraIntersection, BiasKind::ChimeraDouble] {
        let idx: Vec<usize> = (0..conditions.len()).filter(|&i| conditions[i].kind == kind).collect();
        if idx.is_empty() {
            continue;
        }
        let conds: Vec<&ConditionRecords> = idx.iter().map(|&i| &conditions[i]).collect();
        let st: Vec<&ConditionStats> = idx.iter().map(|&i| &stats[i]).collect();
        let g = group_stats(&conds, &st)?;
        if kind == BiasKind::SingleDigit {
            single = Some(single_digit_stats(&st, &g, opts.correlation));
        }
        groups.insert(kind.as_str().to_string(), g);
    }

    let per_condition = |kind: BiasKind, f: fn(&ConditionStats) -> f64| -> Vec<f64> {
        conditions.iter().zip(&stats).filter(|(c, _)| c.kind == kind).map(|(_, s)| f(s)).collect()
    };
    let mut tests = BTreeMap::new();
    let single_visited = per_condition(BiasKind::SingleDigit, |s| s.visited_states.mean);
    let single_non_digit = per_condition(BiasKind::SingleDigit, |s| s.non_digit_time.mean);
    for kind in [BiasKind::ChimeraIntersection, BiasKind::ChimeraDouble] {
        let visited = per_condition(kind, |s| s.visited_states.mean);
        let non_digit = per_condition(kind, |s| s.non_digit_time.mean);
        let name = kind.as_str();
        if let Some(t) = test(&visited, &single_visited, Alternative::Greater) {
            tests.insert(format!("visited_states_{name}_gt_single"), t);
        }
        if let Some(t) = test(&non_digit, &single_non_digit, Alternative::Less) {
            tests.insert(format!("non_digit_time_{name}_lt_single"), t);
        }
    }
    Ok((stats, groups, single, tests))
}

/// Header of the trajectory table; `v0..v783` follow when visibles are saved.
pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "run_id",
    "bias_kind",
    "bias_spec",
    "sample_idx",
    "step",
    "class",
    "entropy",
    "active_hidden_fraction",
];

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    bias_kind: String,
    bias_spec: String,
    sample_idx: usize,
    step: usize,
    class: u8,
    entropy: f64,
    active_hidden_fraction: Option<f64>,
}

/// Reads `trajectories.csv` back into per-condition records, keeping the
/// order in which conditions first appear.
pub fn read_trajectories(reader: impl Read) -> Result<Vec<ConditionRecords>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out: Vec<ConditionRecords> = Vec::new();
    for (line, row) in rdr.deserialize::<TrajectoryRow>().enumerate() {
        let row = row.map_err(|e| AppError::data(format!("trajectory row {}: {e}", line + 2)))?;
        let bad = |what: &str| AppError::data(format!("trajectory row {}: bad {what}", line + 2));
        let kind = BiasKind::parse(&row.bias_kind).ok_or_else(|| bad("bias_kind"))?;
        let target = BiasTarget::parse(&row.bias_spec).ok_or_else(|| bad("bias_spec"))?;
        if usize::from(row.class) >= CLASS_COUNT {
            return Err(bad("class"));
        }
        if out.last().is_none_or(|c| c.kind != kind || c.target != target) {
            if out.iter().any(|c| c.kind == kind && c.target == target) {
                return Err(AppError::data(format!("rows of {}/{} are not contiguous", row.bias_kind, row.bias_spec)));
            }
            out.push(ConditionRecords {
                kind,
                target,
                samples: Vec::new(),
            });
        }
        let cond = out.last_mut().expect("pushed above");
        if row.step == 1 {
            if row.sample_idx != cond.samples.len() {
                return Err(bad("sample_idx order"));
            }
            cond.samples.push(SampleRecord {
                states: Vec::new(),
                entropy: Vec::new(),
                active: Vec::new(),
            });
        }
        let n = cond.samples.len();
        let s = cond.samples.last_mut().ok_or_else(|| bad("step order"))?;
        if row.sample_idx + 1 != n || row.step != s.states.len() + 1 {
            return Err(bad("step order"));
        }
        s.states.push(row.class);
        s.entropy.push(row.entropy);
        if let Some(a) = row.active_hidden_fraction {
            s.active.push(a);
        }
    }
    for c in &out {
        for s in &c.samples {
            if !s.active.is_empty() && s.active.len() != s.states.len() {
                return Err(AppError::data(format!("{}: active_hidden_fraction missing on some steps", c.name())));
            }
        }
    }
    Ok(out)
}

pub fn read_trajectories_file(path: &Path) -> Result<Vec<ConditionRecords>> {
    let f = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_trajectories(std::io::BufReader::new(f)).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

/// Digit labels `0`–`9` plus `non-digit`, for table headers.
pub fn state_labels() -> Vec<String> {
    (0..DIGIT_COUNT).map(|d| d.to_string()).chain(["non-digit".to_string()]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(states: &[u8]) -> SampleRecord {
        SampleRecord {
            states: states.to_vec(),
            entropy: vec![0.5; states.len()],
            active: vec![15.0; states.len()],
        }
    }

    fn single(d: u8, samples: Vec<SampleRecord>) -> ConditionRecords {
        ConditionRecords {
            kind: BiasKind::SingleDigit,
            target: BiasTarget::Digit(d),
            samples,
        }
    }

    #[test]
    fn condition_metrics_by_hand() {
        let c = single(3, vec![rec(&[3, 3, 5, 10]), rec(&[3, 10, 10, 10])]);
        let s = condition_stats(&c, TransitionPolicy::ExcludeIntoNonDigit).unwrap();
        assert_eq!(s.name, "single/3");
        assert_eq!(s.visited_states.mean, 1.5);
        assert_eq!(s.transitions.mean, 0.5);
        assert_eq!(s.non_digit_time.mean, 2.0);
        assert_eq!(s.state_time[3], 1.5);
        assert_eq!(s.accuracy, vec![1.0, 0.5, 0.0, 0.0]);
        assert_eq!(s.active_fraction.unwrap(), vec![15.0; 4]);
    }

    #[test]
    fn groups_tests_and_single_digit_detail() {
        let mut conds: Vec<ConditionRecords> = (0..10u8).map(|d| single(d, vec![rec(&[d, d, 10, 10]); 3])).collect();
        for (i, (a, b)) in [(0u8, 1u8), (2, 3), (4, 5)].into_iter().enumerate() {
            let s = [a, b, a, (i % 2) as u8];
            conds.push(ConditionRecords {
                kind: BiasKind::ChimeraIntersection,
                target: BiasTarget::pair(a, b).unwrap(),
                samples: vec![rec(&s); 2],
            });
        }
        let opts = AnalysisOptions {
            transitions: TransitionCounting::ExcludeIntoNonDigit,
            correlation: Correlation::Pearson,
        };
        let (stats, groups, single, tests) = analyze(&conds, opts).unwrap();
        assert_eq!(stats.len(), 13);
        let g = &groups["single"];
        assert_eq!(g.n_trajectories, 30);
        assert_eq!(g.visited_states.mean, 1.0);
        assert_eq!(g.non_digit_time.mean, 2.0);
        let m = g.transition_matrix.as_ref().unwrap();
        assert_eq!(m.non_digit_self, 1.0);
        assert_eq!(m.digit_self.mean, 0.5);
        let sd = single.unwrap();
        assert_eq!(sd.non_digit_time_digits_1_9.n, 9);
        assert_eq!(sd.digit0_accuracy_last, 0.0);
        assert!(tests["visited_states_intersection_gt_single"].p < 0.05);
        assert!(tests.contains_key("non_digit_time_intersection_lt_single"));
        assert!(!tests.contains_key("visited_states_double_gt_single"));
    }

    #[test]
    fn csv_round_trip() {
        let text = "run_id,bias_kind,bias_spec,sample_idx,step,class,entropy,active_hidden_fraction\n\
            r,single,4,0,1,4,0.25,14.9\n\
            r,single,4,0,2,10,1.5,15.1\n\
            r,single,4,1,1,4,0.5,14.8\n\
            r,single,4,1,2,4,0.5,15\n\
            r,intersection,2+7,0,1,2,0,\n\
            r,intersection,2+7,0,2,7,0,\n";
        let c = read_trajectories(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].samples[0].states, vec![4, 10]);
        assert_eq!(c[0].samples[1].active, vec![14.8, 15.0]);
        assert_eq!(c[1].target, BiasTarget::pair(7, 2).unwrap());
        assert!(c[1].samples[0].active.is_empty());
    }

    #[test]
    fn malformed_csv_rejected() {
        let head = "run_id,bias_kind,bias_spec,sample_idx,step,class,entropy,active_hidden_fraction\n";
        for body in ["r,single,4,0,2,4,0,\n", "r,single,4,0,1,11,0,\n", "r,weird,4,0,1,4,0,\n", "r,single,4,1,1,4,0,\n"] {
            assert!(read_trajectories(format!("{head}{body}").as_bytes()).is_err(), "{body}");
        }
    }
}
