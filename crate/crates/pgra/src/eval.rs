//! Task metrics and label-consistency analysis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::pipeline::{
    run_pipeline, PipelineConfig, Query, QueryResult, SearchBackend,
};
use crate::prompts::Metric;
use crate::reader::vote;

/// Rows are gold labels, columns are predicted labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if counts.len() != n || counts.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput(format!(
                "confusion matrix must be {n}x{n}"
            )));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn from_pairs(labels: &[String], golds: &[String], predictions: &[String]) -> Result<Self> {
        if golds.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                context: "confusion matrix inputs".into(),
                left: golds.len(),
                right: predictions.len(),
            });
        }
        let index: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (gold, prediction) in golds.iter().zip(predictions) {
            let g = *index.get(gold.as_str()).ok_or_else(|| Error::InvalidInput(
                format!("gold label {gold:?} not in label set"),
            ))?;
            let p = *index
                .get(prediction.as_str())
                .ok_or_else(|| Error::InvalidInput(format!(
                    "predicted label {prediction:?} not in label set"
                )))?;
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix {
            labels: labels.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Fraction of exact label matches.
pub fn accuracy(predictions: &[String], golds: &[String]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            context: "accuracy inputs".into(),
            left: predictions.len(),
            right: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("accuracy over zero instances".into()));
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Matthews correlation over a confusion matrix, via the multi-class R_k
/// statistic (which reduces to the familiar TP/TN/FP/FN form for two
/// classes). A zero denominator yields 0.0 by convention.
pub fn matthews(confusion: &ConfusionMatrix) -> Result<f64> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::InvalidInput("matthews over zero instances".into()));
    }
    let n = confusion.labels.len();
    let s = total as f64;
    let trace: f64 = (0..n).map(|i| confusion.counts[i][i] as f64).sum();
    let row_sums: Vec<f64> = (0..n)
        .map(|i| confusion.counts[i].iter().sum::<u64>() as f64)
        .collect();
    let col_sums: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| confusion.counts[i][j] as f64).sum())
        .collect();
    let sum_pt: f64 = (0..n).map(|i| row_sums[i] * col_sums[i]).sum();
    let sum_p2: f64 = col_sums.iter().map(|p| p * p).sum();
    let sum_t2: f64 = row_sums.iter().map(|t| t * t).sum();
    let numerator = trace * s - sum_pt;
    let denominator = ((s * s - sum_p2) * (s * s - sum_t2)).sqrt();
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok(numerator / denominator)
}

/// Fraction of evidence labels equal to the query's gold label.
pub fn consistency_score(evidence_labels: &[String], gold: &str) -> Result<f64> {
    if evidence_labels.is_empty() {
        return Err(Error::InvalidInput(
            "consistency score over zero evidence".into(),
        ));
    }
    let consistent = evidence_labels.iter().filter(|l| *l == gold).count();
    Ok(consistent as f64 / evidence_labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyBucket {
    /// Number of consistent evidence pieces shared by instances in this bucket.
    pub consistent: usize,
    pub n_instances: usize,
    /// Absent (not 0) when the bucket is empty, so "no data" and "always
    /// wrong" stay distinguishable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub d: usize,
    pub buckets: Vec<ConsistencyBucket>,
    pub mean_consistency_score: f64,
}

impl ConsistencyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("consistent,n_instances,accuracy\n");
        for bucket in &self.buckets {
            let acc = bucket
                .accuracy
                .map(|a| a.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{}\n",
                bucket.consistent, bucket.n_instances, acc
            ));
        }
        out
    }
}

/// Bucket instances by how many of their top-d evidence pieces carry a
/// pseudo-label equal to the query's gold label, with per-bucket accuracy of
/// the reader predictions.
pub fn consistency_report(
    results: &[QueryResult],
    pseudo_labels: &HashMap<u64, String>,
    golds: &HashMap<String, String>,
    predictions: &HashMap<String, String>,
    d: usize,
) -> Result<ConsistencyReport> {
    if d == 0 {
        return Err(Error::InvalidInput("d must be at least 1".into()));
    }
    let mut bucket_counts = vec![0usize; d + 1];
    let mut bucket_correct = vec![0usize; d + 1];
    let mut score_sum = 0.0f64;
    for result in results {
        if result.reranked.len() > d {
            return Err(Error::InvalidInput(format!(
                "query {:?} has {} reranked entries, report expects at most d={d}",
                result.query_id,
                result.reranked.len()
            )));
        }
        let gold = golds
            .get(&result.query_id)
            .ok_or_else(|| Error::MissingQueryData {
                query_id: result.query_id.clone(),
                what: "gold label".into(),
            })?;
        let prediction =
            predictions
                .get(&result.query_id)
                .ok_or_else(|| Error::MissingQueryData {
                    query_id: result.query_id.clone(),
                    what: "prediction".into(),
                })?;
        let mut consistent = 0usize;
        for item in &result.reranked {
            let label = pseudo_labels
                .get(&item.id)
                .ok_or(Error::MissingPseudoLabel { id: item.id })?;
            if label == gold {
                consistent += 1;
            }
        }
        if !result.reranked.is_empty() {
            score_sum += consistent as f64 / result.reranked.len() as f64;
        }
        bucket_counts[consistent] += 1;
        if prediction == gold {
            bucket_correct[consistent] += 1;
        }
    }
    let buckets = (0..=d)
        .map(|n| ConsistencyBucket {
            consistent: n,
            n_instances: bucket_counts[n],
            accuracy: if bucket_counts[n] == 0 {
                None
            } else {
                Some(bucket_correct[n] as f64 / bucket_counts[n] as f64)
            },
        })
        .collect();
    let mean = if results.is_empty() {
        0.0
    } else {
        score_sum / results.len() as f64
    };
    Ok(ConsistencyReport {
        d,
        buckets,
        mean_consistency_score: mean,
    })
}

/// One grid point of a k/d sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub k: usize,
    pub d: usize,
    pub metric: Metric,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run the pipeline + vote reader + task metric for every (k, d) grid point.
/// Infeasible or failing points become failed cells; the sweep continues.
/// Evidence pseudo-labels must already be present on the corpus.
pub fn sweep(
    base: &PipelineConfig,
    backend: &SearchBackend<'_>,
    corpus: &Corpus,
    queries: &[Query],
    ks: &[usize],
    ds: &[usize],
    threads: usize,
) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(ks.len() * ds.len());
    for &k in ks {
        for &d in ds {
            let cell = run_sweep_cell(base, backend, corpus, queries, k, d, threads);
            cells.push(match cell {
                Ok(value) => SweepCell {
                    k,
                    d,
                    metric: base.task.metric,
                    value: Some(value),
                    error: None,
                },
                Err(e) => SweepCell {
                    k,
                    d,
                    metric: base.task.metric,
                    value: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    cells
}

fn run_sweep_cell(
    base: &PipelineConfig,
    backend: &SearchBackend<'_>,
    corpus: &Corpus,
    queries: &[Query],
    k: usize,
    d: usize,
    threads: usize,
) -> Result<f64> {
    let config = base.clone().with_depths(k, d)?;
    let run = run_pipeline(&config, backend, corpus, queries, threads)?;
    if !run.failures.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} queries failed",
            run.failures.len()
        )));
    }
    let mut golds = Vec::with_capacity(run.outcomes.len());
    let mut predictions = Vec::with_capacity(run.outcomes.len());
    for outcome in &run.outcomes {
        let gold = outcome
            .query
            .label
            .clone()
            .ok_or_else(|| Error::MissingQueryData {
                query_id: outcome.query.query_id.clone(),
                what: "gold label".into(),
            })?;
        let prediction = vote(&config.task, &outcome.query.query_id, &outcome.reranked)?;
        let predicted = prediction
            .predicted_label
            .ok_or_else(|| Error::MissingQueryData {
                query_id: outcome.query.query_id.clone(),
                what: "non-abstaining prediction".into(),
            })?;
        golds.push(gold);
        predictions.push(predicted);
    }
    match config.task.metric {
        Metric::Accuracy => accuracy(&predictions, &golds),
        Metric::Matthews => {
            let confusion = ConfusionMatrix::from_pairs(&config.task.labels, &golds, &predictions)?;
            matthews(&confusion)
        }
    }
}

/// Render sweep cells as the `k,d,metric,value` CSV.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("k,d,metric,value\n");
    for cell in cells {
        let metric = match cell.metric {
            Metric::Accuracy => "accuracy",
            Metric::Matthews => "matthews",
        };
        let value = cell.value.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", cell.k, cell.d, metric, value));
    }
    out
}

/// Metrics report JSON payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::RerankedOut;

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accuracy_basic_ratios() {
        let golds = strings(&["a", "b", "a", "b"]);
        assert_eq!(accuracy(&golds, &golds).unwrap(), 1.0);
        let none = strings(&["b", "a", "b", "a"]);
        assert_eq!(accuracy(&none, &golds).unwrap(), 0.0);
        let three = strings(&["a", "b", "a", "a"]);
        assert_eq!(accuracy(&three, &golds).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_length_mismatch() {
        assert!(accuracy(&strings(&["a"]), &strings(&["a", "b"])).is_err());
    }

    #[test]
    fn matthews_perfect_is_one() {
        let cm = ConfusionMatrix::from_counts(
            strings(&["x", "y"]),
            vec![vec![5, 0], vec![0, 7]],
        )
        .unwrap();
        assert!((matthews(&cm).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matthews_constant_predictor_is_zero() {
        // everything predicted as the first label: one zero column
        let cm = ConfusionMatrix::from_counts(
            strings(&["x", "y"]),
            vec![vec![4, 0], vec![6, 0]],
        )
        .unwrap();
        assert_eq!(matthews(&cm).unwrap(), 0.0);
    }

    #[test]
    fn matthews_known_matrix() {
        // [[3,1],[2,4]]: (3*4 - 2*1)/sqrt(5*4*6*5) = 10/sqrt(600)
        let cm = ConfusionMatrix::from_counts(
            strings(&["x", "y"]),
            vec![vec![3, 1], vec![2, 4]],
        )
        .unwrap();
        let expected = 10.0 / 600.0f64.sqrt();
        assert!((matthews(&cm).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn matthews_invariant_under_label_reordering() {
        let cm = ConfusionMatrix::from_counts(
            strings(&["x", "y", "z"]),
            vec![vec![5, 1, 0], vec![2, 6, 1], vec![0, 2, 4]],
        )
        .unwrap();
        // permute labels (z, x, y): rows and columns move together
        let permuted = ConfusionMatrix::from_counts(
            strings(&["z", "x", "y"]),
            vec![vec![4, 0, 2], vec![0, 5, 1], vec![1, 2, 6]],
        )
        .unwrap();
        assert!((matthews(&cm).unwrap() - matthews(&permuted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn consistency_five_of_eight() {
        let labels = strings(&["p", "p", "p", "p", "p", "n", "n", "n"]);
        assert_eq!(consistency_score(&labels, "p").unwrap(), 0.625);
    }

    #[test]
    fn consistency_extremes() {
        let labels = strings(&["p", "p"]);
        assert_eq!(consistency_score(&labels, "p").unwrap(), 1.0);
        assert_eq!(consistency_score(&labels, "n").unwrap(), 0.0);
        assert!(consistency_score(&[], "p").is_err());
    }

    fn result_with(query_id: &str, evidence_ids: &[u64]) -> QueryResult {
        QueryResult {
            query_id: query_id.into(),
            query_text: "t".into(),
            prefix_seed: 0,
            normalized_over_topk: true,
            candidates: vec![],
            reranked: evidence_ids
                .iter()
                .enumerate()
                .map(|(i, &id)| RerankedOut {
                    id,
                    stage2_rank: i + 1,
                    stage2_ip: 0.0,
                    stage2_score: 0.0,
                    stage1_rank: i + 1,
                })
                .collect(),
        }
    }

    #[test]
    fn report_single_zero_bucket() {
        let results = vec![result_with("q0", &[0, 1]), result_with("q1", &[0, 1])];
        let pseudo = HashMap::from([(0, "n".to_string()), (1, "n".to_string())]);
        let golds = HashMap::from([
            ("q0".to_string(), "p".to_string()),
            ("q1".to_string(), "p".to_string()),
        ]);
        let preds = golds.clone();
        let report = consistency_report(&results, &pseudo, &golds, &preds, 2).unwrap();
        assert_eq!(report.buckets[0].n_instances, 2);
        assert_eq!(report.buckets[1].n_instances, 0);
        assert_eq!(report.buckets[1].accuracy, None);
        assert_eq!(report.mean_consistency_score, 0.0);
    }

    #[test]
    fn report_buckets_instances_by_consistent_count() {
        // two instances with 3 and 5 consistent pieces of 8, both predicted right
        let results = vec![
            result_with("q0", &[0, 1, 2, 10, 11, 12, 13, 14]),
            result_with("q1", &[0, 1, 2, 3, 4, 10, 11, 12]),
        ];
        let mut pseudo = HashMap::new();
        for id in 0..=4u64 {
            pseudo.insert(id, "p".to_string());
        }
        for id in 10..=14u64 {
            pseudo.insert(id, "n".to_string());
        }
        let golds = HashMap::from([
            ("q0".to_string(), "p".to_string()),
            ("q1".to_string(), "p".to_string()),
        ]);
        let preds = golds.clone();
        let report = consistency_report(&results, &pseudo, &golds, &preds, 8).unwrap();
        assert_eq!(report.buckets[3].n_instances, 1);
        assert_eq!(report.buckets[3].accuracy, Some(1.0));
        assert_eq!(report.buckets[5].n_instances, 1);
        assert_eq!(report.buckets[5].accuracy, Some(1.0));
        let total: usize = report.buckets.iter().map(|b| b.n_instances).sum();
        assert_eq!(total, 2);
        assert!((report.mean_consistency_score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_missing_inputs_name_the_query() {
        let results = vec![result_with("q9", &[0])];
        let pseudo = HashMap::from([(0, "p".to_string())]);
        let err = consistency_report(&results, &pseudo, &HashMap::new(), &HashMap::new(), 1)
            .unwrap_err();
        match err {
            Error::MissingQueryData { query_id, .. } => assert_eq!(query_id, "q9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_bucket_recombination_matches_overall_accuracy() {
        use crate::rng::SeededRng;
        let mut rng = SeededRng::new(99);
        let labels = ["p", "n"];
        let d = 6;
        let mut results = Vec::new();
        let mut pseudo = HashMap::new();
        let mut golds = HashMap::new();
        let mut preds = HashMap::new();
        let mut gold_list = Vec::new();
        let mut pred_list = Vec::new();
        let mut next_evidence = 0u64;
        for i in 0..200 {
            let qid = format!("q{i}");
            let ids: Vec<u64> = (0..d as u64).map(|j| next_evidence + j).collect();
            for &id in &ids {
                pseudo.insert(id, labels[rng.below(2) as usize].to_string());
            }
            next_evidence += d as u64;
            results.push(result_with(&qid, &ids));
            let gold = labels[rng.below(2) as usize].to_string();
            let pred = labels[rng.below(2) as usize].to_string();
            golds.insert(qid.clone(), gold.clone());
            preds.insert(qid.clone(), pred.clone());
            gold_list.push(gold);
            pred_list.push(pred);
        }
        let report = consistency_report(&results, &pseudo, &golds, &preds, d).unwrap();
        let weighted: f64 = report
            .buckets
            .iter()
            .filter_map(|b| b.accuracy.map(|a| a * b.n_instances as f64))
            .sum();
        let n: usize = report.buckets.iter().map(|b| b.n_instances).sum();
        let recombined = weighted / n as f64;
        let overall = accuracy(&pred_list, &gold_list).unwrap();
        assert!((recombined - overall).abs() < 1e-9);
    }

    #[test]
    fn metric_ranges_hold_on_random_inputs() {
        use crate::rng::SeededRng;
        let mut rng = SeededRng::new(512);
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        for _ in 0..200 {
            let n = 1 + rng.below(40) as usize;
            let golds: Vec<String> =
                (0..n).map(|_| labels[rng.below(3) as usize].clone()).collect();
            let preds: Vec<String> =
                (0..n).map(|_| labels[rng.below(3) as usize].clone()).collect();
            let acc = accuracy(&preds, &golds).unwrap();
            assert!((0.0..=1.0).contains(&acc));
            let cm = ConfusionMatrix::from_pairs(&labels, &golds, &preds).unwrap();
            let mcc = matthews(&cm).unwrap();
            assert!((-1.0..=1.0).contains(&mcc), "mcc {mcc}");
            let cs = consistency_score(&preds, &golds[0]).unwrap();
            assert!((0.0..=1.0).contains(&cs));
        }
    }

    #[test]
    fn sweep_csv_shape() {
        let cells = vec![
            SweepCell { k: 16, d: 4, metric: Metric::Accuracy, value: Some(0.5), error: None },
            SweepCell { k: 16, d: 32, metric: Metric::Accuracy, value: None, error: Some("d exceeds k".into()) },
        ];
        let csv = sweep_csv(&cells);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,d,metric,value");
        assert_eq!(lines[1], "16,4,accuracy,0.5");
        assert_eq!(lines[2], "16,32,accuracy,");
    }
}
