use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::PipelineError;
use crate::rng::{stream, Stream};

/// Fold assignment of sample indices; no patient spans two folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Samples outside fold `f`.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    /// `{"0": [...], "1": [...]}` as written by the CLI.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, &Vec<usize>> = self.folds.iter().enumerate().map(|(i, f)| (i.to_string(), f)).collect();
        serde_json::to_string_pretty(&map).expect("fold map serializes")
    }
}

/// Shuffles the distinct patients with the seed and deals them round-robin
/// into `k` folds. `patients[i]` is the patient of sample `i`.
pub fn grouped_kfold(patients: &[String], k: usize, seed: u64) -> Result<FoldSplit, PipelineError> {
    let mut groups: Vec<&String> = patients.iter().collect();
    groups.sort();
    groups.dedup();
    if k == 0 || groups.len() < k {
        return Err(PipelineError::TooFewGroups { groups: groups.len(), k });
    }
    groups.shuffle(&mut stream(seed, Stream::Split));
    let fold_of: BTreeMap<&String, usize> = groups.iter().enumerate().map(|(i, &p)| (p, i % k)).collect();
    let mut folds = vec![Vec::new(); k];
    for (i, p) in patients.iter().enumerate() {
        folds[fold_of[p]].push(i);
    }
    Ok(FoldSplit { folds })
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, PipelineError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(PipelineError::ShapeMismatch(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Mean absolute error per subject, then mean and population std across subjects.
pub fn mae_by_subject(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, f64), PipelineError> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(PipelineError::ShapeMismatch(format!("{} subjects vs {}", preds.len(), targets.len())));
    }
    let mut per = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        if p.len() != t.len() || p.is_empty() {
            return Err(PipelineError::ShapeMismatch(format!("{} predictions vs {} targets", p.len(), t.len())));
        }
        per.push(p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64);
    }
    Ok(mean_std(&per))
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Classical one-way ANOVA. Returns `(F, p)` with `p = 1 − CDF_F(df_b, df_w)(F)`.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<(f64, f64), PipelineError> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(PipelineError::DegenerateGroups("need at least 2 groups of at least 2 values".into()));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let grand = all.iter().sum::<f64>() / n;
    if all.iter().all(|&v| v == all[0]) {
        return Err(PipelineError::DegenerateGroups("all values are identical".into()));
    }
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_b = (groups.len() - 1) as f64;
    let df_w = n - groups.len() as f64;
    if ss_within == 0.0 {
        // distinct constant groups: infinitely strong separation
        return Ok((f64::INFINITY, 0.0));
    }
    let f = (ss_between / df_b) / (ss_within / df_w);
    let dist = FisherSnedecor::new(df_b, df_w).map_err(|e| PipelineError::DegenerateGroups(e.to_string()))?;
    Ok((f, dist.sf(f)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn one_patient_per_fold() {
        let p: Vec<String> = (0..8).map(|i| format!("p{i}")).collect();
        let s = grouped_kfold(&p, 8, 3).unwrap();
        assert!(s.folds.iter().all(|f| f.len() == 1));
        assert!(matches!(grouped_kfold(&p, 9, 3), Err(PipelineError::TooFewGroups { groups: 8, k: 9 })));
    }

    #[test]
    fn patient_arteries_stay_together() {
        let s = grouped_kfold(&ids(&["a", "b", "a", "c", "d", "b"]), 2, 1).unwrap();
        let fold_of = |i: usize| s.folds.iter().position(|f| f.contains(&i)).unwrap();
        assert_eq!(fold_of(0), fold_of(2));
        assert_eq!(fold_of(1), fold_of(5));
    }

    #[test]
    fn impact_sized_split() {
        // 49 arteries over 20 patients, at most 3 per patient
        let mut p = Vec::new();
        for i in 0..20 {
            let count = [3, 3, 2][i % 3];
            for _ in 0..count {
                if p.len() < 49 {
                    p.push(format!("patient{i}"));
                }
            }
        }
        while p.len() < 49 {
            p.push("patient_extra".into());
        }
        let s = grouped_kfold(&p, 8, 11).unwrap();
        let sizes: Vec<usize> = s.folds.iter().map(Vec::len).collect();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        // round-robin dealing of patients with up to 3 arteries each
        assert!(spread <= 3 * 2, "{sizes:?}");
        assert_eq!(sizes.iter().sum::<usize>(), 49);
    }

    proptest! {
        #[test]
        fn never_splits_a_patient(assign in proptest::collection::vec(0usize..12, 12..60), k in 2usize..6, seed in 0u64..50) {
            let p: Vec<String> = assign.iter().map(|a| format!("p{a}")).collect();
            let distinct = { let mut d = assign.clone(); d.sort(); d.dedup(); d.len() };
            prop_assume!(distinct >= k);
            let s = grouped_kfold(&p, k, seed).unwrap();
            let mut seen = vec![usize::MAX; p.len()];
            for (f, fold) in s.folds.iter().enumerate() {
                for &i in fold {
                    prop_assert_eq!(seen[i], usize::MAX);
                    seen[i] = f;
                }
            }
            for i in 0..p.len() {
                for j in 0..p.len() {
                    if p[i] == p[j] {
                        prop_assert_eq!(seen[i], seen[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 30_000;
        let truth: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let a = accuracy(&pred, &truth).unwrap();
        let sigma = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
        assert!((a - 1.0 / 3.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn most_frequent_class_on_balanced_labels() {
        for n in [9usize, 10, 11, 100] {
            let labels = crate::pipeline::tertile_labels(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
            let a = accuracy(&vec![0; n], &labels).unwrap();
            assert!((a - n.div_ceil(3) as f64 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn mae_two_subjects() {
        let (m, s) = mae_by_subject(&[vec![0.1, 0.1], vec![0.3]], &[vec![0.0, 0.2], vec![0.0]]).unwrap();
        assert!((m - 0.2).abs() < 1e-15 && (s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn anova_hand_table() {
        let (f, p) = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(f, 1.5);
        assert!(p > 0.0 && p < 1.0);
        let (f, p) = anova_oneway(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!((f, p), (0.0, 1.0));
        assert!(anova_oneway(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn anova_equals_squared_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (ma, mb) = ((a[0] + a[1]) / 2.0, (b[0] + b[1]) / 2.0);
            let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
            let pooled = (ss(&a, ma) + ss(&b, mb)) / 2.0;
            let t = (ma - mb) / (pooled * (0.5 + 0.5)).sqrt();
            let (f, _) = anova_oneway(&[a, b]).unwrap();
            assert!((f - t * t).abs() <= 1e-10 * f.max(1.0), "{f} vs {}", t * t);
        }
    }
}
