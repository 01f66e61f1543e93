use std::collections::{HashMap, HashSet};

use crate::error::{arg, Result};
use crate::model::TrajId;

/// Share of the true top `k` found in the predicted top `k`.
pub fn hr_k(pred: &[TrajId], truth: &[TrajId], k: usize) -> Result<f64> {
    if k == 0 {
        return arg("hr_k needs k >= 1");
    }
    if pred.len() < k || truth.len() < k {
        return arg(format!("hr_k at k = {k} needs {k} predictions and {k} true ids, got {} and {}", pred.len(), truth.len()));
    }
    Ok(overlap(&pred[..k], &truth[..k]) as f64 / k as f64)
}

/// Share of the true top 10 found in the predicted top 50. When the store
/// holds fewer than 50 trajectories, `pred` may be the whole store.
pub fn r10_at_50(pred: &[TrajId], truth: &[TrajId], store_len: usize) -> Result<f64> {
    let need = 50.min(store_len);
    if pred.len() < need {
        return arg(format!("r10_at_50 needs {need} predictions, got {}", pred.len()));
    }
    if truth.len() < 10 {
        return arg(format!("r10_at_50 needs 10 true ids, got {}", truth.len()));
    }
    Ok(overlap(&pred[..pred.len().min(50)], &truth[..10]) as f64 / 10.0)
}

/// Normalized mean true rank of the predictions: 0 for the true top `k`,
/// approaching 1 as they sink to the bottom of a large ranking.
pub fn rr(pred: &[TrajId], ranking: &[TrajId]) -> Result<f64> {
    if pred.is_empty() {
        return arg("rr of an empty prediction");
    }
    let pos: HashMap<TrajId, usize> = ranking.iter().enumerate().map(|(i, &id)| (id, i + 1)).collect();
    let mut sum = 0usize;
    for id in pred {
        match pos.get(id) {
            Some(r) => sum += r,
            None => return arg(format!("predicted id {id} is missing from the ranking")),
        }
    }
    let k = pred.len() as f64;
    let mean = sum as f64 / k;
    let ideal = (k + 1.0) / 2.0;
    let n = ranking.len() as f64;
    if n <= ideal {
        return Ok(0.0);
    }
    Ok((mean - ideal) / (n - ideal))
}

fn overlap(a: &[TrajId], b: &[TrajId]) -> usize {
    let b: HashSet<&TrajId> = b.iter().collect();
    a.iter().collect::<HashSet<_>>().into_iter().filter(|x| b.contains(x)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<TrajId> {
        v.iter().map(|&i| TrajId(i)).collect()
    }

    #[test]
    fn hit_rate_examples() {
        let t = ids(&(0..10).collect::<Vec<_>>());
        assert_eq!(hr_k(&t, &t, 10).unwrap(), 1.0);
        assert_eq!(hr_k(&ids(&(10..20).collect::<Vec<_>>()), &t, 10).unwrap(), 0.0);
        assert_eq!(hr_k(&ids(&[0, 1, 2, 3, 4, 20, 21, 22, 23, 24]), &t, 10).unwrap(), 0.5);
        assert!(hr_k(&t[..5], &t, 10).is_err());
    }

    #[test]
    fn r10_examples() {
        let truth = ids(&(0..10).collect::<Vec<_>>());
        let all = ids(&(0..50).rev().collect::<Vec<_>>());
        assert_eq!(r10_at_50(&all, &truth, 1000).unwrap(), 1.0);
        assert_eq!(r10_at_50(&ids(&(100..150).collect::<Vec<_>>()), &truth, 1000).unwrap(), 0.0);
        let mut seven: Vec<u32> = (0..7).collect();
        seven.extend(100..143);
        assert_eq!(r10_at_50(&ids(&seven), &truth, 1000).unwrap(), 0.7);
        assert!(r10_at_50(&truth, &truth, 1000).is_err());
        assert_eq!(r10_at_50(&ids(&(0..20).collect::<Vec<_>>()), &truth, 20).unwrap(), 1.0);
    }

    #[test]
    fn rank_ratio_examples() {
        let ranking = ids(&(0..10).collect::<Vec<_>>());
        assert_eq!(rr(&ids(&[0, 1]), &ranking).unwrap(), 0.0);
        let got = rr(&ids(&[0, 3]), &ranking).unwrap();
        assert!((got - 1.0 / 8.5).abs() < 1e-12);
        let big = ids(&(0..100_000).collect::<Vec<_>>());
        assert!(rr(&ids(&[99_999]), &big).unwrap() > 0.9999);
        assert!(rr(&ids(&[77]), &ranking).is_err());
    }
}
