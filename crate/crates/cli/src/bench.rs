//! Latency statistics for the `bench` command.

use std::fmt::Write as _;

/// Linear-interpolated quantile of sorted samples.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetStats {
    pub rois: usize,
    pub samples: usize,
    pub median_ms: f64,
    pub iqr_ms: Option<f64>,
}

impl BudgetStats {
    pub fn from_samples(rois: usize, samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            rois,
            samples: s.len(),
            median_ms: quantile(&s, 0.5),
            iqr_ms: (s.len() > 1).then(|| quantile(&s, 0.75) - quantile(&s, 0.25)),
        }
    }
}

/// Visiting order for one repeat; rotated so slow drift is shared evenly.
pub fn rotation(n: usize, repeat: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |k| (k + repeat) % n)
}

/// Indices of consecutive pairs where a larger budget was not slower.
pub fn ordering_violations(stats: &[BudgetStats]) -> Vec<usize> {
    stats
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].rois > w[1].rois && w[0].median_ms <= w[1].median_ms)
        .map(|(i, _)| i)
        .collect()
}

pub fn table(stats: &[BudgetStats]) -> String {
    let mut s = String::from("rois  samples  median_ms  iqr_ms\n");
    for b in stats {
        let iqr = b.iqr_ms.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(s, "{:<5} {:<8} {:<10.3} {iqr}", b.rois, b.samples, b.median_ms);
    }
    if let (Some(first), Some(last)) = (stats.first(), stats.last()) {
        let _ = writeln!(s, "ratio {}/{}: {:.3}", first.rois, last.rois, first.median_ms / last.median_ms);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_no_iqr() {
        let b = BudgetStats::from_samples(50, &[3.0]);
        assert_eq!(b.median_ms, 3.0);
        assert_eq!(b.iqr_ms, None);
        assert!(table(&[b]).contains("n/a"));
    }

    #[test]
    fn quartiles() {
        let b = BudgetStats::from_samples(10, &[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(b.median_ms, 3.0);
        assert_eq!(b.iqr_ms, Some(2.0));
    }

    #[test]
    fn rotation_covers_every_budget() {
        for r in 0..5 {
            let mut v: Vec<usize> = rotation(4, r).collect();
            v.sort();
            assert_eq!(v, [0, 1, 2, 3]);
        }
        assert_eq!(rotation(3, 1).collect::<Vec<_>>(), [1, 2, 0]);
    }

    #[test]
    fn violations_only_between_distinct_budgets() {
        let s = |rois, m| BudgetStats { rois, samples: 1, median_ms: m, iqr_ms: None };
        assert!(ordering_violations(&[s(300, 5.0), s(50, 2.0)]).is_empty());
        assert_eq!(ordering_violations(&[s(300, 2.0), s(50, 2.0)]), [0]);
        assert!(ordering_violations(&[s(50, 2.0), s(50, 2.1)]).is_empty());
    }
}
