//! Seeded train/val partitioning and the split manifest file.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
}

/// Train:val proportion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: usize,
    pub val: usize,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 3, val: 1 }
    }
}

impl SplitRatio {
    /// Number of training items out of `n`, rounded to nearest.
    pub fn train_count(&self, n: usize) -> usize {
        let parts = self.train + self.val;
        assert!(parts > 0, "split ratio needs at least one part");
        (n * self.train * 2 + parts) / (2 * parts)
    }
}

pub fn split<T: Clone>(items: &[T], ratio: SplitRatio, seed: u64) -> DatasetSplit<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ratio.train_count(items.len());
    DatasetSplit {
        train: order[..n_train].iter().map(|&i| items[i].clone()).collect(),
        val: order[n_train..].iter().map(|&i| items[i].clone()).collect(),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("line {line}: entry {entry:?} appears before any [train]/[val] section")]
    NoSection { line: usize, entry: String },
    #[error("line {line}: unknown section {section:?}")]
    UnknownSection { line: usize, section: String },
}

pub fn write_manifest(split: &DatasetSplit<String>) -> String {
    let mut s = String::from("[train]\n");
    for f in &split.train {
        s.push_str(f);
        s.push('\n');
    }
    s.push_str("[val]\n");
    for f in &split.val {
        s.push_str(f);
        s.push('\n');
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<DatasetSplit<String>, ManifestError> {
    let mut out = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
    };
    let mut current: Option<bool> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = match section {
                "train" => Some(true),
                "val" => Some(false),
                _ => {
                    return Err(ManifestError::UnknownSection {
                        line: i + 1,
                        section: section.to_string(),
                    })
                }
            };
            continue;
        }
        match current {
            Some(true) => out.train.push(line.to_string()),
            Some(false) => out.val.push(line.to_string()),
            None => {
                return Err(ManifestError::NoSection {
                    line: i + 1,
                    entry: line.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn counts() {
        let r = SplitRatio::default();
        assert_eq!(r.train_count(4), 3);
        assert_eq!(r.train_count(100), 75);
        assert_eq!(r.train_count(0), 0);
        assert_eq!(r.train_count(4000), 3000);
        let table = SplitRatio { train: 4, val: 1 };
        assert_eq!(table.train_count(4000), 3200);
        let items: Vec<u32> = (0..4).collect();
        let s = split(&items, r, 1);
        assert_eq!((s.train.len(), s.val.len()), (3, 1));
    }

    #[test]
    fn manifest_round_trip() {
        let s = DatasetSplit {
            train: vec!["a.ppm".to_string(), "b.ppm".to_string()],
            val: vec!["c.ppm".to_string()],
        };
        let text = write_manifest(&s);
        assert_eq!(text, "[train]\na.ppm\nb.ppm\n[val]\nc.ppm\n");
        assert_eq!(parse_manifest(&text).unwrap(), s);
        assert!(parse_manifest("x.ppm\n").is_err());
        assert!(parse_manifest("[test]\n").is_err());
    }

    proptest! {
        #[test]
        fn partitions_deterministically(n in 0usize..300, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let s = split(&items, SplitRatio::default(), seed);
            prop_assert_eq!(&s, &split(&items, SplitRatio::default(), seed));
            let train: HashSet<_> = s.train.iter().collect();
            let val: HashSet<_> = s.val.iter().collect();
            prop_assert!(train.is_disjoint(&val));
            prop_assert_eq!(train.len() + val.len(), n);
            if n % 4 == 0 {
                prop_assert_eq!(s.train.len(), 3 * s.val.len());
            }
        }
    }
}
