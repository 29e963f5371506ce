use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seeding, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Train, validation and test proportions.
    pub ratios: [u32; 3],
    pub seed: u64,
    pub n_folds: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [7, 1, 2],
            seed: 0,
            n_folds: 5,
        }
    }
}

/// Indices into a beat list.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

fn shuffled(n: usize, spec: &SplitSpec) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if spec.ratios.iter().sum::<u32>() == 0 || spec.ratios[0] == 0 {
        return Err(Error::Config(format!("bad split ratios {:?}", spec.ratios)));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeding::rng(spec.seed, "split"));
    Ok(idx)
}

/// Seeded shuffle followed by a contiguous train/valid/test cut. Validation
/// and test sizes are floored; the training set takes the remainder.
pub fn make_split(n: usize, spec: &SplitSpec) -> Result<Split> {
    let idx = shuffled(n, spec)?;
    let total = u64::from(spec.ratios.iter().sum::<u32>());
    let n_test = (n as u64 * u64::from(spec.ratios[2]) / total) as usize;
    let n_valid = (n as u64 * u64::from(spec.ratios[1]) / total) as usize;
    let n_train = n - n_test - n_valid;
    Ok(Split {
        train: idx[..n_train].to_vec(),
        valid: idx[n_train..n_train + n_valid].to_vec(),
        test: idx[n_train + n_valid..].to_vec(),
    })
}

/// Cross-validation folds over the same shuffle as [`make_split`]: fold `f`
/// tests on the `f`-th contiguous block, and the rest is cut into train and
/// validation in the train:valid ratio.
pub fn make_folds(n: usize, spec: &SplitSpec) -> Result<Vec<Split>> {
    if spec.n_folds < 2 {
        return Err(Error::Config(format!("{} folds", spec.n_folds)));
    }
    let idx = shuffled(n, spec)?;
    let k = spec.n_folds;
    let tv = u64::from(spec.ratios[0] + spec.ratios[1]);
    Ok((0..k)
        .map(|f| {
            let (lo, hi) = (f * n / k, (f + 1) * n / k);
            let rest: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
            let n_valid = (rest.len() as u64 * u64::from(spec.ratios[1]) / tv) as usize;
            let n_train = rest.len() - n_valid;
            Split {
                train: rest[..n_train].to_vec(),
                valid: rest[n_train..].to_vec(),
                test: idx[lo..hi].to_vec(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SplitSpec {
        SplitSpec {
            seed,
            ..SplitSpec::default()
        }
    }

    #[test]
    fn ten_beats() {
        assert_eq!(make_split(10, &spec(1)).unwrap().sizes(), (7, 1, 2));
    }

    #[test]
    fn full_dataset_sizes() {
        let s = make_split(100_703, &spec(3)).unwrap();
        assert_eq!(s.sizes(), (70_493, 10_070, 20_140));
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(
            make_split(500, &spec(9)).unwrap(),
            make_split(500, &spec(9)).unwrap()
        );
        assert_ne!(
            make_split(500, &spec(9)).unwrap(),
            make_split(500, &spec(10)).unwrap()
        );
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(make_split(0, &spec(0)), Err(Error::EmptyDataset)));
        assert!(make_folds(0, &spec(0)).is_err());
    }

    #[test]
    fn folds_partition() {
        let n = 1003;
        let folds = make_folds(n, &spec(4)).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0; n];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            let mut all: Vec<usize> = f
                .train
                .iter()
                .chain(&f.valid)
                .chain(&f.test)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert_eq!(f.valid.len(), (n - f.test.len()) / 8);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}
