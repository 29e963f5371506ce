use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BeatSample, ConditionTable, NoiseCondition};
use crate::{seeding, Error, Result};

/// How noise conditions are assigned to the beats of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NoiseMode {
    /// Every beat under one condition.
    Single(NoiseCondition),
    /// The split is shuffled and cut into four equal parts, one per condition.
    BalancedMixTrain,
    /// Every beat appears once under each condition.
    BalancedMixTest,
}

impl Default for NoiseMode {
    fn default() -> Self {
        NoiseMode::Single(NoiseCondition::Noiseless)
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMode::Single(c) => f.write_str(c.as_str()),
            NoiseMode::BalancedMixTrain => f.write_str("mix-train"),
            NoiseMode::BalancedMixTest => f.write_str("mix-test"),
        }
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mix-train" => Ok(NoiseMode::BalancedMixTrain),
            "mix-test" => Ok(NoiseMode::BalancedMixTest),
            other => other.parse().map(NoiseMode::Single),
        }
    }
}

impl From<NoiseMode> for String {
    fn from(m: NoiseMode) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for NoiseMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Tags each index of a split with the condition it is presented under.
pub fn build_noise_program(
    indices: &[usize],
    mode: NoiseMode,
    seed: u64,
) -> Vec<(usize, NoiseCondition)> {
    match mode {
        NoiseMode::Single(c) => indices.iter().map(|&i| (i, c)).collect(),
        NoiseMode::BalancedMixTest => NoiseCondition::ALL
            .iter()
            .flat_map(|&c| indices.iter().map(move |&i| (i, c)))
            .collect(),
        NoiseMode::BalancedMixTrain => {
            let mut order: Vec<usize> = (0..indices.len()).collect();
            order.shuffle(&mut seeding::rng(seed, "balanced-mix"));
            let n = indices.len();
            let k = NoiseCondition::ALL.len();
            let mut tags = vec![NoiseCondition::Noiseless; n];
            let mut start = 0;
            for (part, &c) in NoiseCondition::ALL.iter().enumerate() {
                let size = n / k + usize::from(part < n % k);
                for &pos in &order[start..start + size] {
                    tags[pos] = c;
                }
                start += size;
            }
            indices.iter().copied().zip(tags).collect()
        }
    }
}

/// Looks up the windows a program refers to.
pub fn materialize<'a>(
    table: &'a ConditionTable,
    program: &[(usize, NoiseCondition)],
) -> Result<Vec<&'a BeatSample>> {
    program
        .iter()
        .map(|&(i, c)| {
            table
                .condition(c)
                .ok_or_else(|| Error::Config(format!("dataset has no {c} beats")))?
                .get(i)
                .ok_or_else(|| Error::Config(format!("beat index {i} out of range")))
        })
        .collect()
}
