use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psychometric::Design;

/// One observed trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based trial number.
    pub index: usize,
    pub x: f64,
    /// `true` for a success ("correct" / "yes").
    pub response: bool,
}

/// Ordered trial log for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub design: Design,
    trials: Vec<TrialRecord>,
}

impl Dataset {
    pub fn new(design: Design) -> Self {
        Self { design, trials: Vec::new() }
    }

    /// Builds a dataset from `(x, response)` pairs, validating each level.
    pub fn from_pairs(design: Design, pairs: impl IntoIterator<Item = (f64, bool)>) -> Result<Self> {
        let mut data = Self::new(design);
        for (x, r) in pairs {
            data.push(x, r)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: f64, response: bool) -> Result<&TrialRecord> {
        if !x.is_finite() || !self.design.contains(x) {
            return Err(Error::Domain(format!(
                "stimulus {x} outside the design domain [{}, {}]",
                self.design.x_lo, self.design.x_hi
            )));
        }
        let index = self.trials.len() + 1;
        self.trials.push(TrialRecord { index, x, response });
        Ok(self.trials.last().expect("just pushed"))
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// The first `n` trials as a new dataset.
    pub fn prefix(&self, n: usize) -> Dataset {
        Dataset { design: self.design, trials: self.trials[..n.min(self.trials.len())].to_vec() }
    }

    /// Fraction of successes among trials `range`.
    pub fn success_rate(&self, range: std::ops::Range<usize>) -> f64 {
        let block = &self.trials[range];
        if block.is_empty() {
            return f64::NAN;
        }
        block.iter().filter(|t| t.response).count() as f64 / block.len() as f64
    }

    /// Checks that indices run consecutively from 1 (relevant after deserialization).
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.trials.iter().enumerate() {
            if t.index != i + 1 {
                return Err(Error::Domain(format!("trial {} carries index {}", i + 1, t.index)));
            }
            if !self.design.contains(t.x) {
                return Err(Error::Domain(format!("trial {} at {} outside domain", t.index, t.x)));
            }
        }
        Ok(())
    }
}
