//! Value containers passed between procedures.
//!
//! Indices are zero-based everywhere inside the library; the CLI converts
//! to one-based row numbers on output.

use serde::Serialize;

use crate::error::{input, Result};

/// Per-hypothesis p-values, each finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueSet(Vec<f64>);

impl PValueSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return input("p-value set is empty");
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0 && **v <= 1.0))
        {
            return input(format!("p-value at position {i} is not in [0, 1]: {v}"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Nonnegative, finite scores consumed by e-BH.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EValueSet(Vec<f64>);

impl EValueSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return input(format!("e-value at position {i} is negative or not finite: {v}"));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// `w_1 * a + w_2 * b`, coordinatewise.
    pub fn weighted_sum(a: &EValueSet, w_a: &[f64], b: &EValueSet, w_b: &[f64]) -> Result<Self> {
        let n = a.len();
        if b.len() != n || w_a.len() != n || w_b.len() != n {
            return input("length mismatch in weighted e-value sum");
        }
        let v = (0..n).map(|i| w_a[i] * a.0[i] + w_b[i] * b.0[i]).collect();
        Self::new(v)
    }

    /// Scales coordinate `i` by `w[i]`.
    pub fn scaled(&self, w: &[f64]) -> Result<Self> {
        if w.len() != self.len() {
            return input("weight vector length does not match e-values");
        }
        Self::new(self.0.iter().zip(w).map(|(e, w)| e * w).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Sorted, duplicate-free hypothesis indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct RejectionSet(Vec<usize>);

impl RejectionSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a set from arbitrary indices, checking they are below `n`.
    pub fn from_indices(mut idx: Vec<usize>, n: usize) -> Result<Self> {
        idx.sort_unstable();
        idx.dedup();
        if let Some(&last) = idx.last() {
            if last >= n {
                return input(format!("rejection index {last} out of range for n = {n}"));
            }
        }
        Ok(Self(idx))
    }

    /// Caller guarantees sorted and unique.
    pub(crate) fn from_sorted(idx: Vec<usize>) -> Self {
        debug_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        Self(idx)
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self(mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn to_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.0 {
            m[i] = true;
        }
        m
    }

    pub fn is_subset_of(&self, other: &RejectionSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }
}

/// Per-hypothesis nonnegative weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return input(format!("weight at position {i} is negative or not finite: {v}"));
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, w: f64) -> Self {
        Self(vec![w; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pvalues_reject_out_of_range() {
        assert!(PValueSet::new(vec![0.1, 1.2]).is_err());
        assert!(PValueSet::new(vec![f64::NAN]).is_err());
        assert!(PValueSet::new(vec![]).is_err());
        assert!(PValueSet::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn rejection_set_sorts_and_dedups() {
        let r = RejectionSet::from_indices(vec![3, 1, 3, 0], 4).unwrap();
        assert_eq!(r.indices(), &[0, 1, 3]);
        assert!(RejectionSet::from_indices(vec![4], 4).is_err());
    }

    #[test]
    fn evalues_must_be_nonnegative() {
        assert!(EValueSet::new(vec![0.0, -1e-9]).is_err());
        assert!(EValueSet::new(vec![f64::INFINITY]).is_err());
    }
}
