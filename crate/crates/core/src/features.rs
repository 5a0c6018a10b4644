//! Sparse feature vectors.
//!
//! Every feature map in this crate is either a one-hot state aggregation or a
//! handful of raw values, so a small inline list of `(index, value)` pairs is
//! enough and avoids per-step allocation.

use smallvec::SmallVec;

use crate::scalar::Scalar;
use crate::{Error, Result};

/// A feature vector of logical length `len` holding only its active entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<F> {
    len: usize,
    active: SmallVec<[(usize, F); 4]>,
}

impl<F: Scalar> Features<F> {
    /// One-hot vector with a single 1 at `index`.
    pub fn one_hot(index: usize, len: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::contract(format!(
                "one-hot index {index} out of range for length {len}"
            )));
        }
        let mut active = SmallVec::new();
        active.push((index, F::one()));
        Ok(Features { len, active })
    }

    /// Dense vector; every entry is stored, including zeros.
    pub fn dense(values: &[F]) -> Self {
        Features {
            len: values.len(),
            active: values.iter().copied().enumerate().collect(),
        }
    }

    /// Places `other` after `self` in a vector of length `self.len() + other.len()`.
    pub fn concat(&self, other: &Features<F>) -> Self {
        let mut active = self.active.clone();
        active.extend(other.active.iter().map(|&(i, x)| (i + self.len, x)));
        Features {
            len: self.len + other.len,
            active,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Active `(index, value)` pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.active.iter().copied()
    }

    /// The active index if this is a one-hot vector.
    pub fn one_hot_index(&self) -> Option<usize> {
        match self.active.as_slice() {
            [(i, x)] if *x == F::one() => Some(*i),
            _ => None,
        }
    }

    /// Expands to a dense vector.
    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.len];
        for (i, x) in self.iter() {
            out[i] += x;
        }
        out
    }

    /// Inner product with a dense weight vector of the same length.
    pub fn dot(&self, w: &[F]) -> Result<F> {
        self.check_len(w.len())?;
        Ok(self.dot_unchecked(w))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, w: &[F]) -> F {
        self.active
            .iter()
            .fold(F::zero(), |acc, &(i, x)| acc + w[i] * x)
    }

    /// Inner product of two sparse vectors of equal length.
    pub fn dot_features(&self, other: &Features<F>) -> Result<F> {
        self.check_len(other.len)?;
        let mut acc = F::zero();
        for &(i, x) in &self.active {
            for &(j, y) in &other.active {
                if i == j {
                    acc += x * y;
                }
            }
        }
        Ok(acc)
    }

    /// Adds `scale * self` into `w` in place. Fails if a touched weight
    /// becomes non-finite (the weight is left updated so the caller can
    /// report it).
    pub fn scaled_add_to(&self, w: &mut [F], scale: F) -> Result<()> {
        self.check_len(w.len())?;
        let mut finite = true;
        for &(i, x) in &self.active {
            w[i] += scale * x;
            finite &= w[i].is_finite();
        }
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite { what: "weights" })
        }
    }

    fn check_len(&self, other: usize) -> Result<()> {
        if self.len == other {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "dimension mismatch: features have length {}, other operand {other}",
                self.len
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_dot_selects_weight() {
        let x = Features::<f64>::one_hot(2, 4).unwrap();
        assert_eq!(x.dot(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 3.0);
        assert_eq!(x.one_hot_index(), Some(2));
    }

    #[test]
    fn one_hot_out_of_range_is_rejected() {
        assert!(Features::<f64>::one_hot(4, 4).is_err());
    }

    #[test]
    fn concat_offsets_second_block() {
        let a = Features::<f64>::one_hot(1, 3).unwrap();
        let b = Features::dense(&[0.5, 2.0]);
        let c = a.concat(&b);
        assert_eq!(c.len(), 5);
        assert_eq!(c.to_dense(), vec![0.0, 1.0, 0.0, 0.5, 2.0]);
        assert_eq!(c.one_hot_index(), None);
    }

    #[test]
    fn dot_features_matches_dense() {
        let a = Features::<f64>::dense(&[1.0, 2.0, 0.0]);
        let b = Features::<f64>::one_hot(1, 3).unwrap();
        assert_eq!(a.dot_features(&b).unwrap(), 2.0);
        assert_eq!(b.dot_features(&b).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_contract_violation() {
        let x = Features::<f64>::one_hot(0, 3).unwrap();
        assert!(x.dot(&[1.0, 2.0]).is_err());
        assert!(x.scaled_add_to(&mut [0.0; 2], 1.0).is_err());
    }

    #[test]
    fn scaled_add_reports_overflow() {
        let x = Features::<f64>::one_hot(0, 1).unwrap();
        let mut w = [f64::MAX];
        assert!(x.scaled_add_to(&mut w, f64::MAX).is_err());
    }

    #[test]
    fn scaled_add_updates_active_entries_only() {
        let x = Features::<f32>::one_hot(1, 3).unwrap();
        let mut w = [1.0f32; 3];
        x.scaled_add_to(&mut w, 0.5).unwrap();
        assert_eq!(w, [1.0, 1.5, 1.0]);
    }
}
