//! Normalized probabilists' Hermite polynomials.
//!
//! `H_p(x) = He_p(x) / sqrt(p!)`, orthonormal under the standard Gaussian
//! measure. Evaluation uses the normalized three-term recurrence
//! `H_{p+1} = (x H_p - sqrt(p) H_{p-1}) / sqrt(p+1)` so no factorials are formed.

use crate::error::{Error, Result};

pub const MAX_HERMITE_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HermiteOrder(usize);

impl HermiteOrder {
    pub fn new(p: usize) -> Result<Self> {
        if p > MAX_HERMITE_ORDER {
            return Err(Error::HermiteOrderTooLarge(p));
        }
        Ok(Self(p))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for HermiteOrder {
    type Error = Error;

    fn try_from(p: usize) -> Result<Self> {
        Self::new(p)
    }
}

/// Evaluates `H_p(x)`.
pub fn hermite_eval(p: HermiteOrder, x: f64) -> f64 {
    let p = p.get();
    if p == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, x);
    for n in 1..p {
        let next = (x * cur - (n as f64).sqrt() * prev) / ((n + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Writes `H_0(x), ..., H_{out.len()-1}(x)` into `out`.
///
/// Panics if `out` is longer than `MAX_HERMITE_ORDER + 1`.
#[inline]
pub fn hermite_all(x: f64, out: &mut [f64]) {
    assert!(out.len() <= MAX_HERMITE_ORDER + 1);
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for n in 1..out.len() - 1 {
        out[n + 1] = (x * out[n] - (n as f64).sqrt() * out[n - 1]) / ((n + 1) as f64).sqrt();
    }
}
