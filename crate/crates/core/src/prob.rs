//! Finite categorical distributions and the log-space primitives shared by
//! every other module: log-sum-exp, softmax and KL divergence.
//!
//! Normalisation follows one rule everywhere: inputs whose mass deviates from
//! one by at most [`RENORMALIZE_TOLERANCE`] are silently renormalised, larger
//! deviations are rejected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalised tables sum to one within this absolute tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Constructors renormalise below this deviation and reject above it.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// Number of symbols in a finite value set; symbols are `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet(usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        Ok(Alphabet(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn check(self, what: &'static str, value: usize) -> Result<()> {
        if value < self.0 {
            Ok(())
        } else {
            Err(Error::IndexOutOfAlphabet {
                what,
                value,
                size: self.0,
            })
        }
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Alphabet::new(size)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.0
    }
}

/// Validates non-negativity and total mass, returning the renormalised vector.
fn normalize_checked(mut values: Vec<f64>) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    values.iter_mut().for_each(|v| *v /= sum);
    Ok(values)
}

/// Anything that can be viewed as a dense probability table.
pub trait ProbTable {
    fn shape(&self) -> Vec<usize>;
    fn values(&self) -> &[f64];
}

/// Probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Ok(Categorical {
            probs: normalize_checked(probs)?,
        })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        Ok(Categorical {
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn point_mass(size: usize, index: usize) -> Result<Self> {
        let alphabet = Alphabet::new(size)?;
        alphabet.check("point mass", index)?;
        let mut probs = vec![0.0; size];
        probs[index] = 1.0;
        Ok(Categorical { probs })
    }

    /// Normalises unnormalised log-weights with max-subtraction.
    ///
    /// Entries equal to `-inf` get probability zero; an all `-inf` input is a
    /// [`Error::DegenerateNormalizer`].
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if log_weights
            .iter()
            .any(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::NonFiniteInput);
        }
        let lse = log_sum_exp(log_weights)?;
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateNormalizer);
        }
        let mut probs: Vec<f64> = log_weights.iter().map(|v| (v - lse).exp()).collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Ok(Categorical { probs })
    }

    /// Normalises strictly non-negative weights with a positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateNormalizer);
        }
        Ok(Categorical {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Shannon entropy in nats, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Lowest index attaining the maximum probability.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF draw consuming exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Categorical::new(probs)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Vec<f64> {
        c.probs
    }
}

impl ProbTable for Categorical {
    fn shape(&self) -> Vec<usize> {
        vec![self.probs.len()]
    }

    fn values(&self) -> &[f64] {
        &self.probs
    }
}

/// Dense table over a product space, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    dims: Vec<usize>,
    values: Vec<f64>,
    normalized: bool,
}

impl JointTable {
    /// Unnormalised non-negative table.
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let size = Self::checked_size(&dims)?;
        if values.len() != size {
            return Err(Error::ShapeMismatch {
                left: dims,
                right: vec![values.len()],
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        Ok(JointTable {
            dims,
            values,
            normalized: false,
        })
    }

    /// Probability table; mass must be one up to the renormalisation tolerance.
    pub fn normalized(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let size = Self::checked_size(&dims)?;
        if values.len() != size {
            return Err(Error::ShapeMismatch {
                left: dims,
                right: vec![values.len()],
            });
        }
        Ok(JointTable {
            dims,
            values: normalize_checked(values)?,
            normalized: true,
        })
    }

    fn checked_size(dims: &[usize]) -> Result<usize> {
        if dims.contains(&0) {
            return Err(Error::EmptyAlphabet);
        }
        Ok(dims.iter().product())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::ShapeMismatch {
                left: self.dims.clone(),
                right: vec![index.len()],
            });
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i >= d {
                return Err(Error::IndexOutOfAlphabet {
                    what: "table axis",
                    value: i,
                    size: d,
                });
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.flat_index(index)?])
    }

    /// Marginal table over the listed axes (kept in the listed order).
    pub fn marginal(&self, axes: &[usize]) -> Result<JointTable> {
        for &a in axes {
            if a >= self.dims.len() {
                return Err(Error::ShapeMismatch {
                    left: self.dims.clone(),
                    right: axes.to_vec(),
                });
            }
        }
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; out_dims.iter().product()];
        let mut index = vec![0usize; self.dims.len()];
        for &v in &self.values {
            let mut flat = 0;
            for &a in axes {
                flat = flat * self.dims[a] + index[a];
            }
            out[flat] += v;
            // odometer increment, last axis fastest
            for k in (0..index.len()).rev() {
                index[k] += 1;
                if index[k] < self.dims[k] {
                    break;
                }
                index[k] = 0;
            }
        }
        Ok(JointTable {
            dims: out_dims,
            values: out,
            normalized: self.normalized,
        })
    }
}

impl ProbTable for JointTable {
    fn shape(&self) -> Vec<usize> {
        self.dims.clone()
    }

    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `log Σ exp(v)` with max-subtraction. All `-inf` inputs give `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Softmax with inverse temperature `gamma`: `exp(γ v_i) / Σ_j exp(γ v_j)`.
pub fn softmax(values: &[f64], gamma: f64) -> Result<Categorical> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !gamma.is_finite() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "softmax gamma must be non-negative, got {gamma}"
        )));
    }
    let scaled: Vec<f64> = values.iter().map(|v| gamma * v).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(Categorical { probs })
}

/// `KL(p || q) = Σ p log(p/q)`, with `0 log(0/q) = 0`.
pub fn kl_divergence<P: ProbTable + ?Sized, Q: ProbTable + ?Sized>(p: &P, q: &Q) -> Result<f64> {
    let (ps, qs) = (p.shape(), q.shape());
    if ps != qs {
        return Err(Error::ShapeMismatch {
            left: ps,
            right: qs,
        });
    }
    let mut kl = 0.0;
    for (index, (&pi, &qi)) in p.values().iter().zip(q.values()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::SupportViolation { index });
        }
        kl += pi * (pi / qi).ln();
    }
    // rounding can leave tiny negatives for p ≈ q
    Ok(kl.max(0.0))
}
