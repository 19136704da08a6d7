//! Moments and truncated functions of a density matrix on a finite matrix
//! algebra, the nested commutator identity, and the decay-product integral.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const MAX_TRUNCATED_LEN: usize = 8;
pub const MAX_COMMUTATOR_DEPTH: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixState {
    density: CMatrix,
}

impl MatrixState {
    pub fn new(density: CMatrix) -> Result<Self> {
        let d = density.nrows();
        if d < 2 || density.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d.max(2), got: density.ncols() });
        }
        if (&density - density.adjoint()).camax() > 1e-12 {
            return Err(Error::InvalidArgument("density matrix is not Hermitian".into()));
        }
        let tr = density.trace();
        if (tr - 1.0).norm() > 1e-12 {
            return Err(Error::InvalidArgument(format!("density trace is {tr}, expected 1")));
        }
        let low = density.clone().symmetric_eigenvalues().min();
        if low < -1e-12 {
            return Err(Error::InvalidArgument(format!("density has eigenvalue {low}")));
        }
        Ok(Self { density })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { density: CMatrix::identity(d, d) / Complex64::new(d as f64, 0.0) }
    }

    /// ρ = XX†/tr(XX†) for a complex Gaussian X.
    pub fn random<R: Rng>(d: usize, rng: &mut R) -> Self {
        let x = random_matrix(d, rng);
        let rho = &x * x.adjoint();
        let tr = rho.trace();
        let rho = rho / tr;
        // symmetrise away the rounding in the product
        let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        Self { density: rho }
    }

    /// ρ₁ ⊗ ρ₂.
    pub fn product(a: &MatrixState, b: &MatrixState) -> Self {
        Self { density: a.density.kronecker(&b.density) }
    }

    pub fn dimension(&self) -> usize {
        self.density.nrows()
    }

    pub fn density(&self) -> &CMatrix {
        &self.density
    }

    pub fn expect(&self, a: &CMatrix) -> Complex64 {
        (&self.density * a).trace()
    }

    /// The state U ρ U†, matching observables A → U A U†.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        Self { density: u * &self.density * u.adjoint() }
    }
}

/// Complex Gaussian matrix with unit-variance real and imaginary parts.
pub fn random_matrix<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

fn check_ops(state: &MatrixState, ops: &[CMatrix]) -> Result<()> {
    let d = state.dimension();
    for a in ops {
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.nrows() });
        }
    }
    Ok(())
}

fn ordered_product(ops: &[CMatrix], idx: impl Iterator<Item = usize>, d: usize) -> CMatrix {
    idx.fold(CMatrix::identity(d, d), |acc, j| acc * &ops[j])
}

/// ω(J) = tr(ρ A_{j₁} ⋯ A_{j_k}) for the ordered tuple J.
pub fn moments(state: &MatrixState, ops: &[CMatrix], j: &[usize]) -> Result<Complex64> {
    if j.is_empty() {
        return Err(Error::InvalidArgument("moment of an empty tuple".into()));
    }
    check_ops(state, ops)?;
    if let Some(&bad) = j.iter().find(|&&k| k >= ops.len()) {
        return Err(Error::InvalidArgument(format!("index {bad} out of range for {} operators", ops.len())));
    }
    Ok(state.expect(&ordered_product(ops, j.iter().copied(), state.dimension())))
}

/// Truncated function ω^T(J).
///
/// Recursion on the block holding the first entry of J, over all subsets
/// (each block keeps the induced order):
/// ω(J) = Σ_{J₀ ∋ J₁} ω^T(J₀) ω(J \ J₀).
pub fn truncated(state: &MatrixState, ops: &[CMatrix], j: &[usize]) -> Result<Complex64> {
    if j.len() > MAX_TRUNCATED_LEN {
        return Err(Error::BudgetExceeded(format!("|J| = {} > {MAX_TRUNCATED_LEN}", j.len())));
    }
    moments(state, ops, j)?;
    let n = j.len();
    let full = (1usize << n) - 1;
    let d = state.dimension();
    let moment = |mask: usize| -> Complex64 {
        state.expect(&ordered_product(ops, (0..n).filter(|i| mask >> i & 1 == 1).map(|i| j[i]), d))
    };
    let mut mom = vec![Complex64::new(0.0, 0.0); full + 1];
    mom[1..=full].iter_mut().enumerate().for_each(|(k, v)| *v = moment(k + 1));
    let mut tr = vec![Complex64::new(0.0, 0.0); full + 1];
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut acc = mom[mask];
        // proper sub-blocks containing the lowest position
        let mut sub = rest;
        while sub != 0 {
            sub = (sub - 1) & rest;
            let block = sub | low;
            acc -= tr[block] * mom[mask ^ block];
        }
        tr[mask] = acc;
    }
    Ok(tr[full])
}

/// [A_n, [⋯, [A₁, A₀]⋯]] by direct recursion.
pub fn nested_commutator(ops: &[CMatrix]) -> Result<CMatrix> {
    let (a0, rest) = ops.split_first().ok_or_else(|| Error::InvalidArgument("no operators".into()))?;
    let d = a0.nrows();
    let mut b = a0.clone();
    for a in rest {
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.nrows() });
        }
        b = a * &b - &b * a;
    }
    Ok(b)
}

/// Ordered tuples ⃖I ∪ {0} ∪ ⃗I^c with sign (−1)^{|I^c|}, one per subset I ⊂ {1..n}.
pub fn signed_subset_terms(n: usize) -> Vec<(f64, Vec<usize>)> {
    (0..1usize << n)
        .map(|mask| {
            let inside: Vec<usize> = (1..=n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
            let outside: Vec<usize> = (1..=n).filter(|i| mask >> (i - 1) & 1 == 0).collect();
            let sign = if outside.len().is_multiple_of(2) { 1.0 } else { -1.0 };
            let mut tuple: Vec<usize> = inside.into_iter().rev().collect();
            tuple.push(0);
            tuple.extend(outside);
            (sign, tuple)
        })
        .collect()
}

/// The nested commutator written as a signed sum over subsets.
pub fn signed_subset_expansion(ops: &[CMatrix]) -> Result<CMatrix> {
    if ops.is_empty() {
        return Err(Error::InvalidArgument("no operators".into()));
    }
    let d = ops[0].nrows();
    if let Some(a) = ops.iter().find(|a| a.nrows() != d || a.ncols() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: a.nrows() });
    }
    let mut out = CMatrix::zeros(d, d);
    for (sign, tuple) in signed_subset_terms(ops.len() - 1) {
        out += ordered_product(ops, tuple.into_iter(), d) * Complex64::new(sign, 0.0);
    }
    Ok(out)
}

/// |ω(B) − ω^T(B)| with B = [A_n, [⋯, [A₁, A₀]⋯]] and ω^T extended through
/// the signed subset expansion.
pub fn commutator_truncation_residual(state: &MatrixState, ops: &[CMatrix]) -> Result<f64> {
    let n = ops.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::InvalidArgument("need at least A₀ and A₁".into()));
    }
    if n > MAX_COMMUTATOR_DEPTH {
        return Err(Error::BudgetExceeded(format!("depth {n} > {MAX_COMMUTATOR_DEPTH}")));
    }
    check_ops(state, ops)?;
    let direct = state.expect(&nested_commutator(ops)?);
    let mut trunc = Complex64::new(0.0, 0.0);
    for (sign, tuple) in signed_subset_terms(n) {
        trunc += truncated(state, ops, &tuple)? * sign;
    }
    Ok((direct - trunc).norm())
}

/// Residuals of `trials` random instances (d×d density, n+1 operators).
pub fn random_residuals(d: usize, n: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let state = MatrixState::random(d, &mut rng);
            let ops: Vec<CMatrix> = (0..=n).map(|_| random_matrix(d, &mut rng)).collect();
            commutator_truncation_residual(&state, &ops)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub estimate: f64,
    pub std_error: f64,
    pub closed_form: f64,
}

const MC_CHUNKS: usize = 64;

/// Monte Carlo estimate of ∫_{ℝ^{n−1}} ∏_{i<n} (|t_i − t_{i+1}| + d)^{−1−ε} dt₁⋯dt_{n−1}
/// at t_n = 0, next to its closed form (2/(ε d^ε))^{n−1}.
///
/// Each increment is drawn from the symmetric density ∝ (|u| + d)^{−1−ε/2},
/// whose tail is heavier than the integrand's so the weights have finite variance.
pub fn decay_product_bound(n: usize, d: f64, eps: f64, mc_samples: usize, seed: u64) -> Result<DecayBound> {
    if !(2..=5).contains(&n) {
        return Err(Error::InvalidArgument(format!("n = {n} outside [2, 5]")));
    }
    if !(d > 0.0 && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("need d > 0 and eps > 0, got d = {d}, eps = {eps}")));
    }
    if mc_samples < MC_CHUNKS {
        return Err(Error::InsufficientSamples { needed: MC_CHUNKS, got: mc_samples });
    }
    let a = 0.5 * eps;
    let per_chunk = mc_samples / MC_CHUNKS;
    let sums: Vec<(f64, f64)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..per_chunk {
                let mut w = 1.0;
                for _ in 0..n - 1 {
                    let uni: f64 = rng.random::<f64>();
                    let x = d * ((1.0 - uni).powf(-1.0 / a) - 1.0);
                    let q = a * d.powf(a) / (2.0 * (x + d).powf(1.0 + a));
                    w *= (x + d).powf(-1.0 - eps) / q;
                }
                s += w;
                s2 += w * w;
            }
            (s, s2)
        })
        .collect();
    let total = (per_chunk * MC_CHUNKS) as f64;
    let s: f64 = sums.iter().map(|v| v.0).sum();
    let s2: f64 = sums.iter().map(|v| v.1).sum();
    let mean = s / total;
    let var = (s2 / total - mean * mean).max(0.0);
    Ok(DecayBound {
        estimate: mean,
        std_error: (var / total).sqrt(),
        closed_form: (2.0 / (eps * d.powf(eps))).powi(n as i32 - 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_terms_for_two() {
        let t = signed_subset_terms(2);
        assert!(t.contains(&(1.0, vec![0, 1, 2])));
        assert!(t.contains(&(-1.0, vec![1, 0, 2])));
        assert!(t.contains(&(-1.0, vec![2, 0, 1])));
        assert!(t.contains(&(1.0, vec![2, 1, 0])));
    }
}
