//! 4×4 spinor matrices and the Dirac representation of the γ matrices.
//!
//! The basis obeys {γ^μ, γ^ν} = −2η^{μν} with η = diag(−1, 1, 1, 1), so
//! (γ⁰)² = 1 and (γ^i)² = −1.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

pub const ETA: [f64; 4] = [-1.0, 1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinorMatrix(pub [[Complex64; 4]; 4]);

const Z: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

impl SpinorMatrix {
    pub fn zero() -> Self {
        Self([[Z; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::scalar(ONE)
    }

    pub fn scalar(c: Complex64) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = c;
        }
        m
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|v| *v *= c);
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }
}

impl Add for SpinorMatrix {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }
}

impl Sub for SpinorMatrix {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for SpinorMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-ONE)
    }
}

impl Mul for SpinorMatrix {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = (0..4).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        m
    }
}

/// The four Dirac matrices γ^0..γ^3 in the standard (Bjorken-Drell) basis.
pub struct GammaBasis {
    pub gamma: [SpinorMatrix; 4],
}

impl GammaBasis {
    pub fn get() -> &'static GammaBasis {
        static BASIS: OnceLock<GammaBasis> = OnceLock::new();
        BASIS.get_or_init(|| {
            let sigma = [
                [[Z, ONE], [ONE, Z]],
                [[Z, -I], [I, Z]],
                [[ONE, Z], [Z, -ONE]],
            ];
            let mut g0 = SpinorMatrix::zero();
            for i in 0..4 {
                g0.0[i][i] = if i < 2 { ONE } else { -ONE };
            }
            let mut gamma = [g0, SpinorMatrix::zero(), SpinorMatrix::zero(), SpinorMatrix::zero()];
            for (k, s) in sigma.iter().enumerate() {
                let g = &mut gamma[k + 1];
                for a in 0..2 {
                    for b in 0..2 {
                        g.0[a][b + 2] = s[a][b];
                        g.0[a + 2][b] = -s[a][b];
                    }
                }
            }
            GammaBasis { gamma }
        })
    }

    /// a γ⁰ + b Σ_i v_i γ^i + c.
    pub fn slash(&self, a: f64, b: f64, v: [f64; 3], c: f64) -> SpinorMatrix {
        let mut m = self.gamma[0].scale(a.into()) + SpinorMatrix::scalar(c.into());
        for i in 0..3 {
            m = m + self.gamma[i + 1].scale((b * v[i]).into());
        }
        m
    }
}

/// Trace of the ordered product γ^{μ1} ⋯ γ^{μn}.
pub fn gamma_trace(indices: &[usize]) -> Complex64 {
    let g = GammaBasis::get();
    indices
        .iter()
        .fold(SpinorMatrix::identity(), |acc, &mu| acc * g.gamma[mu])
        .trace()
}
