//! Symmetric tridiagonal systems: the only matrices the 1-D forms produce.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[k]` couples unknowns `k` and `k + 1`.
    pub off: Vec<f64>,
}

/// `L D Lᵀ` factors of a positive-definite [`SymTridiagonal`].
#[derive(Debug, Clone)]
pub struct Ldlt {
    d: Vec<f64>,
    l: Vec<f64>,
}

/// Partially pivoted LU factors of a (possibly indefinite) tridiagonal matrix,
/// stored LAPACK `gttrf`-style.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
    /// Ratio of smallest to largest |pivot|, a rough conditioning indicator.
    pub pivot_ratio: f64,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let mut y = self.diag[k] * x[k];
                if k > 0 {
                    y += self.off[k - 1] * x[k - 1];
                }
                if k + 1 < n {
                    y += self.off[k] * x[k + 1];
                }
                y
            })
            .collect()
    }

    pub fn add_diag(&mut self, extra: &[f64]) {
        for (d, e) in self.diag.iter_mut().zip(extra) {
            *d += e;
        }
    }

    /// Factorizes without pivoting; `None` unless every pivot is positive.
    pub fn ldlt(&self) -> Option<Ldlt> {
        let n = self.len();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n {
            let mut dk = self.diag[k];
            if k > 0 {
                dk -= l[k - 1] * l[k - 1] * d[k - 1];
            }
            if !(dk > 0.0) || !dk.is_finite() {
                return None;
            }
            d.push(dk);
            if k + 1 < n {
                l.push(self.off[k] / dk);
            }
        }
        Some(Ldlt { d, l })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.ldlt().is_some()
    }

    pub fn lu(&self) -> Result<TridiagonalLu> {
        TridiagonalLu::factor(&self.off, &self.diag, &self.off)
    }
}

impl Ldlt {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for k in 1..n {
            x[k] -= self.l[k - 1] * x[k - 1];
        }
        for k in 0..n {
            x[k] /= self.d[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            x[k] -= self.l[k] * x[k + 1];
        }
        x
    }
}

impl TridiagonalLu {
    /// Factors the matrix with sub-diagonal `dl`, diagonal `d`, super-diagonal `du`.
    pub fn factor(dl: &[f64], d: &[f64], du: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut dl = dl.to_vec();
        let mut d = d.to_vec();
        let mut du = du.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                // no row interchange
                if d[i] == 0.0 {
                    return Err(Error::SingularSystem);
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smallest = d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if n > 0 && (smallest == 0.0 || !(smallest > 1e-14 * scale)) {
            return Err(Error::SingularSystem);
        }
        Ok(TridiagonalLu {
            dl,
            d,
            du,
            du2,
            swapped,
            pivot_ratio: if n > 0 { smallest / scale } else { 1.0 },
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.dl[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= self.du[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= self.du2[i] * x[i + 2];
            }
            x[i] = v / self.d[i];
        }
        x
    }
}
