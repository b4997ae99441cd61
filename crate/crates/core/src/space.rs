//! Discrete `H¹₀` on a mesh: the stiffness form `Σ w_i (u_{i+1} - u_i)² / mu_i`,
//! the shifted mass form `Σ w_i mu_i u_{i+1}²`, the principal eigenvalue of the
//! pencil and the embedding constants derived from them.
//!
//! Matrices act on the interior unknowns `u_1 … u_{N-1}`; grid functions carry
//! all `N + 1` nodal values with zero boundary entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;
use crate::timescale::{GridFunction, TimeScaleMesh};

pub const EIGEN_TOL: f64 = 1e-10;
pub const EIGEN_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpace {
    mesh: TimeScaleMesh,
    weight: Option<GridFunction>,
    /// Per-gap stiffness coefficient `w_i / mu_i`.
    stiff: Vec<f64>,
    /// Per-gap shifted mass coefficient `w_i mu_i`.
    mass: Vec<f64>,
    min_weight: f64,
    max_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    pub lambda1: f64,
    /// Eigenvector with zero boundary values and unit shifted-mass norm.
    pub eigvec: GridFunction,
    pub iterations: usize,
    pub residual: f64,
    /// `(iteration, rayleigh quotient, relative residual)` per step.
    pub trace: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConstants {
    /// Largest sampled `‖u‖_∞ / ‖u‖`.
    pub k_emb: f64,
    /// Certified bound `sqrt((b - a) / m)`.
    pub delta: f64,
}

impl DirichletSpace {
    /// Assembles the forms on `mesh`, optionally weighted by a positive nodal weight.
    pub fn assemble(mesh: &TimeScaleMesh, weight: Option<&GridFunction>) -> Result<Self> {
        if let Some(w) = weight {
            mesh.check(w)?;
            if let Some((node, &value)) = w.0.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositiveWeight { node, value });
            }
        }
        let w = |i: usize| weight.map_or(1.0, |w| w[i]);
        let stiff = mesh
            .mu()
            .iter()
            .enumerate()
            .map(|(i, mu)| w(i) / mu)
            .collect();
        let mass = mesh
            .mu()
            .iter()
            .enumerate()
            .map(|(i, mu)| w(i) * mu)
            .collect();
        let (min_weight, max_weight) = match weight {
            Some(w) => (
                w.0.iter().copied().fold(f64::INFINITY, f64::min),
                w.0.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            None => (1.0, 1.0),
        };
        Ok(DirichletSpace {
            mesh: mesh.clone(),
            weight: weight.cloned(),
            stiff,
            mass,
            min_weight,
            max_weight,
        })
    }

    pub fn mesh(&self) -> &TimeScaleMesh {
        &self.mesh
    }

    pub fn weight(&self) -> Option<&GridFunction> {
        self.weight.as_ref()
    }

    /// Weight at node `i` (1 when unweighted).
    pub fn weight_at(&self, i: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn min_weight(&self) -> f64 {
        self.min_weight
    }

    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    /// Number of interior unknowns `N - 1`.
    pub fn dofs(&self) -> usize {
        self.mesh.gaps() - 1
    }

    /// Stiffness matrix on interior unknowns.
    pub fn stiffness(&self) -> SymTridiagonal {
        let n = self.dofs();
        SymTridiagonal {
            diag: (1..=n).map(|k| self.stiff[k - 1] + self.stiff[k]).collect(),
            off: (1..n).map(|k| -self.stiff[k]).collect(),
        }
    }

    /// Diagonal of the shifted mass matrix on interior unknowns.
    pub fn sigma_mass(&self) -> Vec<f64> {
        (1..=self.dofs()).map(|k| self.mass[k - 1]).collect()
    }

    /// `K + lambda S` on interior unknowns.
    pub fn operator(&self, lambda: f64) -> SymTridiagonal {
        let mut a = self.stiffness();
        let s: Vec<f64> = self.sigma_mass().iter().map(|m| lambda * m).collect();
        a.add_diag(&s);
        a
    }

    /// `u·K·u` over all gaps (no boundary requirement).
    pub fn stiffness_form(&self, u: &GridFunction) -> f64 {
        u.0.windows(2)
            .zip(&self.stiff)
            .map(|(w, k)| k * (w[1] - w[0]) * (w[1] - w[0]))
            .sum()
    }

    /// `u·S·u = Σ w_i mu_i u_{i+1}²`.
    pub fn sigma_mass_form(&self, u: &GridFunction) -> f64 {
        self.mass
            .iter()
            .zip(&u.0[1..])
            .map(|(m, v)| m * v * v)
            .sum()
    }

    /// `A(u, v) = u·K·v + lambda u·S·v`.
    pub fn bilinear(&self, lambda: f64, u: &GridFunction, v: &GridFunction) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.mesh.gaps() {
            acc += self.stiff[i] * (u[i + 1] - u[i]) * (v[i + 1] - v[i])
                + lambda * self.mass[i] * u[i + 1] * v[i + 1];
        }
        acc
    }

    /// Coordinate gradient of `½ A(u, u)` w.r.t. interior nodes, zero-padded.
    pub fn apply_operator(&self, lambda: f64, u: &GridFunction) -> GridFunction {
        let n = self.mesh.gaps();
        let mut out = vec![0.0; n + 1];
        for k in 1..n {
            out[k] = self.stiff[k - 1] * (u[k] - u[k - 1]) - self.stiff[k] * (u[k + 1] - u[k])
                + lambda * self.mass[k - 1] * u[k];
        }
        GridFunction(out)
    }

    pub fn check_dirichlet(&self, u: &GridFunction) -> Result<()> {
        self.mesh.check(u)?;
        if !u.vanishes_at_boundary() {
            return Err(Error::BoundaryViolation);
        }
        Ok(())
    }

    /// Working norm `sqrt(u·K·u)` (weighted when the space is).
    pub fn h1_norm(&self, u: &GridFunction) -> Result<f64> {
        self.check_dirichlet(u)?;
        Ok(self.stiffness_form(u).sqrt())
    }

    /// Zero-padded grid function from interior values.
    pub fn embed(&self, interior: &[f64]) -> GridFunction {
        let mut v = Vec::with_capacity(interior.len() + 2);
        v.push(0.0);
        v.extend_from_slice(interior);
        v.push(0.0);
        GridFunction(v)
    }

    pub fn interior<'a>(&self, u: &'a GridFunction) -> &'a [f64] {
        &u.0[1..u.len() - 1]
    }

    /// Smallest eigenvalue of `K v = lambda S v` on interior unknowns by inverse
    /// power iteration from the all-ones vector.
    pub fn smallest_eigenvalue(&self) -> Result<SpectralInfo> {
        let k = self.stiffness();
        let s = self.sigma_mass();
        let fac = k.ldlt().ok_or(Error::SingularSystem)?;
        let s_norm = |v: &[f64]| v.iter().zip(&s).map(|(x, m)| m * x * x).sum::<f64>().sqrt();

        let mut v = vec![1.0; self.dofs()];
        let nv = s_norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut trace = Vec::new();
        for it in 1..=EIGEN_MAX_ITERS {
            let rhs: Vec<f64> = v.iter().zip(&s).map(|(x, m)| m * x).collect();
            let mut next = fac.solve(&rhs);
            let nn = s_norm(&next);
            next.iter_mut().for_each(|x| *x /= nn);
            v = next;

            let kv = k.mul_vec(&v);
            let lambda: f64 = kv.iter().zip(&v).map(|(a, b)| a * b).sum();
            let res = kv
                .iter()
                .zip(&v)
                .zip(&s)
                .map(|((kv, x), m)| (kv - lambda * m * x).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = v
                .iter()
                .zip(&s)
                .map(|(x, m)| (lambda * m * x).powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = res / scale;
            trace.push((it, lambda, rel));
            if rel < EIGEN_TOL {
                // fix the sign so the eigenvector is mostly positive
                if v.iter().sum::<f64>() < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                return Ok(SpectralInfo {
                    lambda1: lambda,
                    eigvec: self.embed(&v),
                    iterations: it,
                    residual: rel,
                    trace,
                });
            }
        }
        Err(Error::NoConvergence(EIGEN_MAX_ITERS))
    }

    /// `(1/lambda1) u·K·u - u·S·u`; nonnegative up to rounding for every `u ∈ H¹₀`.
    pub fn wirtinger_gap(&self, lambda1: f64, u: &GridFunction) -> Result<f64> {
        self.check_dirichlet(u)?;
        Ok(self.stiffness_form(u) / lambda1 - self.sigma_mass_form(u))
    }

    /// `delta = sqrt(T / m)` together with the sampled sup-norm ratio.
    pub fn embedding_constants(&self, samples: usize, seed: u64) -> EmbeddingConstants {
        let delta = (self.mesh.length() / self.min_weight).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k_emb: f64 = 0.0;
        for _ in 0..samples {
            let interior: Vec<f64> = (0..self.dofs())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let u = self.embed(&interior);
            let norm = self.stiffness_form(&u).sqrt();
            if norm > 0.0 {
                k_emb = k_emb.max(u.sup_norm() / norm);
            }
        }
        EmbeddingConstants { k_emb, delta }
    }
}

/// Random interior grid function with entries in `[-1, 1)`.
pub fn random_dirichlet(space: &DirichletSpace, rng: &mut impl Rng) -> GridFunction {
    let interior: Vec<f64> = (0..space.dofs())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    space.embed(&interior)
}
