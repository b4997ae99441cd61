//! Finite time scales and the Δ-calculus on them.
//!
//! A [`TimeScaleMesh`] is an ordered set of nodes `t_0 < … < t_N`. The forward
//! jump of `t_i` is `t_{i+1}` and its graininess is `mu_i = t_{i+1} - t_i`, so
//! every mesh is a time scale in its own right: on purely discrete time scales
//! the calculus below is exact, on refined intervals it converges as the
//! subdivision grows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to merge the shared endpoint of adjacent segments.
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    /// `[lo, hi]` of the reals, discretized by `n` equal gaps.
    Interval { lo: f64, hi: f64, n: usize },
    /// Isolated points, strictly increasing.
    Points { times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeScaleSpec {
    pub segments: Vec<Segment>,
}

impl TimeScaleSpec {
    pub fn new(segments: Vec<Segment>) -> Self {
        TimeScaleSpec { segments }
    }

    /// `h·Z ∩ [a, b]`, assuming `(b - a) / h` is (close to) an integer.
    pub fn lattice(a: f64, b: f64, h: f64) -> Self {
        let n = ((b - a) / h).round().max(1.0) as usize;
        let times = (0..=n)
            .map(|k| {
                if k == n {
                    b
                } else {
                    a + (b - a) * k as f64 / n as f64
                }
            })
            .collect();
        TimeScaleSpec::new(vec![Segment::Points { times }])
    }

    /// `[a, b]` refined into `n` equal gaps.
    pub fn interval(a: f64, b: f64, n: usize) -> Self {
        TimeScaleSpec::new(vec![Segment::Interval { lo: a, hi: b, n }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapOrigin {
    /// Gap created by refining a real interval; approximates a right-dense point.
    RefinedContinuous,
    /// Gap that is part of the time scale itself.
    IntrinsicScattered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScaleMesh {
    nodes: Vec<f64>,
    mu: Vec<f64>,
    origin: Vec<GapOrigin>,
}

/// Real values on the nodes of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction(pub Vec<f64>);

impl GridFunction {
    pub fn zeros(len: usize) -> Self {
        GridFunction(vec![0.0; len])
    }

    pub fn from_fn(mesh: &TimeScaleMesh, f: impl Fn(f64) -> f64) -> Self {
        GridFunction(mesh.nodes().iter().map(|&t| f(t)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction(self.0.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Self {
        GridFunction(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn vanishes_at_boundary(&self) -> bool {
        matches!((self.0.first(), self.0.last()), (Some(&a), Some(&b)) if a == 0.0 && b == 0.0)
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Builds the mesh of a time-scale description.
pub fn build_mesh(spec: &TimeScaleSpec) -> Result<TimeScaleMesh> {
    let mut nodes: Vec<f64> = Vec::new();
    // origin of the gap that ends at each pushed node (ignored for the first)
    let mut incoming: Vec<GapOrigin> = Vec::new();

    let mut push = |t: f64, origin: GapOrigin, nodes: &mut Vec<f64>| -> Result<()> {
        if !t.is_finite() {
            return Err(Error::InvalidSegment(format!("non-finite time {t}")));
        }
        if let Some(&last) = nodes.last() {
            let tol = MERGE_TOL * last.abs().max(t.abs()).max(1.0);
            if (t - last).abs() <= tol {
                return Ok(());
            }
            if t < last {
                return Err(Error::OverlappingSegments(t));
            }
        }
        nodes.push(t);
        incoming.push(origin);
        Ok(())
    };

    for seg in &spec.segments {
        match seg {
            Segment::Interval { lo, hi, n } => {
                if !(hi > lo) || *n == 0 {
                    return Err(Error::InvalidSegment(format!(
                        "interval [{lo}, {hi}] with {n} subdivisions"
                    )));
                }
                // the gap leading into the interval is scattered, gaps inside are refined
                push(*lo, GapOrigin::IntrinsicScattered, &mut nodes)?;
                for k in 1..=*n {
                    let t = if k == *n {
                        *hi
                    } else {
                        lo + (hi - lo) * k as f64 / *n as f64
                    };
                    push(t, GapOrigin::RefinedContinuous, &mut nodes)?;
                }
            }
            Segment::Points { times } => {
                if times.is_empty() {
                    return Err(Error::InvalidSegment("empty point list".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidSegment(
                        "point times must be strictly increasing".into(),
                    ));
                }
                for &t in times {
                    push(t, GapOrigin::IntrinsicScattered, &mut nodes)?;
                }
            }
        }
    }

    if nodes.len() < 3 {
        return Err(Error::TooFewPoints(nodes.len()));
    }
    let mu = nodes.windows(2).map(|w| w[1] - w[0]).collect();
    let origin = incoming[1..].to_vec();
    Ok(TimeScaleMesh { nodes, mu, origin })
}

impl TimeScaleMesh {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Graininess of each gap, `mu[i] = t[i+1] - t[i]`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn origin(&self) -> &[GapOrigin] {
        &self.origin
    }

    /// Number of gaps `N`; the mesh has `N + 1` nodes.
    pub fn gaps(&self) -> usize {
        self.mu.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.end() - self.start()
    }

    /// Forward jump of node `i` (the last node is its own successor).
    pub fn sigma(&self, i: usize) -> f64 {
        self.nodes[(i + 1).min(self.nodes.len() - 1)]
    }

    /// True when the gap after node `i` refines a real interval.
    pub fn is_right_dense(&self, i: usize) -> bool {
        self.origin.get(i) == Some(&GapOrigin::RefinedContinuous)
    }

    /// True when no gap comes from interval refinement.
    pub fn is_purely_discrete(&self) -> bool {
        self.origin
            .iter()
            .all(|o| *o == GapOrigin::IntrinsicScattered)
    }

    /// Index of the node equal to `t` within `tol`.
    pub fn find_node(&self, t: f64, tol: f64) -> Option<usize> {
        let idx = self.nodes.partition_point(|&x| x < t);
        [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter(|&i| i < self.nodes.len())
            .find(|&i| (self.nodes[i] - t).abs() <= tol)
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction::zeros(self.len())
    }

    pub(crate) fn check(&self, u: &GridFunction) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::MeshMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// `u^Δ` on the first `N` nodes: `(u[i+1] - u[i]) / mu[i]`.
pub fn delta_derivative(mesh: &TimeScaleMesh, u: &GridFunction) -> Result<GridFunction> {
    mesh.check(u)?;
    Ok(GridFunction(
        u.0.windows(2)
            .zip(mesh.mu())
            .map(|(w, mu)| (w[1] - w[0]) / mu)
            .collect(),
    ))
}

/// Left-endpoint Δ-integral `Σ_{i=lo}^{hi-1} mu[i] w[i]`.
///
/// `w` may be defined on all `N + 1` nodes or only on the first `N`.
pub fn delta_integral(mesh: &TimeScaleMesh, w: &GridFunction, lo: usize, hi: usize) -> Result<f64> {
    if lo > hi || hi > mesh.gaps() || w.len() < hi {
        return Err(Error::IndexOutOfRange {
            lo,
            hi,
            nodes: mesh.len(),
        });
    }
    Ok((lo..hi).map(|i| mesh.mu()[i] * w[i]).sum())
}

/// Values of the time-scale exponential on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Exponential {
    pub values: GridFunction,
    /// Smallest value over the mesh.
    pub min: f64,
    /// Largest value over the mesh.
    pub max: f64,
    /// Gaps whose Euler factor `1 + mu*g` is negative.
    pub sign_changes: Vec<usize>,
}

/// `e_g(·, t_0)` as the Euler product `e[i+1] = e[i] (1 + mu[i] g[i])`.
pub fn exp_fn(mesh: &TimeScaleMesh, g: &GridFunction) -> Result<Exponential> {
    if g.len() < mesh.gaps() {
        return Err(Error::MeshMismatch {
            expected: mesh.len(),
            got: g.len(),
        });
    }
    let mut values = Vec::with_capacity(mesh.len());
    let mut sign_changes = Vec::new();
    let mut e = 1.0;
    values.push(e);
    for (i, mu) in mesh.mu().iter().enumerate() {
        let factor = 1.0 + mu * g[i];
        if factor == 0.0 {
            return Err(Error::NotRegressive(i));
        }
        if factor < 0.0 {
            log::warn!("exponential changes sign across gap {i} (1 + mu*g = {factor})");
            sign_changes.push(i);
        }
        e *= factor;
        values.push(e);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Exponential {
        values: GridFunction(values),
        min,
        max,
        sign_changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(times: &[f64]) -> TimeScaleMesh {
        build_mesh(&TimeScaleSpec::new(vec![Segment::Points {
            times: times.to_vec(),
        }]))
        .unwrap()
    }

    #[test]
    fn discrete_points() {
        let m = points(&[0.0, 0.5, 1.0]);
        assert_eq!(m.nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(m.mu(), &[0.5, 0.5]);
        assert!(m.is_purely_discrete());
    }

    #[test]
    fn refined_interval() {
        let m = build_mesh(&TimeScaleSpec::interval(0.0, 1.0, 4)).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(m
            .origin()
            .iter()
            .all(|o| *o == GapOrigin::RefinedContinuous));
    }

    #[test]
    fn lattice_h_tenth() {
        let m = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.1)).unwrap();
        assert_eq!(m.len(), 11);
        for mu in m.mu() {
            assert!((mu - 0.1).abs() < 1e-15);
        }
        assert_eq!(m.end(), 1.0);
    }

    #[test]
    fn mixed_segments_merge_shared_endpoint() {
        let spec = TimeScaleSpec::new(vec![
            Segment::Interval {
                lo: 0.0,
                hi: 0.5,
                n: 2,
            },
            Segment::Points {
                times: vec![0.5, 0.6, 1.0],
            },
        ]);
        let m = build_mesh(&spec).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.6, 1.0]);
        assert_eq!(
            m.origin(),
            &[
                GapOrigin::RefinedContinuous,
                GapOrigin::RefinedContinuous,
                GapOrigin::IntrinsicScattered,
                GapOrigin::IntrinsicScattered
            ]
        );
        assert!(m.is_right_dense(1));
        assert!(!m.is_right_dense(2));
        let sum: f64 = m.mu().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mesh_errors() {
        let overlap = TimeScaleSpec::new(vec![
            Segment::Interval {
                lo: 0.0,
                hi: 1.0,
                n: 2,
            },
            Segment::Points {
                times: vec![0.5, 2.0],
            },
        ]);
        assert!(matches!(
            build_mesh(&overlap),
            Err(Error::OverlappingSegments(_))
        ));
        let few = TimeScaleSpec::new(vec![Segment::Points {
            times: vec![0.0, 1.0],
        }]);
        assert_eq!(build_mesh(&few), Err(Error::TooFewPoints(2)));
        let bad = TimeScaleSpec::interval(1.0, 0.0, 3);
        assert!(matches!(build_mesh(&bad), Err(Error::InvalidSegment(_))));
        let zero = TimeScaleSpec::interval(0.0, 1.0, 0);
        assert!(matches!(build_mesh(&zero), Err(Error::InvalidSegment(_))));
    }

    #[test]
    fn derivative_examples() {
        let m = points(&[0.0, 0.5, 1.0]);
        let d = delta_derivative(&m, &GridFunction(vec![0.0, 0.25, 1.0])).unwrap();
        assert_eq!(d.0, vec![0.5, 1.5]);
        let d = delta_derivative(&m, &GridFunction(vec![3.0; 3])).unwrap();
        assert_eq!(d.0, vec![0.0, 0.0]);
        let m = build_mesh(&TimeScaleSpec::new(vec![
            Segment::Interval {
                lo: 0.0,
                hi: 0.5,
                n: 5,
            },
            Segment::Points {
                times: vec![0.7, 1.3],
            },
        ]))
        .unwrap();
        let id = GridFunction::from_fn(&m, |t| t);
        for v in delta_derivative(&m, &id).unwrap().0 {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(matches!(
            delta_derivative(&m, &GridFunction(vec![0.0; 2])),
            Err(Error::MeshMismatch { .. })
        ));
    }

    #[test]
    fn integral_examples() {
        let m = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.5)).unwrap();
        let ones = GridFunction(vec![1.0; 3]);
        assert_eq!(delta_integral(&m, &ones, 0, 2).unwrap(), 1.0);
        assert_eq!(delta_integral(&m, &m.zeros(), 0, 2).unwrap(), 0.0);
        let id = GridFunction::from_fn(&m, |t| t);
        assert_eq!(delta_integral(&m, &id, 0, 2).unwrap(), 0.25);
        assert!(matches!(
            delta_integral(&m, &ones, 0, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            delta_integral(&m, &ones, 2, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn exponential_examples() {
        let m = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.1)).unwrap();
        let e = exp_fn(&m, &m.zeros()).unwrap();
        assert!(e.values.0.iter().all(|&v| v == 1.0));
        assert_eq!((e.min, e.max), (1.0, 1.0));

        let e = exp_fn(&m, &GridFunction(vec![1.0; 11])).unwrap();
        let expect = 1.1f64.powi(10);
        assert!((e.values[10] - expect).abs() / expect < 1e-14);
        assert!((e.values[10] - 2.593_742_46).abs() < 1e-8);
        assert_eq!(e.min, 1.0);
        assert_eq!(e.max, e.values[10]);

        let g = GridFunction(vec![-10.0; 11]);
        assert_eq!(exp_fn(&m, &g), Err(Error::NotRegressive(0)));
        let g = GridFunction(vec![-20.0; 11]);
        let e = exp_fn(&m, &g).unwrap();
        assert_eq!(e.sign_changes.len(), 10);
    }

    #[test]
    fn find_node_tolerance() {
        let m = build_mesh(&TimeScaleSpec::lattice(0.0, 1.0, 0.1)).unwrap();
        assert_eq!(m.find_node(0.5, 1e-12), Some(5));
        assert_eq!(m.find_node(0.3, 1e-12), Some(3));
        assert_eq!(m.find_node(0.55, 1e-12), None);
        assert_eq!(m.find_node(1.0, 1e-12), Some(10));
    }
}
