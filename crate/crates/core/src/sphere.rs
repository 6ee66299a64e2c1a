//! Finite measures on the unit sphere and direction-dependent parameters.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, PgnError, Result};
use crate::rng::RngStream;
use crate::variates::standard_normal;

/// Dense grid sizes for integrals and ess sups over the sphere.
pub const GRID_2D: usize = 4096;
pub const GRID_3D: usize = 8192;
const GRID_SEED: u64 = 0x5eed_5fe7e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: Vec<f64>,
    pub weight: f64,
}

/// Density on the circle in the angle `φ ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AngularDensity2d {
    /// `base + amp cos(2φ)`, invariant under `φ → φ + π`.
    Cos2 { base: f64, amp: f64 },
    /// `base + amp cos(φ)`.
    Cardioid { base: f64, amp: f64 },
}

impl AngularDensity2d {
    pub fn eval(&self, phi: f64) -> f64 {
        match *self {
            AngularDensity2d::Cos2 { base, amp } => base + amp * (2.0 * phi).cos(),
            AngularDensity2d::Cardioid { base, amp } => base + amp * phi.cos(),
        }
    }

    fn max(&self) -> f64 {
        match *self {
            AngularDensity2d::Cos2 { base, amp } | AngularDensity2d::Cardioid { base, amp } => {
                base + amp.abs()
            }
        }
    }

    fn total(&self) -> f64 {
        match *self {
            AngularDensity2d::Cos2 { base, .. } | AngularDensity2d::Cardioid { base, .. } => {
                TAU * base
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            AngularDensity2d::Cos2 { base, amp } | AngularDensity2d::Cardioid { base, amp } => {
                if !(base > 0.0 && amp.abs() < base) {
                    return domain(format!(
                        "angular density needs base > |amp|; got base={base}, amp={amp}"
                    ));
                }
            }
        }
        Ok(())
    }

    fn is_even(&self) -> bool {
        matches!(self, AngularDensity2d::Cos2 { .. })
    }
}

/// A finite measure `ν` on the unit sphere of `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SphereMeasure {
    /// `total_mass` times the normalized surface measure.
    UniformSpherical { d: usize, total_mass: f64 },
    Atoms { atoms: Vec<Atom> },
    /// `d = 2` only: `ν(dθ) = w(φ) dφ`.
    AngularDensity { density: AngularDensity2d },
}

/// A quadrature node on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub theta: Vec<f64>,
    pub weight: f64,
}

pub fn angle_of(theta: &[f64]) -> f64 {
    theta[1].atan2(theta[0]).rem_euclid(TAU)
}

impl SphereMeasure {
    pub fn dim(&self) -> usize {
        match self {
            SphereMeasure::UniformSpherical { d, .. } => *d,
            SphereMeasure::Atoms { atoms } => atoms.first().map_or(0, |a| a.theta.len()),
            SphereMeasure::AngularDensity { .. } => 2,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            SphereMeasure::UniformSpherical { total_mass, .. } => *total_mass,
            SphereMeasure::Atoms { atoms } => atoms.iter().map(|a| a.weight).sum(),
            SphereMeasure::AngularDensity { density } => density.total(),
        }
    }

    /// Parameter checks plus the spanning condition on `K_ν`.
    pub fn validate(&self) -> Result<()> {
        match self {
            SphereMeasure::UniformSpherical { d, total_mass } => {
                if *d < 2 || !(*total_mass > 0.0 && total_mass.is_finite()) {
                    return domain(format!(
                        "uniform sphere measure needs d >= 2 and finite mass > 0; got d={d}, mass={total_mass}"
                    ));
                }
            }
            SphereMeasure::Atoms { atoms } => {
                let d = self.dim();
                if atoms.is_empty() || d < 2 {
                    return domain("atoms must be nonempty with dimension >= 2");
                }
                for a in atoms {
                    let norm = a.theta.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if a.theta.len() != d || (norm - 1.0).abs() > 1e-9 || !(a.weight > 0.0) {
                        return domain(format!(
                            "atom {:?} must be a unit vector of dimension {d} with positive weight",
                            a.theta
                        ));
                    }
                }
            }
            SphereMeasure::AngularDensity { density } => density.validate()?,
        }
        self.k_nu().map(|_| ())
    }

    /// Whether `ν(-dθ) = ν(dθ)`.
    pub fn is_symmetric(&self) -> bool {
        match self {
            SphereMeasure::UniformSpherical { .. } => true,
            SphereMeasure::AngularDensity { density } => density.is_even(),
            SphereMeasure::Atoms { atoms } => atoms.iter().all(|a| {
                atoms.iter().any(|b| {
                    (a.weight - b.weight).abs() <= 1e-12 * a.weight
                        && a.theta.iter().zip(&b.theta).all(|(x, y)| (x + y).abs() < 1e-12)
                })
            }),
        }
    }

    /// Quadrature nodes whose weights sum to `ν(S)`. Exact for atoms;
    /// equispaced angles (d = 2), a Fibonacci lattice (d = 3) or a fixed
    /// pseudo-random cloud (d ≥ 4) otherwise.
    pub fn nodes(&self) -> Vec<Node> {
        match self {
            SphereMeasure::Atoms { atoms } => atoms
                .iter()
                .map(|a| Node {
                    theta: a.theta.clone(),
                    weight: a.weight,
                })
                .collect(),
            SphereMeasure::AngularDensity { density } => circle_nodes(GRID_2D)
                .map(|(phi, theta)| Node {
                    theta,
                    weight: density.eval(phi) * TAU / GRID_2D as f64,
                })
                .collect(),
            SphereMeasure::UniformSpherical { d, total_mass } => {
                let pts: Vec<Vec<f64>> = match d {
                    2 => circle_nodes(GRID_2D).map(|(_, t)| t).collect(),
                    3 => fibonacci_sphere(GRID_3D),
                    _ => {
                        let mut rng = RngStream::new(GRID_SEED, *d as u64);
                        (0..GRID_3D).map(|_| uniform_direction(*d, &mut rng)).collect()
                    }
                };
                let w = total_mass / pts.len() as f64;
                pts.into_iter().map(|theta| Node { theta, weight: w }).collect()
            }
        }
    }

    /// `K_ν = ∫θθ' ν(dθ)`; closed form for the uniform measure.
    pub fn k_nu(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let k = match self {
            SphereMeasure::UniformSpherical { total_mass, .. } => {
                DMatrix::identity(d, d) * (total_mass / d as f64)
            }
            _ => second_moment(&self.nodes(), d, |_| 1.0),
        };
        check_rank(&k, "K_ν")?;
        Ok(k)
    }

    /// `θ_ν = ∫θ ν(dθ)`.
    pub fn theta_nu(&self) -> DVector<f64> {
        let d = self.dim();
        match self {
            SphereMeasure::UniformSpherical { .. } => DVector::zeros(d),
            _ => first_moment(&self.nodes(), d, |_| 1.0),
        }
    }

    /// Draw one direction from the normalized `ν`.
    pub fn sample_direction(&self, rng: &mut RngStream, out: &mut [f64]) {
        match self {
            SphereMeasure::UniformSpherical { d, .. } => {
                if *d == 2 {
                    let phi = TAU * rng.uniform();
                    out[0] = phi.cos();
                    out[1] = phi.sin();
                } else {
                    out.copy_from_slice(&uniform_direction(*d, rng));
                }
            }
            SphereMeasure::Atoms { atoms } => {
                let total = self.total_mass();
                let mut target = rng.uniform() * total;
                for a in atoms {
                    if target < a.weight {
                        out.copy_from_slice(&a.theta);
                        return;
                    }
                    target -= a.weight;
                }
                out.copy_from_slice(&atoms[atoms.len() - 1].theta);
            }
            SphereMeasure::AngularDensity { density } => {
                let wmax = density.max();
                loop {
                    let phi = TAU * rng.uniform();
                    if rng.uniform() * wmax <= density.eval(phi) {
                        out[0] = phi.cos();
                        out[1] = phi.sin();
                        return;
                    }
                }
            }
        }
    }
}

fn circle_nodes(n: usize) -> impl Iterator<Item = (f64, Vec<f64>)> {
    (0..n).map(move |i| {
        let phi = TAU * (i as f64 + 0.5) / n as f64;
        (phi, vec![phi.cos(), phi.sin()])
    })
}

fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            vec![rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

fn uniform_direction(d: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `Σ w f(θ) θθ'` over the nodes.
pub fn second_moment(nodes: &[Node], d: usize, f: impl Fn(&Node) -> f64) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(d, d);
    for node in nodes {
        let w = node.weight * f(node);
        for i in 0..d {
            for j in 0..d {
                k[(i, j)] += w * node.theta[i] * node.theta[j];
            }
        }
    }
    k
}

/// `Σ w f(θ) θ` over the nodes.
pub fn first_moment(nodes: &[Node], d: usize, f: impl Fn(&Node) -> f64) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    for node in nodes {
        let w = node.weight * f(node);
        for i in 0..d {
            v[i] += w * node.theta[i];
        }
    }
    v
}

pub(crate) fn check_rank(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    let trace = m.trace();
    if !(min >= 1e-12 * trace) || !(trace > 0.0) {
        return Err(PgnError::RankDeficient(format!(
            "{what} has smallest eigenvalue {min:e} (trace {trace:e})"
        )));
    }
    Ok(())
}

/// Symmetric positive definite square root via eigendecomposition.
pub fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// A scalar function of direction, from a named catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirFn {
    Constant { value: f64 },
    /// `first` where `θ[axis] >= threshold`, `second` elsewhere.
    TwoPiece {
        first: f64,
        second: f64,
        axis: usize,
        threshold: f64,
    },
    /// `first` where `|θ[axis]| >= threshold`, `second` elsewhere.
    TwoPieceAbs {
        first: f64,
        second: f64,
        axis: usize,
        threshold: f64,
    },
    /// `d = 2`: `mean + amp cos(harmonic φ)`.
    Smooth2d { mean: f64, amp: f64, harmonic: u32 },
}

impl DirFn {
    pub fn constant(value: f64) -> Self {
        DirFn::Constant { value }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        match *self {
            DirFn::Constant { value } => value,
            DirFn::TwoPiece {
                first,
                second,
                axis,
                threshold,
            } => {
                if theta[axis] >= threshold {
                    first
                } else {
                    second
                }
            }
            DirFn::TwoPieceAbs {
                first,
                second,
                axis,
                threshold,
            } => {
                if theta[axis].abs() >= threshold {
                    first
                } else {
                    second
                }
            }
            DirFn::Smooth2d {
                mean,
                amp,
                harmonic,
            } => mean + amp * (harmonic as f64 * angle_of(theta)).cos(),
        }
    }

    /// Piece index for piecewise-constant functions, `None` otherwise.
    pub fn piece(&self, theta: &[f64]) -> Option<usize> {
        match *self {
            DirFn::Constant { .. } => Some(0),
            DirFn::TwoPiece {
                axis, threshold, ..
            } => Some(usize::from(theta[axis] < threshold)),
            DirFn::TwoPieceAbs {
                axis, threshold, ..
            } => Some(usize::from(theta[axis].abs() < threshold)),
            DirFn::Smooth2d { .. } => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DirFn::Constant { .. })
    }

    /// Whether `f(-θ) = f(θ)` for every `θ`.
    pub fn is_even(&self) -> bool {
        match *self {
            DirFn::Constant { .. } | DirFn::TwoPieceAbs { .. } => true,
            DirFn::TwoPiece { first, second, .. } => first == second,
            DirFn::Smooth2d { amp, harmonic, .. } => amp == 0.0 || harmonic % 2 == 0,
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        match *self {
            DirFn::TwoPiece { axis, .. } | DirFn::TwoPieceAbs { axis, .. } if axis >= d => {
                domain(format!("axis {axis} out of range for dimension {d}"))
            }
            DirFn::Smooth2d { .. } if d != 2 => domain("smooth_2d needs d = 2"),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn e(d: usize, i: usize, sign: f64) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = sign;
        v
    }

    #[test]
    fn uniform_k_nu_closed_form() {
        let nu = SphereMeasure::UniformSpherical {
            d: 2,
            total_mass: 1.0,
        };
        let k = nu.k_nu().unwrap();
        assert_eq!(k, DMatrix::identity(2, 2) * 0.5);
        // grid agrees with the closed form
        let g = second_moment(&nu.nodes(), 2, |_| 1.0);
        assert!((g - k).abs().max() < 1e-14);
    }

    #[test]
    fn fibonacci_grid_second_moment() {
        let nu = SphereMeasure::UniformSpherical {
            d: 3,
            total_mass: 3.0,
        };
        let g = second_moment(&nu.nodes(), 3, |_| 1.0);
        assert!((g - DMatrix::identity(3, 3)).abs().max() < 1e-3);
    }

    #[test]
    fn atoms_k_nu() {
        let nu = SphereMeasure::Atoms {
            atoms: vec![
                Atom { theta: e(2, 0, 1.0), weight: 1.0 },
                Atom { theta: e(2, 1, 1.0), weight: 1.0 },
            ],
        };
        assert_eq!(nu.k_nu().unwrap(), DMatrix::identity(2, 2));
        assert!(!nu.is_symmetric());
    }

    #[test]
    fn rank_deficient_atoms() {
        let nu = SphereMeasure::Atoms {
            atoms: vec![
                Atom { theta: e(2, 0, 1.0), weight: 1.0 },
                Atom { theta: e(2, 0, -1.0), weight: 1.0 },
            ],
        };
        assert!(nu.is_symmetric());
        assert!(matches!(nu.k_nu(), Err(PgnError::RankDeficient(_))));
    }

    #[test]
    fn angular_density_k_nu() {
        // ∫ (base + amp cos 2φ) cos²φ dφ = π base + π amp / 2
        let nu = SphereMeasure::AngularDensity {
            density: AngularDensity2d::Cos2 { base: 1.0, amp: 0.5 },
        };
        let k = nu.k_nu().unwrap();
        assert_relative_eq!(k[(0, 0)], PI * (1.0 + 0.25), max_relative = 1e-12);
        assert_relative_eq!(k[(1, 1)], PI * (1.0 - 0.25), max_relative = 1e-12);
        assert!(k[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = sqrtm(&m);
        assert!((&a * &a - m).abs().max() < 1e-12);
    }
}
