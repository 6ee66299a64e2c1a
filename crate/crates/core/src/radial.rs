//! Multivariate approximation for polar Lévy measures
//! `λ(du, dθ) = c(θ) 1{0<u<r0} u^{-a(θ)-1} du ν(dθ)`.
//!
//! Every direction is matched with its own `(r_τ, p_τ, s_τ, m_τ)` so that
//! its Gaussian share is exactly `τ²`; the Gaussian part of the
//! approximation is then `τ K_ν^{1/2} Z`. Both `Δ_τ` and `Y_τ` are sampled
//! as thinned Poisson processes on the sphere.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::{spec_hash, SampleBatch};
use crate::error::{domain, PgnError, Result};
use crate::levy::LevyMeasure1D;
use crate::matching::stable_p_sym;
use crate::quad::{integrate, QuadConfig};
use crate::rng::RngStream;
use crate::sampler::fill_parallel;
use crate::special::ln_gamma;
use crate::sphere::{
    check_rank, sqrtm, DirFn, Node, SphereMeasure,
};
use crate::variates::{gamma_unchecked, poisson_unchecked, standard_normal};

/// Safety factor on grid ess sups.
pub const ESSUP_SAFETY: f64 = 1.05;

/// `π(a)`: the symmetric ninth-order exponent, shared with
/// [`stable_p_sym`].
pub fn pi_of_a(a: f64) -> Result<f64> {
    stable_p_sym(a)
}

/// The constants `J0..J4` of the radial fit at index `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JValues {
    pub a: f64,
    pub pi: f64,
    pub j0: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    /// `ln J2`, kept because `J2` spans many decades.
    pub ln_j2: f64,
}

/// `J0 = 1/(2-a)`, `J1 = √((4-a)/((π+5)(π+6)(6-a)))`,
/// `J2 = 1/(Γ(π+5)(4-a)J1^{π+5})`, `J3 = Γ(π+3)J2 J1^{π+3}`,
/// `J4 = (J0 - J3)^{-1/(2-a)}`.
pub fn j_functions(a: f64) -> Result<JValues> {
    let pi = pi_of_a(a)?;
    let j0 = 1.0 / (2.0 - a);
    let j1 = ((4.0 - a) / ((pi + 5.0) * (pi + 6.0) * (6.0 - a))).sqrt();
    let ln_j1 = j1.ln();
    let ln_j2 = -(ln_gamma(pi + 5.0) + (4.0 - a).ln() + (pi + 5.0) * ln_j1);
    let j3 = (ln_gamma(pi + 3.0) + ln_j2 + (pi + 3.0) * ln_j1).exp();
    let j4 = (j0 - j3).powf(-1.0 / (2.0 - a));
    Ok(JValues {
        a,
        pi,
        j0,
        j1,
        j2: ln_j2.exp(),
        j3,
        j4,
        ln_j2,
    })
}

/// Polar Lévy measure with truncated-stable radial part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialLevySpec {
    pub nu: SphereMeasure,
    pub a: DirFn,
    #[serde(default = "unit_c")]
    pub c: DirFn,
    pub r0: f64,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub direction_independent: bool,
}

fn unit_c() -> DirFn {
    DirFn::constant(1.0)
}

impl RadialLevySpec {
    pub fn dim(&self) -> usize {
        self.nu.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.nu.validate()?;
        let d = self.dim();
        self.a.check_dim(d)?;
        self.c.check_dim(d)?;
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return domain(format!("r0 must be finite and > 0, got {}", self.r0));
        }
        for node in self.nu.nodes() {
            let a = self.a.eval(&node.theta);
            let c = self.c.eval(&node.theta);
            if !(a > 0.0 && a < 2.0) {
                return domain(format!("a(θ) = {a} outside (0, 2) at θ = {:?}", node.theta));
            }
            if !(c > 0.0 && c.is_finite()) {
                return domain(format!("c(θ) = {c} must be > 0 at θ = {:?}", node.theta));
            }
        }
        if self.symmetric && !(self.nu.is_symmetric() && self.a.is_even() && self.c.is_even()) {
            return domain("symmetric flag set but ν, a or c is not symmetric under θ → -θ");
        }
        if self.direction_independent && !(self.a.is_constant() && self.c.is_constant()) {
            return domain("direction_independent flag set but a or c varies with θ");
        }
        Ok(())
    }

    /// `K_ν`.
    pub fn k_nu(&self) -> Result<DMatrix<f64>> {
        self.nu.k_nu()
    }

    /// The one-dimensional conditional measure `λ(du | θ)`.
    pub fn conditional(&self, theta: &[f64]) -> LevyMeasure1D {
        LevyMeasure1D::TruncStable {
            c: self.c.eval(theta),
            a: self.a.eval(theta),
            r0: self.r0,
        }
    }
}

/// `K_ν` of a spec.
#[allow(non_snake_case)]
pub fn K_nu(spec: &RadialLevySpec) -> Result<DMatrix<f64>> {
    spec.k_nu()
}

/// Fitted parameters along one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirParams {
    pub a: f64,
    pub c: f64,
    pub r: f64,
    pub p: f64,
    pub s: f64,
    pub m: f64,
    /// Tail mass `B_τ(θ)` of jumps `>= r`.
    pub tail_mass: f64,
    /// Jump rate `N_τ(θ) = Γ(p+1) m s^{p+1}` of the Gamma part.
    pub gamma_rate: f64,
}

impl DirParams {
    fn new(tau: f64, c: f64, j: &JValues, r0: f64) -> DirParams {
        let a = j.a;
        let r = j.j4 * (tau * tau / c).powf(1.0 / (2.0 - a));
        let p = j.pi;
        let s = j.j1 * r;
        let ln_m = c.ln() + j.ln_j2 - (1.0 + a + p) * r.ln();
        let tail_mass = if r < r0 {
            c * (r.powf(-a) - r0.powf(-a)) / a
        } else {
            0.0
        };
        let gamma_rate = (ln_gamma(p + 1.0) + ln_m + (p + 1.0) * s.ln()).exp();
        DirParams {
            a,
            c,
            r,
            p,
            s,
            m: ln_m.exp(),
            tail_mass,
            gamma_rate,
        }
    }

    /// `∫u² 1{u<r} λ(du|θ) = c J0 r^{2-a}`.
    pub fn small_jump_variance(&self) -> f64 {
        self.c * self.r.powf(2.0 - self.a) / (2.0 - self.a)
    }

    /// `∫u^k γ_τ(du|θ) = Γ(p+k+1) m s^{p+k+1}`.
    pub fn gamma_moment(&self, k: f64) -> f64 {
        (ln_gamma(self.p + k + 1.0) + self.m.ln() + (self.p + k + 1.0) * self.s.ln()).exp()
    }

    /// `∫u^k 1{u<r} λ(du|θ) = c r^{k-a}/(k-a)`.
    pub fn small_jump_moment(&self, k: f64) -> f64 {
        self.c * self.r.powf(k - self.a) / (k - self.a)
    }
}

/// How `μ̃` and `μ` are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMode {
    Symmetric,
    DirectionIndependent,
    Piecewise,
    Unavailable,
}

/// A radial fit at Gaussian scale `τ`.
#[derive(Debug, Serialize)]
pub struct RadialField {
    pub tau: f64,
    pub spec: RadialLevySpec,
    pub essup_b: f64,
    pub essup_n: f64,
    pub r_max: f64,
    #[serde(serialize_with = "ser_matrix")]
    pub k: DMatrix<f64>,
    #[serde(skip)]
    k_sqrt: DMatrix<f64>,
    pub centering: CenteringMode,
    #[serde(serialize_with = "ser_opt_vector")]
    pub mu_tilde: Option<DVector<f64>>,
    #[serde(serialize_with = "ser_opt_vector")]
    pub mu: Option<DVector<f64>>,
    #[serde(skip)]
    nodes: Vec<Node>,
    #[serde(skip)]
    node_params: Vec<DirParams>,
    #[serde(skip)]
    const_j: Option<JValues>,
    #[serde(skip)]
    clamped: AtomicU64,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn ser_opt_vector<S: serde::Serializer>(
    v: &Option<DVector<f64>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    v.as_ref().map(|v| v.iter().copied().collect::<Vec<_>>()).serialize(s)
}

/// Fit every direction at scale `tau`.
pub fn radial_match(spec: &RadialLevySpec, tau: f64) -> Result<RadialField> {
    spec.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return domain(format!("tau must be > 0, got {tau}"));
    }
    let const_j = if spec.a.is_constant() {
        Some(j_functions(spec.a.eval(&vec![1.0; spec.dim()]))?)
    } else {
        None
    };
    let nodes = spec.nu.nodes();
    let mut node_params = Vec::with_capacity(nodes.len());
    for node in &nodes {
        let a = spec.a.eval(&node.theta);
        let j = match const_j {
            Some(j) => j,
            None => j_functions(a)?,
        };
        node_params.push(DirParams::new(tau, spec.c.eval(&node.theta), &j, spec.r0));
    }
    let r_max = node_params.iter().map(|p| p.r).fold(0.0, f64::max);
    if r_max >= spec.r0 {
        return Err(PgnError::TauTooLarge(format!(
            "ess sup r_τ(θ) = {r_max} >= r0 = {}",
            spec.r0
        )));
    }
    let max_b = node_params.iter().map(|p| p.tail_mass).fold(0.0, f64::max);
    let max_n = node_params.iter().map(|p| p.gamma_rate).fold(0.0, f64::max);
    let k = spec.k_nu()?;
    let k_sqrt = sqrtm(&k);
    let mut field = RadialField {
        tau,
        spec: spec.clone(),
        essup_b: ESSUP_SAFETY * max_b,
        essup_n: ESSUP_SAFETY * max_n,
        r_max,
        k,
        k_sqrt,
        centering: CenteringMode::Unavailable,
        mu_tilde: None,
        mu: None,
        nodes,
        node_params,
        const_j,
        clamped: AtomicU64::new(0),
    };
    field.compute_centering();
    Ok(field)
}

impl RadialField {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Fitted parameters at an arbitrary direction.
    pub fn params_at(&self, theta: &[f64]) -> Result<DirParams> {
        let c = self.spec.c.eval(theta);
        let j = match self.const_j {
            Some(j) => j,
            None => j_functions(self.spec.a.eval(theta))?,
        };
        Ok(DirParams::new(self.tau, c, &j, self.spec.r0))
    }

    /// Quadrature nodes of `ν` with the fitted parameters at each.
    pub fn grid(&self) -> impl Iterator<Item = (&Node, &DirParams)> {
        self.nodes.iter().zip(&self.node_params)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_params(&self) -> &[DirParams] {
        &self.node_params
    }

    /// Symmetric square root of `K_ν`.
    pub fn k_sqrt(&self) -> &DMatrix<f64> {
        &self.k_sqrt
    }

    /// Number of thinning steps whose acceptance exceeded one and was clamped.
    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    fn compute_centering(&mut self) {
        let d = self.dim();
        let spec = &self.spec;
        if spec.symmetric {
            self.centering = CenteringMode::Symmetric;
            self.mu_tilde = Some(DVector::zeros(d));
            self.mu = Some(DVector::zeros(d));
            return;
        }
        // tail mean ∫_{u>=r} u λ(du|θ) and Gamma-part mean (p+1) s N
        let tail_mean = |p: &DirParams| {
            if p.r >= spec.r0 {
                0.0
            } else if (p.a - 1.0).abs() < 1e-15 {
                p.c * (spec.r0 / p.r).ln()
            } else {
                p.c * (spec.r0.powf(1.0 - p.a) - p.r.powf(1.0 - p.a)) / (1.0 - p.a)
            }
        };
        let gamma_mean = |p: &DirParams| (p.p + 1.0) * p.s * p.gamma_rate;
        if spec.direction_independent {
            let theta_nu = spec.nu.theta_nu();
            let p = self.node_params[0];
            self.centering = CenteringMode::DirectionIndependent;
            self.mu_tilde = Some(&theta_nu * tail_mean(&p));
            self.mu = Some(&theta_nu * gamma_mean(&p));
            return;
        }
        let piecewise = self
            .nodes
            .iter()
            .all(|n| spec.a.piece(&n.theta).is_some() && spec.c.piece(&n.theta).is_some());
        if !piecewise {
            self.centering = CenteringMode::Unavailable;
            return;
        }
        // per piece: θ_{ν,P} times the piece's scalar centering
        let mut pieces: Vec<((usize, usize), DVector<f64>, DirParams)> = Vec::new();
        for (node, p) in self.nodes.iter().zip(&self.node_params) {
            let key = (
                spec.a.piece(&node.theta).unwrap_or(0),
                spec.c.piece(&node.theta).unwrap_or(0),
            );
            let theta = DVector::from_column_slice(&node.theta) * node.weight;
            match pieces.iter_mut().find(|(k, _, _)| *k == key) {
                Some((_, acc, _)) => *acc += theta,
                None => pieces.push((key, theta, *p)),
            }
        }
        let mut mu_tilde = DVector::zeros(d);
        let mut mu = DVector::zeros(d);
        for (_, theta_p, p) in &pieces {
            mu_tilde += theta_p * tail_mean(p);
            mu += theta_p * gamma_mean(p);
        }
        self.centering = CenteringMode::Piecewise;
        self.mu_tilde = Some(mu_tilde);
        self.mu = Some(mu);
    }

    fn centering_or_err(&self) -> Result<(&DVector<f64>, &DVector<f64>)> {
        match (&self.mu_tilde, &self.mu) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(PgnError::CenteringUnavailable(
                "spec is neither symmetric nor piecewise direction independent".into(),
            )),
        }
    }

    fn accept(&self, ratio: f64, rng: &mut RngStream) -> bool {
        let ratio = if ratio > 1.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            1.0
        } else {
            ratio
        };
        rng.uniform() < ratio
    }

    fn add_delta(&self, rng: &mut RngStream, out: &mut [f64], dir: &mut [f64]) {
        let mass = self.spec.nu.total_mass();
        let n = poisson_unchecked(self.essup_b * mass, rng);
        for _ in 0..n {
            self.spec.nu.sample_direction(rng, dir);
            let p = self.params_at(dir).expect("validated direction");
            if !self.accept(p.tail_mass / self.essup_b, rng) {
                continue;
            }
            let lo = p.r.powf(-p.a);
            let x = lo - rng.uniform() * (lo - self.spec.r0.powf(-p.a));
            let u = x.powf(-1.0 / p.a);
            for (o, t) in out.iter_mut().zip(dir.iter()) {
                *o += u * t;
            }
        }
        if let Some(mu) = &self.mu_tilde {
            for (o, m) in out.iter_mut().zip(mu.iter()) {
                *o -= m;
            }
        }
    }

    fn add_y(&self, rng: &mut RngStream, out: &mut [f64], dir: &mut [f64]) {
        let mass = self.spec.nu.total_mass();
        let n = poisson_unchecked(self.essup_n * mass, rng);
        for _ in 0..n {
            self.spec.nu.sample_direction(rng, dir);
            let p = self.params_at(dir).expect("validated direction");
            if !self.accept(p.gamma_rate / self.essup_n, rng) {
                continue;
            }
            let zeta = gamma_unchecked(p.p + 1.0, p.s, rng);
            for (o, t) in out.iter_mut().zip(dir.iter()) {
                *o += zeta * t;
            }
        }
        if let Some(mu) = &self.mu {
            for (o, m) in out.iter_mut().zip(mu.iter()) {
                *o -= m;
            }
        }
    }

    fn add_gauss(&self, rng: &mut RngStream, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        for i in 0..d {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate() {
                acc += self.k_sqrt[(i, j)] * zj;
            }
            out[i] += self.tau * acc;
        }
    }

    /// One draw of the requested component into `out` (length `d`).
    pub fn draw(&self, part: MvPart, rng: &mut RngStream, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut dir = vec![0.0; self.dim()];
        match part {
            MvPart::Delta => self.add_delta(rng, out, &mut dir),
            MvPart::Y => self.add_y(rng, out, &mut dir),
            MvPart::T => {
                self.add_y(rng, out, &mut dir);
                self.add_gauss(rng, out);
            }
            MvPart::Full => {
                self.add_delta(rng, out, &mut dir);
                self.add_y(rng, out, &mut dir);
                self.add_gauss(rng, out);
            }
        }
    }
}

/// Which piece of the multivariate approximation to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvPart {
    /// Centered large jumps `Δ_τ`.
    Delta,
    /// Centered Gamma part `Y_τ`.
    Y,
    /// `T_τ = Y_τ + τ K^{1/2} Z`.
    T,
    /// `Δ_τ + T_τ`.
    Full,
}

/// One draw of `Δ_τ`.
pub fn sample_delta_tau(field: &RadialField, rng: &mut RngStream) -> Result<Vec<f64>> {
    field.centering_or_err()?;
    let mut out = vec![0.0; field.dim()];
    field.draw(MvPart::Delta, rng, &mut out);
    Ok(out)
}

/// One draw of `Y_τ`.
#[allow(non_snake_case)]
pub fn sample_Y_tau(field: &RadialField, rng: &mut RngStream) -> Result<Vec<f64>> {
    field.centering_or_err()?;
    let mut out = vec![0.0; field.dim()];
    field.draw(MvPart::Y, rng, &mut out);
    Ok(out)
}

/// One draw of `T_τ`.
#[allow(non_snake_case)]
pub fn sample_T_tau(field: &RadialField, rng: &mut RngStream) -> Result<Vec<f64>> {
    field.centering_or_err()?;
    let mut out = vec![0.0; field.dim()];
    field.draw(MvPart::T, rng, &mut out);
    Ok(out)
}

#[derive(Serialize)]
struct MvSpec<'a> {
    kind: &'static str,
    part: MvPart,
    spec: &'a RadialLevySpec,
    tau: f64,
}

/// `n` draws of a component as a `d`-column batch. Fails if any thinning
/// acceptance had to be clamped.
pub fn sample_mv(field: &RadialField, part: MvPart, n: usize, seed: u64) -> Result<SampleBatch> {
    field.centering_or_err()?;
    let d = field.dim();
    let before = field.clamp_count();
    let values = fill_parallel(n, d, seed, |rng, row| field.draw(part, rng, row));
    let clamped = field.clamp_count() - before;
    if clamped > 0 {
        return Err(PgnError::HypothesisViolated(format!(
            "thinning acceptance exceeded 1 on {clamped} proposals; ess sup grid too coarse"
        )));
    }
    let hash = spec_hash(&MvSpec {
        kind: "mv",
        part,
        spec: &field.spec,
        tau: field.tau,
    })?;
    SampleBatch::new(values, d, seed, hash)
}

/// `Σ_τ = ∫θθ' c J0 r_τ^{2-a} ν(dθ)` and its symmetric square root.
pub fn sigma_tau(field: &RadialField) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sigma = grid_second_moment(field, DirParams::small_jump_variance);
    check_rank(&sigma, "Σ_τ")?;
    let a = sqrtm(&sigma);
    Ok((sigma, a))
}

fn grid_second_moment(field: &RadialField, f: impl Fn(&DirParams) -> f64) -> DMatrix<f64> {
    let d = field.dim();
    let mut out = DMatrix::zeros(d, d);
    for (node, p) in field.grid() {
        let w = node.weight * f(p);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += w * node.theta[i] * node.theta[j];
            }
        }
    }
    out
}

/// Covariance `∫θθ'u² 1{u>=r_τ(θ)} λ(du|θ) ν(dθ)` of `Δ_τ`.
pub fn delta_covariance(field: &RadialField) -> DMatrix<f64> {
    let r0 = field.spec.r0;
    grid_second_moment(field, |p| {
        p.c * (r0.powf(2.0 - p.a) - p.r.powf(2.0 - p.a)) / (2.0 - p.a)
    })
}

/// Covariance `∫θθ' Γ(p+3) m s^{p+3} ν(dθ)` of `Y_τ`.
pub fn y_covariance(field: &RadialField) -> DMatrix<f64> {
    grid_second_moment(field, |p| p.gamma_moment(2.0))
}

/// Worst relative calibration residual over `n_dirs` directions, with
/// both integrals recomputed by quadrature: small-jump variance minus
/// Gamma-part variance must equal `τ²`.
pub fn calibration_residual(field: &RadialField, n_dirs: usize) -> Result<f64> {
    let dirs: Vec<Vec<f64>> = if field.dim() == 2 {
        (0..n_dirs)
            .map(|i| {
                let phi = std::f64::consts::TAU * i as f64 / n_dirs as f64;
                vec![phi.cos(), phi.sin()]
            })
            .collect()
    } else {
        let nodes = field.nodes();
        let step = (nodes.len() / n_dirs).max(1);
        nodes.iter().step_by(step).map(|n| n.theta.clone()).collect()
    };
    let tau2 = field.tau * field.tau;
    let mut worst: f64 = 0.0;
    for theta in dirs {
        let p = field.params_at(&theta)?;
        let small = field
            .spec
            .conditional(&theta)
            .quadrature_power_integral(2.0, 0.0, p.r)?;
        let gamma = gamma_moment_quadrature(p.p, p.s, p.m, 2.0)?;
        worst = worst.max(((small - gamma) - tau2).abs() / tau2);
    }
    Ok(worst)
}

/// `∫_0^∞ u^k m u^p e^{-u/s} du` by quadrature on `[0, U]`, `U` far in the tail.
pub fn gamma_moment_quadrature(p: f64, s: f64, m: f64, k: f64) -> Result<f64> {
    let shape = p + k + 1.0;
    let upper = s * (shape + 40.0 * shape.sqrt() + 60.0);
    let ln_m = m.ln();
    // substitute u = s x so the integrand is O(1)
    let f = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        (ln_m + (p + k) * (s * x).ln() - x).exp() * s
    };
    let res = integrate(f, 0.0, upper / s, QuadConfig::with_rel_tol(1e-12))?;
    Ok(res.value)
}

/// Worst relative mismatch `∫u^j λ_τ(du|θ)` vs `∫u^j γ_τ(du|θ)` for
/// `j ∈ {4, 6, 8}`, small-jump side by quadrature.
pub fn radial_order_residual(field: &RadialField, theta: &[f64]) -> Result<f64> {
    let p = field.params_at(theta)?;
    let cond = field.spec.conditional(theta);
    let mut worst: f64 = 0.0;
    for j in [4.0, 6.0, 8.0] {
        let x = cond.quadrature_power_integral(j, 0.0, p.r)?;
        let y = p.gamma_moment(j);
        worst = worst.max((x - y).abs() / x);
    }
    Ok(worst)
}
