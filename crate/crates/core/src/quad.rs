//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 7-point Gauss rule is embedded in a 15-point Kronrod rule; the
//! difference between the two is the local error estimate. Intervals are
//! bisected in order of largest estimated error until the global estimate
//! meets the requested tolerance.
//!
//! Power-law endpoint singularities at the origin are removed by the
//! substitution `u = t^(1/beta)` in [`integrate_origin_power`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{PgnError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and budget for an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 4000,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadConfig {
            rel_tol,
            ..Default::default()
        }
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub intervals: usize,
    pub converged: bool,
}

impl QuadResult {
    pub fn rel_err(&self) -> f64 {
        if self.value == 0.0 {
            self.abs_err
        } else {
            self.abs_err / self.value.abs()
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    (value, err)
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
///
/// Never fails outright: a result that exhausts the interval budget is
/// returned with `converged == false`. Non-finite values of the integrand
/// are reported as an error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: QuadConfig) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(PgnError::Domain(format!("non-finite limits [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_err: 0.0,
            intervals: 0,
            converged: true,
        });
    }
    if b < a {
        let r = integrate(f, b, a, cfg)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }

    let (v0, e0) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v0,
        err: e0,
    });
    let mut total = v0;
    let mut total_err = e0;
    let mut n = 1usize;

    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(PgnError::NonIntegrable(format!(
                "integrand produced non-finite values on [{a}, {b}]"
            )));
        }
        let target = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if n >= cfg.max_intervals {
            return Ok(QuadResult {
                value: total,
                abs_err: total_err,
                intervals: n,
                converged: false,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval collapsed to machine resolution
            heap.push(worst);
            return Ok(QuadResult {
                value: total,
                abs_err: total_err,
                intervals: n,
                converged: false,
            });
        }
        let (vl, el) = gk15(&f, worst.a, mid);
        let (vr, er) = gk15(&f, mid, worst.b);
        total += vl + vr - worst.value;
        total_err += el + er - worst.err;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: vl,
            err: el,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: vr,
            err: er,
        });
        n += 1;
    }

    // re-sum to shed accumulated cancellation in the running totals
    let (value, abs_err) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.err));
    Ok(QuadResult {
        value,
        abs_err,
        intervals: n,
        converged: true,
    })
}

/// Integrate `f` over `(0, b]` where `f(u)` behaves like `u^(beta - 1)`
/// near the origin (`beta > 0`).
///
/// With `u = t^(1/beta)` the transformed integrand is bounded at `t = 0`.
pub fn integrate_origin_power<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    beta: f64,
    cfg: QuadConfig,
) -> Result<QuadResult> {
    if beta <= 0.0 {
        return Err(PgnError::NonIntegrable(format!(
            "origin exponent {beta} is not integrable"
        )));
    }
    if b <= 0.0 {
        return Ok(QuadResult {
            value: 0.0,
            abs_err: 0.0,
            intervals: 0,
            converged: true,
        });
    }
    let k = 1.0 / beta;
    let tb = b.powf(beta);
    integrate(
        |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let u = t.powf(k);
            // du = k t^(k-1) dt = k u / t dt
            let v = f(u) * k * u / t;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        tb,
        cfg,
    )
}
