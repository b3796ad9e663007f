//! Reparameterizations `H^ζ(t, x) = ζ'(t) H(ζ(t), x)`, truncations,
//! boundary flattening and concatenation of flat paths.

use rand::Rng;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamiltonian::{trapezoid, SampledHamiltonian};
use crate::interp::TimeGrid;

/// Allowed disagreement between `ζ` increments and the integral of `ζ'`.
pub const DZETA_CONSISTENCY_TOL: f64 = 1e-6;

/// Slack added to the right-hand side of [`check_reparam_bound`].
pub const REPARAM_BOUND_SLACK: f64 = 1e-9;

const FLATTEN_BISECTIONS: usize = 20;
const FLATTEN_MAX_EPS: f64 = 0.25;
/// Plateaus span at least this many sample intervals.
const FLATTEN_MIN_PLATEAU: usize = 3;

/// Quintic smoothstep `6u⁵ − 15u⁴ + 10u³` clamped to `[0, 1]`.
pub fn smoothstep5(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

/// Derivative of [`smoothstep5`].
pub fn smoothstep5_prime(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

/// A sampled monotone reparameterization of `[0, 1]` with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamMap {
    zeta: Vec<f64>,
    dzeta: Vec<f64>,
}

impl ReparamMap {
    pub fn new(zeta: Vec<f64>, dzeta: Vec<f64>) -> Result<Self> {
        if zeta.len() < 2 || zeta.len() != dzeta.len() {
            return Err(Error::InvalidReparam(format!(
                "{} values and {} derivatives",
                zeta.len(),
                dzeta.len()
            )));
        }
        if zeta.iter().chain(&dzeta).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField);
        }
        if zeta.iter().any(|&z| !(-1e-12..=1.0 + 1e-12).contains(&z)) {
            return Err(Error::InvalidReparam("values outside [0, 1]".into()));
        }
        if zeta.windows(2).any(|w| w[1] < w[0] - 1e-12) || dzeta.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidReparam("not monotone nondecreasing".into()));
        }
        // increments must match the integral of ζ' under the trapezoid or
        // the cubic rule, up to the spread between the two rules
        let grid = TimeGrid::new(zeta.len());
        let dt = grid.dt();
        for k in 0..zeta.len() - 1 {
            let inc = zeta[k + 1] - zeta[k];
            let trap = 0.5 * dt * (dzeta[k] + dzeta[k + 1]);
            let cubic = grid.interval_integral(&dzeta, k);
            let gap = (inc - trap).abs().min((inc - cubic).abs());
            if gap > DZETA_CONSISTENCY_TOL + (trap - cubic).abs() {
                return Err(Error::InvalidReparam(format!(
                    "derivative inconsistent with values on interval {k} (gap {gap:.3e})"
                )));
            }
        }
        Ok(Self { zeta, dzeta })
    }

    /// Samples a closed-form `ζ` and `ζ'`.
    pub fn from_fn(nt: usize, zeta: impl Fn(f64) -> f64, dzeta: impl Fn(f64) -> f64) -> Result<Self> {
        let g = TimeGrid::new(nt);
        Self::new((0..nt).map(|k| zeta(g.time(k))).collect(), (0..nt).map(|k| dzeta(g.time(k))).collect())
    }

    pub fn identity(nt: usize) -> Self {
        Self::linear(nt, 1.0)
    }

    /// `ζ(t) = s·t`, the truncation map.
    pub fn linear(nt: usize, s: f64) -> Self {
        let g = TimeGrid::new(nt);
        let s = s.clamp(0.0, 1.0);
        Self { zeta: (0..nt).map(|k| s * g.time(k)).collect(), dzeta: vec![s; nt] }
    }

    pub fn smoothstep(nt: usize) -> Result<Self> {
        Self::from_fn(nt, smoothstep5, smoothstep5_prime)
    }

    /// `ζ = (1 − b)·S(t) + b·(t + a sin(2πmt)/(2πm))` with random `a ∈ (−0.9, 0.9)`,
    /// `b ∈ [0, 1]`, `m ∈ {1, 2, 3}`.
    pub fn random_smooth(nt: usize, rng: &mut impl Rng) -> Result<Self> {
        let a: f64 = rng.gen_range(-0.9..0.9);
        let b: f64 = rng.gen_range(0.0..=1.0);
        let m = rng.gen_range(1..=3) as f64;
        let w = 2.0 * PI * m;
        Self::from_fn(
            nt,
            |t| ((1.0 - b) * smoothstep5(t) + b * (t + a * (w * t).sin() / w)).clamp(0.0, 1.0),
            |t| (1.0 - b) * smoothstep5_prime(t) + b * (1.0 + a * (w * t).cos()),
        )
    }

    /// Boundary-flattening map: `ζ' = 0` on `[0, ε]` and `[1 − ε, 1]`,
    /// quintic-smoothstep ramps of width `ε` next to the plateaus and a
    /// constant in between, normalized by its exact integral `1 − 3ε`.
    /// `ζ` is the closed-form antiderivative, so `H^ζ` samples
    /// `ζ'·H(ζ)` without quadrature lag.
    pub fn flattening(nt: usize, eps: f64) -> Result<Self> {
        let g = TimeGrid::new(nt);
        let min_eps = FLATTEN_MIN_PLATEAU as f64 * g.dt();
        if eps < min_eps * (1.0 - 1e-12) || eps > FLATTEN_MAX_EPS {
            return Err(Error::RefineTimeGrid(format!(
                "plateau width {eps:.4} outside [{min_eps:.4}, {FLATTEN_MAX_EPS}]"
            )));
        }
        let total = 1.0 - 3.0 * eps;
        let shape = |t: f64| {
            let u = t.min(1.0 - t);
            if u <= eps {
                0.0
            } else {
                smoothstep5((u - eps) / eps)
            }
        };
        // antiderivative of the shape on [0, 1/2]
        let head = |u: f64| {
            if u <= eps {
                0.0
            } else if u <= 2.0 * eps {
                let v = (u - eps) / eps;
                eps * v.powi(4) * (v * (v - 3.0) + 2.5)
            } else {
                0.5 * eps + (u - 2.0 * eps)
            }
        };
        let zeta = |t: f64| if t <= 0.5 { head(t) / total } else { 1.0 - head(1.0 - t) / total };
        let mut z: Vec<f64> = (0..nt).map(|k| zeta(g.time(k)).clamp(0.0, 1.0)).collect();
        z[nt - 1] = 1.0;
        Self::new(z, (0..nt).map(|k| shape(g.time(k)) / total).collect())
    }

    pub fn nt(&self) -> usize {
        self.zeta.len()
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn dzeta(&self) -> &[f64] {
        &self.dzeta
    }
}

/// `‖ζ₁ − ζ₂‖_ham = max_t |ζ₁ − ζ₂| + ∫ |ζ₁' − ζ₂'|`.
pub fn ham_norm(z1: &ReparamMap, z2: &ReparamMap) -> Result<f64> {
    if z1.nt() != z2.nt() {
        return Err(Error::DomainMismatch(format!("time grids of {} and {} samples", z1.nt(), z2.nt())));
    }
    let c0 = z1.zeta.iter().zip(&z2.zeta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let diff: Vec<f64> = z1.dzeta.iter().zip(&z2.dzeta).map(|(a, b)| (a - b).abs()).collect();
    Ok(c0 + trapezoid(&diff, TimeGrid::new(z1.nt()).dt()))
}

/// `H^ζ(t, x) = ζ'(t)·H(ζ(t), x)` on the time grid of `ζ`.
pub fn reparameterize(h: &SampledHamiltonian, zeta: &ReparamMap) -> Result<SampledHamiltonian> {
    let src = h.time_grid();
    let n = h.domain().len();
    let slices = (0..zeta.nt())
        .map(|k| {
            let st = src.stencil(zeta.zeta[k]);
            let mut v = vec![0.0; n];
            for a in 0..st.len {
                let w = st.weight[a] * zeta.dzeta[k];
                if w != 0.0 {
                    for (o, &s) in v.iter_mut().zip(h.slice(st.index[a])) {
                        *o += w * s;
                    }
                }
            }
            v
        })
        .collect();
    SampledHamiltonian::from_slices(*h.domain(), slices)
}

/// Truncation `H^s(t, x) = s·H(st, x)`, generating `t ↦ φ_H^{st}`.
pub fn truncate(h: &SampledHamiltonian, s: f64) -> Result<SampledHamiltonian> {
    reparameterize(h, &ReparamMap::linear(h.nt(), s))
}

/// `lhs = ‖H^{ζ₁} − H^{ζ₂}‖` and `rhs = 2·max(‖H‖_C⁰, L)·‖ζ₁ − ζ₂‖_ham`
/// with `L` the sampled time-Lipschitz constant of `H`.
pub fn reparam_bound(h: &SampledHamiltonian, z1: &ReparamMap, z2: &ReparamMap) -> Result<(f64, f64)> {
    let lhs = reparameterize(h, z1)?.sub(&reparameterize(h, z2)?)?.hofer_norm();
    let rhs = 2.0 * h.c0_norm().max(h.time_lipschitz()) * ham_norm(z1, z2)?;
    Ok((lhs, rhs))
}

/// [`reparam_bound`] with the contract `lhs ≤ rhs + 1e-9` enforced.
pub fn check_reparam_bound(h: &SampledHamiltonian, z1: &ReparamMap, z2: &ReparamMap) -> Result<(f64, f64)> {
    let (lhs, rhs) = reparam_bound(h, z1, z2)?;
    if lhs > rhs + REPARAM_BOUND_SLACK {
        return Err(Error::ReparamBound { lhs, rhs });
    }
    Ok((lhs, rhs))
}

/// Result of [`flatten`].
#[derive(Debug, Clone)]
pub struct Flattened {
    pub hamiltonian: SampledHamiltonian,
    pub zeta: ReparamMap,
    pub eps: f64,
    /// `‖H − H'‖` at the chosen plateau width.
    pub distance: f64,
}

/// Boundary flattening: the widest plateau `ε` with `‖H − H^ζ‖ ≤ ε_target`.
///
/// The width is bisected between `3Δt` and `1/4`. The bisection aims at
/// `(1 − 1e-3)·ε_target` so the composed length `‖H̄ # H^ζ‖`, which agrees
/// with the direct one to that relative tolerance, also stays below target.
pub fn flatten(h: &SampledHamiltonian, eps_target: f64) -> Result<Flattened> {
    if !(eps_target > 0.0 && eps_target.is_finite()) {
        return Err(Error::Config(format!("eps target must be positive, got {eps_target}")));
    }
    let goal = eps_target * (1.0 - crate::calculus::LENG_RELATIVE_TOL);
    let nt = h.nt();
    let dt = h.time_grid().dt();
    let attempt = |eps: f64| -> Result<Flattened> {
        let zeta = ReparamMap::flattening(nt, eps)?;
        let hz = reparameterize(h, &zeta)?;
        let distance = h.sub(&hz)?.hofer_norm();
        Ok(Flattened { hamiltonian: hz, zeta, eps, distance })
    };
    let mut best = attempt(FLATTEN_MIN_PLATEAU as f64 * dt)?;
    if best.distance > goal {
        return Err(Error::RefineTimeGrid(format!(
            "narrowest plateau {:.4} gives distance {:.4e} > {eps_target:.4e}",
            best.eps, best.distance
        )));
    }
    if let Ok(top) = attempt(FLATTEN_MAX_EPS) {
        if top.distance <= goal {
            return Ok(top);
        }
    }
    let (mut lo, mut hi) = (best.eps, FLATTEN_MAX_EPS);
    for _ in 0..FLATTEN_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        match attempt(mid) {
            Ok(trial) if trial.distance <= goal => {
                lo = mid;
                best = trial;
            }
            _ => hi = mid,
        }
    }
    Ok(best)
}

/// Number of leading and trailing samples that vanish identically.
pub fn flat_samples(h: &SampledHamiltonian) -> (usize, usize) {
    let zero = |k: usize| h.slice(k).iter().all(|v| *v == 0.0);
    let nt = h.nt();
    let head = (0..nt).take_while(|&k| zero(k)).count();
    let tail = (0..nt).rev().take_while(|&k| zero(k)).count();
    (head, tail)
}

/// Concatenation `H^s`: `H⁰` compressed onto `[0, 1 − s]` followed by
/// `K(t − (1 − s))` on `[1 − s, 1]`; its time-1 map is `φ_K^s ∘ φ_{H⁰}^1`.
///
/// Requires `H⁰` to vanish on its first and last two samples and `K` on
/// its first two.
pub fn connect_concatenation(h0: &SampledHamiltonian, k: &SampledHamiltonian, s: f64) -> Result<SampledHamiltonian> {
    h0.ensure_compatible(k)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidReparam(format!("concatenation parameter {s} outside [0, 1]")));
    }
    let (head, tail) = flat_samples(h0);
    if head < 2 || tail < 2 {
        return Err(Error::FlattenInputsFirst("first Hamiltonian is not flat near both ends".into()));
    }
    if flat_samples(k).0 < 2 {
        return Err(Error::FlattenInputsFirst("second Hamiltonian is not flat near t = 0".into()));
    }
    let g = h0.time_grid();
    let n = h0.domain().len();
    let split = 1.0 - s;
    let sample = |h: &SampledHamiltonian, t: f64, scale: f64| {
        let st = g.stencil(t.clamp(0.0, 1.0));
        let mut v = vec![0.0; n];
        for a in 0..st.len {
            for (o, &x) in v.iter_mut().zip(h.slice(st.index[a])) {
                *o += scale * st.weight[a] * x;
            }
        }
        v
    };
    let zero = Arc::new(vec![0.0; n]);
    let slices = (0..h0.nt())
        .map(|i| {
            let t = g.time(i);
            if t < split {
                Arc::new(sample(h0, t / split, 1.0 / split))
            } else if t - split <= 0.0 {
                zero.clone()
            } else {
                Arc::new(sample(k, t - split, 1.0))
            }
        })
        .collect();
    SampledHamiltonian::from_shared(*h0.domain(), slices)
}
