//! Reproducible generators: twist maps of the disc with their smoothing
//! sequences, the zero-energy transport sequence, the shear, the torus
//! translation, and the seeded smooth test family.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{C0Mask, Domain, GridMap};
use crate::error::{Error, Result};
use crate::flow::{integrate_flow, FlowPath};
use crate::hamiltonian::SampledHamiltonian;
use crate::interp::TimeGrid;
use crate::metrics::PathPair;

/// Radius below which disc comparisons are not made.
pub const CORE_RADIUS: f64 = 0.05;

pub const CORE_MASK: C0Mask = C0Mask::ExcludeCore(CORE_RADIUS);

/// Transport band width `σ·n`.
const BAND_SIGMA: f64 = 0.4;

/// Transport bands narrower than this many grid cells are rejected.
const MIN_BAND_CELLS: f64 = 1.5;

/// Where the cutoff taper starts, as a fraction of `1 − ε`.
const TAPER_START: f64 = 0.6;

/// A user profile `s ↦ (ρ(s), ρ'(s))`.
pub type ProfileFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub enum ProfileKind {
    /// `ρ(s) = s^(−1/2)`
    SqrtInverse,
    /// `ρ(s) = s^(−2)`
    SquareInverse,
    Custom(ProfileFn),
}

impl fmt::Debug for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileKind::SqrtInverse => f.write_str("SqrtInverse"),
            ProfileKind::SquareInverse => f.write_str("SquareInverse"),
            ProfileKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Rotation profile `ρ` of a twist `(r, θ) ↦ (r, θ + ρ(r))`.
///
/// The base profile is multiplied by a septic taper that falls from 1 at
/// `0.6(1 − ε)` to 0 at `1 − ε`. With `mollify_n` set, the base is frozen
/// at its value at `1/n` below `1/n` and joined back by a cubic Hermite
/// blend on `[1/n, 2/n]`.
#[derive(Debug, Clone)]
pub struct RotationProfile {
    pub kind: ProfileKind,
    pub cutoff: f64,
    pub mollify_n: Option<u32>,
}

impl RotationProfile {
    pub fn new(kind: ProfileKind, cutoff: f64, mollify_n: Option<u32>) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < 0.5) {
            return Err(Error::InvalidProfile(format!("cutoff {cutoff} outside (0, 0.5)")));
        }
        let p = Self { kind, cutoff, mollify_n };
        if let Some(n) = mollify_n {
            if n == 0 || 2.0 / n as f64 >= p.taper_start() {
                return Err(Error::InvalidProfile(format!(
                    "mollification index {n} leaves no room before the taper at {:.3}",
                    p.taper_start()
                )));
            }
        }
        Ok(p)
    }

    pub fn sqrt_inverse(cutoff: f64, n: Option<u32>) -> Result<Self> {
        Self::new(ProfileKind::SqrtInverse, cutoff, n)
    }

    pub fn square_inverse(cutoff: f64, n: Option<u32>) -> Result<Self> {
        Self::new(ProfileKind::SquareInverse, cutoff, n)
    }

    /// `ρ(s) = A (1 − s²/b²)⁶` on `[0, b]`, `b = 1 − ε`; smooth at the origin.
    pub fn smooth_bump(amplitude: f64, cutoff: f64) -> Result<Self> {
        let b = 1.0 - cutoff;
        let f: ProfileFn = Arc::new(move |s: f64| {
            if s >= b {
                return (0.0, 0.0);
            }
            let q = 1.0 - s * s / (b * b);
            (amplitude * q.powi(6), -12.0 * amplitude * q.powi(5) * s / (b * b))
        });
        Self::new(ProfileKind::Custom(f), cutoff, None)
    }

    /// The same profile with a different smoothing index.
    pub fn mollified(&self, n: u32) -> Result<Self> {
        Self::new(self.kind.clone(), self.cutoff, Some(n))
    }

    fn support(&self) -> f64 {
        1.0 - self.cutoff
    }

    fn taper_start(&self) -> f64 {
        TAPER_START * self.support()
    }

    fn base(&self, s: f64) -> (f64, f64) {
        match &self.kind {
            ProfileKind::SqrtInverse => (s.powf(-0.5), -0.5 * s.powf(-1.5)),
            ProfileKind::SquareInverse => (s.powi(-2), -2.0 * s.powi(-3)),
            ProfileKind::Custom(f) => f(s),
        }
    }

    fn mollified_base(&self, s: f64) -> (f64, f64) {
        let Some(n) = self.mollify_n else {
            return self.base(s);
        };
        let lo = 1.0 / n as f64;
        if s <= lo {
            return (self.base(lo).0, 0.0);
        }
        if s >= 2.0 * lo {
            return self.base(s);
        }
        let (p0, (p1, d1)) = (self.base(lo).0, self.base(2.0 * lo));
        let u = (s - lo) / lo;
        let m1 = d1 * lo;
        let (h00, h01, h11) = (2.0 * u.powi(3) - 3.0 * u * u + 1.0, -2.0 * u.powi(3) + 3.0 * u * u, u.powi(3) - u * u);
        let (g00, g01, g11) = (6.0 * u * u - 6.0 * u, -6.0 * u * u + 6.0 * u, 3.0 * u * u - 2.0 * u);
        (h00 * p0 + h01 * p1 + h11 * m1, (g00 * p0 + g01 * p1 + g11 * m1) / lo)
    }

    fn taper(&self, s: f64) -> (f64, f64) {
        let (a, b) = (self.taper_start(), self.support());
        if s <= a {
            return (1.0, 0.0);
        }
        if s >= b {
            return (0.0, 0.0);
        }
        let u = (s - a) / (b - a);
        let v = u * u * u * u * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u * u * u);
        let dv = 140.0 * u * u * u * (1.0 - u).powi(3);
        (1.0 - v, -dv / (b - a))
    }

    /// `(ρ(s), ρ'(s))` for `s > 0`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        if s >= self.support() {
            return (0.0, 0.0);
        }
        let (r, dr) = self.mollified_base(s);
        let (c, dc) = self.taper(s);
        (r * c, dr * c + r * dc)
    }

    fn is_singular(&self) -> bool {
        match &self.kind {
            ProfileKind::SqrtInverse | ProfileKind::SquareInverse => self.mollify_n.is_none(),
            ProfileKind::Custom(f) => self.mollify_n.is_none() && !f(1e-12).0.is_finite(),
        }
    }

    /// `∫_r^1 s ρ(s) ds`: closed form on the pure power-law range,
    /// Gauss–Legendre on the blend and taper pieces.
    pub fn radial_hamiltonian(&self, r: f64) -> f64 {
        let b = self.support();
        if r >= b {
            return 0.0;
        }
        let a = self.taper_start();
        let mut breaks = vec![r];
        if let Some(n) = self.mollify_n {
            breaks.extend([1.0 / n as f64, 2.0 / n as f64]);
        }
        breaks.extend([a, b]);
        breaks.retain(|&x| x >= r);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += self.piece(w[0], w[1]);
        }
        total
    }

    fn piece(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let pure = hi <= self.taper_start() && self.mollify_n.map_or(true, |n| lo >= 2.0 / n as f64);
        let frozen = self.mollify_n.is_some_and(|n| hi <= 1.0 / n as f64);
        if frozen && hi <= self.taper_start() {
            let c = self.eval(lo).0;
            return c * (hi * hi - lo * lo) / 2.0;
        }
        match (&self.kind, pure) {
            (ProfileKind::SqrtInverse, true) => 2.0 / 3.0 * (hi.powf(1.5) - lo.powf(1.5)),
            (ProfileKind::SquareInverse, true) => (hi / lo).ln(),
            _ => gauss_legendre_composite(|s| s * self.eval(s).0, lo, hi, 8),
        }
    }

    /// Hofer norm of the time-independent flow `∫₀¹ s ρ(s) ds`.
    pub fn norm(&self) -> Result<f64> {
        if self.is_singular() && matches!(self.kind, ProfileKind::SquareInverse) {
            return Ok(f64::INFINITY);
        }
        if self.mollify_n.is_some() || !matches!(self.kind, ProfileKind::SqrtInverse) {
            return Ok(self.radial_hamiltonian(0.0));
        }
        let a = self.taper_start();
        Ok(2.0 / 3.0 * a.powf(1.5) + self.piece(a, self.support()))
    }
}

fn gauss_legendre_16() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        const N: usize = 16;
        (0..N)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=N {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    })
}

fn gauss_legendre_composite(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let w = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * w;
        total += gauss_legendre_16().iter().map(|&(x, wt)| wt * f(c + 0.5 * w * x)).sum::<f64>() * 0.5 * w;
    }
    total
}

fn ensure_disc(d: &Domain) -> Result<()> {
    if d.is_torus() {
        Err(Error::InvalidDomain("twist maps live on the disc".into()))
    } else {
        Ok(())
    }
}

/// Radial autonomous Hamiltonian `H(r) = ∫_r^1 s ρ(s) ds`; its flow turns
/// the circle of radius `r` counterclockwise by `t ρ(r)`.
pub fn rotation_hamiltonian(domain: Domain, nt: usize, p: &RotationProfile) -> Result<SampledHamiltonian> {
    ensure_disc(&domain)?;
    if p.is_singular() {
        return Err(Error::ProfileSingular);
    }
    SampledHamiltonian::autonomous(domain, nt, |x, y| p.radial_hamiltonian(x.hypot(y)))
}

/// Closed-form twist by `t ρ(r)`, with the analytic Jacobian determinant.
pub fn twist_map(domain: Domain, p: &RotationProfile, t: f64) -> Result<GridMap> {
    ensure_disc(&domain)?;
    let n = domain.len();
    let mut m = GridMap::identity(domain);
    let mut det = vec![1.0; n];
    for k in 0..n {
        let (x, y) = domain.point_at(k);
        let r = x.hypot(y);
        if !domain.is_active(k) || r == 0.0 {
            continue;
        }
        let (rho, drho) = p.eval(r);
        let (s, c) = (t * rho).sin_cos();
        m.image_x[k] = c * x - s * y;
        m.image_y[k] = s * x + c * y;
        // D(R(tρ(r)) p) = R + (R J p)(t ρ'(r) p / r)ᵀ
        let g = t * drho / r;
        let (ax, ay) = (-m.image_y[k], m.image_x[k]);
        let j = [[c + ax * g * x, -s + ax * g * y], [s + ay * g * x, c + ay * g * y]];
        det[k] = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    }
    Ok(m.with_jacobian(det))
}

/// The twist `φ_ρ` at time one.
pub fn rotation_map(domain: Domain, p: &RotationProfile) -> Result<GridMap> {
    twist_map(domain, p, 1.0)
}

/// The isotopy `t ↦ φ_{tρ}` in closed form, inverses `φ_{−tρ}`.
pub fn twist_path(domain: Domain, nt: usize, p: &RotationProfile) -> Result<FlowPath> {
    let tg = TimeGrid::new(nt);
    let slices = (0..nt).map(|k| twist_map(domain, p, tg.time(k))).collect::<Result<Vec<_>>>()?;
    let inverse = (0..nt).map(|k| twist_map(domain, p, -tg.time(k))).collect::<Result<Vec<_>>>()?;
    FlowPath::new(domain, slices, inverse)
}

/// Smoothing sequence `(φ_{H_{ρ_n}}, H_{ρ_n})` for each `n`.
///
/// Square-inverse twists turn the core by up to `n²` radians per unit
/// time, far beyond what the sampled field can carry, so those paths are
/// taken in closed form. Other profiles are integrated.
pub fn twist_sequence(
    domain: Domain,
    nt: usize,
    steps: usize,
    p: &RotationProfile,
    n_list: &[u32],
) -> Result<Vec<PathPair>> {
    ensure_disc(&domain)?;
    n_list
        .iter()
        .map(|&n| {
            let pn = p.mollified(n)?;
            let h = rotation_hamiltonian(domain, nt, &pn)?;
            match p.kind {
                ProfileKind::SquareInverse => PathPair::trusted(twist_path(domain, nt, &pn)?, h),
                _ => PathPair::new(integrate_flow(&h, steps)?, h),
            }
        })
        .collect()
}

/// Largest difference quotient `|φ(p) − φ(q)| / |p − q|` of a twist over
/// pairs of opposite points on the circle of radius `r`.
pub fn twist_difference_quotient(p: &RotationProfile, r: f64, samples: usize) -> f64 {
    let rho = p.eval(r).0;
    let mut worst = 0.0f64;
    for k in 0..samples {
        let th = 2.0 * PI * k as f64 / samples as f64;
        // compare with the point at radius r/2 on the same ray
        let (r2, rho2) = (0.5 * r, p.eval(0.5 * r).0);
        let a = ((th + rho).cos() * r, (th + rho).sin() * r);
        let b = ((th + rho2).cos() * r2, (th + rho2).sin() * r2);
        worst = worst.max((a.0 - b.0).hypot(a.1 - b.1) / (r - r2));
    }
    worst
}

/// Band Hamiltonian `g_n(y)` moving the row of `x0` horizontally to `y0`.
///
/// `g_n' = shift·(b − m)/(b(0) − m)` where `b` is a periodized Gaussian of
/// width `σ = 0.4/n` centred on the row and `m` its mean, so the row moves
/// by exactly `shift` while `osc g_n ≤ |shift|·m/(1 − m)` with `m ≈ 1/n`.
pub fn transport_hamiltonian(
    domain: Domain,
    nt: usize,
    x0: (f64, f64),
    y0: (f64, f64),
    n: u32,
) -> Result<SampledHamiltonian> {
    if !domain.is_torus() {
        return Err(Error::InvalidDomain("transport runs on the torus".into()));
    }
    if (x0.1 - y0.1).abs() > 1e-12 {
        return Err(Error::Config("transport endpoints must share their y coordinate".into()));
    }
    if n == 0 {
        return Err(Error::Config("band index must be positive".into()));
    }
    let shift = y0.0 - x0.0;
    let sigma = BAND_SIGMA / n as f64;
    let (_, hy) = domain.spacing();
    if sigma < MIN_BAND_CELLS * hy {
        return Err(Error::BandBelowResolution(format!(
            "band width {sigma:.4} is under {MIN_BAND_CELLS} grid cells ({:.4}) at n = {n}",
            MIN_BAND_CELLS * hy
        )));
    }
    if shift == 0.0 {
        return Ok(SampledHamiltonian::zero(domain, nt));
    }
    let band = |u: f64| (-2..=2).map(|k| (-(u + k as f64).powi(2) / (2.0 * sigma * sigma)).exp()).sum::<f64>();
    let integral = |u: f64| gauss_legendre_composite(band, 0.0, u, 16);
    let mass = 2.0 * integral(0.5);
    let scale = shift / (band(0.0) - mass);
    let row = x0.1;
    SampledHamiltonian::autonomous(domain, nt, |_, y| {
        let u = y - row - (y - row + 0.5).floor();
        scale * (integral(u) - mass * u)
    })?
    .normalize()
}

pub fn transport_sequence(
    domain: Domain,
    nt: usize,
    steps: usize,
    x0: (f64, f64),
    y0: (f64, f64),
    n_list: &[u32],
) -> Result<Vec<PathPair>> {
    n_list
        .iter()
        .map(|&n| {
            let h = transport_hamiltonian(domain, nt, x0, y0, n)?;
            PathPair::new(integrate_flow(&h, steps)?, h)
        })
        .collect()
}

/// `H = a sin(2πy)/(2π)`, whose flow is `(x + a t cos(2πy), y)`.
pub fn shear_hamiltonian(domain: Domain, nt: usize, a: f64) -> Result<SampledHamiltonian> {
    if !domain.is_torus() {
        return Err(Error::InvalidDomain("the shear runs on the torus".into()));
    }
    SampledHamiltonian::autonomous(domain, nt, |_, y| a * (2.0 * PI * y).sin() / (2.0 * PI))?.normalize()
}

pub fn shear_map(domain: Domain, a: f64, t: f64) -> GridMap {
    GridMap::from_fn(domain, |x, y| (x + a * t * (2.0 * PI * y).cos(), y))
}

pub fn translation_path(domain: Domain, nt: usize, a: f64, b: f64) -> Result<FlowPath> {
    FlowPath::translation(domain, nt, a, b)
}

/// Member `seed` of the smooth test family.
///
/// On the torus: twelve low Fourier modes, weighted by `1/|k|²`, with
/// coefficients varying smoothly in time. On the disc: a low-degree polynomial times the bump
/// `(1 − r²/b²)⁴`, `b` the support radius.
pub fn smooth_hamiltonian(domain: Domain, nt: usize, seed: u64) -> Result<SampledHamiltonian> {
    const AMPLITUDE: f64 = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = |rng: &mut ChaCha8Rng| -> [f64; 3] { [0; 3].map(|_| rng.gen_range(-1.0..1.0)) };
    let at = |c: &[f64; 3], t: f64| AMPLITUDE * (c[0] + c[1] * t + c[2] * (PI * t).sin());
    if domain.is_torus() {
        let mut modes = Vec::new();
        for q in 0..=2i32 {
            for p in -2..=2i32 {
                if q > 0 || p > 0 {
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    let weight = 1.0 / (p * p + q * q) as f64;
                    modes.push((p as f64, q as f64, phase, coef(&mut rng).map(|c| c * weight)));
                }
            }
        }
        SampledHamiltonian::from_fn(domain, nt, |t, x, y| {
            modes
                .iter()
                .map(|(p, q, ph, c)| at(c, t) * (2.0 * PI * (p * x + q * y) + ph).cos() / (2.0 * PI))
                .sum()
        })?
        .normalize()
    } else {
        let cs: Vec<[f64; 3]> = (0..6).map(|_| coef(&mut rng)).collect();
        let b = domain.support_radius();
        SampledHamiltonian::from_fn(domain, nt, |t, x, y| {
            let q = 1.0 - (x * x + y * y) / (b * b);
            if q <= 0.0 {
                return 0.0;
            }
            let poly = at(&cs[0], t) + at(&cs[1], t) * x + at(&cs[2], t) * y + at(&cs[3], t) * x * y
                + at(&cs[4], t) * x * x
                + at(&cs[5], t) * y * y;
            poly * q.powi(4)
        })
    }
}

/// Names addressable from the command line.
pub const ITEMS: [&str; 5] = ["twist-sqrt", "twist-div", "transport", "shear", "translation"];
