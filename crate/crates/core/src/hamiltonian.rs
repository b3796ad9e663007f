//! Time-dependent Hamiltonians sampled on a (time × space) grid, and the
//! Hofer-type norms built from them.

use std::sync::Arc;

use crate::domain::{integrate_values, Domain, Surface};
use crate::error::{Error, Result};
use crate::interp::{fit_slices, PeriodicSpline, TimeGrid};

/// Means of normalized torus slices must stay below this.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Disc Hamiltonians may carry at most this much (relative) residue
/// outside the support radius; it is projected to zero on construction.
const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SampledHamiltonian {
    domain: Domain,
    slices: Vec<Arc<Vec<f64>>>,
    normalized: bool,
}

impl PartialEq for SampledHamiltonian {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.normalized == other.normalized
            && self.slices.len() == other.slices.len()
            && self.slices.iter().zip(&other.slices).all(|(a, b)| a == b)
    }
}

impl SampledHamiltonian {
    /// Builds a Hamiltonian from per-time slices. Torus Hamiltonians are
    /// flagged normalized when every slice has zero mean; disc Hamiltonians
    /// must vanish outside the support radius.
    pub fn from_slices(domain: Domain, slices: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_shared(domain, slices.into_iter().map(Arc::new).collect())
    }

    pub(crate) fn from_shared(domain: Domain, mut slices: Vec<Arc<Vec<f64>>>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidDomain("need at least two time samples".into()));
        }
        for s in &slices {
            if s.len() != domain.len() {
                return Err(Error::DomainMismatch(format!(
                    "slice of {} values on a grid of {} nodes",
                    s.len(),
                    domain.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteField);
            }
        }
        let normalized = match domain.surface() {
            Surface::Torus => {
                let mut ok = true;
                for s in &slices {
                    if integrate_values(&domain, s)?.abs() > NORMALIZATION_TOL {
                        ok = false;
                        break;
                    }
                }
                ok
            }
            Surface::Disc => {
                enforce_support(&domain, &mut slices)?;
                false
            }
        };
        Ok(Self { domain, slices, normalized })
    }

    pub fn from_fn(domain: Domain, nt: usize, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let tg = TimeGrid::new(nt);
        let slices = (0..nt)
            .map(|k| {
                let t = tg.time(k);
                sample(&domain, |x, y| f(t, x, y))
            })
            .collect();
        Self::from_slices(domain, slices)
    }

    /// Time-independent Hamiltonian; all slices share storage.
    pub fn autonomous(domain: Domain, nt: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let s = Arc::new(sample(&domain, f));
        Self::from_shared(domain, vec![s; nt.max(2)])
    }

    pub fn zero(domain: Domain, nt: usize) -> Self {
        let s = Arc::new(vec![0.0; domain.len()]);
        Self { domain, slices: vec![s; nt.max(2)], normalized: domain.is_torus() }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn nt(&self) -> usize {
        self.slices.len()
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.nt())
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    /// True when all slices are identical.
    pub fn is_autonomous(&self) -> bool {
        let first = &self.slices[0];
        self.slices.iter().all(|s| Arc::ptr_eq(s, first) || s == first)
    }

    pub fn splines(&self) -> Vec<Arc<PeriodicSpline>> {
        fit_slices(&self.domain, &self.slices)
    }

    pub fn ensure_compatible(&self, other: &SampledHamiltonian) -> Result<()> {
        self.domain.ensure_same(&other.domain)?;
        if self.nt() != other.nt() {
            return Err(Error::DomainMismatch(format!(
                "time grids of {} and {} samples",
                self.nt(),
                other.nt()
            )));
        }
        Ok(())
    }

    /// Subtracts the Liouville mean from every slice.
    pub fn normalize(&self) -> Result<Self> {
        if !self.domain.is_torus() {
            return Err(Error::NormalizeOnDisc);
        }
        let mut out = Vec::with_capacity(self.nt());
        for (k, s) in self.slices.iter().enumerate() {
            if k > 0 && Arc::ptr_eq(s, &self.slices[k - 1]) {
                let prev: &Arc<Vec<f64>> = &out[k - 1];
                out.push(prev.clone());
                continue;
            }
            let mean = integrate_values(&self.domain, s)?;
            out.push(Arc::new(s.iter().map(|v| v - mean).collect()));
        }
        Ok(Self { domain: self.domain, slices: out, normalized: true })
    }

    fn active_extrema(&self, s: &[f64]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, &v) in s.iter().enumerate() {
            if self.domain.is_active(k) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Grid oscillation `max H_t − min H_t` of slice `k`.
    pub fn osc(&self, k: usize) -> Result<f64> {
        let s = self
            .slices
            .get(k)
            .ok_or(Error::TimeIndex { index: k, nt: self.nt() })?;
        let (lo, hi) = self.active_extrema(s);
        Ok(hi - lo)
    }

    pub fn osc_profile(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.nt());
        for (k, s) in self.slices.iter().enumerate() {
            if k > 0 && Arc::ptr_eq(s, &self.slices[k - 1]) {
                out.push(out[k - 1]);
            } else {
                let (lo, hi) = self.active_extrema(s);
                out.push(hi - lo);
            }
        }
        out
    }

    /// The L^(1,∞) norm: trapezoid rule in time of the oscillation.
    pub fn hofer_norm(&self) -> f64 {
        trapezoid(&self.osc_profile(), self.time_grid().dt())
    }

    /// `max_(t,x) H − min_(t,x) H`.
    pub fn linfty_norm(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.slices {
            let (a, b) = self.active_extrema(s);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        hi - lo
    }

    /// `max_(t,x) |H|`.
    pub fn c0_norm(&self) -> f64 {
        let mut m = 0.0f64;
        for s in &self.slices {
            let (a, b) = self.active_extrema(s);
            m = m.max(a.abs()).max(b.abs());
        }
        m
    }

    /// Largest finite-difference slope in time.
    pub fn time_lipschitz(&self) -> f64 {
        let dt = self.time_grid().dt();
        let mut l = 0.0f64;
        for w in self.slices.windows(2) {
            if Arc::ptr_eq(&w[0], &w[1]) {
                continue;
            }
            for (k, (a, b)) in w[0].iter().zip(w[1].iter()).enumerate() {
                if self.domain.is_active(k) {
                    l = l.max((b - a).abs() / dt);
                }
            }
        }
        l
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_compatible(other)?;
        let mut out: Vec<Arc<Vec<f64>>> = Vec::with_capacity(self.nt());
        for k in 0..self.nt() {
            let shared = k > 0
                && Arc::ptr_eq(&self.slices[k], &self.slices[k - 1])
                && Arc::ptr_eq(&other.slices[k], &other.slices[k - 1]);
            if shared {
                let prev = out[k - 1].clone();
                out.push(prev);
            } else {
                let v = self.slices[k].iter().zip(other.slices[k].iter()).map(|(&a, &b)| f(a, b)).collect();
                out.push(Arc::new(v));
            }
        }
        Self::from_shared(self.domain, out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_values(|v| c * v)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out: Vec<Arc<Vec<f64>>> = Vec::with_capacity(self.nt());
        for (k, s) in self.slices.iter().enumerate() {
            if k > 0 && Arc::ptr_eq(s, &self.slices[k - 1]) {
                let prev = out[k - 1].clone();
                out.push(prev);
            } else {
                out.push(Arc::new(s.iter().map(|&v| f(v)).collect()));
            }
        }
        let normalized = self.normalized
            && out.iter().all(|s| integrate_values(&self.domain, s).map(|m| m.abs() <= NORMALIZATION_TOL).unwrap_or(false));
        Self { domain: self.domain, slices: out, normalized }
    }

    /// Maximum absolute difference over active nodes and all slices.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.ensure_compatible(other)?;
        let mut m = 0.0f64;
        for (a, b) in self.slices.iter().zip(&other.slices) {
            for (k, (x, y)) in a.iter().zip(b.iter()).enumerate() {
                if self.domain.is_active(k) {
                    m = m.max((x - y).abs());
                }
            }
        }
        Ok(m)
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

fn sample(domain: &Domain, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..domain.len())
        .map(|k| {
            if domain.is_active(k) {
                let (x, y) = domain.point_at(k);
                f(x, y)
            } else {
                0.0
            }
        })
        .collect()
}

fn enforce_support(domain: &Domain, slices: &mut [Arc<Vec<f64>>]) -> Result<()> {
    let r_sup = domain.support_radius();
    let mut projected: Vec<Option<Arc<Vec<f64>>>> = vec![None; slices.len()];
    for k in 0..slices.len() {
        if k > 0 && Arc::ptr_eq(&slices[k], &slices[k - 1]) {
            projected[k] = projected[k - 1].clone();
            continue;
        }
        let s = &slices[k];
        let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut v = (**s).clone();
        for (idx, val) in v.iter_mut().enumerate() {
            let (x, y) = domain.point_at(idx);
            if !domain.is_active(idx) {
                *val = 0.0;
            } else if x.hypot(y) > r_sup {
                if val.abs() > SUPPORT_TOL * scale {
                    return Err(Error::SupportViolation(format!(
                        "value {:.3e} at radius {:.4} beyond support radius {:.4}",
                        val,
                        x.hypot(y),
                        r_sup
                    )));
                }
                *val = 0.0;
            }
        }
        projected[k] = Some(Arc::new(v));
    }
    for (slot, p) in slices.iter_mut().zip(projected) {
        *slot = p.expect("filled above");
    }
    Ok(())
}
