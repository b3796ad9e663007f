//! Interpolation in space and time.
//!
//! Space: periodic tensor-product quintic B-splines. Coefficients are
//! obtained by dividing the discrete Fourier transform of the samples by
//! the B-spline symbol. The interpolant is C⁴, so the Hamiltonian vector
//! field `(∂_y Ĥ, −∂_x Ĥ)` of an interpolated Hamiltonian is exactly
//! divergence free.
//!
//! Time: piecewise cubic Lagrange interpolation on the uniform sample grid
//! (lower degree when fewer than four samples exist).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::domain::Domain;

#[inline]
fn tp(x: f64, p: i32) -> f64 {
    if x > 0.0 {
        x.powi(p)
    } else {
        0.0
    }
}

/// Centred quintic B-spline.
#[inline]
pub fn bspline5(x: f64) -> f64 {
    let a = x.abs();
    (tp(3.0 - a, 5) - 6.0 * tp(2.0 - a, 5) + 15.0 * tp(1.0 - a, 5)) / 120.0
}

#[cfg(test)]
fn bspline5_d1(x: f64) -> f64 {
    let a = x.abs();
    let v = (tp(3.0 - a, 4) - 6.0 * tp(2.0 - a, 4) + 15.0 * tp(1.0 - a, 4)) / 24.0;
    if x >= 0.0 {
        -v
    } else {
        v
    }
}

#[cfg(test)]
fn bspline5_d2(x: f64) -> f64 {
    let a = x.abs();
    (tp(3.0 - a, 3) - 6.0 * tp(2.0 - a, 3) + 15.0 * tp(1.0 - a, 3)) / 6.0
}

/// Weights of the six nodes `base-2 ..= base+3` for fractional offset `f`.
#[derive(Clone, Copy)]
struct Weights {
    w: [f64; 6],
    d1: [f64; 6],
    d2: [f64; 6],
}

impl Weights {
    #[inline]
    fn new(f: f64, order: u8, inv_h: f64) -> Self {
        let g = 1.0 - f;
        let (p1, p2, p3) = (1.0 + f, 2.0 + f, 2.0 - f);
        let q = 3.0 - f;
        let sq = |v: f64| v * v;
        let (f2, g2, p12, p22, p32, q2) = (sq(f), sq(g), sq(p1), sq(p2), sq(p3), sq(q));
        let (f4, g4, p14, p24, p34, q4) = (sq(f2), sq(g2), sq(p12), sq(p22), sq(p32), sq(q2));
        let c = 1.0 / 120.0;
        let w = [
            g4 * g * c,
            (p34 * p3 - 6.0 * g4 * g) * c,
            (q4 * q - 6.0 * p34 * p3 + 15.0 * g4 * g) * c,
            (p24 * p2 - 6.0 * p14 * p1 + 15.0 * f4 * f) * c,
            (p14 * p1 - 6.0 * f4 * f) * c,
            f4 * f * c,
        ];
        let mut out = Weights { w, d1: [0.0; 6], d2: [0.0; 6] };
        if order >= 1 {
            let c = inv_h / 24.0;
            out.d1 = [
                -g4 * c,
                (-p34 + 6.0 * g4) * c,
                (-q4 + 6.0 * p34 - 15.0 * g4) * c,
                (p24 - 6.0 * p14 + 15.0 * f4) * c,
                (p14 - 6.0 * f4) * c,
                f4 * c,
            ];
        }
        if order >= 2 {
            let c = inv_h * inv_h / 6.0;
            let (f3, g3, p13, p23, p33, q3) = (f2 * f, g2 * g, p12 * p1, p22 * p2, p32 * p3, q2 * q);
            out.d2 = [
                g3 * c,
                (p33 - 6.0 * g3) * c,
                (q3 - 6.0 * p33 + 15.0 * g3) * c,
                (p23 - 6.0 * p13 + 15.0 * f3) * c,
                (p13 - 6.0 * f3) * c,
                f3 * c,
            ];
        }
        out
    }
}

/// Value and derivatives of an interpolant at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub fx: f64,
    pub fy: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
}

#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
    coeffs: Vec<f64>,
}

fn symbol(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (66.0 + 52.0 * th.cos() + 2.0 * (2.0 * th).cos()) / 120.0
        })
        .collect()
}

impl PeriodicSpline {
    /// Interpolating spline through grid samples (all nodes, active or not).
    pub fn fit(domain: &Domain, values: &[f64]) -> Self {
        let (nx, ny) = (domain.nx(), domain.ny());
        assert_eq!(values.len(), nx * ny);
        let mut planner = FftPlanner::<f64>::new();
        let fy = planner.plan_fft_forward(ny);
        let fx = planner.plan_fft_forward(nx);
        let iy = planner.plan_fft_inverse(ny);
        let ix = planner.plan_fft_inverse(nx);

        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for row in data.chunks_mut(ny) {
            fy.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); nx];
        let (sx, sy) = (symbol(nx), symbol(ny));
        for j in 0..ny {
            for i in 0..nx {
                col[i] = data[i * ny + j];
            }
            fx.process(&mut col);
            for i in 0..nx {
                col[i] /= sx[i] * sy[j];
            }
            ix.process(&mut col);
            for i in 0..nx {
                data[i * ny + j] = col[i];
            }
        }
        for row in data.chunks_mut(ny) {
            iy.process(row);
        }
        let scale = 1.0 / (nx * ny) as f64;
        let coeffs = data.iter().map(|c| c.re * scale).collect();
        let (x0, y0) = domain.origin();
        let (hx, hy) = domain.spacing();
        Self { nx, ny, x0, y0, hx, hy, coeffs }
    }

    /// Linear combination of splines on the same grid.
    pub fn blend(parts: &[(f64, &PeriodicSpline)]) -> Self {
        let first = parts[0].1;
        let mut coeffs = vec![0.0; first.coeffs.len()];
        for &(w, s) in parts {
            if w == 0.0 {
                continue;
            }
            for (c, &v) in coeffs.iter_mut().zip(&s.coeffs) {
                *c += w * v;
            }
        }
        Self { coeffs, ..first.clone_shape() }
    }

    /// Writes a linear combination into `self` in place.
    pub fn assign_blend(&mut self, parts: &[(f64, &PeriodicSpline)]) {
        self.coeffs.iter_mut().for_each(|c| *c = 0.0);
        for &(w, s) in parts {
            if w == 0.0 {
                continue;
            }
            for (c, &v) in self.coeffs.iter_mut().zip(&s.coeffs) {
                *c += w * v;
            }
        }
    }

    fn clone_shape(&self) -> Self {
        Self { coeffs: Vec::new(), ..*self }
    }

    #[inline]
    fn locate(&self, x: f64, y: f64) -> (usize, f64, usize, f64) {
        let u = (x - self.x0) / self.hx;
        let v = (y - self.y0) / self.hy;
        let (ui, vi) = (u.floor(), v.floor());
        let bi = (ui as i64 - 2).rem_euclid(self.nx as i64) as usize;
        let bj = (vi as i64 - 2).rem_euclid(self.ny as i64) as usize;
        (bi, u - ui, bj, v - vi)
    }

    #[inline]
    fn rows(&self, bi: usize) -> [usize; 6] {
        let mut r = [0usize; 6];
        for (m, slot) in r.iter_mut().enumerate() {
            let i = bi + m;
            *slot = if i >= self.nx { i - self.nx } else { i };
        }
        r
    }

    /// The six coefficients `c[row, bj..bj+6]` (periodically wrapped).
    #[inline(always)]
    fn row(&self, row: usize, bj: usize) -> [f64; 6] {
        let base = row * self.ny;
        if bj + 6 <= self.ny {
            self.coeffs[base + bj..base + bj + 6].try_into().unwrap()
        } else {
            let mut c = [0.0; 6];
            for (m, slot) in c.iter_mut().enumerate() {
                let j = bj + m;
                *slot = self.coeffs[base + if j >= self.ny { j - self.ny } else { j }];
            }
            c
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (bi, fx, bj, fy) = self.locate(x, y);
        let wx = Weights::new(fx, 0, 0.0);
        let wy = Weights::new(fy, 0, 0.0);
        let rows = self.rows(bi);
        let mut acc = 0.0;
        for a in 0..6 {
            let c = self.row(rows[a], bj);
            let mut s = 0.0;
            for b in 0..6 {
                s += c[b] * wy.w[b];
            }
            acc += wx.w[a] * s;
        }
        acc
    }

    /// Value and gradient.
    #[inline]
    pub fn eval_grad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (bi, fx, bj, fy) = self.locate(x, y);
        let wx = Weights::new(fx, 1, 1.0 / self.hx);
        let wy = Weights::new(fy, 1, 1.0 / self.hy);
        let rows = self.rows(bi);
        let (mut f, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for a in 0..6 {
            let row = self.row(rows[a], bj);
            let (mut s0, mut s1) = (0.0, 0.0);
            for b in 0..6 {
                let c = row[b];
                s0 += c * wy.w[b];
                s1 += c * wy.d1[b];
            }
            f += wx.w[a] * s0;
            gx += wx.d1[a] * s0;
            gy += wx.w[a] * s1;
        }
        (f, gx, gy)
    }

    /// Value, gradient and Hessian.
    #[inline]
    pub fn eval_jet(&self, x: f64, y: f64) -> Jet {
        let (bi, fx, bj, fy) = self.locate(x, y);
        let wx = Weights::new(fx, 2, 1.0 / self.hx);
        let wy = Weights::new(fy, 2, 1.0 / self.hy);
        let rows = self.rows(bi);
        let mut jet = Jet::default();
        for a in 0..6 {
            let row = self.row(rows[a], bj);
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for b in 0..6 {
                let c = row[b];
                s0 += c * wy.w[b];
                s1 += c * wy.d1[b];
                s2 += c * wy.d2[b];
            }
            jet.f += wx.w[a] * s0;
            jet.fx += wx.d1[a] * s0;
            jet.fy += wx.w[a] * s1;
            jet.fxx += wx.d2[a] * s0;
            jet.fxy += wx.d1[a] * s1;
            jet.fyy += wx.w[a] * s2;
        }
        jet
    }
}

/// Uniform time samples `t_k = k / (nt - 1)` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    nt: usize,
}

/// Up to four samples and their weights.
#[derive(Debug, Clone, Copy)]
pub struct TimeStencil {
    pub index: [usize; 4],
    pub weight: [f64; 4],
    pub len: usize,
}

impl TimeGrid {
    pub fn new(nt: usize) -> Self {
        assert!(nt >= 2, "at least two time samples are required");
        Self { nt }
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.nt - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.nt {
            1.0
        } else {
            k as f64 * self.dt()
        }
    }

    /// Lagrange stencil for evaluating the time interpolant at `t`.
    pub fn stencil(&self, t: f64) -> TimeStencil {
        let n = self.nt;
        let s = (t.clamp(0.0, 1.0) * (n - 1) as f64).min((n - 1) as f64);
        let degree_nodes = n.min(4);
        let k = (s.floor() as usize).min(n - 2);
        let start = if degree_nodes == 4 {
            k.saturating_sub(1).min(n - 4)
        } else {
            0
        };
        let mut st = TimeStencil { index: [0; 4], weight: [0.0; 4], len: degree_nodes };
        for a in 0..degree_nodes {
            let na = (start + a) as f64;
            let mut w = 1.0;
            for b in 0..degree_nodes {
                if a != b {
                    let nb = (start + b) as f64;
                    w *= (s - nb) / (na - nb);
                }
            }
            st.index[a] = start + a;
            st.weight[a] = w;
        }
        st
    }

    /// Evaluates the interpolant of scalar samples at `t`.
    pub fn interpolate(&self, samples: &[f64], t: f64) -> f64 {
        let st = self.stencil(t);
        (0..st.len).map(|a| st.weight[a] * samples[st.index[a]]).sum()
    }

    /// Exact integral of the interpolant over `[t_k, t_{k+1}]`.
    pub fn interval_integral(&self, samples: &[f64], k: usize) -> f64 {
        let (a, b) = (self.time(k), self.time(k + 1));
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let g = 1.0 / 3f64.sqrt();
        half * (self.interpolate(samples, mid - half * g) + self.interpolate(samples, mid + half * g))
    }

    /// Running integral of the interpolant, one value per sample.
    pub fn cumulative_integral(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nt);
        let mut acc = 0.0;
        out.push(0.0);
        for k in 0..self.nt - 1 {
            acc += self.interval_integral(samples, k);
            out.push(acc);
        }
        out
    }
}

/// Spline cache for a sequence of slices that may share storage.
pub(crate) fn fit_slices(domain: &Domain, slices: &[Arc<Vec<f64>>]) -> Vec<Arc<PeriodicSpline>> {
    let mut out: Vec<Arc<PeriodicSpline>> = Vec::with_capacity(slices.len());
    for (k, s) in slices.iter().enumerate() {
        if k > 0 && Arc::ptr_eq(s, &slices[k - 1]) {
            let prev = out[k - 1].clone();
            out.push(prev);
        } else {
            out.push(Arc::new(PeriodicSpline::fit(domain, s)));
        }
    }
    out
}
