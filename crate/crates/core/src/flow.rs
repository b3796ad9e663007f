//! Hamiltonian vector fields, flow integration, sampled isotopies and
//! their audits.
//!
//! The vector field of `H` is `X_H = (∂_y H, −∂_x H)` (so that
//! `X_H ⌋ (dx∧dy) = dH`), evaluated from the quintic spline interpolant of
//! each time slice and interpolated cubically in time. Every active node is
//! advanced with the classical fourth-order Runge–Kutta method; the
//! variational equation is carried along so the stored Jacobian
//! determinant is the exact derivative of the discrete flow map.

use std::sync::Arc;

use crate::domain::{c0_distance_maps, Domain, GridMap, MapPair};
use crate::error::{Error, Result};
use crate::hamiltonian::SampledHamiltonian;
use crate::interp::{PeriodicSpline, TimeGrid};

/// Default number of integration steps over `[0, 1]`.
pub const DEFAULT_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub steps: usize,
    pub jacobian: bool,
    pub inverse: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, jacobian: true, inverse: true }
    }
}

/// A sampled isotopy `t ↦ λ(t)` starting at the identity, with inverses.
#[derive(Debug, Clone)]
pub struct FlowPath {
    domain: Domain,
    slices: Vec<GridMap>,
    inverse_slices: Vec<GridMap>,
}

impl FlowPath {
    pub fn new(domain: Domain, slices: Vec<GridMap>, inverse_slices: Vec<GridMap>) -> Result<Self> {
        if slices.len() < 2 || slices.len() != inverse_slices.len() {
            return Err(Error::DomainMismatch(format!(
                "{} slices and {} inverse slices",
                slices.len(),
                inverse_slices.len()
            )));
        }
        for m in slices.iter().chain(&inverse_slices) {
            domain.ensure_same(&m.domain)?;
            check_images(m)?;
        }
        Ok(Self { domain, slices, inverse_slices })
    }

    /// Builds a path from forward slices only; inverses are recovered by
    /// Newton iteration on the interpolated maps.
    pub fn from_forward(domain: Domain, slices: Vec<GridMap>) -> Result<Self> {
        let inverse_slices = slices.iter().map(invert_map).collect::<Result<Vec<_>>>()?;
        Self::new(domain, slices, inverse_slices)
    }

    pub fn identity(domain: Domain, nt: usize) -> Self {
        let id = GridMap::identity(domain).with_jacobian(vec![1.0; domain.len()]);
        Self { domain, slices: vec![id.clone(); nt.max(2)], inverse_slices: vec![id; nt.max(2)] }
    }

    /// Translation path `t ↦ x + t·(a, b)` on the torus.
    pub fn translation(domain: Domain, nt: usize, a: f64, b: f64) -> Result<Self> {
        if !domain.is_torus() {
            return Err(Error::InvalidDomain("translations live on the torus".into()));
        }
        let tg = TimeGrid::new(nt);
        let slices = (0..nt).map(|k| GridMap::translation(domain, a * tg.time(k), b * tg.time(k))).collect();
        let inverse = (0..nt).map(|k| GridMap::translation(domain, -a * tg.time(k), -b * tg.time(k))).collect();
        Self::new(domain, slices, inverse)
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

    pub fn slice(&self, k: usize) -> &GridMap {
        &self.slices[k]
    }

    pub fn inverse_slice(&self, k: usize) -> &GridMap {
        &self.inverse_slices[k]
    }

    pub fn slices(&self) -> &[GridMap] {
        &self.slices
    }

    pub fn inverse_slices(&self) -> &[GridMap] {
        &self.inverse_slices
    }

    pub fn pair(&self, k: usize) -> MapPair<'_> {
        MapPair::new(&self.slices[k], &self.inverse_slices[k])
    }

    pub fn endpoint(&self) -> &GridMap {
        self.slices.last().expect("paths have at least two slices")
    }

    pub fn endpoint_pair(&self) -> MapPair<'_> {
        self.pair(self.nt() - 1)
    }

    /// The inverse path `t ↦ λ(t)⁻¹`.
    pub fn inverted(&self) -> Self {
        let strip = |m: &GridMap| GridMap { jacobian_det: None, ..m.clone() };
        Self {
            domain: self.domain,
            slices: self.inverse_slices.iter().map(strip).collect(),
            inverse_slices: self.slices.iter().map(strip).collect(),
        }
    }

    pub fn has_jacobian(&self) -> bool {
        self.slices.iter().all(|m| m.jacobian_det.is_some())
    }

    /// Unwrapped displacement `λ(t_k)(x) − x` of every node.
    pub fn displacement(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let m = &self.slices[k];
        (0..self.domain.len()).map(|i| m.displacement(i)).unzip()
    }

    /// `max_t d_C⁰(λ(t) ∘ λ(t)⁻¹, id)`.
    pub fn inverse_audit(&self) -> Result<f64> {
        let id = GridMap::identity(self.domain);
        let mut worst = 0.0f64;
        for (f, g) in self.slices.iter().zip(&self.inverse_slices) {
            worst = worst.max(c0_distance_maps(&compose_maps(f, g), &id)?);
        }
        Ok(worst)
    }

    /// Largest per-sample change of a torus node's unwrapped image, per
    /// coordinate. Unwrapping is valid while this stays below one half.
    pub fn max_sample_increment(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.slices.windows(2) {
            for k in 0..self.domain.len() {
                worst = worst
                    .max((w[1].image_x[k] - w[0].image_x[k]).abs())
                    .max((w[1].image_y[k] - w[0].image_y[k]).abs());
            }
        }
        worst
    }

    /// Runs `self` on the first half of the time interval and `next`
    /// (composed after `self`'s endpoint) on the second half.
    pub fn concatenate(&self, next: &FlowPath) -> Result<Self> {
        self.domain.ensure_same(&next.domain)?;
        let end = self.endpoint();
        let end_inv = &self.inverse_slices[self.nt() - 1];
        let mut slices = self.slices.clone();
        let mut inverse = self.inverse_slices.clone();
        for k in 1..next.nt() {
            slices.push(compose_maps(&next.slices[k], end));
            inverse.push(compose_maps(end_inv, &next.inverse_slices[k]));
        }
        Self::new(self.domain, slices, inverse)
    }
}

fn check_images(m: &GridMap) -> Result<()> {
    for k in 0..m.domain.len() {
        let (x, y) = m.image(k);
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFiniteField);
        }
        if !m.domain.is_torus() && m.domain.is_active(k) && x.hypot(y) > 1.0 + 1e-9 {
            return Err(Error::SupportViolation(format!("image radius {:.6} exceeds 1", x.hypot(y))));
        }
    }
    if let Some(det) = &m.jacobian_det {
        if det.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::SupportViolation("non-positive Jacobian determinant".into()));
        }
    }
    Ok(())
}

/// Spline interpolant of a map's displacement field (periodic on the torus,
/// compactly supported on the disc).
pub struct DisplacementSpline {
    dx: PeriodicSpline,
    dy: PeriodicSpline,
}

impl DisplacementSpline {
    pub fn new(m: &GridMap) -> Self {
        let d = &m.domain;
        let (dx, dy): (Vec<f64>, Vec<f64>) = (0..d.len()).map(|k| m.displacement(k)).unzip();
        Self { dx: PeriodicSpline::fit(d, &dx), dy: PeriodicSpline::fit(d, &dy) }
    }

    /// Image of an arbitrary point.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.dx.eval(x, y), y + self.dy.eval(x, y))
    }

    /// Displacement and its Jacobian `[[∂x Dx, ∂y Dx], [∂x Dy, ∂y Dy]]`.
    #[inline]
    pub fn jet(&self, x: f64, y: f64) -> ((f64, f64), [[f64; 2]; 2]) {
        let (a, ax, ay) = self.dx.eval_grad(x, y);
        let (b, bx, by) = self.dy.eval_grad(x, y);
        ((a, b), [[ax, ay], [bx, by]])
    }
}

/// `outer ∘ inner`, evaluating `outer` at the images of `inner` through
/// its interpolated displacement.
pub fn compose_maps(outer: &GridMap, inner: &GridMap) -> GridMap {
    let spline = DisplacementSpline::new(outer);
    let d = inner.domain;
    let mut out = GridMap::identity(d);
    for k in 0..d.len() {
        if !d.is_active(k) {
            continue;
        }
        let (x, y) = spline.apply(inner.image_x[k], inner.image_y[k]);
        out.image_x[k] = x;
        out.image_y[k] = y;
    }
    out
}

/// Inverts a grid map by damped Newton iteration on its interpolant.
pub fn invert_map(m: &GridMap) -> Result<GridMap> {
    let spline = DisplacementSpline::new(m);
    let d = m.domain;
    let mut out = GridMap::identity(d);
    for k in 0..d.len() {
        if !d.is_active(k) {
            continue;
        }
        let (tx, ty) = d.point_at(k);
        let ((ux, uy), _) = spline.jet(tx, ty);
        let solved = [(tx - ux, ty - uy), (tx, ty)]
            .into_iter()
            .find_map(|start| solve_preimage(&spline, (tx, ty), start));
        let (x, y) = solved.ok_or(Error::InverseUnavailable)?;
        out.image_x[k] = x;
        out.image_y[k] = y;
    }
    Ok(out)
}

fn solve_preimage(s: &DisplacementSpline, target: (f64, f64), start: (f64, f64)) -> Option<(f64, f64)> {
    let residual = |x: f64, y: f64| {
        let (ix, iy) = s.apply(x, y);
        (ix - target.0, iy - target.1)
    };
    let (mut x, mut y) = start;
    let (mut fx, mut fy) = residual(x, y);
    for _ in 0..100 {
        let r = fx.hypot(fy);
        if r < 1e-14 {
            return Some((x, y));
        }
        let (_, j) = s.jet(x, y);
        let (a, b, c, e) = (1.0 + j[0][0], j[0][1], j[1][0], 1.0 + j[1][1]);
        let det = a * e - b * c;
        if det.abs() < 1e-12 {
            return None;
        }
        let (sx, sy) = ((e * fx - b * fy) / det, (a * fy - c * fx) / det);
        let mut lambda = 1.0;
        loop {
            let (nx, ny) = (x - lambda * sx, y - lambda * sy);
            let (gx, gy) = residual(nx, ny);
            if gx.hypot(gy) < r || lambda < 1e-6 {
                x = nx;
                y = ny;
                fx = gx;
                fy = gy;
                break;
            }
            lambda *= 0.5;
        }
    }
    (fx.hypot(fy) < 1e-9).then_some((x, y))
}

/// Hamiltonian vector field at the grid nodes at time `t`.
pub fn vector_field(h: &SampledHamiltonian, t: f64) -> (Vec<f64>, Vec<f64>) {
    let splines = h.splines();
    let field = FieldAtTime::new(&splines, h.time_grid());
    let s = field.at(t);
    let d = h.domain();
    (0..d.len())
        .map(|k| {
            let (x, y) = d.point_at(k);
            let (_, hx, hy) = s.eval_grad(x, y);
            (hy, -hx)
        })
        .unzip()
}

struct FieldAtTime<'a> {
    splines: &'a [Arc<PeriodicSpline>],
    grid: TimeGrid,
    autonomous: bool,
}

impl<'a> FieldAtTime<'a> {
    fn new(splines: &'a [Arc<PeriodicSpline>], grid: TimeGrid) -> Self {
        let autonomous = splines.iter().all(|s| Arc::ptr_eq(s, &splines[0]));
        Self { splines, grid, autonomous }
    }

    fn at(&self, t: f64) -> PeriodicSpline {
        if self.autonomous {
            return (*self.splines[0]).clone();
        }
        let st = self.grid.stencil(t);
        let parts: Vec<(f64, &PeriodicSpline)> =
            (0..st.len).map(|a| (st.weight[a], &*self.splines[st.index[a]])).collect();
        PeriodicSpline::blend(&parts)
    }

    fn assign(&self, target: &mut PeriodicSpline, t: f64) {
        let st = self.grid.stencil(t);
        let parts: Vec<(f64, &PeriodicSpline)> =
            (0..st.len).map(|a| (st.weight[a], &*self.splines[st.index[a]])).collect();
        target.assign_blend(&parts);
    }
}

/// Number of integration steps actually used: at least `steps`, rounded up
/// to a whole number of steps per time sample.
pub fn effective_steps(steps: usize, nt: usize) -> usize {
    let intervals = nt - 1;
    steps.max(intervals).div_ceil(intervals) * intervals
}

/// A step count for which the largest spline Hessian times the step stays
/// below `max_rotation` (radians per step, roughly).
pub fn stable_steps(h: &SampledHamiltonian, base: usize, max_rotation: f64) -> usize {
    let d = h.domain();
    let splines = h.splines();
    let mut rate = 0.0f64;
    for (k, s) in splines.iter().enumerate() {
        if k > 0 && Arc::ptr_eq(s, &splines[k - 1]) {
            continue;
        }
        for idx in 0..d.len() {
            if d.is_active(idx) {
                let (x, y) = d.point_at(idx);
                let j = s.eval_jet(x, y);
                let fro = (j.fxx * j.fxx + 2.0 * j.fxy * j.fxy + j.fyy * j.fyy).sqrt();
                rate = rate.max(fro);
            }
        }
    }
    base.max((rate / max_rotation).ceil() as usize)
}

/// Integrates the isotopy generated by `h` with the default options.
pub fn integrate_flow(h: &SampledHamiltonian, steps: usize) -> Result<FlowPath> {
    integrate_flow_with(h, &FlowOptions { steps, ..FlowOptions::default() })
}

pub fn integrate_flow_with(h: &SampledHamiltonian, opts: &FlowOptions) -> Result<FlowPath> {
    let domain = *h.domain();
    let splines = h.splines();
    let slices = integrate_nodes(&domain, &splines, h.time_grid(), opts.steps, opts.jacobian)?;
    let inverse_slices = if opts.inverse && h.is_autonomous() {
        // energy conservation gives H̄ = −H exactly
        let neg = Arc::new(PeriodicSpline::blend(&[(-1.0, &*splines[0])]));
        integrate_nodes(&domain, &vec![neg; splines.len()], h.time_grid(), opts.steps, false)?
    } else if opts.inverse {
        // (φ_H^t)^{-1} is the flow of H̄_t = −H_t ∘ φ_H^t.
        let bar: Vec<Vec<f64>> = slices
            .iter()
            .zip(&splines)
            .map(|(m, s)| {
                (0..domain.len())
                    .map(|k| if domain.is_active(k) { -s.eval(m.image_x[k], m.image_y[k]) } else { 0.0 })
                    .collect()
            })
            .collect();
        let bar_splines: Vec<Arc<PeriodicSpline>> =
            bar.iter().map(|v| Arc::new(PeriodicSpline::fit(&domain, v))).collect();
        integrate_nodes(&domain, &bar_splines, h.time_grid(), opts.steps, false)?
    } else {
        Vec::new()
    };
    let inverse_slices = if opts.inverse {
        inverse_slices
    } else {
        slices.iter().map(invert_map).collect::<Result<Vec<_>>>()?
    };
    FlowPath::new(domain, slices, inverse_slices)
}

fn integrate_nodes(
    domain: &Domain,
    splines: &[Arc<PeriodicSpline>],
    grid: TimeGrid,
    steps: usize,
    jacobian: bool,
) -> Result<Vec<GridMap>> {
    let nt = grid.nt();
    let steps = effective_steps(steps, nt);
    let per_sample = steps / (nt - 1);
    let dt = 1.0 / steps as f64;
    let field = FieldAtTime::new(splines, grid);

    let active = domain.active_indices();
    let n = active.len();
    let mut px: Vec<f64> = active.iter().map(|&k| domain.point_at(k).0).collect();
    let mut py: Vec<f64> = active.iter().map(|&k| domain.point_at(k).1).collect();
    // Jacobian entries [a b; c d], row-major.
    let mut jm: Vec<[f64; 4]> = if jacobian { vec![[1.0, 0.0, 0.0, 1.0]; n] } else { Vec::new() };

    let mut out = Vec::with_capacity(nt);
    let record = |px: &[f64], py: &[f64], jm: &[[f64; 4]]| {
        let mut m = GridMap::identity(*domain);
        for (a, &k) in active.iter().enumerate() {
            m.image_x[k] = px[a];
            m.image_y[k] = py[a];
        }
        if jacobian {
            let mut det = vec![1.0; domain.len()];
            for (a, &k) in active.iter().enumerate() {
                let j = jm[a];
                det[k] = j[0] * j[3] - j[1] * j[2];
            }
            m.jacobian_det = Some(det);
        }
        m
    };
    out.push(record(&px, &py, &jm));

    let proto = (*splines[0]).clone();
    let (mut s0, mut s_half, mut s1) = (proto.clone(), proto.clone(), proto);
    if !field.autonomous {
        field.assign(&mut s0, 0.0);
    }
    let torus = domain.is_torus();
    let workers = worker_count(n);

    for step in 0..steps {
        let t = step as f64 * dt;
        if !field.autonomous {
            field.assign(&mut s_half, t + 0.5 * dt);
            field.assign(&mut s1, t + dt);
        }
        let (a0, ah, a1) = if field.autonomous {
            (&*splines[0], &*splines[0], &*splines[0])
        } else {
            (&s0, &s_half, &s1)
        };
        let stage = Stage { a0, ah, a1, dt, torus };
        if workers <= 1 {
            stage.run(&mut px, &mut py, &mut jm)?;
        } else {
            let chunk = n.div_ceil(workers);
            let jchunk = if jacobian { chunk } else { usize::MAX };
            std::thread::scope(|scope| {
                let handles: Vec<_> = px
                    .chunks_mut(chunk)
                    .zip(py.chunks_mut(chunk))
                    .zip(chunks_or_empty(&mut jm, jchunk, workers))
                    .map(|((x, y), j)| scope.spawn(move || stage.run(x, y, j)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("integration worker panicked")).collect::<Result<()>>()
            })?;
        }
        if !field.autonomous {
            std::mem::swap(&mut s0, &mut s1);
        }
        if (step + 1) % per_sample == 0 {
            out.push(record(&px, &py, &jm));
        }
    }
    Ok(out)
}

/// Threads used for node-parallel integration. Nodes are independent, so
/// the result does not depend on the split.
fn worker_count(nodes: usize) -> usize {
    const MIN_NODES_PER_WORKER: usize = 2048;
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    cores.min(nodes / MIN_NODES_PER_WORKER).max(1)
}

fn chunks_or_empty<'a>(jm: &'a mut [[f64; 4]], chunk: usize, parts: usize) -> Vec<&'a mut [[f64; 4]]> {
    if jm.is_empty() {
        (0..parts).map(|_| <&mut [[f64; 4]]>::default()).collect()
    } else {
        jm.chunks_mut(chunk).collect()
    }
}

/// One RK4 step of the node ODE (and its variational equation when
/// Jacobians are tracked) with fields `a0`, `ah`, `a1` at `t`, `t + dt/2`,
/// `t + dt`.
#[derive(Clone, Copy)]
struct Stage<'a> {
    a0: &'a PeriodicSpline,
    ah: &'a PeriodicSpline,
    a1: &'a PeriodicSpline,
    dt: f64,
    torus: bool,
}

impl Stage<'_> {
    fn run(&self, px: &mut [f64], py: &mut [f64], jm: &mut [[f64; 4]]) -> Result<()> {
        let (a0, ah, a1, dt, torus) = (self.a0, self.ah, self.a1, self.dt, self.torus);
        let jacobian = !jm.is_empty();
        for p in 0..px.len() {
            let (x, y) = (px[p], py[p]);
            if jacobian {
                let (v1, d1) = field_jet(a0, x, y);
                let (v2, d2) = field_jet(ah, x + 0.5 * dt * v1.0, y + 0.5 * dt * v1.1);
                let (v3, d3) = field_jet(ah, x + 0.5 * dt * v2.0, y + 0.5 * dt * v2.1);
                let (v4, d4) = field_jet(a1, x + dt * v3.0, y + dt * v3.1);
                let m0 = jm[p];
                let k1 = matmul(&d1, &m0);
                let k2 = matmul(&d2, &axpy(&m0, 0.5 * dt, &k1));
                let k3 = matmul(&d3, &axpy(&m0, 0.5 * dt, &k2));
                let k4 = matmul(&d4, &axpy(&m0, dt, &k3));
                for e in 0..4 {
                    jm[p][e] = m0[e] + dt / 6.0 * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e]);
                }
                let dx = dt / 6.0 * (v1.0 + 2.0 * v2.0 + 2.0 * v3.0 + v4.0);
                let dy = dt / 6.0 * (v1.1 + 2.0 * v2.1 + 2.0 * v3.1 + v4.1);
                advance(&mut px[p], &mut py[p], dx, dy, torus)?;
            } else {
                let v1 = field_vec(a0, x, y);
                let v2 = field_vec(ah, x + 0.5 * dt * v1.0, y + 0.5 * dt * v1.1);
                let v3 = field_vec(ah, x + 0.5 * dt * v2.0, y + 0.5 * dt * v2.1);
                let v4 = field_vec(a1, x + dt * v3.0, y + dt * v3.1);
                let dx = dt / 6.0 * (v1.0 + 2.0 * v2.0 + 2.0 * v3.0 + v4.0);
                let dy = dt / 6.0 * (v1.1 + 2.0 * v2.1 + 2.0 * v3.1 + v4.1);
                advance(&mut px[p], &mut py[p], dx, dy, torus)?;
            }
        }
        Ok(())
    }
}

#[inline]
fn advance(x: &mut f64, y: &mut f64, dx: f64, dy: f64, torus: bool) -> Result<()> {
    if torus {
        let step = dx.abs().max(dy.abs());
        if step >= 0.5 {
            return Err(Error::StepTooCoarse(step));
        }
    }
    *x += dx;
    *y += dy;
    if !torus && x.hypot(*y) > 1.0 + 1e-9 {
        return Err(Error::SupportViolation(format!("trajectory left the disc at radius {:.6}", x.hypot(*y))));
    }
    Ok(())
}

/// `X_H` at an arbitrary point from the spline of one time slice.
#[inline]
pub fn vector_field_at(s: &PeriodicSpline, x: f64, y: f64) -> (f64, f64) {
    field_vec(s, x, y)
}

#[inline]
fn field_vec(s: &PeriodicSpline, x: f64, y: f64) -> (f64, f64) {
    let (_, hx, hy) = s.eval_grad(x, y);
    (hy, -hx)
}

#[inline]
fn field_jet(s: &PeriodicSpline, x: f64, y: f64) -> ((f64, f64), [f64; 4]) {
    let j = s.eval_jet(x, y);
    ((j.fy, -j.fx), [j.fxy, j.fyy, -j.fxx, -j.fxy])
}

#[inline]
fn matmul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

#[inline]
fn axpy(m: &[f64; 4], s: f64, k: &[f64; 4]) -> [f64; 4] {
    [m[0] + s * k[0], m[1] + s * k[1], m[2] + s * k[2], m[3] + s * k[3]]
}

/// `max_t max_x |det Dλ(t) − 1|`.
pub fn area_audit(path: &FlowPath) -> Result<f64> {
    let d = path.domain;
    let mut worst = 0.0f64;
    for m in &path.slices {
        let det = m.jacobian_det.as_ref().ok_or(Error::JacobianUnavailable)?;
        for (k, v) in det.iter().enumerate() {
            if d.is_active(k) {
                worst = worst.max((v - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

/// `max_t max_x |H(φ^t(x)) − H(x)|` for an autonomous Hamiltonian.
pub fn energy_drift(h: &SampledHamiltonian, path: &FlowPath) -> Result<f64> {
    h.domain().ensure_same(path.domain())?;
    let s = PeriodicSpline::fit(h.domain(), h.slice(0));
    let d = path.domain;
    let mut worst = 0.0f64;
    for m in &path.slices {
        for k in 0..d.len() {
            if d.is_active(k) {
                worst = worst.max((s.eval(m.image_x[k], m.image_y[k]) - h.slice(0)[k]).abs());
            }
        }
    }
    Ok(worst)
}

/// Smallest grid displacement `d(x, φ(x))` and the node attaining it.
pub fn min_displacement(phi: &GridMap) -> (f64, usize) {
    let d = &phi.domain;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..d.len() {
        if d.is_active(k) {
            let v = d.distance(d.point_at(k), phi.image(k));
            if v < best.0 {
                best = (v, k);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    /// Residual `d(p, φ(p))` at the refined point.
    pub distance: f64,
    pub point: (f64, f64),
    /// Grid minimum the search started from.
    pub grid_distance: f64,
    pub grid_index: usize,
}

/// Grid search for the smallest displacement followed by Newton
/// refinement of `φ(p) = p` (modulo the lattice on the torus) on the
/// interpolated map, started from the best grid candidates.
pub fn locate_fixed_point(phi: &GridMap) -> FixedPoint {
    const CANDIDATES: usize = 12;
    let d = &phi.domain;
    let (grid_distance, grid_index) = min_displacement(phi);
    let mut ranked: Vec<(f64, usize)> = (0..d.len())
        .filter(|&k| d.is_active(k))
        .map(|k| (d.distance(d.point_at(k), phi.image(k)), k))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(CANDIDATES);

    let spline = DisplacementSpline::new(phi);
    let residual = |x: f64, y: f64| {
        let (ix, iy) = spline.apply(x, y);
        d.distance((x, y), (ix, iy))
    };
    let mut best = FixedPoint { distance: grid_distance, point: d.point_at(grid_index), grid_distance, grid_index };
    for &(_, k) in &ranked {
        let (mut x, mut y) = d.point_at(k);
        let ((ux, uy), _) = spline.jet(x, y);
        let (lx, ly) = if d.is_torus() { (ux.round(), uy.round()) } else { (0.0, 0.0) };
        for _ in 0..40 {
            let ((dx, dy), j) = spline.jet(x, y);
            let (fx, fy) = (dx - lx, dy - ly);
            if fx.hypot(fy) < 1e-15 {
                break;
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-14 {
                break;
            }
            let sx = (j[1][1] * fx - j[0][1] * fy) / det;
            let sy = (j[0][0] * fy - j[1][0] * fx) / det;
            // keep the search local to the candidate cell
            let (hx, hy) = d.spacing();
            let scale = (sx.abs() / (2.0 * hx)).max(sy.abs() / (2.0 * hy)).max(1.0);
            x -= sx / scale;
            y -= sy / scale;
        }
        if !d.is_torus() && x.hypot(y) > 1.0 {
            continue;
        }
        let r = residual(x, y);
        if r < best.distance {
            best.distance = r;
            best.point = (x, y);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn shear(nx: usize, nt: usize) -> SampledHamiltonian {
        let d = Domain::torus(nx, nx).unwrap();
        SampledHamiltonian::autonomous(d, nt, |_, y| (2.0 * PI * y).sin() / (2.0 * PI)).unwrap()
    }

    fn shear_error(path: &FlowPath) -> f64 {
        let d = path.domain();
        let tg = path.time_grid();
        let mut worst = 0.0f64;
        for k in 0..path.nt() {
            let t = tg.time(k);
            let m = path.slice(k);
            for idx in 0..d.len() {
                let (x, y) = d.point_at(idx);
                worst = worst
                    .max((m.image_x[idx] - (x + t * (2.0 * PI * y).cos())).abs())
                    .max((m.image_y[idx] - y).abs());
            }
        }
        worst
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let d = Domain::torus(16, 16).unwrap();
        let path = integrate_flow(&SampledHamiltonian::zero(d, 5), 40).unwrap();
        let id = GridMap::identity(d);
        for k in 0..5 {
            assert_eq!(c0_distance_maps(path.slice(k), &id).unwrap(), 0.0);
            assert!(path.displacement(k).0.iter().all(|v| *v == 0.0));
        }
        assert!(area_audit(&path).unwrap() < 1e-12);
        let (f, g) = vector_field(&SampledHamiltonian::zero(d, 2), 0.3);
        assert!(f.iter().chain(&g).all(|v| *v == 0.0));
    }

    #[test]
    fn shear_vector_field() {
        let h = shear(64, 3);
        let (u, v) = vector_field(&h, 0.5);
        let d = h.domain();
        for k in 0..d.len() {
            let (_, y) = d.point_at(k);
            assert!((u[k] - (2.0 * PI * y).cos()).abs() < 1e-9);
            assert!(v[k].abs() < 1e-12);
        }
    }

    #[test]
    fn shear_flow_matches_closed_form() {
        let h = shear(64, 11);
        let path = integrate_flow(&h, 200).unwrap();
        assert!(shear_error(&path) < 1e-8, "{}", shear_error(&path));
        assert!(area_audit(&path).unwrap() < 1e-10);
        assert!(path.inverse_audit().unwrap() < 1e-8);
        let (m, idx) = min_displacement(path.endpoint());
        let (_, y) = h.domain().point_at(idx);
        assert!(m < 1e-3);
        assert!((y - 0.25).abs() < 1e-9 || (y - 0.75).abs() < 1e-9);
    }

    #[test]
    fn translation_has_no_fixed_point() {
        let d = Domain::torus(16, 16).unwrap();
        let t = GridMap::translation(d, 0.3, 0.0);
        let (m, _) = min_displacement(&t);
        assert!((m - 0.3).abs() < 1e-12);
        let fp = locate_fixed_point(&t);
        assert!((fp.distance - 0.3).abs() < 1e-9);
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let d = Domain::torus(16, 16).unwrap();
        let h = SampledHamiltonian::autonomous(d, 2, |_, y| 4.0 * (2.0 * PI * y).sin()).unwrap();
        assert!(matches!(integrate_flow(&h, 1), Err(Error::StepTooCoarse(_))));
    }

    #[test]
    fn radial_field_is_tangent_to_circles() {
        let d = Domain::disc(64, 64, 0.1).unwrap();
        let h = SampledHamiltonian::autonomous(d, 2, |x, y| (1.0 - (x * x + y * y) / 0.64).max(0.0).powi(7)).unwrap();
        let (u, v) = vector_field(&h, 0.0);
        let mut worst = 0.0f64;
        for k in 0..d.len() {
            let (x, y) = d.point_at(k);
            let r = x.hypot(y);
            if d.is_active(k) && r > 0.05 {
                worst = worst.max((u[k] * x + v[k] * y).abs() / r);
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn step_rounding() {
        assert_eq!(effective_steps(1000, 200), 1194);
        assert_eq!(effective_steps(10, 11), 10);
        assert_eq!(effective_steps(1, 5), 4);
    }

    #[test]
    fn forward_only_paths_recover_inverses() {
        let h = shear(32, 5);
        let path = integrate_flow(&h, 100).unwrap();
        let rebuilt = FlowPath::from_forward(*h.domain(), path.slices().to_vec()).unwrap();
        for k in 0..5 {
            let a = rebuilt.inverse_slice(k);
            let b = path.inverse_slice(k);
            assert!(c0_distance_maps(a, b).unwrap() < 1e-8);
        }
    }
}
