//! Path-space distances (C⁰, Hofer, Hamiltonian) and Cauchy diagnostics.

use crate::calculus::{compose, leng_both, leng_between};
use crate::domain::{dbar_maps_masked, C0Mask, GridMap};
use crate::error::{Error, Result};
use crate::flow::{compose_maps, integrate_flow, vector_field_at, FlowPath};
use crate::hamiltonian::SampledHamiltonian;

/// Relative velocity residual accepted by [`PathPair::new`].
pub const PATH_AUDIT_TOL: f64 = 1e-2;

/// A path together with the Hamiltonian generating it.
#[derive(Debug, Clone)]
pub struct PathPair {
    pub path: FlowPath,
    pub ham: SampledHamiltonian,
}

impl PathPair {
    /// Pairs a path with its Hamiltonian after checking that the sampled
    /// velocity of the path matches the Hamiltonian vector field.
    pub fn new(path: FlowPath, ham: SampledHamiltonian) -> Result<Self> {
        let residual = velocity_residual(&path, &ham)?;
        if residual > PATH_AUDIT_TOL {
            return Err(Error::PathAudit(residual));
        }
        Ok(Self { path, ham })
    }

    /// Pairs a path built in closed form with its Hamiltonian, skipping the
    /// velocity audit (used when the time sampling cannot resolve the
    /// motion, e.g. fast twists).
    pub fn trusted(path: FlowPath, ham: SampledHamiltonian) -> Result<Self> {
        check_shapes(&path, &ham)?;
        Ok(Self { path, ham })
    }

    pub fn integrate(ham: SampledHamiltonian, steps: usize) -> Result<Self> {
        let path = integrate_flow(&ham, steps)?;
        Ok(Self { path, ham })
    }

    /// The pair generating `t ↦ φ_H^t φ_K^t`.
    pub fn product(&self, other: &PathPair) -> Result<Self> {
        let ham = compose(&self.ham, &other.ham, &self.path)?;
        let nt = self.path.nt();
        let slices = (0..nt).map(|k| compose_maps(self.path.slice(k), other.path.slice(k))).collect();
        let inverse = (0..nt)
            .map(|k| compose_maps(other.path.inverse_slice(k), self.path.inverse_slice(k)))
            .collect();
        let path = FlowPath::new(*self.path.domain(), slices, inverse)?;
        Ok(Self { path, ham })
    }
}

fn check_shapes(path: &FlowPath, ham: &SampledHamiltonian) -> Result<()> {
    path.domain().ensure_same(ham.domain())?;
    if path.nt() != ham.nt() {
        return Err(Error::DomainMismatch(format!("path has {} samples, Hamiltonian {}", path.nt(), ham.nt())));
    }
    Ok(())
}

/// Largest mismatch between the centred time difference of the path and
/// `X_H` at the path's position, relative to the largest speed (at least 1).
pub fn velocity_residual(path: &FlowPath, ham: &SampledHamiltonian) -> Result<f64> {
    check_shapes(path, ham)?;
    let nt = path.nt();
    if nt < 3 {
        return Ok(0.0);
    }
    let d = *path.domain();
    let dt = path.time_grid().dt();
    let splines = ham.splines();
    let mut worst = 0.0f64;
    let mut speed = 1.0f64;
    for k in 1..nt - 1 {
        let (a, m, b) = (path.slice(k - 1), path.slice(k), path.slice(k + 1));
        for i in 0..d.len() {
            if !d.is_active(i) {
                continue;
            }
            let (u, v) = vector_field_at(&splines[k], m.image_x[i], m.image_y[i]);
            let fu = (b.image_x[i] - a.image_x[i]) / (2.0 * dt);
            let fv = (b.image_y[i] - a.image_y[i]) / (2.0 * dt);
            speed = speed.max(u.hypot(v));
            worst = worst.max((fu - u).hypot(fv - v));
        }
    }
    Ok(worst / speed)
}

fn ensure_same_grid(a: &FlowPath, b: &FlowPath) -> Result<()> {
    a.domain().ensure_same(b.domain())?;
    if a.nt() != b.nt() {
        return Err(Error::DomainMismatch(format!("paths with {} and {} samples", a.nt(), b.nt())));
    }
    Ok(())
}

/// `max_t d̄(λ(t), μ(t))`.
pub fn dbar_paths(lambda: &FlowPath, mu: &FlowPath) -> Result<f64> {
    dbar_paths_masked(lambda, mu, C0Mask::All)
}

pub fn dbar_paths_masked(lambda: &FlowPath, mu: &FlowPath, mask: C0Mask) -> Result<f64> {
    ensure_same_grid(lambda, mu)?;
    let mut worst = 0.0f64;
    for k in 0..lambda.nt() {
        worst = worst.max(dbar_maps_masked(lambda.pair(k), mu.pair(k), mask)?);
    }
    Ok(worst)
}

/// Hofer distance `leng(φ_H⁻¹ φ_K)`. The composed evaluation must agree
/// with `‖K − H‖`, which is the value returned.
pub fn hofer_dist(p: &PathPair, q: &PathPair) -> Result<f64> {
    leng_between(&p.ham, &q.ham, &p.path)?;
    Ok(q.ham.sub(&p.ham)?.hofer_norm())
}

/// `d_ham = hofer_dist + dbar_paths`.
pub fn dham(p: &PathPair, q: &PathPair) -> Result<f64> {
    Ok(hofer_dist(p, q)? + dbar_paths(&p.path, &q.path)?)
}

/// `k ↦ max_{i, j ≥ k} m[i][j]`.
pub fn cauchy_modulus(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0f64;
    for k in (0..n).rev() {
        for j in k..n {
            acc = acc.max(m[k][j]).max(m[j][k]);
        }
        out[k] = acc;
    }
    out
}

/// Cauchy verdict: the modulus over the last two elements is within `τ`.
pub fn cauchy_verdict(modulus: &[f64], tau: f64) -> bool {
    modulus.len() >= 2 && modulus[modulus.len() - 2] <= tau
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub n: usize,
    pub tau: f64,
    pub mask: C0Mask,
    pub dbar_matrix: Vec<Vec<f64>>,
    pub hofer_matrix: Vec<Vec<f64>>,
    pub dham_matrix: Vec<Vec<f64>>,
    pub dbar_modulus: Vec<f64>,
    pub hofer_modulus: Vec<f64>,
    pub dham_modulus: Vec<f64>,
    pub dbar_cauchy: bool,
    pub hofer_cauchy: bool,
    pub dham_cauchy: bool,
    /// `d̄` between successive time-1 maps.
    pub ev1_trace: Vec<f64>,
    /// Hofer norms of the elements.
    pub norms: Vec<f64>,
    /// Largest relative gap between the composed and direct Hofer lengths.
    pub leng_gap: f64,
}

/// Pairwise distance matrices and Cauchy verdicts of a sequence.
pub fn cauchy_report(seq: &[PathPair], tau: f64) -> Result<ConvergenceReport> {
    cauchy_report_masked(seq, tau, C0Mask::All)
}

/// [`cauchy_report`] with `d̄` restricted to the nodes admitted by `mask`.
pub fn cauchy_report_masked(seq: &[PathPair], tau: f64, mask: C0Mask) -> Result<ConvergenceReport> {
    let n = seq.len();
    if n < 3 {
        return Err(Error::Config(format!("a Cauchy report needs at least 3 elements, got {n}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tau}")));
    }
    for p in &seq[1..] {
        ensure_same_grid(&seq[0].path, &p.path)?;
    }
    let mut dbar = vec![vec![0.0; n]; n];
    let mut hofer = vec![vec![0.0; n]; n];
    let mut leng_gap = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = dbar_paths_masked(&seq[i].path, &seq[j].path, mask)?;
            let c = leng_both(&seq[i].ham, &seq[j].ham, &seq[i].path)?;
            let scale = c.composed.max(c.direct).max(seq[i].ham.hofer_norm()).max(seq[j].ham.hofer_norm());
            if scale > 0.0 {
                leng_gap = leng_gap.max((c.composed - c.direct).abs() / scale);
            }
            let h = seq[j].ham.sub(&seq[i].ham)?.hofer_norm();
            dbar[i][j] = d;
            dbar[j][i] = d;
            hofer[i][j] = h;
            hofer[j][i] = h;
        }
    }
    let dham: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| hofer[i][j] + dbar[i][j]).collect()).collect();
    let (dbar_modulus, hofer_modulus, dham_modulus) =
        (cauchy_modulus(&dbar), cauchy_modulus(&hofer), cauchy_modulus(&dham));
    let ev1_trace = seq
        .windows(2)
        .map(|w| dbar_maps_masked(w[0].path.endpoint_pair(), w[1].path.endpoint_pair(), mask))
        .collect::<Result<Vec<_>>>()?;
    let report = ConvergenceReport {
        n,
        tau,
        mask,
        dbar_cauchy: cauchy_verdict(&dbar_modulus, tau),
        hofer_cauchy: cauchy_verdict(&hofer_modulus, tau),
        dham_cauchy: cauchy_verdict(&dham_modulus, tau),
        dbar_matrix: dbar,
        hofer_matrix: hofer,
        dham_matrix: dham,
        dbar_modulus,
        hofer_modulus,
        dham_modulus,
        ev1_trace,
        norms: seq.iter().map(|p| p.ham.hofer_norm()).collect(),
        leng_gap,
    };
    debug_assert!(!report.dham_cauchy || (report.dbar_cauchy && report.hofer_cauchy));
    Ok(report)
}

/// Numerical representative of a C⁰ limit: the last path of a C⁰-Cauchy
/// sequence with the tail modulus as its error bar.
#[derive(Debug, Clone)]
pub struct C0Limit {
    pub path: FlowPath,
    pub modulus: f64,
}

impl C0Limit {
    pub fn endpoint(&self) -> &GridMap {
        self.path.endpoint()
    }
}

pub fn extract_c0_limit(seq: &[PathPair], tau: f64, mask: C0Mask) -> Result<C0Limit> {
    let last = seq.last().ok_or_else(|| Error::Config("empty sequence".into()))?;
    if seq.len() == 1 {
        return Ok(C0Limit { path: last.path.clone(), modulus: 0.0 });
    }
    let n = seq.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dbar_paths_masked(&seq[i].path, &seq[j].path, mask)?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    let modulus = cauchy_modulus(&m);
    let tail = modulus[n - 2];
    if tail > tau {
        return Err(Error::NotCauchy { tau, modulus: tail });
    }
    Ok(C0Limit { path: last.path.clone(), modulus: tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use std::f64::consts::PI;

    fn torus() -> Domain {
        Domain::torus(32, 32).unwrap()
    }

    fn shear_pair(d: Domain, a: f64) -> PathPair {
        let h = SampledHamiltonian::autonomous(d, 11, move |_, y| a * (2.0 * PI * y).sin() / (2.0 * PI)).unwrap();
        PathPair::integrate(h, 100).unwrap()
    }

    #[test]
    fn dbar_examples() {
        let d = torus();
        let s = shear_pair(d, 0.3);
        let id = FlowPath::identity(d, 11);
        assert_eq!(dbar_paths(&s.path, &s.path).unwrap(), 0.0);
        let v = dbar_paths(&s.path, &id).unwrap();
        assert!((v - 0.3).abs() < 1e-8, "{v}");
        assert_eq!(v, dbar_paths(&id, &s.path).unwrap());
    }

    #[test]
    fn hofer_and_dham_examples() {
        let d = Domain::torus(64, 64).unwrap();
        let zero = PathPair::integrate(SampledHamiltonian::zero(d, 5), 20).unwrap();
        let k = PathPair::integrate(
            SampledHamiltonian::autonomous(d, 5, |x, _| 0.05 * (2.0 * PI * x).cos()).unwrap(),
            100,
        )
        .unwrap();
        assert!((hofer_dist(&zero, &k).unwrap() - 0.1).abs() < 1e-4);
        assert_eq!(hofer_dist(&k, &k).unwrap(), 0.0);
        let total = dham(&zero, &k).unwrap();
        assert_eq!(total, hofer_dist(&zero, &k).unwrap() + dbar_paths(&zero.path, &k.path).unwrap());
        assert!(total >= dbar_paths(&zero.path, &k.path).unwrap());
    }

    #[test]
    fn constant_sequence_is_cauchy() {
        let d = torus();
        let s = shear_pair(d, 0.2);
        let r = cauchy_report(&[s.clone(), s.clone(), s], 1e-2).unwrap();
        assert!(r.dbar_cauchy && r.hofer_cauchy && r.dham_cauchy);
        assert!(r.dham_matrix.iter().flatten().all(|v| *v == 0.0));
        let lim = extract_c0_limit(&[shear_pair(d, 0.2), shear_pair(d, 0.2)], 1e-2, C0Mask::All).unwrap();
        assert_eq!(lim.modulus, 0.0);
    }

    #[test]
    fn convergent_shears() {
        let d = torus();
        let seq: Vec<PathPair> = (1..=5).map(|k| shear_pair(d, 0.2 + 0.1 / (1u32 << k) as f64)).collect();
        let r = cauchy_report(&seq, 1e-2).unwrap();
        assert!(r.dham_cauchy);
        for w in r.dham_modulus.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for i in 0..5 {
            for j in 0..5 {
                assert!((r.dham_matrix[i][j] - r.hofer_matrix[i][j] - r.dbar_matrix[i][j]).abs() <= 1e-12);
            }
        }
        let diverging: Vec<PathPair> = (1..=4).map(|k| shear_pair(d, 0.1 * k as f64)).collect();
        let r = cauchy_report(&diverging, 1e-2).unwrap();
        assert!(!r.dham_cauchy && !r.dbar_cauchy);
        assert!(matches!(extract_c0_limit(&diverging, 1e-2, C0Mask::All), Err(Error::NotCauchy { .. })));
    }

    #[test]
    fn audit_rejects_mismatched_pairs() {
        let d = torus();
        let s = shear_pair(d, 0.3);
        let other = SampledHamiltonian::autonomous(d, 11, |x, _| 0.3 * (2.0 * PI * x).sin()).unwrap();
        assert!(matches!(PathPair::new(s.path.clone(), other), Err(Error::PathAudit(_))));
        PathPair::new(s.path, s.ham).unwrap();
    }

    #[test]
    fn product_pairs() {
        let d = torus();
        let a = shear_pair(d, 0.2);
        let b = PathPair::integrate(
            SampledHamiltonian::autonomous(d, 11, |x, _| 0.03 * (2.0 * PI * x).cos()).unwrap(),
            100,
        )
        .unwrap();
        let ab = a.product(&b).unwrap();
        let direct = integrate_flow(&ab.ham, 100).unwrap();
        assert!(dbar_paths(&ab.path, &direct).unwrap() < 1e-4);
    }
}
