//! Mass flow (mean rotation vector) and flux of torus isotopies.
//!
//! Duality convention: the flux 1-form `a dy − b dx` is reported as
//! `(a, b)`, i.e. the x-cycle pairing returns `a` and the y-cycle pairing
//! returns `b`, so both invariants are compared componentwise.

use crate::domain::{integrate_values, Domain};
use crate::error::{Error, Result};
use crate::flow::FlowPath;
use crate::interp::PeriodicSpline;

/// Disagreement between the two velocity estimates above which [`flux`]
/// asks for finer time sampling.
pub const FLUX_NOISE_TOL: f64 = 1e-4;

/// A coordinate projection of the torus onto the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircleMap {
    X,
    Y,
}

fn ensure_torus(d: &Domain) -> Result<()> {
    if d.is_torus() {
        Ok(())
    } else {
        Err(Error::InvalidDomain("mass flow and flux are defined on the torus".into()))
    }
}

fn ensure_unwrapped(path: &FlowPath) -> Result<()> {
    let step = path.max_sample_increment();
    if step >= 0.5 {
        return Err(Error::Unwrapping(format!("sample-to-sample displacement {step:.3} reaches half a period")));
    }
    Ok(())
}

/// `∫ (f∘λ(1) − f)` with the lift continuous in `t` and zero at `t = 0`.
pub fn mass_flow(path: &FlowPath, f: CircleMap) -> Result<f64> {
    let d = path.domain();
    ensure_torus(d)?;
    ensure_unwrapped(path)?;
    let end = path.endpoint();
    let disp: Vec<f64> = (0..d.len())
        .map(|k| {
            let (dx, dy) = end.displacement(k);
            match f {
                CircleMap::X => dx,
                CircleMap::Y => dy,
            }
        })
        .collect();
    integrate_values(d, &disp)
}

pub fn rotation_vector(path: &FlowPath) -> Result<(f64, f64)> {
    Ok((mass_flow(path, CircleMap::X)?, mass_flow(path, CircleMap::Y)?))
}

/// Lagrangian velocity `∂_t λ(t_k)` at the nodes, either by centred
/// second-order differences or by differentiating the cubic interpolant.
fn lagrangian_velocity(path: &FlowPath, k: usize, cubic: bool) -> (Vec<f64>, Vec<f64>) {
    let nt = path.nt();
    let dt = path.time_grid().dt();
    let n = path.domain().len();
    let coeffs: Vec<(usize, f64)> = if cubic && nt >= 4 {
        // derivative of the four-point Lagrange interpolant at a node
        let base = k.saturating_sub(1).min(nt - 4);
        let s = (k - base) as f64;
        (0..4)
            .map(|a| {
                let mut w = 0.0;
                for b in 0..4 {
                    if b == a {
                        continue;
                    }
                    let mut prod = 1.0 / (a as f64 - b as f64);
                    for c in 0..4 {
                        if c != a && c != b {
                            prod *= (s - c as f64) / (a as f64 - c as f64);
                        }
                    }
                    w += prod;
                }
                (base + a, w / dt)
            })
            .collect()
    } else if k == 0 {
        vec![(0, -1.0 / dt), (1, 1.0 / dt)]
    } else if k == nt - 1 {
        vec![(nt - 2, -1.0 / dt), (nt - 1, 1.0 / dt)]
    } else {
        vec![(k - 1, -0.5 / dt), (k + 1, 0.5 / dt)]
    };
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for (idx, w) in coeffs {
        let m = path.slice(idx);
        for i in 0..n {
            u[i] += w * m.image_x[i];
            v[i] += w * m.image_y[i];
        }
    }
    (u, v)
}

fn eulerian_mean(path: &FlowPath, cubic: bool) -> Result<(f64, f64)> {
    let d = *path.domain();
    let grid = path.time_grid();
    let mut mu = Vec::with_capacity(path.nt());
    let mut mv = Vec::with_capacity(path.nt());
    for k in 0..path.nt() {
        let (u, v) = lagrangian_velocity(path, k, cubic);
        let (su, sv) = (PeriodicSpline::fit(&d, &u), PeriodicSpline::fit(&d, &v));
        let inv = path.inverse_slice(k);
        let eu: Vec<f64> = (0..d.len()).map(|i| su.eval(inv.image_x[i], inv.image_y[i])).collect();
        let ev: Vec<f64> = (0..d.len()).map(|i| sv.eval(inv.image_x[i], inv.image_y[i])).collect();
        mu.push(integrate_values(&d, &eu)?);
        mv.push(integrate_values(&d, &ev)?);
    }
    let total = |s: &[f64]| grid.cumulative_integral(s)[s.len() - 1];
    Ok((total(&mu), total(&mv)))
}

/// Period integrals of the time-averaged flux form `ι_ċ ω`, where the
/// Eulerian velocity `ċ(t) = (∂_t λ) ∘ λ(t)⁻¹` comes from time differences
/// of the slices pulled back through the inverse slices.
pub fn flux(path: &FlowPath) -> Result<(f64, f64)> {
    ensure_torus(path.domain())?;
    ensure_unwrapped(path)?;
    let fine = eulerian_mean(path, true)?;
    let coarse = eulerian_mean(path, false)?;
    let noise = (fine.0 - coarse.0).abs().max((fine.1 - coarse.1).abs());
    if noise > FLUX_NOISE_TOL {
        return Err(Error::RefineTimeSampling(format!(
            "velocity estimates disagree by {noise:.3e} on {} samples",
            path.nt()
        )));
    }
    Ok(fine)
}

/// Largest componentwise gap between flux and rotation vector.
pub fn duality_check(path: &FlowPath) -> Result<f64> {
    let (fa, fb) = flux(path)?;
    let (ra, rb) = rotation_vector(path)?;
    Ok((fa - ra).abs().max((fb - rb).abs()))
}
