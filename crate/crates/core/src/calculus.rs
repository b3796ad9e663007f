//! Product, inverse, pullback and the tangent/developing maps of sampled
//! Hamiltonians, plus the length identity used as a consistency check.

use std::sync::Arc;

use crate::domain::GridMap;
use crate::error::{Error, Result};
use crate::flow::{DisplacementSpline, FlowPath};
use crate::hamiltonian::SampledHamiltonian;
use crate::interp::PeriodicSpline;

/// Relative tolerance of the length cross-check in [`leng_between`].
pub const LENG_RELATIVE_TOL: f64 = 1e-3;

/// Area defect above which [`pullback`] attaches a warning.
pub const PULLBACK_AREA_TOL: f64 = 1e-4;

fn ensure_path(h: &SampledHamiltonian, path: &FlowPath) -> Result<()> {
    h.domain().ensure_same(path.domain())?;
    if h.nt() != path.nt() {
        return Err(Error::DomainMismatch(format!(
            "Hamiltonian has {} samples, path has {}",
            h.nt(),
            path.nt()
        )));
    }
    Ok(())
}

/// Samples `K_t ∘ maps[t]` at every node.
fn compose_slices(k: &SampledHamiltonian, maps: &[GridMap]) -> Vec<Vec<f64>> {
    let splines = k.splines();
    maps.iter().zip(&splines).map(|(m, s)| eval_along(s, m)).collect()
}

fn finish(h: &SampledHamiltonian, slices: Vec<Vec<f64>>) -> Result<SampledHamiltonian> {
    let out = SampledHamiltonian::from_slices(*h.domain(), slices)?;
    if out.domain().is_torus() {
        out.normalize()
    } else {
        Ok(out)
    }
}

/// `(H#K)_t = H_t + K_t ∘ (φ_H^t)⁻¹`, generating `t ↦ φ_H^t φ_K^t`.
pub fn compose(h: &SampledHamiltonian, k: &SampledHamiltonian, phi_h: &FlowPath) -> Result<SampledHamiltonian> {
    h.ensure_compatible(k)?;
    ensure_path(h, phi_h)?;
    let pulled = compose_slices(k, phi_h.inverse_slices());
    let slices = pulled
        .into_iter()
        .enumerate()
        .map(|(t, v)| v.iter().zip(h.slice(t)).map(|(a, b)| a + b).collect())
        .collect();
    finish(h, slices)
}

/// `H̄_t = −H_t ∘ φ_H^t`, generating `t ↦ (φ_H^t)⁻¹`.
pub fn inverse(h: &SampledHamiltonian, phi_h: &FlowPath) -> Result<SampledHamiltonian> {
    ensure_path(h, phi_h)?;
    let slices = compose_slices(h, phi_h.slices())
        .into_iter()
        .map(|v| v.into_iter().map(|a| -a).collect())
        .collect();
    finish(h, slices)
}

/// Largest `|det Dψ − 1|` over active nodes, from the stored Jacobian when
/// present and from the interpolated displacement otherwise.
pub fn area_defect(psi: &GridMap) -> f64 {
    let d = psi.domain;
    let mut worst = 0.0f64;
    match &psi.jacobian_det {
        Some(det) => {
            for (i, v) in det.iter().enumerate() {
                if d.is_active(i) {
                    worst = worst.max((v - 1.0).abs());
                }
            }
        }
        None => {
            let s = DisplacementSpline::new(psi);
            for i in 0..d.len() {
                if d.is_active(i) {
                    let (x, y) = d.point_at(i);
                    let (_, j) = s.jet(x, y);
                    let det = (1.0 + j[0][0]) * (1.0 + j[1][1]) - j[0][1] * j[1][0];
                    worst = worst.max((det - 1.0).abs());
                }
            }
        }
    }
    worst
}

/// `(ψ*H)_t = H_t ∘ ψ`, generating `t ↦ ψ⁻¹ φ_H^t ψ`. A non-area-preserving
/// `ψ` yields a warning alongside the result.
pub fn pullback(h: &SampledHamiltonian, psi: &GridMap) -> Result<(SampledHamiltonian, Option<String>)> {
    h.domain().ensure_same(&psi.domain)?;
    let defect = area_defect(psi);
    let warning = (defect > PULLBACK_AREA_TOL)
        .then(|| format!("pullback map fails the area audit: max |det - 1| = {defect:.3e}"));
    let d = *h.domain();
    let splines = h.splines();
    let mut slices: Vec<Arc<Vec<f64>>> = Vec::with_capacity(h.nt());
    for (t, s) in splines.iter().enumerate() {
        if t > 0 && Arc::ptr_eq(s, &splines[t - 1]) {
            let prev = slices[t - 1].clone();
            slices.push(prev);
            continue;
        }
        let v = (0..d.len())
            .map(|i| if d.is_active(i) { s.eval(psi.image_x[i], psi.image_y[i]) } else { 0.0 })
            .collect();
        slices.push(Arc::new(v));
    }
    let out = SampledHamiltonian::from_shared(d, slices)?;
    let out = if d.is_torus() { out.normalize()? } else { out };
    Ok((out, warning))
}

/// Tangent map `Tan(λ)(t, x) = H(t, φ_H^t(x))`.
pub fn tan_map(h: &SampledHamiltonian, phi_h: &FlowPath) -> Result<SampledHamiltonian> {
    ensure_path(h, phi_h)?;
    SampledHamiltonian::from_slices(*h.domain(), compose_slices(h, phi_h.slices()))
}

/// Developing map `Dev(λ)(t, x) = H(t, x)`.
pub fn dev_map(h: &SampledHamiltonian) -> SampledHamiltonian {
    h.clone()
}

/// Both evaluations of `leng(φ_H⁻¹ φ_K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengCheck {
    /// `‖H̄ # K‖` through the composed Hamiltonian.
    pub composed: f64,
    /// `‖K − H‖` directly.
    pub direct: f64,
}

impl LengCheck {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.composed.abs().max(self.direct.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.composed - self.direct).abs() / scale
        }
    }
}

/// Evaluates `‖H̄ # K‖` (with `φ_{H̄}` the inverted path of `φ_H`) and
/// `‖K − H‖` without the agreement check.
pub fn leng_both(h: &SampledHamiltonian, k: &SampledHamiltonian, phi_h: &FlowPath) -> Result<LengCheck> {
    h.ensure_compatible(k)?;
    let h_bar = inverse(h, phi_h)?;
    let composed = compose(&h_bar, k, &phi_h.inverted())?.hofer_norm();
    let direct = k.sub(h)?.hofer_norm();
    Ok(LengCheck { composed, direct })
}

/// `leng(φ_H⁻¹ φ_K) = ‖H̄ # K‖`, cross-checked against `‖K − H‖`.
///
/// The gap is measured relative to the larger of the two lengths and the
/// norms of `H` and `K`, so near-zero lengths are compared at the scale of
/// the inputs.
pub fn leng_between(h: &SampledHamiltonian, k: &SampledHamiltonian, phi_h: &FlowPath) -> Result<f64> {
    let c = leng_both(h, k, phi_h)?;
    let scale = c.composed.max(c.direct).max(h.hofer_norm()).max(k.hofer_norm());
    if (c.composed - c.direct).abs() > LENG_RELATIVE_TOL * scale {
        return Err(Error::CalculusIdentity { composed: c.composed, direct: c.direct });
    }
    Ok(c.composed)
}

/// A spline evaluated at the images of a map.
pub(crate) fn eval_along(s: &PeriodicSpline, m: &GridMap) -> Vec<f64> {
    let d = m.domain;
    (0..d.len())
        .map(|i| if d.is_active(i) { s.eval(m.image_x[i], m.image_y[i]) } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{c0_distance_maps, Domain};
    use crate::flow::{compose_maps, integrate_flow};
    use std::f64::consts::PI;

    fn torus() -> Domain {
        Domain::torus(64, 64).unwrap()
    }

    fn bump(d: Domain, nt: usize) -> SampledHamiltonian {
        SampledHamiltonian::from_fn(d, nt, |t, x, y| {
            0.02 * ((2.0 * PI * x).sin() * (2.0 * PI * y).cos() + t * (2.0 * PI * y).sin())
        })
        .unwrap()
        .normalize()
        .unwrap()
    }

    #[test]
    fn identity_element_and_zero_inverse() {
        let d = torus();
        let h = bump(d, 5);
        let path = integrate_flow(&h, 40).unwrap();
        let z = SampledHamiltonian::zero(d, 5);
        assert!(compose(&h, &z, &path).unwrap().max_abs_diff(&h).unwrap() < 1e-12);
        let zp = integrate_flow(&z, 4).unwrap();
        assert_eq!(inverse(&z, &zp).unwrap().linfty_norm(), 0.0);
    }

    #[test]
    fn autonomous_examples() {
        let d = Domain::torus(64, 64).unwrap();
        let h = SampledHamiltonian::autonomous(d, 5, |x, y| {
            0.1 * (2.0 * PI * x).cos() * (2.0 * PI * y).cos()
        })
        .unwrap();
        let path = integrate_flow(&h, 200).unwrap();
        assert!(compose(&h, &h, &path).unwrap().max_abs_diff(&h.scale(2.0)).unwrap() < 1e-6);
        assert!(inverse(&h, &path).unwrap().max_abs_diff(&h.scale(-1.0)).unwrap() < 1e-6);
        assert!(tan_map(&h, &path).unwrap().max_abs_diff(&h).unwrap() < 1e-6);
    }

    #[test]
    fn product_generates_composed_flow() {
        let d = torus();
        let h = bump(d, 33);
        let k = SampledHamiltonian::autonomous(d, 33, |x, _| 0.04 * (2.0 * PI * x).cos()).unwrap();
        let ph = integrate_flow(&h, 128).unwrap();
        let pk = integrate_flow(&k, 128).unwrap();
        let hk = integrate_flow(&compose(&h, &k, &ph).unwrap(), 128).unwrap();
        for t in [16, 32] {
            let direct = compose_maps(ph.slice(t), pk.slice(t));
            let e = c0_distance_maps(hk.slice(t), &direct).unwrap();
            assert!(e < 1e-4, "{e}");
        }
    }

    #[test]
    fn inverse_is_an_involution_and_tan_dev_identity_holds() {
        let d = torus();
        let h = bump(d, 33);
        let ph = integrate_flow(&h, 128).unwrap();
        let hb = inverse(&h, &ph).unwrap();
        let pb = integrate_flow(&hb, 128).unwrap();
        let e = inverse(&hb, &pb).unwrap().max_abs_diff(&h).unwrap();
        assert!(e < 1e-6, "{e}");
        let tan = tan_map(&h, &ph).unwrap().normalize().unwrap();
        let e = tan.max_abs_diff(&dev_map(&hb).scale(-1.0)).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn pullback_by_translation() {
        let d = torus();
        let h = SampledHamiltonian::autonomous(d, 2, |x, _| (2.0 * PI * x).cos()).unwrap();
        let tau = GridMap::translation(d, 0.25, 0.0);
        let (p, warn) = pullback(&h, &tau).unwrap();
        assert!(warn.is_none());
        let expect = SampledHamiltonian::autonomous(d, 2, |x, _| (2.0 * PI * (x + 0.25)).cos()).unwrap();
        assert!(p.max_abs_diff(&expect).unwrap() < 1e-9);
        let (same, _) = pullback(&h, &GridMap::identity(d)).unwrap();
        assert!(same.max_abs_diff(&h).unwrap() < 1e-12);
    }

    #[test]
    fn pullback_warns_on_compression() {
        let d = torus();
        let h = bump(d, 2);
        let squash = GridMap::from_fn(d, |x, y| (x + 0.05 * (2.0 * PI * x).sin(), y));
        let (_, warn) = pullback(&h, &squash).unwrap();
        assert!(warn.is_some());
    }

    #[test]
    fn leng_examples() {
        let d = Domain::torus(64, 64).unwrap();
        let h = SampledHamiltonian::autonomous(d, 5, |x, _| (2.0 * PI * x).cos()).unwrap();
        let k = h.scale(2.0);
        let ph = integrate_flow(&h, 100).unwrap();
        assert!((leng_between(&h, &k, &ph).unwrap() - 2.0).abs() < 1e-3);
        assert!(leng_between(&h, &h, &ph).unwrap() < 1e-6);
    }
}
