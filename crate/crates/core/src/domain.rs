//! Model surfaces, sample grids, quadrature and C⁰ distances.
//!
//! Two surfaces are supported:
//!
//! * the flat torus `[0,1)²` with node grid `x_i = i / nx`, `y_j = j / ny`
//!   and total area 1;
//! * the closed unit disc, sampled on a cell-centred Cartesian grid over
//!   the square `[-1,1]²`. Nodes outside the disc are inactive. Fields on
//!   the disc are compactly supported, so the square is treated as a
//!   periodic cell of width 2 by the interpolation routines.
//!
//! Grid values are stored with index `i * ny + j` (`i` along x).

use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surface {
    Torus,
    Disc,
}

impl Surface {
    pub fn name(self) -> &'static str {
        match self {
            Surface::Torus => "torus2",
            Surface::Disc => "disc2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "torus2" | "torus" => Ok(Surface::Torus),
            "disc2" | "disc" => Ok(Surface::Disc),
            other => Err(Error::InvalidDomain(format!("unknown surface '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    surface: Surface,
    nx: usize,
    ny: usize,
    support_margin: f64,
}

impl Domain {
    pub fn new(surface: Surface, nx: usize, ny: usize, support_margin: f64) -> Result<Self> {
        for n in [nx, ny] {
            if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&n) {
                return Err(Error::InvalidDomain(format!(
                    "resolution {n} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
                )));
            }
        }
        if !(0.0..1.0).contains(&support_margin) {
            return Err(Error::InvalidDomain(format!(
                "support margin {support_margin} outside [0, 1)"
            )));
        }
        let support_margin = match surface {
            Surface::Torus => 0.0,
            Surface::Disc => support_margin,
        };
        Ok(Self { surface, nx, ny, support_margin })
    }

    pub fn torus(nx: usize, ny: usize) -> Result<Self> {
        Self::new(Surface::Torus, nx, ny, 0.0)
    }

    pub fn disc(nx: usize, ny: usize, support_margin: f64) -> Result<Self> {
        Self::new(Surface::Disc, nx, ny, support_margin)
    }

    pub fn surface(&self) -> Surface {
        self.surface
    }

    pub fn is_torus(&self) -> bool {
        self.surface == Surface::Torus
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn support_margin(&self) -> f64 {
        self.support_margin
    }

    /// Number of grid nodes, active or not.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / self.ny, idx % self.ny)
    }

    /// Side length of the periodic cell used for interpolation.
    pub fn period(&self) -> f64 {
        match self.surface {
            Surface::Torus => 1.0,
            Surface::Disc => 2.0,
        }
    }

    pub fn spacing(&self) -> (f64, f64) {
        let p = self.period();
        (p / self.nx as f64, p / self.ny as f64)
    }

    /// Coordinates of node `(0, 0)`.
    pub fn origin(&self) -> (f64, f64) {
        match self.surface {
            Surface::Torus => (0.0, 0.0),
            Surface::Disc => {
                let (hx, hy) = self.spacing();
                (-1.0 + 0.5 * hx, -1.0 + 0.5 * hy)
            }
        }
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let (x0, y0) = self.origin();
        let (hx, hy) = self.spacing();
        (x0 + i as f64 * hx, y0 + j as f64 * hy)
    }

    #[inline]
    pub fn point_at(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.ij(idx);
        self.point(i, j)
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        match self.surface {
            Surface::Torus => true,
            Surface::Disc => {
                let (x, y) = self.point_at(idx);
                x * x + y * y <= 1.0
            }
        }
    }

    /// Indices of the active nodes in storage order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_active(k)).collect()
    }

    /// Area weight of one grid cell.
    pub fn cell_area(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx * hy
    }

    /// Exact Liouville measure of the surface.
    pub fn total_measure(&self) -> f64 {
        match self.surface {
            Surface::Torus => 1.0,
            Surface::Disc => std::f64::consts::PI,
        }
    }

    /// Radius beyond which disc fields must vanish.
    pub fn support_radius(&self) -> f64 {
        1.0 - self.support_margin
    }

    /// Surface distance between two points. Torus points may be given by
    /// any lift.
    #[inline]
    pub fn distance(&self, p: (f64, f64), q: (f64, f64)) -> f64 {
        match self.surface {
            Surface::Torus => {
                let dx = wrap_unit(p.0 - q.0);
                let dy = wrap_unit(p.1 - q.1);
                dx.hypot(dy)
            }
            Surface::Disc => (p.0 - q.0).hypot(p.1 - q.1),
        }
    }

    pub fn ensure_same(&self, other: &Domain) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!(
                "{} {}x{} vs {} {}x{}",
                self.surface.name(),
                self.nx,
                self.ny,
                other.surface.name(),
                other.nx,
                other.ny
            )))
        }
    }
}

/// Distance from `d` to the nearest integer, in `[0, 0.5]`.
#[inline]
pub fn wrap_unit(d: f64) -> f64 {
    (d - d.round()).abs()
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// A real function sampled on the nodes of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DomainMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                domain.len()
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: Domain, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..domain.len())
            .map(|k| {
                if domain.is_active(k) {
                    let (x, y) = domain.point_at(k);
                    f(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        Self { domain, values }
    }

    pub fn constant(domain: Domain, c: f64) -> Self {
        Self::from_fn(domain, |_, _| c)
    }
}

/// Quadrature of `∫ f dμ` over the active cells.
pub fn integrate(f: &ScalarField) -> Result<f64> {
    integrate_values(&f.domain, &f.values)
}

pub(crate) fn integrate_values(domain: &Domain, values: &[f64]) -> Result<f64> {
    let mut active = Vec::with_capacity(values.len());
    for (k, &v) in values.iter().enumerate() {
        if domain.is_active(k) {
            if !v.is_finite() {
                return Err(Error::NonFiniteField);
            }
            active.push(v);
        }
    }
    Ok(pairwise_sum(&active) * domain.cell_area())
}

/// A map of the surface sampled at the grid nodes. Torus images are kept
/// as unwrapped reals; their fractional parts give the point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub domain: Domain,
    pub image_x: Vec<f64>,
    pub image_y: Vec<f64>,
    pub jacobian_det: Option<Vec<f64>>,
}

impl GridMap {
    pub fn identity(domain: Domain) -> Self {
        let (image_x, image_y) = (0..domain.len()).map(|k| domain.point_at(k)).unzip();
        Self { domain, image_x, image_y, jacobian_det: None }
    }

    pub fn from_fn(domain: Domain, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (image_x, image_y) = (0..domain.len())
            .map(|k| {
                let (x, y) = domain.point_at(k);
                if domain.is_active(k) {
                    f(x, y)
                } else {
                    (x, y)
                }
            })
            .unzip();
        Self { domain, image_x, image_y, jacobian_det: None }
    }

    /// Constant translation of the torus.
    pub fn translation(domain: Domain, a: f64, b: f64) -> Self {
        let mut m = Self::from_fn(domain, |x, y| (x + a, y + b));
        m.jacobian_det = Some(vec![1.0; domain.len()]);
        m
    }

    #[inline]
    pub fn image(&self, idx: usize) -> (f64, f64) {
        (self.image_x[idx], self.image_y[idx])
    }

    /// Displacement `φ(x) − x` at a node.
    #[inline]
    pub fn displacement(&self, idx: usize) -> (f64, f64) {
        let (x, y) = self.domain.point_at(idx);
        (self.image_x[idx] - x, self.image_y[idx] - y)
    }

    pub fn with_jacobian(mut self, det: Vec<f64>) -> Self {
        self.jacobian_det = Some(det);
        self
    }
}

/// Restricts which active nodes enter C⁰ comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum C0Mask {
    #[default]
    All,
    /// Drop disc nodes with radius below the given value.
    ExcludeCore(f64),
}

impl C0Mask {
    #[inline]
    pub fn admits(&self, domain: &Domain, idx: usize) -> bool {
        if !domain.is_active(idx) {
            return false;
        }
        match *self {
            C0Mask::All => true,
            C0Mask::ExcludeCore(r0) => {
                if domain.is_torus() {
                    true
                } else {
                    let (x, y) = domain.point_at(idx);
                    x.hypot(y) >= r0
                }
            }
        }
    }
}

/// `max_x d(φ(x), ψ(x))` over active nodes.
pub fn c0_distance_maps(phi: &GridMap, psi: &GridMap) -> Result<f64> {
    c0_distance_masked(phi, psi, C0Mask::All)
}

pub fn c0_distance_masked(phi: &GridMap, psi: &GridMap, mask: C0Mask) -> Result<f64> {
    phi.domain.ensure_same(&psi.domain)?;
    let d = &phi.domain;
    let mut worst = 0.0f64;
    for k in 0..d.len() {
        if mask.admits(d, k) {
            worst = worst.max(d.distance(phi.image(k), psi.image(k)));
        }
    }
    Ok(worst)
}

/// A map together with (optionally) its sampled inverse.
#[derive(Debug, Clone, Copy)]
pub struct MapPair<'a> {
    pub map: &'a GridMap,
    pub inverse: Option<&'a GridMap>,
}

impl<'a> MapPair<'a> {
    pub fn new(map: &'a GridMap, inverse: &'a GridMap) -> Self {
        Self { map, inverse: Some(inverse) }
    }

    pub fn without_inverse(map: &'a GridMap) -> Self {
        Self { map, inverse: None }
    }
}

/// `max{d_C⁰(φ,ψ), d_C⁰(φ⁻¹,ψ⁻¹)}`.
pub fn dbar_maps(phi: MapPair<'_>, psi: MapPair<'_>) -> Result<f64> {
    dbar_maps_masked(phi, psi, C0Mask::All)
}

pub fn dbar_maps_masked(phi: MapPair<'_>, psi: MapPair<'_>, mask: C0Mask) -> Result<f64> {
    let (pi, qi) = match (phi.inverse, psi.inverse) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InverseUnavailable),
    };
    let forward = c0_distance_masked(phi.map, psi.map, mask)?;
    let backward = c0_distance_masked(pi, qi, mask)?;
    Ok(forward.max(backward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_coarse_grids() {
        assert!(Domain::torus(4, 16).is_err());
        assert!(Domain::disc(16, 16, 1.5).is_err());
    }

    #[test]
    fn unit_integrates_to_total_measure() {
        let d = Domain::torus(32, 16).unwrap();
        assert_eq!(integrate(&ScalarField::constant(d, 1.0)).unwrap(), 1.0);

        let disc = Domain::disc(512, 512, 0.0).unwrap();
        let area = integrate(&ScalarField::constant(disc, 1.0)).unwrap();
        assert!((area - PI).abs() < 1e-2, "disc area {area}");
    }

    #[test]
    fn cosine_has_zero_mean() {
        let d = Domain::torus(128, 128).unwrap();
        let f = ScalarField::from_fn(d, |x, _| (2.0 * PI * x).cos());
        assert!(integrate(&f).unwrap().abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_rejected() {
        let d = Domain::torus(8, 8).unwrap();
        let mut f = ScalarField::constant(d, 0.0);
        f.values[3] = f64::NAN;
        assert!(matches!(integrate(&f), Err(Error::NonFiniteField)));
    }

    #[test]
    fn translation_distances_use_quotient_metric() {
        let d = Domain::torus(16, 16).unwrap();
        let id = GridMap::identity(d);
        assert_eq!(c0_distance_maps(&id, &id).unwrap(), 0.0);
        let t3 = GridMap::translation(d, 0.3, 0.0);
        let t7 = GridMap::translation(d, 0.7, 0.0);
        assert!((c0_distance_maps(&t3, &id).unwrap() - 0.3).abs() < 1e-12);
        assert!((c0_distance_maps(&t7, &id).unwrap() - 0.3).abs() < 1e-12);
        let t13 = GridMap::translation(d, 1.3, 0.0);
        assert!((c0_distance_maps(&t13, &id).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dbar_of_translations() {
        let d = Domain::torus(16, 16).unwrap();
        let (a, b) = ((0.1, 0.25), (0.45, 0.05));
        let ta = GridMap::translation(d, a.0, a.1);
        let ta_inv = GridMap::translation(d, -a.0, -a.1);
        let tb = GridMap::translation(d, b.0, b.1);
        let tb_inv = GridMap::translation(d, -b.0, -b.1);
        let v = dbar_maps(MapPair::new(&ta, &ta_inv), MapPair::new(&tb, &tb_inv)).unwrap();
        let expect = wrap_unit(a.0 - b.0).hypot(wrap_unit(a.1 - b.1));
        assert!((v - expect).abs() < 1e-12);
        let w = dbar_maps(MapPair::new(&tb, &tb_inv), MapPair::new(&ta, &ta_inv)).unwrap();
        assert_eq!(v, w);
        assert!(matches!(
            dbar_maps(MapPair::without_inverse(&ta), MapPair::new(&tb, &tb_inv)),
            Err(Error::InverseUnavailable)
        ));
    }

    #[test]
    fn mismatched_domains_error() {
        let a = GridMap::identity(Domain::torus(16, 16).unwrap());
        let b = GridMap::identity(Domain::torus(16, 32).unwrap());
        assert!(c0_distance_maps(&a, &b).is_err());
    }

    fn random_map(d: Domain, seed: &[f64]) -> GridMap {
        let mut m = GridMap::identity(d);
        for k in 0..d.len() {
            m.image_x[k] += seed[k % seed.len()] * ((k * 7 + 3) % 11) as f64 / 11.0;
            m.image_y[k] -= seed[(k + 1) % seed.len()] * ((k * 5 + 1) % 13) as f64 / 13.0;
        }
        m
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0,
                               f in prop::collection::vec(-1.0f64..1.0, 64),
                               g in prop::collection::vec(-1.0f64..1.0, 64)) {
            let d = Domain::torus(8, 8).unwrap();
            let ff = ScalarField::new(d, f.clone()).unwrap();
            let gg = ScalarField::new(d, g.clone()).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let hh = ScalarField::new(d, combo).unwrap();
            let lhs = integrate(&hh).unwrap();
            let rhs = a * integrate(&ff).unwrap() + b * integrate(&gg).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (a.abs() + b.abs()).max(1e-300));
        }

        #[test]
        fn c0_triangle_inequality(s1 in prop::collection::vec(-2.0f64..2.0, 5),
                                  s2 in prop::collection::vec(-2.0f64..2.0, 5),
                                  s3 in prop::collection::vec(-2.0f64..2.0, 5),
                                  torus in any::<bool>()) {
            let d = if torus { Domain::torus(8, 8).unwrap() } else { Domain::disc(8, 8, 0.0).unwrap() };
            let (p, q, r) = (random_map(d, &s1), random_map(d, &s2), random_map(d, &s3));
            let pq = c0_distance_maps(&p, &q).unwrap();
            let qr = c0_distance_maps(&q, &r).unwrap();
            let pr = c0_distance_maps(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-15);
        }

        #[test]
        fn torus_translation_is_integer_periodic(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let d = Domain::torus(8, 8).unwrap();
            let id = GridMap::identity(d);
            let t = GridMap::translation(d, a, b);
            let t1 = GridMap::translation(d, a + 1.0, b);
            let u = c0_distance_maps(&t, &id).unwrap();
            let v = c0_distance_maps(&t1, &id).unwrap();
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }
}
