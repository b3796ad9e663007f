//! Acceptance suite. Runs every criterion at the default resolution unless
//! noted, prints one line per criterion and fails if any line is FAIL.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use hamtopo::calculus::{compose, dev_map, inverse, leng_both, pullback, tan_map};
use hamtopo::domain::{c0_distance_maps, c0_distance_masked, Domain, GridMap};
use hamtopo::flow::{area_audit, compose_maps, integrate_flow, locate_fixed_point, DisplacementSpline, FlowPath};
use hamtopo::gallery::{self, ProfileKind, RotationProfile, CORE_MASK};
use hamtopo::hamiltonian::SampledHamiltonian;
use hamtopo::invariants::{duality_check, flux, rotation_vector};
use hamtopo::metrics::{cauchy_report_masked, dham, PathPair};
use hamtopo::reparam::{check_reparam_bound, flat_samples, flatten, ham_norm, truncate, ReparamMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 128;
const NT: usize = 200;
const STEPS: usize = 1000;
const MARGIN: f64 = 0.1;
const TAU: f64 = 1e-2;

const FAMILY_SEEDS: [u64; 3] = [1, 2, 3];
const TRANSPORT_N: [u32; 4] = [4, 8, 16, 32];
const TRANSPORT_X0: (f64, f64) = (0.25, 0.5);
const TRANSPORT_Y0: (f64, f64) = (1.25, 0.5);

// criteria 3 and 11 integrate many flows and run on a coarser grid
const SMALL_N: usize = 64;
const SMALL_NT: usize = 101;
const SMALL_STEPS: usize = 400;

fn torus() -> Domain {
    Domain::torus(N, N).unwrap()
}

fn disc() -> Domain {
    Domain::disc(N, N, MARGIN).unwrap()
}

fn smooth_profile() -> RotationProfile {
    RotationProfile::smooth_bump(1.0, MARGIN).unwrap()
}

fn integrate(h: SampledHamiltonian) -> PathPair {
    PathPair::integrate(h, STEPS).unwrap()
}

fn shear() -> &'static PathPair {
    static P: OnceLock<PathPair> = OnceLock::new();
    P.get_or_init(|| integrate(gallery::shear_hamiltonian(torus(), NT, 1.0).unwrap()))
}

fn rotation() -> &'static PathPair {
    static P: OnceLock<PathPair> = OnceLock::new();
    P.get_or_init(|| integrate(gallery::rotation_hamiltonian(disc(), NT, &smooth_profile()).unwrap()))
}

fn family() -> &'static [PathPair] {
    static P: OnceLock<Vec<PathPair>> = OnceLock::new();
    P.get_or_init(|| {
        FAMILY_SEEDS.iter().map(|&s| integrate(gallery::smooth_hamiltonian(torus(), NT, s).unwrap())).collect()
    })
}

fn family_disc() -> &'static PathPair {
    static P: OnceLock<PathPair> = OnceLock::new();
    P.get_or_init(|| integrate(gallery::smooth_hamiltonian(disc(), NT, FAMILY_SEEDS[0]).unwrap()))
}

fn transport() -> &'static [PathPair] {
    static P: OnceLock<Vec<PathPair>> = OnceLock::new();
    P.get_or_init(|| {
        gallery::transport_sequence(torus(), NT, STEPS, TRANSPORT_X0, TRANSPORT_Y0, &TRANSPORT_N).unwrap()
    })
}

fn sqrt_profile() -> RotationProfile {
    RotationProfile::new(ProfileKind::SqrtInverse, MARGIN, None).unwrap()
}

const SQRT_N: [u32; 5] = [4, 8, 16, 32, 64];
const DIV_N: [u32; 8] = [8, 16, 24, 32, 40, 48, 56, 64];

fn sqrt_sequence() -> &'static [PathPair] {
    static P: OnceLock<Vec<PathPair>> = OnceLock::new();
    P.get_or_init(|| gallery::twist_sequence(disc(), NT, STEPS, &sqrt_profile(), &SQRT_N).unwrap())
}

fn div_sequence() -> &'static [PathPair] {
    static P: OnceLock<Vec<PathPair>> = OnceLock::new();
    P.get_or_init(|| {
        let p = RotationProfile::new(ProfileKind::SquareInverse, MARGIN, None).unwrap();
        gallery::twist_sequence(disc(), NT, STEPS, &p, &DIV_N).unwrap()
    })
}

/// Integrated Hamiltonian paths of the gallery, labelled.
fn hamiltonian_paths() -> Vec<(String, &'static PathPair)> {
    let mut v = vec![("shear".to_string(), shear()), ("rotation".to_string(), rotation())];
    for (s, p) in FAMILY_SEEDS.iter().zip(family()) {
        v.push((format!("family seed {s}"), p));
    }
    v.push(("family disc".into(), family_disc()));
    for (n, p) in TRANSPORT_N.iter().zip(transport()) {
        v.push((format!("transport n={n}"), p));
    }
    v
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_over(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let d = torus();
    let s = shear();
    let tg = s.path.time_grid();
    let shear_err = max_over(
        (0..NT).map(|k| c0_distance_maps(s.path.slice(k), &gallery::shear_map(d, 1.0, tg.time(k))).unwrap()),
    );
    let exact = gallery::rotation_map(disc(), &smooth_profile()).unwrap();
    let rot_err = c0_distance_maps(rotation().path.endpoint(), &exact).unwrap();

    // step halving against a fine reference solves the same interpolated field
    let h = gallery::rotation_hamiltonian(disc(), 5, &smooth_profile()).unwrap();
    let reference = integrate_flow(&h, 1536).unwrap();
    let err = |steps: usize| {
        let p = integrate_flow(&h, steps).unwrap();
        c0_distance_maps(p.endpoint(), reference.endpoint()).unwrap()
    };
    let (e1, e2) = (err(24), err(48));
    let ratio = e1 / e2;
    outcome(
        shear_err <= 1e-8 && rot_err <= 1e-6 && ratio >= 8.0,
        format!("shear {shear_err:.2e} <= 1e-8, rotation {rot_err:.2e} <= 1e-6, halving ratio {ratio:.2} >= 8"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut note = |label: String, a: f64| {
        if a >= worst.0 {
            worst = (a, label);
        }
    };
    for (label, p) in hamiltonian_paths() {
        note(label, area_audit(&p.path).unwrap());
    }
    for (n, p) in SQRT_N.iter().zip(sqrt_sequence()) {
        note(format!("twist-sqrt n={n}"), area_audit(&p.path).unwrap());
    }
    for (n, p) in DIV_N.iter().zip(div_sequence()) {
        note(format!("twist-div n={n}"), area_audit(&p.path).unwrap());
    }
    outcome(worst.0 <= 1e-4, format!("worst area_audit {:.2e} ({}) <= 1e-4", worst.0, worst.1))
}

fn relative(err: f64, scale: f64) -> f64 {
    err / scale.max(f64::MIN_POSITIVE)
}

fn criterion_3() -> Outcome {
    let d = Domain::torus(SMALL_N, SMALL_N).unwrap();
    let flow = |h: &SampledHamiltonian| integrate_flow(h, SMALL_STEPS).unwrap();
    let mut worst = [0.0f64; 5];
    for pair in 0..5u64 {
        let h = gallery::smooth_hamiltonian(d, SMALL_NT, 10 + 2 * pair).unwrap();
        let k = gallery::smooth_hamiltonian(d, SMALL_NT, 11 + 2 * pair).unwrap();
        let ph = flow(&h);
        let pk = flow(&k);
        let id = GridMap::identity(d);
        let t = SMALL_NT - 1;

        let product = flow(&compose(&h, &k, &ph).unwrap());
        let direct = compose_maps(ph.slice(t), pk.slice(t));
        worst[0] = worst[0].max(relative(
            c0_distance_maps(product.slice(t), &direct).unwrap(),
            c0_distance_maps(&direct, &id).unwrap(),
        ));

        let hb = inverse(&h, &ph).unwrap();
        let pb = flow(&hb);
        worst[1] = worst[1].max(relative(
            c0_distance_maps(pb.slice(t), ph.inverse_slice(t)).unwrap(),
            c0_distance_maps(ph.inverse_slice(t), &id).unwrap(),
        ));

        let psi = pk.endpoint();
        let psi_inv = pk.inverse_slice(t);
        let (hp, _) = pullback(&h, psi).unwrap();
        let pp = flow(&hp);
        let conj = compose_maps(psi_inv, &compose_maps(ph.slice(t), psi));
        worst[2] = worst[2].max(relative(
            c0_distance_maps(pp.slice(t), &conj).unwrap(),
            c0_distance_maps(&conj, &id).unwrap(),
        ));

        let tan = tan_map(&h, &ph).unwrap().normalize().unwrap();
        let dev = dev_map(&hb).scale(-1.0);
        worst[3] = worst[3].max(relative(tan.max_abs_diff(&dev).unwrap(), h.linfty_norm()));

        worst[4] = worst[4].max(leng_both(&h, &k, &ph).unwrap().relative_gap());
    }
    outcome(
        worst.iter().all(|&w| w <= 1e-3),
        format!(
            "5 pairs at {SMALL_N}^2: product {:.1e}, inverse {:.1e}, pullback {:.1e}, tan/dev {:.1e}, leng {:.1e} <= 1e-3",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn criterion_4() -> Outcome {
    let h = gallery::smooth_hamiltonian(torus(), NT, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut held = 0;
    for _ in 0..100 {
        let z1 = ReparamMap::random_smooth(NT, &mut rng).unwrap();
        let z2 = ReparamMap::random_smooth(NT, &mut rng).unwrap();
        held += usize::from(check_reparam_bound(&h, &z1, &z2).is_ok());
    }
    let (s, s2) = (0.7, 0.25);
    let lin = ham_norm(&ReparamMap::linear(NT, s), &ReparamMap::linear(NT, s2)).unwrap();
    let lin_err = (lin - 2.0 * (s - s2)).abs();
    outcome(held == 100 && lin_err <= 1e-9, format!("{held}/100 pairs within bound, linear pair error {lin_err:.1e}"))
}

fn criterion_5() -> Outcome {
    let h = &family()[0];
    let mut pass = true;
    let mut parts = Vec::new();
    for eps_target in [0.1, 0.01] {
        let f = flatten(&h.ham, eps_target).unwrap();
        let hp = &f.hamiltonian;
        let (head, tail) = flat_samples(hp);
        let dt = hp.time_grid().dt();
        let plateau_nodes = ((f.eps / dt).floor() as usize).max(1);
        let plateau_ok = head >= plateau_nodes && tail >= plateau_nodes;
        let pp = integrate_flow(hp, STEPS).unwrap();
        let gap = c0_distance_maps(h.path.endpoint(), pp.endpoint()).unwrap();
        let composed = leng_both(&h.ham, hp, &h.path).unwrap().composed;
        let plateau_osc = max_over((0..head).chain(NT - tail..NT).map(|k| h.ham.osc(k).unwrap()));
        let linf = h.ham.sub(hp).unwrap().linfty_norm();
        let ok = plateau_ok && gap <= 1e-6 && composed <= eps_target && linf >= 0.9 * plateau_osc;
        pass &= ok;
        parts.push(format!(
            "eps {eps_target}: plateau {:.3} ({head}/{tail} zero slices), time-1 gap {gap:.1e}, |Hbar#H'| {composed:.2e}, linfty {linf:.3e} vs osc {plateau_osc:.3e}",
            f.eps
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let seq = sqrt_sequence();
    let p = sqrt_profile();
    let target = p.norm().unwrap();
    let c = cauchy_report_masked(seq, TAU, CORE_MASK).unwrap();
    let norm_gap = max_over(seq.iter().map(|s| (s.ham.hofer_norm() - target).abs()));
    let exact = gallery::rotation_map(disc(), &p).unwrap();
    let limit = c0_distance_masked(seq[seq.len() - 1].path.endpoint(), &exact, CORE_MASK).unwrap();
    outcome(
        c.dham_cauchy && norm_gap <= 0.02 && limit <= 1e-3,
        format!(
            "dham Cauchy {} (tail {:.1e}), max |norm - {target:.5}| {norm_gap:.3e} <= 0.02, limit error {limit:.1e} <= 1e-3",
            c.dham_cauchy,
            c.dham_modulus[c.n - 2]
        ),
    )
}

fn criterion_7() -> Outcome {
    let seq = div_sequence();
    let ratio = DIV_N
        .iter()
        .zip(seq)
        .map(|(n, s)| s.ham.hofer_norm() / (*n as f64).ln())
        .fold(f64::INFINITY, f64::min);
    let c = cauchy_report_masked(seq, TAU, CORE_MASK).unwrap();
    outcome(
        ratio >= 0.9 && c.dbar_cauchy,
        format!("min norm/ln n {ratio:.3} >= 0.9, C0 Cauchy {} (tail {:.1e})", c.dbar_cauchy, c.dbar_modulus[c.n - 2]),
    )
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, s) in TRANSPORT_N.iter().zip(transport()) {
        let norm = s.ham.hofer_norm();
        let (x, y) = DisplacementSpline::new(s.path.endpoint()).apply(TRANSPORT_X0.0, TRANSPORT_X0.1);
        let err = (x - TRANSPORT_Y0.0).hypot(y - TRANSPORT_Y0.1);
        pass &= norm <= 2.0 / *n as f64 && err <= 1e-3;
        parts.push(format!("n={n} norm {norm:.3} err {err:.1e}"));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_9() -> Outcome {
    let t = FlowPath::translation(torus(), NT, 0.3, 0.7).unwrap();
    let (a, b) = rotation_vector(&t).unwrap();
    let (fa, fb) = flux(&t).unwrap();
    let gap = duality_check(&t).unwrap();
    let trans_err = max_over([(a - 0.3).abs(), (b - 0.7).abs(), (fa - 0.3).abs(), (fb - 0.7).abs()]);
    let mut worst = (0.0f64, String::new());
    for (label, p) in hamiltonian_paths() {
        if !p.path.domain().is_torus() {
            continue;
        }
        let (a, b) = rotation_vector(&p.path).unwrap();
        let (fa, fb) = flux(&p.path).unwrap();
        let m = a.hypot(b).max(fa.hypot(fb));
        if m >= worst.0 {
            worst = (m, label);
        }
    }
    outcome(
        trans_err <= 1e-3 && gap <= 1e-3 && worst.0 <= 1e-3,
        format!(
            "translation error {trans_err:.1e}, duality gap {gap:.1e}, worst Hamiltonian invariant {:.1e} ({})",
            worst.0, worst.1
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut maps: Vec<(String, &GridMap)> =
        hamiltonian_paths().into_iter().map(|(l, p)| (l, p.path.endpoint())).collect();
    maps.push(("twist-sqrt n=64".into(), sqrt_sequence().last().unwrap().path.endpoint()));
    maps.push(("twist-div n=64".into(), div_sequence().last().unwrap().path.endpoint()));
    for (label, m) in maps {
        let d = locate_fixed_point(m).distance;
        if d >= worst.0 {
            worst = (d, label);
        }
    }
    let shift = locate_fixed_point(&GridMap::translation(torus(), 0.3, 0.0)).distance;
    outcome(
        worst.0 <= 1e-3 && (shift - 0.3).abs() <= 1e-9,
        format!("worst min_displacement {:.1e} ({}), translation (0.3, 0) gives {shift:.6}", worst.0, worst.1),
    )
}

fn criterion_11() -> Outcome {
    let d = Domain::torus(SMALL_N, SMALL_N).unwrap();
    let h = gallery::shear_hamiltonian(d, SMALL_NT, 1.0).unwrap();
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let family: Vec<PathPair> = grid
        .iter()
        .map(|&s| PathPair::integrate(truncate(&h, s).unwrap(), SMALL_STEPS).unwrap())
        .collect();
    let c = max_over(family.windows(2).map(|w| dham(&w[0], &w[1]).unwrap() / 0.05));
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        for j in i + 2..grid.len() {
            let q = dham(&family[i], &family[j]).unwrap() / (c * (grid[j] - grid[i]));
            worst = worst.max(q);
        }
    }
    // for the unit shear: |H| = 1/pi and the velocity is at most 1
    let bound = 1.0 / PI + 1.0;
    outcome(
        worst <= 1.0 + 1e-9 && c <= bound * 1.01,
        format!("fitted c {c:.4} (bound {bound:.4}), worst ratio over non-adjacent pairs {worst:.4} <= 1 at {SMALL_N}^2"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("flow correctness", criterion_1),
        ("area preservation", criterion_2),
        ("group calculus identities", criterion_3),
        ("reparameterization bound", criterion_4),
        ("boundary flattening", criterion_5),
        ("convergent twist sequence", criterion_6),
        ("divergent twist sequence", criterion_7),
        ("transport sequence", criterion_8),
        ("mass flow and flux", criterion_9),
        ("fixed points", criterion_10),
        ("truncation continuity", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} {name}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {label}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
