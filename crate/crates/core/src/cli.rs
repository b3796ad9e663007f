//! The `hamlab` command line: argument and config-file resolution, the
//! command pipelines and report emission.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::calculus::leng_both;
use crate::domain::{C0Mask, Domain, GridMap, Surface, MAX_RESOLUTION, MIN_RESOLUTION};
use crate::error::{Error, Result, EXIT_CODES};
use crate::flow::{
    area_audit, energy_drift, integrate_flow, locate_fixed_point, min_displacement, DisplacementSpline, FlowPath,
};
use crate::gallery::{self, ProfileKind, RotationProfile, CORE_RADIUS};
use crate::hamiltonian::SampledHamiltonian;
use crate::interp::TimeGrid;
use crate::invariants::{flux, rotation_vector};
use crate::io::{self, Loaded};
use crate::metrics::{cauchy_report_masked, dbar_paths, hofer_dist, ConvergenceReport, PathPair};
use crate::reparam::flatten;
use crate::report::{Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Hofer, L∞ and C⁰ norms of a field file
    Norm,
    /// integrate a field file into a flow path
    Flow,
    /// Hamiltonian distance between two field files
    Dham,
    /// pairwise distances and Cauchy verdicts of three or more field files
    Cauchy,
    /// rotation vector of a torus path
    Massflow,
    /// flux of a torus path and its gap to the rotation vector
    Flux,
    /// boundary flattening of a field file
    Flatten,
    /// run a named construction
    Gallery,
    /// smallest displacement of the time-one map
    Fixedpoint,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Norm => "norm",
            Command::Flow => "flow",
            Command::Dham => "dham",
            Command::Cauchy => "cauchy",
            Command::Massflow => "massflow",
            Command::Flux => "flux",
            Command::Flatten => "flatten",
            Command::Gallery => "gallery",
            Command::Fixedpoint => "fixedpoint",
        }
    }
}

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n  0  success\n  2  command-line usage error\n");
    for (code, what) in EXIT_CODES {
        s.push_str(&format!("  {code:<2} {what}\n"));
    }
    s.push_str(&format!("\nGallery items: {}, family", gallery::ITEMS.join(", ")));
    s
}

const TRANSLATION_SHIFT: (f64, f64) = (0.3, 0.7);
/// One full horizontal loop.
const TRANSPORT_SHIFT: (f64, f64) = (1.0, 0.0);

#[derive(Debug, Parser)]
#[command(name = "hamlab", version, about = "Hofer-norm calculus, Hamiltonian topology and flux on the torus and disc")]
#[command(after_help = exit_code_help())]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// gallery item (same as --item)
    item: Option<String>,
    /// key = value file of defaults; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// torus2 or disc2
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// time samples
    #[arg(long)]
    nt: Option<usize>,
    /// RK4 steps over [0, 1]
    #[arg(long)]
    steps: Option<usize>,
    /// disc support margin
    #[arg(long)]
    margin: Option<f64>,
    /// Cauchy tolerance
    #[arg(long)]
    tau: Option<f64>,
    /// input field or flow file (repeat for several)
    #[arg(long = "in")]
    inputs: Vec<PathBuf>,
    /// report file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "item")]
    item_flag: Option<String>,
    /// smoothing indices, comma separated
    #[arg(long = "n-list", alias = "n")]
    n_list: Option<String>,
    #[arg(long = "eps-target")]
    eps_target: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// displacement "a,b" of the translation (default 0.3,0.7) or transport (default 1,0) item
    #[arg(long)]
    shift: Option<String>,
    /// leave disc nodes with r below this out of C⁰ comparisons
    #[arg(long = "exclude-core")]
    exclude_core: Option<f64>,
    /// write the computed flow path here
    #[arg(long = "flow-out")]
    flow_out: Option<PathBuf>,
    /// write the computed Hamiltonian here
    #[arg(long = "field-out")]
    field_out: Option<PathBuf>,
    /// write the flattening reparameterization here
    #[arg(long = "zeta-out")]
    zeta_out: Option<PathBuf>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub surface: Option<Surface>,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub steps: usize,
    pub margin: f64,
    pub tau: f64,
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub item: Option<String>,
    pub n_list: Option<Vec<u32>>,
    pub eps_target: f64,
    pub seed: u64,
    pub shift: Option<(f64, f64)>,
    pub exclude_core: Option<f64>,
    pub flow_out: Option<PathBuf>,
    pub field_out: Option<PathBuf>,
    pub zeta_out: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 19] = [
    "domain", "nx", "ny", "nt", "steps", "margin", "tau", "in", "out", "item", "n-list", "eps-target", "seed",
    "shift", "exclude-core", "flow-out", "field-out", "zeta-out", "n",
];

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::Parse { line: n + 1, msg: format!("expected 'key = value', got '{line}'") })?;
        let k = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(Error::Parse { line: n + 1, msg: format!("unknown config key '{k}'") });
        }
        let k = if k == "n" { "n-list".to_string() } else { k };
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

fn parse_n_list(s: &str) -> Result<Vec<u32>> {
    let v = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_value::<u32>("n-list", p))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err(Error::Config(format!("n-list '{s}' must hold positive integers")));
    }
    Ok(v)
}

fn parse_pair(key: &str, s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| Error::Config(format!("{key} expects 'a,b', got '{s}'")))?;
    Ok((parse_value(key, a)?, parse_value(key, b)?))
}

impl RunConfig {
    pub fn from_args<I, T>(args: I) -> std::result::Result<Result<Self>, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let a = Args::try_parse_from(args)?;
        Ok(Self::resolve(a))
    }

    fn resolve(a: Args) -> Result<Self> {
        let file = match &a.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let pick = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());
        let num = |flag: Option<String>, key: &str| pick(flag, key);
        let surface = pick(a.domain, "domain").map(|s| Surface::parse(&s)).transpose()?;
        let get_usize = |flag: Option<usize>, key: &str, default: usize| -> Result<usize> {
            match num(flag.map(|v| v.to_string()), key) {
                Some(v) => parse_value(key, &v),
                None => Ok(default),
            }
        };
        let get_f64 = |flag: Option<f64>, key: &str, default: f64| -> Result<f64> {
            match num(flag.map(|v| v.to_string()), key) {
                Some(v) => parse_value(key, &v),
                None => Ok(default),
            }
        };
        let nx = get_usize(a.nx, "nx", 128)?;
        let ny = get_usize(a.ny, "ny", nx)?;
        let inputs = if a.inputs.is_empty() {
            file.get("in").map(|s| s.split(',').map(|p| PathBuf::from(p.trim())).collect()).unwrap_or_default()
        } else {
            a.inputs
        };
        let cfg = Self {
            command: a.command,
            surface,
            nx,
            ny,
            nt: get_usize(a.nt, "nt", 200)?,
            steps: get_usize(a.steps, "steps", crate::flow::DEFAULT_STEPS)?,
            margin: get_f64(a.margin, "margin", io::DEFAULT_SUPPORT_MARGIN)?,
            tau: get_f64(a.tau, "tau", 1e-2)?,
            inputs,
            out: pick(a.out.map(|p| p.display().to_string()), "out").map(PathBuf::from),
            item: a.item.or(a.item_flag).or_else(|| file.get("item").cloned()),
            n_list: pick(a.n_list, "n-list").map(|s| parse_n_list(&s)).transpose()?,
            eps_target: get_f64(a.eps_target, "eps-target", 0.1)?,
            seed: match pick(a.seed.map(|v| v.to_string()), "seed") {
                Some(v) => parse_value("seed", &v)?,
                None => 0,
            },
            shift: pick(a.shift, "shift").map(|s| parse_pair("shift", &s)).transpose()?,
            exclude_core: match pick(a.exclude_core.map(|v| v.to_string()), "exclude-core") {
                Some(v) => Some(parse_value("exclude-core", &v)?),
                None => None,
            },
            flow_out: pick(a.flow_out.map(|p| p.display().to_string()), "flow-out").map(PathBuf::from),
            field_out: pick(a.field_out.map(|p| p.display().to_string()), "field-out").map(PathBuf::from),
            zeta_out: pick(a.zeta_out.map(|p| p.display().to_string()), "zeta-out").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        for (k, v) in [("nx", self.nx), ("ny", self.ny)] {
            if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&v) {
                return Err(Error::Config(format!("{k} = {v} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]")));
            }
        }
        if !(2..=MAX_RESOLUTION).contains(&self.nt) {
            return Err(Error::Config(format!("nt = {} outside [2, {MAX_RESOLUTION}]", self.nt)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        for (k, v) in [("tau", self.tau), ("eps-target", self.eps_target)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if let Some(r) = self.exclude_core {
            if !(r >= 0.0 && r < 1.0) {
                return Err(Error::Config(format!("exclude-core radius {r} outside [0, 1)")));
            }
        }
        Ok(())
    }

    fn domain(&self, default: Surface) -> Result<Domain> {
        Domain::new(self.surface.unwrap_or(default), self.nx, self.ny, self.margin)
    }

    fn mask(&self, default: C0Mask) -> C0Mask {
        self.exclude_core.map_or(default, C0Mask::ExcludeCore)
    }

    /// The resolved settings as report entries.
    pub fn embed(&self, r: &mut Report) {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        r.set("config.command", self.command.name());
        r.set("config.domain", self.surface.map_or("auto", Surface::name));
        r.set("config.nx", self.nx);
        r.set("config.ny", self.ny);
        r.set("config.nt", self.nt);
        r.set("config.steps", self.steps);
        r.set_real("config.margin", self.margin);
        r.set_real("config.tau", self.tau);
        let ins: Vec<String> = self.inputs.iter().map(|p| p.display().to_string()).collect();
        r.set("config.in", if ins.is_empty() { "-".to_string() } else { ins.join(",") });
        r.set("config.out", path(&self.out));
        r.set("config.item", self.item.as_deref().unwrap_or("-"));
        r.set("config.n_list", self.n_list.as_ref().map_or("-".to_string(), |v| join(v)));
        r.set_real("config.eps_target", self.eps_target);
        r.set("config.seed", self.seed);
        r.set("config.shift", self.shift.map_or("-".to_string(), |(a, b)| format!("{},{}", io::fmt_real(a), io::fmt_real(b))));
        r.set("config.exclude_core", self.exclude_core.map_or("-".to_string(), io::fmt_real));
        r.set("config.flow_out", path(&self.flow_out));
        r.set("config.field_out", path(&self.field_out));
        r.set("config.zeta_out", path(&self.zeta_out));
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn open(p: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(p).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
    })?))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(p).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
    })?))
}

fn need_inputs(cfg: &RunConfig, n: usize, exact: bool) -> Result<()> {
    let k = cfg.inputs.len();
    if k < n || (exact && k != n) {
        let want = if exact { format!("{n}") } else { format!("at least {n}") };
        return Err(Error::Config(format!("{} needs {want} --in file(s), got {k}", cfg.command.name())));
    }
    Ok(())
}

fn load_field(p: &Path) -> Result<SampledHamiltonian> {
    io::read_field(open(p)?)
}

/// A flow path from a flow file, or by integrating a field file.
fn load_path(cfg: &RunConfig, p: &Path) -> Result<(FlowPath, Option<SampledHamiltonian>)> {
    match io::read_any(open(p)?)? {
        Loaded::Flow(f) => Ok((f, None)),
        Loaded::Field(h) => Ok((integrate_flow(&h, cfg.steps)?, Some(h))),
    }
}

fn save_flow(cfg: &RunConfig, path: &FlowPath) -> Result<()> {
    if let Some(p) = &cfg.flow_out {
        let mut w = create(p)?;
        io::write_flow(&mut w, path)?;
        w.flush()?;
    }
    Ok(())
}

fn save_field(target: &Option<PathBuf>, h: &SampledHamiltonian) -> Result<()> {
    if let Some(p) = target {
        let mut w = create(p)?;
        io::write_field(&mut w, h)?;
        w.flush()?;
    }
    Ok(())
}

fn osc_table(h: &SampledHamiltonian) -> Table {
    let tg = h.time_grid();
    let mut t = Table::new("osc", &["t", "osc"]);
    for (k, v) in h.osc_profile().into_iter().enumerate() {
        t.push_reals(&[tg.time(k), v]);
    }
    t
}

fn run_norm(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 1, true)?;
    let h = load_field(&cfg.inputs[0])?;
    r.set("result.domain", h.domain().surface().name());
    r.set("result.nt", h.nt());
    r.set("result.normalized", h.is_normalized());
    r.set_real("result.hofer_norm", h.hofer_norm());
    r.set_real("result.linfty_norm", h.linfty_norm());
    r.set_real("result.c0_norm", h.c0_norm());
    r.add_table(osc_table(&h));
    Ok(())
}

fn path_audits(r: &mut Report, path: &FlowPath, h: Option<&SampledHamiltonian>) -> Result<()> {
    if path.has_jacobian() {
        r.set_real("result.area_audit", area_audit(path)?);
    }
    r.set_real("result.inverse_audit", path.inverse_audit()?);
    if let Some(h) = h.filter(|h| h.is_autonomous()) {
        r.set_real("result.energy_drift", energy_drift(h, path)?);
    }
    Ok(())
}

fn displacement_table(path: &FlowPath) -> Table {
    let d = path.domain();
    let tg = path.time_grid();
    let mut t = Table::new("displacement", &["t", "max_displacement"]);
    for k in 0..path.nt() {
        let m = path.slice(k);
        let worst = d.active_indices().into_iter().map(|i| d.distance(d.point_at(i), m.image(i))).fold(0.0, f64::max);
        t.push_reals(&[tg.time(k), worst]);
    }
    t
}

fn run_flow(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 1, true)?;
    let h = load_field(&cfg.inputs[0])?;
    let path = integrate_flow(&h, cfg.steps)?;
    r.set("result.effective_steps", crate::flow::effective_steps(cfg.steps, h.nt()));
    path_audits(r, &path, Some(&h))?;
    r.add_table(displacement_table(&path));
    save_flow(cfg, &path)
}

fn run_dham(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 2, true)?;
    let p = PathPair::integrate(load_field(&cfg.inputs[0])?, cfg.steps)?;
    let q = PathPair::integrate(load_field(&cfg.inputs[1])?, cfg.steps)?;
    let c = leng_both(&p.ham, &q.ham, &p.path)?;
    let h = hofer_dist(&p, &q)?;
    let d = dbar_paths(&p.path, &q.path)?;
    r.set_real("result.hofer_dist", h);
    r.set_real("result.leng_composed", c.composed);
    r.set_real("result.leng_direct", c.direct);
    r.set_real("result.dbar", d);
    r.set_real("result.dham", h + d);
    Ok(())
}

fn convergence_into(r: &mut Report, c: &ConvergenceReport, labels: &[String]) {
    r.set("result.n", c.n);
    r.set("result.mask", match c.mask {
        C0Mask::All => "all".to_string(),
        C0Mask::ExcludeCore(r0) => format!("exclude_core:{}", io::fmt_real(r0)),
    });
    r.set("result.dbar_cauchy", c.dbar_cauchy);
    r.set("result.hofer_cauchy", c.hofer_cauchy);
    r.set("result.dham_cauchy", c.dham_cauchy);
    r.set_real("result.dham_tail_modulus", c.dham_modulus[c.n - 2]);
    r.set_real("result.dbar_tail_modulus", c.dbar_modulus[c.n - 2]);
    r.set_real("result.leng_gap", c.leng_gap);
    r.add_table(Table::matrix("dham_matrix", labels, &c.dham_matrix));
    r.add_table(Table::matrix("dbar_matrix", labels, &c.dbar_matrix));
    r.add_table(Table::matrix("hofer_matrix", labels, &c.hofer_matrix));
    let mut m = Table::new("modulus", &["k", "label", "dbar", "hofer", "dham", "norm"]);
    for k in 0..c.n {
        m.push(vec![
            k.to_string(),
            labels[k].clone(),
            io::fmt_real(c.dbar_modulus[k]),
            io::fmt_real(c.hofer_modulus[k]),
            io::fmt_real(c.dham_modulus[k]),
            io::fmt_real(c.norms[k]),
        ]);
    }
    r.add_table(m);
    let mut e = Table::new("ev1_trace", &["from", "to", "dbar_time1"]);
    for (k, v) in c.ev1_trace.iter().enumerate() {
        e.push(vec![labels[k].clone(), labels[k + 1].clone(), io::fmt_real(*v)]);
    }
    r.add_table(e);
}

fn run_cauchy(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 3, false)?;
    let seq = cfg
        .inputs
        .iter()
        .map(|p| PathPair::integrate(load_field(p)?, cfg.steps))
        .collect::<Result<Vec<_>>>()?;
    let c = cauchy_report_masked(&seq, cfg.tau, cfg.mask(C0Mask::All))?;
    let labels: Vec<String> = (0..seq.len()).map(|k| k.to_string()).collect();
    convergence_into(r, &c, &labels);
    Ok(())
}

fn run_massflow(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 1, true)?;
    let (path, _) = load_path(cfg, &cfg.inputs[0])?;
    let (a, b) = rotation_vector(&path)?;
    r.set_real("result.mass_flow_x", a);
    r.set_real("result.mass_flow_y", b);
    Ok(())
}

fn run_flux(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 1, true)?;
    let (path, _) = load_path(cfg, &cfg.inputs[0])?;
    let (fa, fb) = flux(&path)?;
    let (a, b) = rotation_vector(&path)?;
    r.set_real("result.flux_x", fa);
    r.set_real("result.flux_y", fb);
    r.set_real("result.mass_flow_x", a);
    r.set_real("result.mass_flow_y", b);
    r.set_real("result.duality_gap", (fa - a).abs().max((fb - b).abs()));
    Ok(())
}

fn run_flatten(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 1, true)?;
    let h = load_field(&cfg.inputs[0])?;
    let f = flatten(&h, cfg.eps_target)?;
    let (head, tail) = crate::reparam::flat_samples(&f.hamiltonian);
    let a = integrate_flow(&h, cfg.steps)?;
    let b = integrate_flow(&f.hamiltonian, cfg.steps)?;
    r.set_real("result.plateau", f.eps);
    r.set_real("result.distance", f.distance);
    r.set("result.flat_head_samples", head);
    r.set("result.flat_tail_samples", tail);
    r.set_real("result.linfty_gap", h.sub(&f.hamiltonian)?.linfty_norm());
    r.set_real("result.time1_c0_gap", crate::domain::c0_distance_maps(a.endpoint(), b.endpoint())?);
    r.add_table(osc_table(&f.hamiltonian));
    save_field(&cfg.field_out, &f.hamiltonian)?;
    if let Some(p) = &cfg.zeta_out {
        let mut w = create(p)?;
        io::write_zeta(&mut w, &f.zeta)?;
        w.flush()?;
    }
    Ok(())
}

fn fixed_point_into(r: &mut Report, m: &GridMap) {
    let (grid, idx) = min_displacement(m);
    let fp = locate_fixed_point(m);
    r.set_real("result.min_displacement_grid", grid);
    let (x, y) = m.domain.point_at(idx);
    r.set("result.min_displacement_node", format!("{},{}", io::fmt_real(x), io::fmt_real(y)));
    r.set_real("result.min_displacement", fp.distance);
    r.set("result.fixed_point", format!("{},{}", io::fmt_real(fp.point.0), io::fmt_real(fp.point.1)));
}

fn run_fixedpoint(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    need_inputs(cfg, 1, true)?;
    let (path, _) = load_path(cfg, &cfg.inputs[0])?;
    fixed_point_into(r, path.endpoint());
    Ok(())
}

fn torus_invariants(r: &mut Report, path: &FlowPath) -> Result<()> {
    let (a, b) = rotation_vector(path)?;
    let (fa, fb) = flux(path)?;
    r.set_real("result.mass_flow_x", a);
    r.set_real("result.mass_flow_y", b);
    r.set_real("result.flux_x", fa);
    r.set_real("result.flux_y", fb);
    r.set_real("result.duality_gap", (fa - a).abs().max((fb - b).abs()));
    Ok(())
}

fn gallery_twist(cfg: &RunConfig, r: &mut Report, kind: ProfileKind) -> Result<()> {
    if cfg.surface == Some(Surface::Torus) {
        return Err(Error::InvalidDomain("the twist sequences live on the disc".into()));
    }
    let d = cfg.domain(Surface::Disc)?;
    let sqrt = matches!(kind, ProfileKind::SqrtInverse);
    let default_n: Vec<u32> = if sqrt { vec![4, 8, 16, 32, 64] } else { (1..=8).map(|k| 8 * k).collect() };
    let ns = cfg.n_list.clone().unwrap_or(default_n);
    let p = RotationProfile::new(kind, d.support_margin().max(1e-3), None)?;
    let seq = gallery::twist_sequence(d, cfg.nt, cfg.steps, &p, &ns)?;
    let mask = cfg.mask(gallery::CORE_MASK);
    let labels: Vec<String> = ns.iter().map(|n| n.to_string()).collect();

    let mut norms = Table::new("norm_growth", &["n", "hofer_norm", "reference", "area_audit"]);
    let mut worst_area = 0.0f64;
    for (n, s) in ns.iter().zip(&seq) {
        let area = masked_area_audit(&s.path, mask)?;
        worst_area = worst_area.max(area);
        let reference = if sqrt { p.norm()? } else { (*n as f64).ln() };
        norms.push(vec![n.to_string(), io::fmt_real(s.ham.hofer_norm()), io::fmt_real(reference), io::fmt_real(area)]);
    }
    r.set_real("result.area_audit", worst_area);
    if sqrt {
        r.set_real("result.norm_target", p.norm()?);
    } else {
        let ratio = ns.iter().zip(&seq).map(|(n, s)| s.ham.hofer_norm() / (*n as f64).ln()).fold(f64::INFINITY, f64::min);
        r.set_real("result.min_norm_over_log_n", ratio);
    }
    if seq.len() >= 3 {
        let c = cauchy_report_masked(&seq, cfg.tau, mask)?;
        convergence_into(r, &c, &labels);
    } else {
        r.set("result.n", seq.len());
        r.set("result.dham_cauchy", true);
        r.set("result.dbar_cauchy", true);
    }
    if sqrt {
        let last = seq.last().ok_or_else(|| Error::Config("empty n-list".into()))?;
        let exact = gallery::rotation_map(d, &p)?;
        let limit_err = crate::domain::c0_distance_masked(last.path.endpoint(), &exact, C0Mask::ExcludeCore(CORE_RADIUS))?;
        r.set_real("result.limit_c0_error", limit_err);
        let mut q = Table::new("difference_quotient", &["k", "r", "quotient"]);
        for k in [4u32, 8, 16, 32, 64, 128, 256, 512, 1024] {
            let rad = 1.0 / k as f64;
            q.push(vec![k.to_string(), io::fmt_real(rad), io::fmt_real(gallery::twist_difference_quotient(&p, rad, 64))]);
        }
        r.add_table(q);
    }
    r.add_table(norms);
    if let Some(last) = seq.last() {
        save_flow(cfg, &last.path)?;
        save_field(&cfg.field_out, &last.ham)?;
    }
    Ok(())
}

/// `max |det − 1|` over nodes admitted by `mask`.
pub fn masked_area_audit(path: &FlowPath, mask: C0Mask) -> Result<f64> {
    let d = path.domain();
    let mut worst = 0.0f64;
    for m in path.slices() {
        let det = m.jacobian_det.as_ref().ok_or(Error::JacobianUnavailable)?;
        for k in 0..d.len() {
            if mask.admits(d, k) {
                worst = worst.max((det[k] - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn gallery_transport(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let d = cfg.domain(Surface::Torus)?;
    let ns = cfg.n_list.clone().unwrap_or(vec![4, 8, 16, 32]);
    let x0 = (0.25, 0.5);
    let (a, b) = cfg.shift.unwrap_or(TRANSPORT_SHIFT);
    let y0 = (x0.0 + a, x0.1 + b);
    r.set("result.x0", format!("{},{}", io::fmt_real(x0.0), io::fmt_real(x0.1)));
    r.set("result.y0", format!("{},{}", io::fmt_real(y0.0), io::fmt_real(y0.1)));
    let seq = gallery::transport_sequence(d, cfg.nt, cfg.steps, x0, y0, &ns)?;
    let id = GridMap::identity(d);
    let mut t = Table::new("transport", &["n", "hofer_norm", "bound_2_over_n", "endpoint_error", "time1_c0_from_id"]);
    let mut worst = 0.0f64;
    let mut within = true;
    for (n, s) in ns.iter().zip(&seq) {
        let (ix, iy) = DisplacementSpline::new(s.path.endpoint()).apply(x0.0, x0.1);
        let err = (ix - y0.0).hypot(iy - y0.1);
        worst = worst.max(err);
        let norm = s.ham.hofer_norm();
        within &= norm <= 2.0 / *n as f64;
        let from_id = crate::domain::c0_distance_maps(s.path.endpoint(), &id)?;
        t.push(vec![
            n.to_string(),
            io::fmt_real(norm),
            io::fmt_real(2.0 / *n as f64),
            io::fmt_real(err),
            io::fmt_real(from_id),
        ]);
    }
    r.set_real("result.max_endpoint_error", worst);
    r.set("result.norms_within_2_over_n", within);
    r.add_table(t);
    if let Some(last) = seq.last() {
        save_flow(cfg, &last.path)?;
        save_field(&cfg.field_out, &last.ham)?;
    }
    Ok(())
}

fn gallery_shear(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let d = cfg.domain(Surface::Torus)?;
    let h = gallery::shear_hamiltonian(d, cfg.nt, 1.0)?;
    let path = integrate_flow(&h, cfg.steps)?;
    let tg = TimeGrid::new(cfg.nt);
    let mut err = 0.0f64;
    for k in 0..cfg.nt {
        err = err.max(crate::domain::c0_distance_maps(path.slice(k), &gallery::shear_map(d, 1.0, tg.time(k)))?);
    }
    r.set_real("result.closed_form_error", err);
    r.set_real("result.hofer_norm", h.hofer_norm());
    path_audits(r, &path, Some(&h))?;
    torus_invariants(r, &path)?;
    fixed_point_into(r, path.endpoint());
    save_flow(cfg, &path)?;
    save_field(&cfg.field_out, &h)
}

fn gallery_translation(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let d = cfg.domain(Surface::Torus)?;
    let (a, b) = cfg.shift.unwrap_or(TRANSLATION_SHIFT);
    let path = gallery::translation_path(d, cfg.nt, a, b)?;
    torus_invariants(r, &path)?;
    fixed_point_into(r, path.endpoint());
    save_flow(cfg, &path)
}

fn gallery_family(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let d = cfg.domain(Surface::Torus)?;
    let h = gallery::smooth_hamiltonian(d, cfg.nt, cfg.seed)?;
    let path = integrate_flow(&h, cfg.steps)?;
    r.set_real("result.hofer_norm", h.hofer_norm());
    path_audits(r, &path, Some(&h))?;
    if d.is_torus() {
        torus_invariants(r, &path)?;
    }
    fixed_point_into(r, path.endpoint());
    save_flow(cfg, &path)?;
    save_field(&cfg.field_out, &h)
}

fn run_gallery(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let item = cfg.item.as_deref().ok_or_else(|| {
        Error::Config(format!("gallery needs an item: {}, family", gallery::ITEMS.join(", ")))
    })?;
    match item {
        "twist-sqrt" => gallery_twist(cfg, r, ProfileKind::SqrtInverse),
        "twist-div" => gallery_twist(cfg, r, ProfileKind::SquareInverse),
        "transport" => gallery_transport(cfg, r),
        "shear" => gallery_shear(cfg, r),
        "translation" => gallery_translation(cfg, r),
        "family" => gallery_family(cfg, r),
        other => Err(Error::Config(format!("unknown gallery item '{other}'"))),
    }
}

/// Executes one configured command and returns its report.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new(cfg.command.name());
    cfg.embed(&mut r);
    match cfg.command {
        Command::Norm => run_norm(cfg, &mut r)?,
        Command::Flow => run_flow(cfg, &mut r)?,
        Command::Dham => run_dham(cfg, &mut r)?,
        Command::Cauchy => run_cauchy(cfg, &mut r)?,
        Command::Massflow => run_massflow(cfg, &mut r)?,
        Command::Flux => run_flux(cfg, &mut r)?,
        Command::Flatten => run_flatten(cfg, &mut r)?,
        Command::Gallery => run_gallery(cfg, &mut r)?,
        Command::Fixedpoint => run_fixedpoint(cfg, &mut r)?,
    }
    Ok(r)
}

fn emit(cfg: &RunConfig, r: &Report) -> Result<()> {
    let text = r.render();
    match &cfg.out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Entry point: parses `args`, runs, writes the report and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::from_args(args) {
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
        Ok(Ok(cfg)) => cfg,
    };
    match run(&cfg).and_then(|r| emit(&cfg, &r)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
