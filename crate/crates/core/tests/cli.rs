use std::path::Path;
use std::process::{Command, Output};

use hamtopo::domain::Domain;
use hamtopo::hamiltonian::SampledHamiltonian;
use hamtopo::io;
use hamtopo::report::Report;

fn hamlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamlab")).args(args).current_dir(dir).output().unwrap()
}

fn report(o: &Output) -> Report {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    Report::parse(&String::from_utf8(o.stdout.clone()).unwrap()).unwrap()
}

fn open(dir: &Path, name: &str) -> std::io::BufReader<std::fs::File> {
    std::io::BufReader::new(std::fs::File::open(dir.join(name)).unwrap())
}

fn write_field(dir: &Path, name: &str, h: &SampledHamiltonian) {
    let mut f = std::fs::File::create(dir.join(name)).unwrap();
    io::write_field(&mut f, h).unwrap();
}

#[test]
fn zero_field_has_zero_norm() {
    let dir = tempfile::tempdir().unwrap();
    write_field(dir.path(), "zero.field", &SampledHamiltonian::zero(Domain::torus(16, 16).unwrap(), 5));
    let r = report(&hamlab(&["norm", "--in", "zero.field"], dir.path()));
    assert_eq!(r.get("report"), Some("norm"));
    assert_eq!(r.get_real("result.hofer_norm"), Some(0.0));
    assert_eq!(r.get_real("result.linfty_norm"), Some(0.0));
    assert_eq!(r.table("osc").unwrap().rows.len(), 5);
}

#[test]
fn translation_flow_file_gives_its_mass_flow() {
    let dir = tempfile::tempdir().unwrap();
    let o = hamlab(&["gallery", "translation", "--nx", "32", "--nt", "21", "--flow-out", "t.flow"], dir.path());
    report(&o);
    let r = report(&hamlab(&["massflow", "--in", "t.flow"], dir.path()));
    assert!((r.get_real("result.mass_flow_x").unwrap() - 0.3).abs() < 1e-3);
    assert!((r.get_real("result.mass_flow_y").unwrap() - 0.7).abs() < 1e-3);
    let r = report(&hamlab(&["flux", "--in", "t.flow"], dir.path()));
    assert!(r.get_real("result.duality_gap").unwrap() < 1e-3);
}

#[test]
fn reports_are_bit_reproducible_and_embed_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gallery", "family", "--nx", "16", "--nt", "11", "--steps", "50", "--seed", "4", "--out", "a.txt"];
    report(&hamlab(&args, dir.path()));
    let mut again = args;
    again[args.len() - 1] = "b.txt";
    report(&hamlab(&again, dir.path()));
    let a = std::fs::read(dir.path().join("a.txt")).unwrap();
    let b = std::fs::read(dir.path().join("b.txt")).unwrap();
    let r = Report::parse(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(r.get("config.seed"), Some("4"));
    assert_eq!(r.get("config.steps"), Some("50"));
    assert!(r.get_real("result.area_audit").unwrap() < 1e-4);
    // only the output path differs
    let strip = |s: &[u8]| String::from_utf8_lossy(s).lines().filter(|l| !l.starts_with("config.out")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn config_file_sets_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "nx = 16\nnt = 11\nshift = 0.1,0.2\n").unwrap();
    let r = report(&hamlab(&["gallery", "translation", "--config", "run.conf", "--nt", "13"], dir.path()));
    assert_eq!(r.get("config.nx"), Some("16"));
    assert_eq!(r.get("config.nt"), Some("13"));
    assert!((r.get_real("result.mass_flow_x").unwrap() - 0.1).abs() < 1e-9);
}

#[test]
fn flatten_writes_field_and_zeta() {
    let dir = tempfile::tempdir().unwrap();
    let h = SampledHamiltonian::autonomous(Domain::torus(16, 16).unwrap(), 41, |_, y| {
        0.1 * (2.0 * std::f64::consts::PI * y).sin()
    })
    .unwrap();
    write_field(dir.path(), "h.field", &h);
    let o = hamlab(
        &["flatten", "--in", "h.field", "--steps", "80", "--field-out", "f.field", "--zeta-out", "z.csv"],
        dir.path(),
    );
    let r = report(&o);
    assert!(r.get_real("result.distance").unwrap() <= 0.1);
    let z = io::read_zeta(open(dir.path(), "z.csv")).unwrap();
    assert_eq!(z.nt(), 41);
    let f = io::read_field(open(dir.path(), "f.field")).unwrap();
    assert!(f.slice(0).iter().all(|v| *v == 0.0));
}

#[test]
fn errors_map_to_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| hamlab(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["bogus"]), 2);
    assert_eq!(code(&["norm", "--in", "missing.field"]), 4);
    assert_eq!(code(&["norm"]), 5);
    assert_eq!(code(&["gallery", "nope"]), 5);
    assert_eq!(code(&["gallery", "shear", "--domain", "disc2", "--nx", "16"]), 6);
    std::fs::write(dir.path().join("bad.field"), "# domain: torus2\n# nt: x\n").unwrap();
    assert_eq!(code(&["norm", "--in", "bad.field"]), 3);
    let o = hamlab(&["norm", "--in", "missing.field"], dir.path());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.lines().count() == 1, "{err}");
    let help = String::from_utf8(hamlab(&["--help"], dir.path()).stdout).unwrap();
    assert!(help.contains("Exit codes:") && help.contains("21 not Cauchy"));
}
