//! Text formats for sampled fields, flow paths and reparameterizations.
//!
//! Field and flow files share a header of `#` lines, in order
//! `# domain: torus2|disc2`, `# nt:`, `# nx:`, `# ny:`, optionally followed
//! by `# support_margin:` for the disc. Records follow in row-major order:
//! `t_index,i,j,value` for fields and `t_index,i,j,image_x,image_y` for
//! flows. Reals are written with 17 significant digits.

use std::io::{BufRead, Write};

use crate::domain::{Domain, GridMap, Surface};
use crate::error::{Error, Result};
use crate::flow::FlowPath;
use crate::hamiltonian::SampledHamiltonian;
use crate::interp::TimeGrid;
use crate::reparam::ReparamMap;

/// Disc support margin assumed when a file does not state one.
pub const DEFAULT_SUPPORT_MARGIN: f64 = 0.1;

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub domain: Domain,
    pub nt: usize,
}

fn write_header(w: &mut impl Write, d: &Domain, nt: usize) -> Result<()> {
    writeln!(w, "# domain: {}", d.surface().name())?;
    writeln!(w, "# nt: {nt}")?;
    writeln!(w, "# nx: {}", d.nx())?;
    writeln!(w, "# ny: {}", d.ny())?;
    if !d.is_torus() {
        writeln!(w, "# support_margin: {}", fmt_real(d.support_margin()))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: R,
    line: usize,
    peeked: Option<String>,
}

impl<R: BufRead> Lines<R> {
    fn new(inner: R) -> Self {
        Self { inner, line: 0, peeked: None }
    }

    fn next(&mut self) -> Result<Option<String>> {
        if let Some(s) = self.peeked.take() {
            return Ok(Some(s));
        }
        loop {
            let mut s = String::new();
            if self.inner.read_line(&mut s)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let t = s.trim();
            if !t.is_empty() {
                return Ok(Some(t.to_string()));
            }
        }
    }

    fn peek(&mut self) -> Result<Option<&str>> {
        if self.peeked.is_none() {
            self.peeked = self.next()?;
        }
        Ok(self.peeked.as_deref())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }
}

fn header_value<R: BufRead>(lines: &mut Lines<R>, key: &str) -> Result<String> {
    let l = lines.next()?.ok_or_else(|| lines.err(format!("missing header '{key}'")))?;
    let body = l.strip_prefix('#').ok_or_else(|| lines.err(format!("expected header '# {key}: ...'")))?;
    let (k, v) = body.split_once(':').ok_or_else(|| lines.err(format!("malformed header '{l}'")))?;
    if k.trim() != key {
        return Err(lines.err(format!("expected header '{key}', found '{}'", k.trim())));
    }
    Ok(v.trim().to_string())
}

fn parse_usize<R: BufRead>(lines: &Lines<R>, s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| lines.err(format!("{what} '{s}' is not a non-negative integer")))
}

fn parse_real<R: BufRead>(lines: &Lines<R>, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| lines.err(format!("'{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(lines.err(format!("non-finite value '{s}'")));
    }
    Ok(v)
}

fn read_header<R: BufRead>(lines: &mut Lines<R>) -> Result<Header> {
    let surface = Surface::parse(&header_value(lines, "domain")?).map_err(|e| lines.err(e.to_string()))?;
    let v = header_value(lines, "nt")?;
    let nt = parse_usize(lines, &v, "nt")?;
    let v = header_value(lines, "nx")?;
    let nx = parse_usize(lines, &v, "nx")?;
    let v = header_value(lines, "ny")?;
    let ny = parse_usize(lines, &v, "ny")?;
    let mut margin = DEFAULT_SUPPORT_MARGIN;
    while let Some(l) = lines.peek()? {
        if !l.starts_with('#') {
            break;
        }
        let l = lines.next()?.unwrap_or_default();
        if let Some((k, v)) = l[1..].split_once(':') {
            if k.trim() == "support_margin" {
                margin = parse_real(lines, v)?;
            }
        }
    }
    if nt < 2 {
        return Err(lines.err(format!("nt = {nt}, need at least 2 time samples")));
    }
    let domain = Domain::new(surface, nx, ny, margin).map_err(|e| lines.err(e.to_string()))?;
    Ok(Header { domain, nt })
}

/// Reads the records of a file with header `h`, `width` reals per record.
fn read_records<R: BufRead>(lines: &mut Lines<R>, h: &Header, width: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let (nx, ny) = (h.domain.nx(), h.domain.ny());
    let mut out = vec![vec![Vec::with_capacity(nx * ny); width]; h.nt];
    for k in 0..h.nt {
        for i in 0..nx {
            for j in 0..ny {
                let l = lines
                    .next()?
                    .ok_or_else(|| lines.err(format!("file ends before record ({k},{i},{j})")))?;
                let fields: Vec<&str> = l.split(',').map(str::trim).collect();
                if fields.len() != 3 + width {
                    return Err(lines.err(format!("expected {} fields, found {}", 3 + width, fields.len())));
                }
                let at = (
                    parse_usize(lines, fields[0], "t_index")?,
                    parse_usize(lines, fields[1], "i")?,
                    parse_usize(lines, fields[2], "j")?,
                );
                if at != (k, i, j) {
                    return Err(lines.err(format!("record {at:?} out of order, expected ({k},{i},{j})")));
                }
                for c in 0..width {
                    out[k][c].push(parse_real(lines, fields[3 + c])?);
                }
            }
        }
    }
    if let Some(extra) = lines.next()? {
        return Err(lines.err(format!("unexpected trailing record '{extra}'")));
    }
    Ok(out)
}

pub fn write_field(w: &mut impl Write, h: &SampledHamiltonian) -> Result<()> {
    let d = h.domain();
    write_header(w, d, h.nt())?;
    for k in 0..h.nt() {
        let s = h.slice(k);
        for idx in 0..d.len() {
            let (i, j) = d.ij(idx);
            writeln!(w, "{k},{i},{j},{}", fmt_real(s[idx]))?;
        }
    }
    Ok(())
}

pub fn read_field(r: impl BufRead) -> Result<SampledHamiltonian> {
    let mut lines = Lines::new(r);
    let h = read_header(&mut lines)?;
    let recs = read_records(&mut lines, &h, 1)?;
    SampledHamiltonian::from_slices(h.domain, recs.into_iter().map(|mut c| c.remove(0)).collect())
}

/// Writes the forward slices of a path; inverses are not stored.
pub fn write_flow(w: &mut impl Write, path: &FlowPath) -> Result<()> {
    let d = path.domain();
    write_header(w, d, path.nt())?;
    for k in 0..path.nt() {
        let m = path.slice(k);
        for idx in 0..d.len() {
            let (i, j) = d.ij(idx);
            writeln!(w, "{k},{i},{j},{},{}", fmt_real(m.image_x[idx]), fmt_real(m.image_y[idx]))?;
        }
    }
    Ok(())
}

/// Reads a flow file; inverse slices are recovered numerically.
pub fn read_flow(r: impl BufRead) -> Result<FlowPath> {
    let mut lines = Lines::new(r);
    let h = read_header(&mut lines)?;
    let recs = read_records(&mut lines, &h, 2)?;
    let slices = recs
        .into_iter()
        .map(|mut c| {
            let image_y = c.pop().unwrap_or_default();
            let image_x = c.pop().unwrap_or_default();
            GridMap { domain: h.domain, image_x, image_y, jacobian_det: None }
        })
        .collect();
    FlowPath::from_forward(h.domain, slices)
}

/// Contents of a field or flow file, told apart by the record width.
#[derive(Debug, Clone)]
pub enum Loaded {
    Field(SampledHamiltonian),
    Flow(FlowPath),
}

pub fn read_any(mut r: impl BufRead) -> Result<Loaded> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
    match first.map(|l| l.split(',').count()) {
        Some(5) => Ok(Loaded::Flow(read_flow(text.as_bytes())?)),
        Some(4) => Ok(Loaded::Field(read_field(text.as_bytes())?)),
        Some(n) => Err(Error::Parse { line: 0, msg: format!("records with {n} fields are neither field nor flow") }),
        None => Err(Error::Parse { line: 0, msg: "no records".into() }),
    }
}

pub fn write_zeta(w: &mut impl Write, z: &ReparamMap) -> Result<()> {
    let tg = TimeGrid::new(z.nt());
    for k in 0..z.nt() {
        writeln!(w, "{},{},{}", fmt_real(tg.time(k)), fmt_real(z.zeta()[k]), fmt_real(z.dzeta()[k]))?;
    }
    Ok(())
}

/// Reads `t,zeta,dzeta` lines; times must form the uniform grid.
pub fn read_zeta(r: impl BufRead) -> Result<ReparamMap> {
    let mut lines = Lines::new(r);
    let mut rows = Vec::new();
    while let Some(l) = lines.next()? {
        if l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 3 {
            return Err(lines.err(format!("expected t,zeta,dzeta, found {} fields", f.len())));
        }
        rows.push((parse_real(&lines, f[0])?, parse_real(&lines, f[1])?, parse_real(&lines, f[2])?));
    }
    if rows.len() < 2 {
        return Err(lines.err("need at least two samples"));
    }
    let tg = TimeGrid::new(rows.len());
    for (k, r) in rows.iter().enumerate() {
        if (r.0 - tg.time(k)).abs() > 1e-12 {
            return Err(Error::Parse { line: k + 1, msg: format!("time {} off the uniform grid", r.0) });
        }
    }
    ReparamMap::new(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn field_round_trip_is_exact() {
        let d = Domain::torus(8, 12).unwrap();
        let h = SampledHamiltonian::from_fn(d, 3, |t, x, y| (1.0 + t) * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() / 3.0)
            .unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# domain: torus2\n# nt: 3\n# nx: 8\n# ny: 12\n0,0,0,"));
        assert_eq!(read_field(&buf[..]).unwrap(), h);
    }

    #[test]
    fn disc_margin_survives() {
        let d = Domain::disc(8, 8, 0.25).unwrap();
        let h = SampledHamiltonian::zero(d, 2);
        let mut buf = Vec::new();
        write_field(&mut buf, &h).unwrap();
        assert_eq!(*read_field(&buf[..]).unwrap().domain(), d);
    }

    #[test]
    fn flow_round_trip() {
        let d = Domain::torus(8, 8).unwrap();
        let p = FlowPath::translation(d, 3, 0.3, 0.7).unwrap();
        let mut buf = Vec::new();
        write_flow(&mut buf, &p).unwrap();
        let q = read_flow(&buf[..]).unwrap();
        assert_eq!(q.slices()[2].image_x, p.slices()[2].image_x);
        assert!(q.inverse_audit().unwrap() < 1e-12);
        assert!(matches!(read_any(&buf[..]).unwrap(), Loaded::Flow(_)));
    }

    #[test]
    fn zeta_round_trip() {
        let z = ReparamMap::linear(5, 0.5);
        let mut buf = Vec::new();
        write_zeta(&mut buf, &z).unwrap();
        let back = read_zeta(&buf[..]).unwrap();
        assert_eq!(back.zeta(), z.zeta());
        assert_eq!(back.dzeta(), z.dzeta());
    }

    #[test]
    fn malformed_files_report_lines() {
        let bad = "# domain: torus2\n# nt: 2\n# nx: 8\n# ny: 8\n0,0,1,0.0\n";
        match read_field(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        let wrong_key = "# domain: torus2\n# nx: 8\n";
        assert!(matches!(read_field(wrong_key.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let short = "# domain: torus2\n# nt: 2\n# nx: 8\n# ny: 8\n0,0,0,nan\n";
        assert!(matches!(read_field(short.as_bytes()), Err(Error::Parse { .. })));
    }
}
