//! CSV encoding of [`SpaceTimeField`]: header line `# t\x, x_0, ..., x_{M-1}`
//! followed by one `t_i, v_i0, ..., v_{i,M-1}` row per time node. Numbers are
//! written with enough significant digits that a read back is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::core::{SpaceGrid, SpaceTimeField, TimeGrid};
use crate::error::{GxError, Result};
use crate::real::{real, Real};

/// Format one scalar with `R::SIG_DIGITS` significant decimal digits.
pub fn fmt_scalar<R: Real>(v: R) -> String {
    format!("{:.*e}", R::SIG_DIGITS - 1, v)
}

fn parse_scalar<R: Real>(s: &str) -> Result<R> {
    s.trim()
        .parse::<R>()
        .map_err(|_| GxError::Parse(format!("bad number {:?}", s.trim())))
}

pub fn write_field<R: Real, W: Write>(field: &SpaceTimeField<R>, mut w: W) -> Result<()> {
    let mut header = String::from("# t\\x");
    for x in field.space().nodes() {
        write!(header, ", {}", fmt_scalar(x)).unwrap();
    }
    writeln!(w, "{}", header)?;
    for i in 0..=field.time().n_steps() {
        let mut line = fmt_scalar(field.time().t(i));
        for &v in field.row(i) {
            write!(line, ", {}", fmt_scalar(v)).unwrap();
        }
        writeln!(w, "{}", line)?;
    }
    Ok(())
}

pub fn write_field_to_path<R: Real>(field: &SpaceTimeField<R>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_field(field, std::io::BufWriter::new(f))
}

pub fn read_field<R: Real, Rd: Read>(r: Rd) -> Result<SpaceTimeField<R>> {
    let mut lines = BufReader::new(r).lines();
    // provenance comments (`## key = value`) may precede the header
    let header = loop {
        let line = lines
            .next()
            .ok_or_else(|| GxError::Parse("field CSV has no header".into()))??;
        if !line.starts_with("##") {
            break line;
        }
    };
    let header = header
        .strip_prefix("# t\\x")
        .ok_or_else(|| GxError::Parse("field CSV missing `# t\\x` header".into()))?;
    let xs: Vec<R> = header
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_scalar)
        .collect::<Result<_>>()?;
    if xs.len() < 3 {
        return Err(GxError::Parse("field CSV needs at least 3 columns".into()));
    }
    check_uniform(&xs, "space")?;
    let space = SpaceGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;

    let mut ts = Vec::new();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let t = parse_scalar::<R>(
            cells
                .next()
                .ok_or_else(|| GxError::Parse("empty field CSV row".into()))?,
        )?;
        let row: Vec<R> = cells.map(parse_scalar).collect::<Result<_>>()?;
        if row.len() != xs.len() {
            return Err(GxError::Parse(format!(
                "field CSV row has {} values, expected {}",
                row.len(),
                xs.len()
            )));
        }
        ts.push(t);
        rows.push(row);
    }
    if ts.len() < 2 {
        return Err(GxError::Parse("field CSV needs at least 2 time rows".into()));
    }
    check_uniform(&ts, "time")?;
    if ts[0] != R::zero() {
        return Err(GxError::Parse("field CSV must start at t = 0".into()));
    }
    let time = TimeGrid::new(ts[ts.len() - 1], ts.len() - 1)?;
    SpaceTimeField::new(time, space, rows)
}

pub fn read_field_from_path<R: Real>(path: &Path) -> Result<SpaceTimeField<R>> {
    let f = std::fs::File::open(path)?;
    read_field(f)
}

/// Nonuniform grids are rejected.
fn check_uniform<R: Real>(xs: &[R], what: &str) -> Result<()> {
    let step = xs[1] - xs[0];
    if step <= R::zero() {
        return Err(GxError::Parse(format!("{} abscissae not increasing", what)));
    }
    let tol = step * real::<R>(1e-6);
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - step).abs() > tol {
            return Err(GxError::Parse(format!("{} grid is not uniform", what)));
        }
    }
    Ok(())
}
