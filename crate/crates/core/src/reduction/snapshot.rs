//! Plain-text snapshot of a grid field.
//!
//! ```text
//! bubblelab-field 1
//! dim 7
//! nt 3
//! nr 2
//! map centers=-1,1 cores=0.5,0.5 radial_core=0.5 nodes_per_efold=16
//! columns t r value
//! <t> <r> <value>        (nt·nr rows, t-major)
//! ```
//!
//! The `map` line is `map none` for grids not built from a family.

use std::fmt::Write as _;
use std::sync::Arc;

use super::{AxisymField, AxisymGrid, GridMap};
use crate::error::{Error, Result};

const MAGIC: &str = "bubblelab-field";
const VERSION: u32 = 1;
/// Refuse absurd headers before allocating.
const MAX_NODES: usize = 1 << 22;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",")
}

pub fn write_snapshot(field: &AxisymField) -> String {
    let g = field.grid();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "dim {}", g.dim());
    let _ = writeln!(s, "nt {}", g.nt());
    let _ = writeln!(s, "nr {}", g.nr());
    match g.map() {
        Some(m) => {
            let _ = writeln!(
                s,
                "map centers={} cores={} radial_core={:.17e} nodes_per_efold={:.17e}",
                join(&m.centers),
                join(&m.cores),
                m.radial_core,
                m.nodes_per_efold
            );
        }
        None => s.push_str("map none\n"),
    }
    s.push_str("columns t r value\n");
    for (i, &t) in g.t().iter().enumerate() {
        for (j, &r) in g.r().iter().enumerate() {
            let _ = writeln!(s, "{t:.17e} {r:.17e} {:.17e}", field.at(i, j));
        }
    }
    s
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| perr(line, format!("not a number: {tok:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(perr(line, format!("non-finite number: {tok:?}")))
    }
}

fn parse_list(tok: &str, line: usize) -> Result<Vec<f64>> {
    tok.split(',').map(|t| parse_f64(t, line)).collect()
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, &'a str)> {
    let (no, l) = lines.next().ok_or_else(|| perr(0, format!("missing `{key}` line")))?;
    match l.split_once(' ') {
        Some((k, rest)) if k == key => Ok((no, rest.trim())),
        _ => Err(perr(no, format!("expected `{key} …`, found {l:?}"))),
    }
}

fn parse_count(v: &str, no: usize) -> Result<usize> {
    v.parse().map_err(|_| perr(no, format!("not a count: {v:?}")))
}

fn parse_map(v: &str, no: usize) -> Result<Option<GridMap>> {
    if v == "none" {
        return Ok(None);
    }
    let (mut centers, mut cores, mut rc, mut k) = (None, None, None, None);
    for item in v.split_whitespace() {
        let (key, val) = item.split_once('=').ok_or_else(|| perr(no, format!("bad map entry {item:?}")))?;
        match key {
            "centers" => centers = Some(parse_list(val, no)?),
            "cores" => cores = Some(parse_list(val, no)?),
            "radial_core" => rc = Some(parse_f64(val, no)?),
            "nodes_per_efold" => k = Some(parse_f64(val, no)?),
            _ => return Err(perr(no, format!("unknown map key {key:?}"))),
        }
    }
    let missing = |name: &str| perr(no, format!("map is missing `{name}`"));
    let centers = centers.ok_or_else(|| missing("centers"))?;
    let cores = cores.ok_or_else(|| missing("cores"))?;
    if centers.len() != cores.len() {
        return Err(perr(no, "map centers and cores differ in length"));
    }
    Ok(Some(GridMap {
        centers,
        cores,
        radial_core: rc.ok_or_else(|| missing("radial_core"))?,
        nodes_per_efold: k.ok_or_else(|| missing("nodes_per_efold"))?,
    }))
}

/// Parses a snapshot produced by [`write_snapshot`]. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse_snapshot(text: &str) -> Result<AxisymField> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (no, v) = header(&mut lines, MAGIC)?;
    if v != VERSION.to_string() {
        return Err(perr(no, format!("unsupported version {v:?}")));
    }
    let (no, v) = header(&mut lines, "dim")?;
    let dim = parse_count(v, no)?;
    let (no, v) = header(&mut lines, "nt")?;
    let nt = parse_count(v, no)?;
    let (no, v) = header(&mut lines, "nr")?;
    let nr = parse_count(v, no)?;
    if nt < 3 || nr < 2 || nt.checked_mul(nr).is_none_or(|m| m > MAX_NODES) {
        return Err(perr(no, format!("unsupported grid size {nt}×{nr}")));
    }
    let (no, v) = header(&mut lines, "map")?;
    let map = parse_map(v, no)?;
    let (no, v) = header(&mut lines, "columns")?;
    if v.split_whitespace().collect::<Vec<_>>() != ["t", "r", "value"] {
        return Err(perr(no, format!("unexpected columns {v:?}")));
    }

    let mut t = Vec::with_capacity(nt);
    let mut r = Vec::with_capacity(nr);
    let mut values = Vec::with_capacity(nt * nr);
    for i in 0..nt {
        for j in 0..nr {
            let (no, l) = lines
                .next()
                .ok_or_else(|| perr(0, format!("expected {} rows, found {}", nt * nr, values.len())))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(perr(no, "expected three columns"));
            }
            let (tv, rv, fv) = (parse_f64(toks[0], no)?, parse_f64(toks[1], no)?, parse_f64(toks[2], no)?);
            if j == 0 {
                t.push(tv);
            } else if tv != t[i] {
                return Err(perr(no, "t must be constant within a block of rows"));
            }
            if i == 0 {
                r.push(rv);
            } else if rv != r[j] {
                return Err(perr(no, "r columns differ between blocks"));
            }
            values.push(fv);
        }
    }
    if let Some((no, _)) = lines.next() {
        return Err(perr(no, "trailing data after the last row"));
    }
    let grid = AxisymGrid::with_map(dim, t, r, map).map_err(|e| perr(0, e.to_string()))?;
    AxisymField::new(Arc::new(grid), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::GridPolicy;
    use crate::{BubbleFamily, ProblemParams};

    #[test]
    fn round_trip_is_exact() {
        let fam = BubbleFamily::on_axis(ProblemParams::new(6).unwrap(), &[(-3.0, 1.0), (3.0, 2.0)]).unwrap();
        let pol = GridPolicy::default().with_density(3.0);
        let grid = Arc::new(AxisymGrid::for_family(&fam, &pol).unwrap());
        let f = AxisymField::from_fn(grid, |t, r| (t * 0.3).sin() / (1.0 + r * r) * 1e-7).unwrap();
        let text = write_snapshot(&f);
        let g = parse_snapshot(&text).unwrap();
        assert_eq!(f, g);
        assert_eq!(write_snapshot(&g), text);
    }

    #[test]
    fn rejects_malformed() {
        let ok = "bubblelab-field 1\ndim 3\nnt 3\nnr 2\nmap none\ncolumns t r value\n\
                  0 0 1\n0 1 0\n1 0 2\n1 1 0\n2 0 0\n2 1 0\n";
        assert!(parse_snapshot(ok).is_ok());
        for bad in [
            ok.replace("bubblelab-field 1", "bubblelab-field 2"),
            ok.replace("nt 3", "nt 4"),
            ok.replace("1 0 2", "1 0 nan"),
            ok.replace("2 0 0\n", "2 0.5 0\n"),
            ok.replace("0 0 1", "0 0.1 1"),
            format!("{ok}3 0 0\n"),
            ok.replace("map none", "map centers=1"),
        ] {
            assert!(parse_snapshot(&bad).is_err(), "{bad}");
        }
    }
}
