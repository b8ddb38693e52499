//! Diagnostics CSV. One schema for every command: `t, mass, mom_x[, mom_y,
//! mom_z], energy, aug_energy, dissipation, rel_entropy, n_vel, n_gradrho,
//! n_rho`, with blank cells for quantities that were not computed.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::functionals::DiagnosticsRecord;

pub fn header(dim: usize) -> Vec<&'static str> {
    let mut h = vec!["t", "mass"];
    h.extend(&["mom_x", "mom_y", "mom_z"][..dim]);
    h.extend(["energy", "aug_energy", "dissipation", "rel_entropy", "n_vel", "n_gradrho", "n_rho"]);
    h
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_csv<W: Write>(w: W, records: &[DiagnosticsRecord]) -> Result<()> {
    let first = records.first().ok_or_else(|| Error::Io("no diagnostics records to write".into()))?;
    let dim = first.momentum.len();
    if !(1..=3).contains(&dim) || records.iter().any(|r| r.momentum.len() != dim) {
        return Err(Error::Io("records disagree on the momentum dimension".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(dim)).map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in records {
        let mut row = vec![num(r.t), num(r.mass)];
        row.extend(r.momentum.iter().copied().map(num));
        row.extend([r.energy, r.aug_energy, r.dissipation].map(num));
        row.push(cell(r.rel_entropy));
        row.extend((0..3).map(|k| cell(r.thm53_norms.map(|n| n[k]))));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a file written by [`write_csv`].
pub fn read_csv<R: Read>(r: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let head: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let dim = head.len().checked_sub(9).filter(|d| (1..=3).contains(d)).ok_or_else(|| Error::Io("unexpected CSV header".into()))?;
    if head != header(dim) {
        return Err(Error::Io(format!("unexpected CSV header {head:?}")));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let cells = row
            .iter()
            .map(|c| if c.is_empty() { Ok(None) } else { c.parse::<f64>().map(Some) })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Io(format!("row {}: {e}", line + 2)))?;
        let req = |i: usize| cells[i].ok_or_else(|| Error::Io(format!("row {}: missing {}", line + 2, head[i])));
        let d = 2 + dim;
        let norms = match (cells[d + 4], cells[d + 5], cells[d + 6]) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        out.push(DiagnosticsRecord {
            t: req(0)?,
            mass: req(1)?,
            momentum: (2..d).map(req).collect::<Result<_>>()?,
            energy: req(d)?,
            aug_energy: req(d + 1)?,
            dissipation: req(d + 2)?,
            rel_entropy: cells[d + 3],
            thm53_norms: norms,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, dim: usize, full: bool) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 1.0,
            momentum: vec![0.25; dim],
            energy: 0.5 + t,
            aug_energy: 0.75,
            dissipation: 1e-3,
            rel_entropy: full.then_some(1e-7 / 3.0),
            thm53_norms: full.then_some([1.0, 2.0, 3.0]),
        }
    }

    #[test]
    fn three_samples_give_four_lines() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[rec(0.0, 1, false), rec(0.1, 1, false), rec(0.2, 1, false)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(
            text.lines().next().unwrap(),
            "t,mass,mom_x,energy,aug_energy,dissipation,rel_entropy,n_vel,n_gradrho,n_rho"
        );
        assert!(text.lines().nth(1).unwrap().ends_with(",,,,"));
    }

    #[test]
    fn round_trip() {
        for dim in 1..=3 {
            let recs = vec![rec(0.0, dim, true), rec(0.05, dim, false)];
            let mut buf = Vec::new();
            write_csv(&mut buf, &recs).unwrap();
            assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
        }
    }

    #[test]
    fn empty_is_rejected() {
        assert!(write_csv(Vec::new(), &[]).is_err());
    }
}
