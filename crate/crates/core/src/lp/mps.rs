//! Fixed-format MPS export for cross-checking with external solvers.

use std::fmt::Write as _;
use std::path::Path;

use super::{LinearProgram, INF};
use crate::error::{Error, Result};

fn field_line(out: &mut String, code: &str, a: &str, b: &str, v: f64) {
    let _ = writeln!(out, " {code:<2} {a:<8}  {b:<8}  {v:>12}");
}

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.6e}")
    }
}

/// Renders `lp` in fixed-format MPS. Rows are named `R<k>`, columns
/// `C<j>`, the objective `COST`. Two-sided rows use the RANGES section.
pub fn mps_string(lp: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n N  COST\n");
    for (k, row) in lp.rows.iter().enumerate() {
        let kind = match (row.lo.is_finite(), row.hi.is_finite()) {
            _ if row.lo == row.hi => "E",
            (true, true) | (false, true) => "L",
            (true, false) => "G",
            (false, false) => "N",
        };
        let _ = writeln!(out, " {kind}  R{k}");
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (k, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            by_col[j].push((k, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, entries) in by_col.iter().enumerate() {
        let col = format!("C{j}");
        if lp.objective[j] != 0.0 || entries.is_empty() {
            let _ = writeln!(
                out,
                "    {col:<8}  {:<8}  {:>12}",
                "COST",
                num(lp.objective[j])
            );
        }
        for &(k, a) in entries {
            let _ = writeln!(out, "    {col:<8}  {:<8}  {:>12}", format!("R{k}"), num(a));
        }
    }

    out.push_str("RHS\n");
    for (k, row) in lp.rows.iter().enumerate() {
        let rhs = if row.hi.is_finite() { row.hi } else { row.lo };
        if rhs.is_finite() && rhs != 0.0 {
            let _ = writeln!(
                out,
                "    {:<8}  {:<8}  {:>12}",
                "RHS",
                format!("R{k}"),
                num(rhs)
            );
        }
    }

    let ranged: Vec<(usize, f64)> = lp
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.lo.is_finite() && r.hi.is_finite() && r.lo != r.hi)
        .map(|(k, r)| (k, r.hi - r.lo))
        .collect();
    if !ranged.is_empty() {
        out.push_str("RANGES\n");
        for (k, width) in ranged {
            let _ = writeln!(
                out,
                "    {:<8}  {:<8}  {:>12}",
                "RNG",
                format!("R{k}"),
                num(width)
            );
        }
    }

    out.push_str("BOUNDS\n");
    for j in 0..lp.num_vars() {
        let col = format!("C{j}");
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo == hi {
            field_line(&mut out, "FX", "BND", &col, lo);
            continue;
        }
        match (lo, hi) {
            (l, u) if l == -INF && u == INF => {
                let _ = writeln!(out, " FR BND       {col}");
            }
            (l, _) if l == -INF => {
                let _ = writeln!(out, " MI BND       {col}");
            }
            (l, _) if l != 0.0 => field_line(&mut out, "LO", "BND", &col, l),
            _ => {}
        }
        if hi != INF {
            field_line(&mut out, "UP", "BND", &col, hi);
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn write_mps(lp: &LinearProgram, name: &str, path: &Path) -> Result<()> {
    std::fs::write(path, mps_string(lp, name)).map_err(|e| Error::io(path, e))
}
