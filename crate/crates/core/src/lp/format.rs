use std::fmt::Write;

use super::LinearProgram;

fn term(out: &mut String, first: bool, a: f64, name: &str) {
    if a < 0.0 {
        let _ = write!(out, " - {} {}", -a, name);
    } else if first {
        let _ = write!(out, " {a} {name}");
    } else {
        let _ = write!(out, " + {a} {name}");
    }
}

/// Renders `lp` in CPLEX-LP text format. Variables are named `x0, x1, ...`
/// unless `names` supplies one per column.
pub fn write_cplex_lp(lp: &LinearProgram, names: Option<&[String]>) -> String {
    let name = |j: usize| -> String {
        match names {
            Some(ns) => ns[j].clone(),
            None => format!("x{j}"),
        }
    };
    let mut out = String::from("\\ generated by drotree\nMinimize\n obj:");
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, first, c, &name(j));
            first = false;
        }
    }
    if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, " r{i}:");
        let mut first = true;
        for &(j, a) in &row.coefs {
            term(&mut out, first, a, &name(j));
            first = false;
        }
        if first {
            out.push_str(" 0 x0");
        }
        let _ = writeln!(out, " {} {}", row.sense.as_str(), row.rhs);
    }
    out.push_str("Bounds\n");
    for j in 0..lp.n_vars() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let n = name(j);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {n} free");
            }
            (true, true) => {
                let _ = writeln!(out, " {lo} <= {n} <= {hi}");
            }
            (true, false) => {
                if lo != 0.0 {
                    let _ = writeln!(out, " {n} >= {lo}");
                }
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {n} <= {hi}");
            }
        }
    }
    out.push_str("End\n");
    out
}
