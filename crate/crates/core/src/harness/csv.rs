//! CSV encoding for trajectories, aggregates and cell manifests.

use std::io::{self, Write};

pub const TRAJECTORY_HEADER: &str =
    "study,cell,replication,t,x0,x_probe,reward,updated,regret_inst,regret_cum";

pub const AGGREGATE_HEADER: &str =
    "study,cell,t,reps,x0_mean,x0_lower,x0_upper,regret_cum_mean,regret_cum_lower,regret_cum_upper";

/// One trajectory row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub study: String,
    pub cell: usize,
    pub replication: usize,
    pub t: u64,
    pub x0: f64,
    pub x_probe: f64,
    pub reward: f64,
    pub updated: bool,
    pub regret_inst: f64,
    pub regret_cum: f64,
}

/// Decimal encoding rounded to 12 significant digits.
///
/// Plain notation for magnitudes in `[1e-5, 1e15)`, exponent notation otherwise.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let magnitude = rounded.abs();
    if (1e-5..1e15).contains(&magnitude) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn write_header<W: Write>(w: &mut W) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")
}

pub fn write_row<W: Write>(w: &mut W, row: &CsvRow) -> io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{}",
        row.study,
        row.cell,
        row.replication,
        row.t,
        format_number(row.x0),
        format_number(row.x_probe),
        format_number(row.reward),
        u8::from(row.updated),
        format_number(row.regret_inst),
        format_number(row.regret_cum),
    )
}

/// Header line followed by one line per row.
pub fn emit_csv<'a, W, I>(w: &mut W, rows: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CsvRow>,
{
    write_header(w)?;
    for row in rows {
        write_row(w, row)?;
    }
    Ok(())
}
