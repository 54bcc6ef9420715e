//! CSV result files.

use std::io::Write;
use std::path::Path;

use crate::scenario::ResultSet;
use crate::CliError;

pub const HEADER: [&str; 8] = [
    "snr_db",
    "scheme",
    "user",
    "L_k",
    "analytic_T",
    "mc_T",
    "mc_stderr",
    "load_R",
];

/// Formats a float with 8 significant digits, fixed notation for moderate
/// exponents and scientific otherwise (the `%.8g` convention).
pub fn format_sig8(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.7e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..8).contains(&exp) {
        let fixed = format!("{:.*}", (7 - exp).max(0) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the result table to any sink.
pub fn write_csv<W: Write>(results: &ResultSet, sink: W) -> Result<(), CliError> {
    if results.is_empty() {
        return Err(CliError::Runtime("no results to write".into()));
    }
    let io = |e: csv::Error| CliError::Runtime(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER).map_err(io)?;
    let opt = |x: Option<f64>| x.map(format_sig8).unwrap_or_default();
    for r in &results.rows {
        w.write_record([
            format_sig8(r.snr_db),
            r.scheme.name().to_string(),
            r.user.to_string(),
            r.useful_symbols.to_string(),
            format_sig8(r.analytic),
            opt(r.mc),
            opt(r.mc_stderr),
            format_sig8(r.load),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("writing CSV: {e}")))
}

pub fn emit_csv(results: &ResultSet, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    write_csv(results, std::io::BufWriter::new(file))
}
