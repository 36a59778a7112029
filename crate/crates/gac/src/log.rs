//! Comma-separated training logs.

use std::io::Write;
use std::path::Path;

use gac_core::trainer::LogRow;

use crate::{GacError, Result};

pub const HEADER: &str = "step,test_return_mean,test_return_stderr,critic_loss,actor_loss,eta,omega,kl_realized,entropy,kappa";

/// 9 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn format_row(row: &LogRow) -> String {
    let vals = [
        row.test_return_mean,
        row.test_return_stderr,
        row.critic_loss,
        row.actor_loss,
        row.eta,
        row.omega,
        row.kl_realized,
        row.entropy,
        row.kappa,
    ];
    let mut s = row.step.to_string();
    for v in vals {
        s.push(',');
        s.push_str(&format_value(v));
    }
    s
}

/// Writes the header on creation and flushes after every row, so a log cut
/// short by a failure still holds everything logged so far.
pub struct CsvLog<W: Write> {
    out: W,
}

impl<W: Write> CsvLog<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write_row(&mut self, row: &LogRow) -> std::io::Result<()> {
        writeln!(self.out, "{}", format_row(row))?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Reads a log back. `path` is only used in error messages.
pub fn parse_log(text: &str, path: &Path) -> Result<Vec<LogRow>> {
    let err = |line: usize, message: String| GacError::Format { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(err(1, format!("expected header `{HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 10 {
            return Err(err(i + 1, format!("expected 10 fields, found {}", fields.len())));
        }
        let step = fields[0].parse::<usize>().map_err(|e| err(i + 1, format!("bad step: {e}")))?;
        let mut v = [0.0; 9];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().map_err(|e| err(i + 1, format!("bad value `{f}`: {e}")))?;
        }
        if rows.last().is_some_and(|r: &LogRow| r.step >= step) {
            return Err(err(i + 1, "steps must increase".into()));
        }
        rows.push(LogRow {
            step,
            test_return_mean: v[0],
            test_return_stderr: v[1],
            critic_loss: v[2],
            actor_loss: v[3],
            eta: v[4],
            omega: v[5],
            kl_realized: v[6],
            entropy: v[7],
            kappa: v[8],
        });
    }
    Ok(rows)
}

pub fn load_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| GacError::io(path, e))?;
    parse_log(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, ret: f64) -> LogRow {
        LogRow {
            step,
            test_return_mean: ret,
            test_return_stderr: 0.5,
            critic_loss: f64::NAN,
            actor_loss: 1.0 / 3.0,
            eta: 1e-7,
            omega: 2.0,
            kl_realized: 1e-4,
            entropy: -0.5,
            kappa: -0.6,
        }
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_row(&row(5, -123.456789012)), "5,-1.23456789e2,5.00000000e-1,NaN,3.33333333e-1,1.00000000e-7,2.00000000e0,1.00000000e-4,-5.00000000e-1,-6.00000000e-1");
    }

    #[test]
    fn logs_read_back() {
        let mut log = CsvLog::new(Vec::new()).unwrap();
        log.write_row(&row(0, -1.0)).unwrap();
        log.write_row(&row(10, -0.5)).unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        assert!(text.starts_with(HEADER));
        let back = parse_log(&text, Path::new("mem")).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].step, 10);
        assert!(back[0].critic_loss.is_nan());
        assert!(parse_log(&format!("{HEADER}\n3,1,1,1,1,1,1,1,1,1\n2,1,1,1,1,1,1,1,1,1\n"), Path::new("mem")).is_err());
        assert!(parse_log("step\n", Path::new("mem")).is_err());
    }
}
