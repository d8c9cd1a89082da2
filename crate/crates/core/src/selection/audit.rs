//! Selection audit log: one CSV row per scored record.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::rng::stable_hash;

pub const AUDIT_HEADER: &str = "step,pool_round,record_hash,sum_loss,tau,keep_prob,kept";

/// `kept` means the record entered the training batch: selected records
/// beyond the target batch size are logged with `kept = false`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub step: u64,
    pub pool_round: usize,
    pub record_hash: u64,
    pub sum_loss: Option<f64>,
    pub tau: Option<f64>,
    pub keep_prob: f64,
    pub kept: bool,
}

pub fn record_hash(tokens: &[u32]) -> u64 {
    let bytes: Vec<u8> = tokens.iter().flat_map(|t| t.to_le_bytes()).collect();
    stable_hash(&bytes)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

impl AuditRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:016x},{},{},{},{}",
            self.step,
            self.pool_round,
            self.record_hash,
            opt(self.sum_loss),
            opt(self.tau),
            self.keep_prob,
            u8::from(self.kept)
        )
    }

    pub fn from_csv(line: &str, location: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(location, format!("expected 7 fields, found {}", f.len())));
        }
        let bad = |what: &str| Error::parse(location, format!("bad {what}"));
        let num = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        Ok(AuditRow {
            step: f[0].parse().map_err(|_| bad("step"))?,
            pool_round: f[1].parse().map_err(|_| bad("pool_round"))?,
            record_hash: u64::from_str_radix(f[2], 16).map_err(|_| bad("record_hash"))?,
            sum_loss: num(f[3], "sum_loss")?,
            tau: num(f[4], "tau")?,
            keep_prob: f[5].parse().map_err(|_| bad("keep_prob"))?,
            kept: match f[6] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("kept")),
            },
        })
    }
}

pub fn write_audit_log<W: Write>(rows: &[AuditRow], header: bool, mut w: W) -> Result<()> {
    if header {
        writeln!(w, "{AUDIT_HEADER}")?;
    }
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn read_audit_log<R: BufRead>(r: R) -> Result<Vec<AuditRow>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || (n == 0 && line == AUDIT_HEADER) {
            continue;
        }
        out.push(AuditRow::from_csv(&line, &format!("audit line {}", n + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            AuditRow {
                step: 3,
                pool_round: 1,
                record_hash: record_hash(&[0, 13, 2, 5, 1]),
                sum_loss: Some(12.5),
                tau: Some(13.0),
                keep_prob: 0.9615384615384616,
                kept: true,
            },
            AuditRow {
                step: 3,
                pool_round: 2,
                record_hash: 7,
                sum_loss: None,
                tau: None,
                keep_prob: 1.0,
                kept: false,
            },
        ];
        let mut buf = Vec::new();
        write_audit_log(&rows, true, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(AUDIT_HEADER));
        assert!(text.contains(",,,1,0\n"));
        assert_eq!(read_audit_log(&buf[..]).unwrap(), rows);
        assert!(read_audit_log("1,2,3\n".as_bytes()).is_err());
    }
}
