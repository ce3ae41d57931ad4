use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CassError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLog {
    /// Mean relative L2 error on the test split; `None` on epochs without evaluation.
    pub test_l2: Option<f64>,
    /// Mean AE objective over the epoch's minibatches.
    pub ae_loss: f64,
    /// Mean discriminator objective; `None` in baseline mode.
    pub disc_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub components: Vec<ComponentLog>,
    pub seconds: f64,
}

impl EpochLog {
    /// Equality ignoring wall time.
    pub fn same_metrics(&self, other: &EpochLog) -> bool {
        self.epoch == other.epoch && self.components == other.components
    }
}

const HEADER: &str = "epoch,component,test_l2,ae_loss,disc_loss,seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (epoch, component); missing values are empty fields.
pub fn write_log_csv(logs: &[EpochLog], path: &Path) -> Result<()> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for log in logs {
        for (i, c) in log.components.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                log.epoch,
                i,
                opt(c.test_l2),
                c.ae_loss,
                opt(c.disc_loss),
                log.seconds
            )
            .expect("writing to a String");
        }
    }
    std::fs::write(path, out).map_err(|e| CassError::io(path, e))
}

pub fn read_log_csv(path: &Path) -> Result<Vec<EpochLog>> {
    let text = std::fs::read_to_string(path).map_err(|e| CassError::io(path, e))?;
    let bad = |line: usize, why: &str| CassError::format(path, format!("line {line}: {why}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(bad(1, "missing or unexpected header")),
    }
    let mut logs: Vec<EpochLog> = Vec::new();
    for (n, line) in lines {
        let n = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(n, "expected 6 fields"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(n, "malformed number"));
        let maybe = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
        let epoch: usize = f[0].trim().parse().map_err(|_| bad(n, "malformed epoch"))?;
        let component: usize = f[1].trim().parse().map_err(|_| bad(n, "malformed component"))?;
        let entry = ComponentLog {
            test_l2: maybe(f[2])?,
            ae_loss: num(f[3])?,
            disc_loss: maybe(f[4])?,
        };
        let seconds = num(f[5])?;
        match logs.last_mut() {
            Some(last) if last.epoch == epoch => {
                if component != last.components.len() {
                    return Err(bad(n, "components out of order"));
                }
                last.components.push(entry);
            }
            _ => {
                if component != 0 {
                    return Err(bad(n, "epoch does not start at component 0"));
                }
                logs.push(EpochLog {
                    epoch,
                    components: vec![entry],
                    seconds,
                });
            }
        }
    }
    Ok(logs)
}
