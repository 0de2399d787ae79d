use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sig17;

pub const METRICS_HEADER: &str = "iter,critic_obj,e_log_q,l_i,mean_kl,accepted,posterior_acc,wall_ms";

/// One row of the per-iteration log. Absent values are written as `-`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterMetrics {
    pub iter: usize,
    pub critic_obj: f64,
    pub e_log_q: f64,
    /// `e_log_q + H(c)`.
    pub l_i: f64,
    pub mean_kl: f64,
    pub accepted: bool,
    pub posterior_acc: Option<f64>,
    pub wall_ms: Option<u64>,
}

impl IterMetrics {
    pub fn to_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},",
            self.iter,
            sig17::format(self.critic_obj),
            sig17::format(self.e_log_q),
            sig17::format(self.l_i),
            sig17::format(self.mean_kl),
            u8::from(self.accepted),
        );
        match self.posterior_acc {
            Some(a) => s.push_str(&sig17::format(a)),
            None => s.push('-'),
        }
        s.push(',');
        match self.wall_ms {
            Some(ms) => {
                let _ = write!(s, "{ms}");
            }
            None => s.push('-'),
        }
        s
    }

    pub fn parse_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return None;
        }
        fn opt(x: &str) -> Option<&str> {
            (x != "-").then_some(x)
        }
        Some(Self {
            iter: f[0].parse().ok()?,
            critic_obj: f[1].parse().ok()?,
            e_log_q: f[2].parse().ok()?,
            l_i: f[3].parse().ok()?,
            mean_kl: f[4].parse().ok()?,
            accepted: match f[5] {
                "1" => true,
                "0" => false,
                _ => return None,
            },
            posterior_acc: match opt(f[6]) {
                Some(x) => Some(x.parse().ok()?),
                None => None,
            },
            wall_ms: match opt(f[7]) {
                Some(x) => Some(x.parse().ok()?),
                None => None,
            },
        })
    }
}

pub fn write_metrics(rows: &[IterMetrics], path: &Path) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_row());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: "line 1: unexpected metrics header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            IterMetrics::parse_row(l).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: malformed metrics row", i + 1),
            })
        })
        .collect()
}
