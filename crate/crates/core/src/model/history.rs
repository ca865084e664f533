use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "iter,l_gan,l_pix,l_fea,scalar,w_gan,w_pix,w_fea,clamped,lr";

/// One generator step of the adversarial phase.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub iter: usize,
    /// Raw losses `[gan, pixel, feature]`.
    pub losses: [f64; 3],
    pub scalar: f64,
    pub weights: [f64; 3],
    /// Bit `k` is set when loss `k` hit its clamp floor.
    pub clamped: u8,
    pub lr: f64,
}

impl HistoryRecord {
    pub fn clamp_events(&self) -> u32 {
        self.clamped.count_ones()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: HistoryRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Iterations with at least one clamped loss.
    pub fn clamp_events(&self) -> usize {
        self.records.iter().filter(|r| r.clamped != 0).count()
    }

    /// Floats use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let [lg, lp, lf] = r.losses;
            let [wg, wp, wf] = r.weights;
            writeln!(
                out,
                "{},{lg},{lp},{lf},{},{wg},{wp},{wf},{},{}",
                r.iter, r.scalar, r.clamped, r.lr
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: "history".into(),
            line,
            msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(parse_err(1, "missing history header".into()));
        }
        let mut history = Self::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(parse_err(n, format!("expected 10 fields, found {}", f.len())));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| parse_err(n, format!("bad number {:?}", f[k])));
            history.push(HistoryRecord {
                iter: f[0].parse().map_err(|_| parse_err(n, "bad iteration".into()))?,
                losses: [num(1)?, num(2)?, num(3)?],
                scalar: num(4)?,
                weights: [num(5)?, num(6)?, num(7)?],
                clamped: f[8].parse().map_err(|_| parse_err(n, "bad clamp mask".into()))?,
                lr: num(9)?,
            });
        }
        Ok(history)
    }
}

/// Pixel losses of the pretraining phase as `iter,l_pix,lr` rows.
pub fn pretrain_csv(losses: &[f64], lr: f64) -> String {
    let mut out = String::from("iter,l_pix,lr\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{i},{l},{lr}").expect("writing to a String cannot fail");
    }
    out
}
