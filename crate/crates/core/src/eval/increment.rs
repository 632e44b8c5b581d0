use crate::error::{Error, Result};

use super::report::{align, pair, MethodScores};

/// Relative growth of an error from the short to the long horizon, in
/// percent. Equal errors give 0 even when both are zero.
pub fn increment_percent(e8: f64, e12: f64) -> f64 {
    if e8 == e12 {
        return 0.0;
    }
    (e12 - e8) / e8 * 100.0
}

pub fn format_percent(p: f64) -> String {
    format!("{p:.2}%")
}

/// Average errors of one method at both horizons.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementRow {
    pub method: String,
    pub short: (f64, f64),
    pub long: (f64, f64),
}

impl IncrementRow {
    /// Pairs the short- and long-horizon scores of the same method.
    pub fn from_scores(short: &MethodScores, long: &MethodScores) -> Result<Self> {
        if short.method != long.method || short.mode != long.mode || short.k != long.k {
            return Err(Error::Config(format!(
                "cannot compare `{}` ({}, K={}) with `{}` ({}, K={})",
                short.method, short.mode, short.k, long.method, long.mode, long.k
            )));
        }
        let scenes = |m: &MethodScores| m.scenes.iter().map(|s| s.scene.clone()).collect::<Vec<_>>();
        if scenes(short) != scenes(long) {
            return Err(Error::Config(format!("`{}` was scored on different scenes", short.method)));
        }
        if short.t_pred >= long.t_pred {
            return Err(Error::Config(format!(
                "short horizon {} is not below long horizon {}",
                short.t_pred, long.t_pred
            )));
        }
        Ok(IncrementRow {
            method: short.method.clone(),
            short: short.average(),
            long: long.average(),
        })
    }

    /// `(ADE, FDE)` increments in percent.
    pub fn increments(&self) -> (f64, f64) {
        (
            increment_percent(self.short.0, self.long.0),
            increment_percent(self.short.1, self.long.1),
        )
    }
}

/// Table with the errors at both horizons and the increment per method.
pub fn increment_table(rows: &[IncrementRow], short: usize, long: usize) -> String {
    let mut cells = vec![vec![
        "Method".to_string(),
        format!("T_pred={short}"),
        format!("T_pred={long}"),
        "Increment".to_string(),
    ]];
    for r in rows {
        let (ia, if_) = r.increments();
        cells.push(vec![
            r.method.clone(),
            pair(r.short.0, r.short.1),
            pair(r.long.0, r.long.1),
            format!("{} / {}", format_percent(ia), format_percent(if_)),
        ]);
    }
    let mut out = String::from("# average ADE / FDE in meters; increment = (e_long - e_short) / e_short * 100%\n");
    out.push_str(&align(&cells));
    out
}
