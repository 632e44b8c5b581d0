use crate::dataio::Point;
use crate::error::{Error, Result};
use crate::model::ForecastSet;

/// Euclidean distance per predicted step.
pub fn displacement_errors(pred: &[Point], gt: &[Point]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::shape("displacement", format!("{} steps", gt.len()), pred.len().to_string()));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect())
}

/// Average displacement error over the predicted steps.
pub fn ade(pred: &[Point], gt: &[Point]) -> Result<f64> {
    let d = displacement_errors(pred, gt)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Displacement error at the last predicted step.
pub fn fde(pred: &[Point], gt: &[Point]) -> Result<f64> {
    let d = displacement_errors(pred, gt)?;
    Ok(d[d.len() - 1])
}

/// Smallest ADE and smallest FDE over `samples`, each minimized on its own.
pub fn best_of_k_points(samples: &[Vec<Point>], gt: &[Point]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Config("best-of-K over zero samples".into()));
    }
    let mut best = (f64::INFINITY, f64::INFINITY);
    for s in samples {
        let d = displacement_errors(s, gt)?;
        let a = d.iter().sum::<f64>() / d.len() as f64;
        best = (best.0.min(a), best.1.min(d[d.len() - 1]));
    }
    Ok(best)
}

/// Best-of-K on a forecast set against world-frame ground truth. The set
/// must cover the whole horizon in order.
pub fn best_of_k(forecasts: &ForecastSet, gt: &[Point]) -> Result<(f64, f64)> {
    let full = forecasts.steps.iter().copied().eq(1..=gt.len());
    if !full {
        return Err(Error::shape("best_of_k", format!("steps 1..={}", gt.len()), format!("{:?}", forecasts.steps)));
    }
    best_of_k_points(&forecasts.world_samples(), gt)
}
