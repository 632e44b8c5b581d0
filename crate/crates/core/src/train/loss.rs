use crate::dataio::Point;
use crate::error::{Error, Result};
use crate::numeric::{Graph, Var};

fn check_pair(op: &'static str, pred: &[Point], gt: &[Point]) -> Result<()> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::shape(op, format!("{} steps", gt.len()), pred.len().to_string()));
    }
    Ok(())
}

/// Mean over steps of the squared Euclidean error.
pub fn mse_loss(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_pair("mse_loss", pred, gt)?;
    let s: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2))
        .sum();
    Ok(s / gt.len() as f64)
}

/// Smallest [`mse_loss`] over the samples.
pub fn variety_loss(preds: &[Vec<Point>], gt: &[Point]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Config("variety loss over zero samples".into()));
    }
    preds
        .iter()
        .map(|p| mse_loss(p, gt))
        .try_fold(f64::INFINITY, |m, l| l.map(|l| m.min(l)))
}

/// [`mse_loss`] on the graph; `pred` holds one 2-vector per step.
pub fn mse_vars(g: &mut Graph, pred: &[Var], gt: &[Point]) -> Result<Var> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::shape("mse_loss", format!("{} steps", gt.len()), pred.len().to_string()));
    }
    let terms: Vec<Var> = pred
        .iter()
        .zip(gt)
        .map(|(&p, t)| {
            let t = g.input(t);
            let d = g.sub(p, t);
            let sq = g.mul(d, d);
            g.sum(sq)
        })
        .collect();
    let all = g.concat(&terms);
    let total = g.sum(all);
    Ok(g.scale(total, 1.0 / gt.len() as f64))
}

/// Best-of-K on the graph: returns the loss node of the best sample, so
/// gradients reach only that sample. Ties go to the lowest index.
pub fn variety_vars(g: &mut Graph, preds: &[Vec<Var>], gt: &[Point]) -> Result<Var> {
    let mut best: Option<(f64, Var)> = None;
    for p in preds {
        let l = mse_vars(g, p, gt)?;
        let v = g.scalar(l);
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, l));
        }
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| Error::Config("variety loss over zero samples".into()))
}

/// `KL(N(μ, σ²) ‖ N(0, I))` with `σ² = exp(logvar)`.
pub fn kl_vars(g: &mut Graph, mu: Var, logvar: Var) -> Var {
    let var = g.exp(logvar);
    let mu2 = g.mul(mu, mu);
    let a = g.add(var, mu2);
    let a = g.sub(a, logvar);
    let a = g.add_scalar(a, -1.0);
    let s = g.sum(a);
    g.scale(s, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gaussian_sample, stream_rng};

    fn random_track(seed: u64, n: usize) -> Vec<Point> {
        let v = gaussian_sample(&mut stream_rng(seed, &[]), 2 * n);
        v.data().chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    #[test]
    fn mse_examples() {
        let gt = random_track(1, 12);
        assert_eq!(mse_loss(&gt, &gt).unwrap(), 0.0);
        let off: Vec<Point> = gt.iter().map(|p| [p[0] + 1.0, p[1]]).collect();
        assert!((mse_loss(&off, &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!(mse_loss(&gt[..3], &gt).is_err());
    }

    #[test]
    fn mse_matches_per_step_oracle() {
        let (a, b) = (random_track(2, 12), random_track(3, 12));
        let mut s = 0.0;
        for t in 0..12 {
            let dx = a[t][0] - b[t][0];
            let dy = a[t][1] - b[t][1];
            s += dx * dx + dy * dy;
        }
        assert!((mse_loss(&a, &b).unwrap() - s / 12.0).abs() < 1e-12);
    }

    #[test]
    fn variety_examples() {
        let gt = random_track(4, 12);
        let samples: Vec<Vec<Point>> = (10..15).map(|s| random_track(s, 12)).collect();
        assert_eq!(variety_loss(&samples[..1], &gt).unwrap(), mse_loss(&samples[0], &gt).unwrap());
        let mut with_gt = samples.clone();
        with_gt.push(gt.clone());
        assert_eq!(variety_loss(&with_gt, &gt).unwrap(), 0.0);
        let mean: f64 = samples.iter().map(|p| mse_loss(p, &gt).unwrap()).sum::<f64>() / 5.0;
        assert!(variety_loss(&samples, &gt).unwrap() <= mean);
        assert!(variety_loss(&[], &gt).is_err());
    }

    #[test]
    fn graph_losses_agree_with_values() {
        let gt = random_track(5, 6);
        let samples: Vec<Vec<Point>> = (20..24).map(|s| random_track(s, 6)).collect();
        let mut g = Graph::new();
        let vars: Vec<Vec<Var>> = samples.iter().map(|s| s.iter().map(|p| g.input(p)).collect()).collect();
        let l = mse_vars(&mut g, &vars[0], &gt).unwrap();
        assert!((g.scalar(l) - mse_loss(&samples[0], &gt).unwrap()).abs() < 1e-12);
        let v = variety_vars(&mut g, &vars, &gt).unwrap();
        assert!((g.scalar(v) - variety_loss(&samples, &gt).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn kl_of_standard_normal_is_zero() {
        let mut g = Graph::new();
        let mu = g.zeros(4);
        let lv = g.zeros(4);
        let k = kl_vars(&mut g, mu, lv);
        assert_eq!(g.scalar(k), 0.0);
        let mu = g.input(&[1.0, 0.0]);
        let lv = g.input(&[0.0, 1.0]);
        let k = kl_vars(&mut g, mu, lv);
        // 0.5 * ((1 + 1 - 0 - 1) + (e + 0 - 1 - 1))
        assert!((g.scalar(k) - 0.5 * (1.0 + std::f64::consts::E - 2.0)).abs() < 1e-12);
    }
}
