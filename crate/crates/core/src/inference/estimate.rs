use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::grid::GGrid;
use super::likelihood::LikelihoodSurface;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub g_mle: f64,
    /// Whether `g_mle` is the vertex of a parabola through the grid maximum.
    pub refined: bool,
    pub posterior_mean: f64,
    pub posterior_sd: f64,
    pub jump_index: usize,
    pub time: f64,
}

/// Softmax of `loglik`; `−∞` entries get zero weight. All-excluded input
/// yields all zeros.
pub fn posterior(loglik: &[f64]) -> Vec<f64> {
    let max = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; loglik.len()];
    }
    let weights: Vec<f64> = loglik.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

pub(crate) fn estimate_from_loglik(
    grid: &GGrid,
    loglik: &[f64],
    refine: bool,
    jump_index: usize,
    time: f64,
) -> Result<Estimate> {
    if let Some(bad) = loglik.iter().find(|l| l.is_nan() || **l == f64::INFINITY) {
        return Err(Error::Numeric(format!("invalid log-likelihood value {bad}")));
    }
    let values = grid.values();
    let mut best: Option<usize> = None;
    for (k, &l) in loglik.iter().enumerate() {
        if l > f64::NEG_INFINITY && best.is_none_or(|b| l > loglik[b]) {
            best = Some(k);
        }
    }
    let Some(k) = best else {
        return Err(Error::NoEstimate(
            "every candidate coupling has zero likelihood".into(),
        ));
    };

    let step = grid.step();
    let mut g_mle = values[k];
    let mut refined = false;
    if refine && k > 0 && k + 1 < values.len() {
        let (lm, l0, lp) = (loglik[k - 1], loglik[k], loglik[k + 1]);
        let curvature = lm - 2.0 * l0 + lp;
        if lm.is_finite() && lp.is_finite() && curvature < 0.0 {
            let offset = 0.5 * step * (lm - lp) / curvature;
            g_mle = values[k] + offset.clamp(-step, step);
            refined = true;
        }
    }

    let p = posterior(loglik);
    let mean: f64 = p.iter().zip(values).map(|(w, g)| w * g).sum();
    let var: f64 = p.iter().zip(values).map(|(w, g)| w * (g - mean).powi(2)).sum();

    Ok(Estimate {
        g_mle,
        refined,
        posterior_mean: mean,
        posterior_sd: var.sqrt(),
        jump_index,
        time,
    })
}

/// Maximum-likelihood and posterior summary of a surface under a uniform
/// prior. Ties resolve to the smallest `g`.
pub fn posterior_and_mle(surface: &LikelihoodSurface, refine: bool) -> Result<Estimate> {
    estimate_from_loglik(&surface.grid, &surface.loglik, refine, surface.jump_index, surface.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surface(grid: GGrid, loglik: Vec<f64>) -> LikelihoodSurface {
        LikelihoodSurface { grid, loglik, history: None, record_ref: String::new(), jump_index: 0, time: 0.0 }
    }

    #[test]
    fn flat_surface_picks_smallest_g() {
        let grid = GGrid::new(35.0, 57.0, 1.0).unwrap();
        let s = surface(grid, vec![-3.0; 23]);
        let est = posterior_and_mle(&s, true).unwrap();
        assert_eq!(est.g_mle, 35.0);
        assert!(!est.refined);
        assert!(s.posterior().iter().all(|&p| (p - 1.0 / 23.0).abs() < 1e-15));
        assert!((est.posterior_mean - 46.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_parabola_vertex() {
        let grid = GGrid::new(44.0, 46.0, 1.0).unwrap();
        let est = posterior_and_mle(&surface(grid, vec![0.0, 1.0, 0.0]), true).unwrap();
        assert_eq!(est.g_mle, 45.0);
        assert!(est.refined);
    }

    #[test]
    fn vertex_is_clamped_and_offset() {
        let grid = GGrid::new(44.0, 46.0, 1.0).unwrap();
        // parabola −(g − 45.25)² sampled at 44, 45, 46
        let ll: Vec<f64> = [44.0, 45.0, 46.0].iter().map(|g: &f64| -(g - 45.25).powi(2)).collect();
        let est = posterior_and_mle(&surface(grid.clone(), ll), true).unwrap();
        assert!((est.g_mle - 45.25).abs() < 1e-12);
        let raw = posterior_and_mle(&surface(grid, vec![0.0, 1.0, 0.5]), false).unwrap();
        assert_eq!(raw.g_mle, 45.0);
    }

    #[test]
    fn boundary_max_is_not_refined() {
        let grid = GGrid::new(44.0, 46.0, 1.0).unwrap();
        let est = posterior_and_mle(&surface(grid, vec![0.0, 1.0, 2.0]), true).unwrap();
        assert_eq!(est.g_mle, 46.0);
        assert!(!est.refined);
    }

    #[test]
    fn excluded_candidates() {
        let grid = GGrid::new(44.0, 47.0, 1.0).unwrap();
        let ninf = f64::NEG_INFINITY;
        let s = surface(grid.clone(), vec![ninf, -1.0, -2.0, ninf]);
        let est = posterior_and_mle(&s, true).unwrap();
        assert_eq!(est.g_mle, 45.0);
        let p = s.posterior();
        assert_eq!(p[0], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let none = surface(grid, vec![ninf; 4]);
        assert!(matches!(posterior_and_mle(&none, true), Err(Error::NoEstimate(_))));
    }

    proptest! {
        #[test]
        fn shift_invariance(ll in proptest::collection::vec(-50.0f64..0.0, 23), shift in -1e3f64..1e3) {
            let grid = GGrid::new(35.0, 57.0, 1.0).unwrap();
            let shifted: Vec<f64> = ll.iter().map(|l| l + shift).collect();
            let a = surface(grid.clone(), ll);
            let b = surface(grid, shifted);
            let (pa, pb) = (a.posterior(), b.posterior());
            prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((pb.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            let ea = posterior_and_mle(&a, false).unwrap();
            let eb = posterior_and_mle(&b, false).unwrap();
            prop_assert_eq!(ea.g_mle, eb.g_mle);
        }
    }
}
