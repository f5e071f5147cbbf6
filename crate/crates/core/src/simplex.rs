//! Bounded Nelder–Mead maximisation.
//!
//! The search runs in the unit box obtained by rescaling each parameter to
//! its bounds; trial points are clamped back into the box. Convergence is
//! declared when every vertex lies within `tolerance` of the best vertex in
//! every original (unscaled) coordinate.

use crate::error::Result;
use crate::exec::Execution;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexOptions {
    pub max_evaluations: usize,
    pub tolerance: f64,
    /// Initial edge length as a fraction of each bound interval.
    pub initial_step: f64,
    pub execution: Execution,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best-so-far value after each evaluation.
    pub trace: Vec<f64>,
}

struct Search<'a, F> {
    f: &'a F,
    lower: &'a [f64],
    width: Vec<f64>,
    opts: SimplexOptions,
    evaluations: usize,
    best: f64,
    trace: Vec<f64>,
}

impl<F> Search<'_, F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn to_params(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower)
            .zip(&self.width)
            .map(|((u, lo), w)| lo + u.clamp(0.0, 1.0) * w)
            .collect()
    }

    fn record(&mut self, values: &[f64]) {
        for &v in values {
            self.evaluations += 1;
            if v > self.best {
                self.best = v;
            }
            self.trace.push(self.best);
        }
    }

    fn eval_batch(&mut self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let params: Vec<Vec<f64>> = points.iter().map(|u| self.to_params(u)).collect();
        let f = self.f;
        let values = self
            .opts
            .execution
            .map(&params, |p| f(p).map(sanitize))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        self.record(&values);
        Ok(values)
    }

    fn eval(&mut self, u: &[f64]) -> Result<f64> {
        let v = sanitize((self.f)(&self.to_params(u))?);
        self.record(&[v]);
        Ok(v)
    }

    fn spread(&self, simplex: &[(Vec<f64>, f64)]) -> f64 {
        let best = &simplex[0].0;
        simplex[1..]
            .iter()
            .flat_map(|(u, _)| u.iter().zip(best).zip(&self.width).map(|((a, b), w)| (a - b).abs() * w))
            .fold(0.0, f64::max)
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn clamp_unit(u: Vec<f64>) -> Vec<f64> {
    u.into_iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

fn affine(from: &[f64], towards: &[f64], t: f64) -> Vec<f64> {
    clamp_unit(from.iter().zip(towards).map(|(a, b)| a + t * (b - a)).collect())
}

/// Maximises `f` inside `[lower, upper]` starting from `start`.
pub(crate) fn maximize<F>(
    f: &F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: SimplexOptions,
) -> Result<SimplexOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = start.len();
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut search = Search {
        f,
        lower,
        width,
        opts,
        evaluations: 0,
        best: f64::NEG_INFINITY,
        trace: Vec::new(),
    };

    let origin: Vec<f64> = start
        .iter()
        .zip(lower)
        .zip(&search.width)
        .map(|((x, lo), w)| if *w > 0.0 { ((x - lo) / w).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    let mut points = vec![origin.clone()];
    for d in 0..dim {
        let mut p = origin.clone();
        p[d] = if p[d] + opts.initial_step <= 1.0 {
            p[d] + opts.initial_step
        } else {
            p[d] - opts.initial_step
        };
        points.push(p);
    }
    let values = search.eval_batch(&points)?;
    let mut simplex: Vec<(Vec<f64>, f64)> = points.into_iter().zip(values).collect();

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        if search.spread(&simplex) < opts.tolerance {
            converged = true;
            break;
        }
        if search.evaluations >= opts.max_evaluations {
            break;
        }

        let worst = simplex[dim].clone();
        let f_second_worst = simplex[dim - 1].1;
        let f_best = simplex[0].1;
        let mut centroid = vec![0.0; dim];
        for (u, _) in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(u) {
                *c += x / dim as f64;
            }
        }

        let reflected = affine(&centroid, &worst.0, -REFLECT);
        let f_reflected = search.eval(&reflected)?;

        if f_reflected > f_best {
            let expanded = affine(&centroid, &reflected, EXPAND);
            let f_expanded = search.eval(&expanded)?;
            simplex[dim] = if f_expanded > f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected > f_second_worst {
            simplex[dim] = (reflected, f_reflected);
            continue;
        }

        let (contracted, threshold) = if f_reflected > worst.1 {
            (affine(&centroid, &reflected, CONTRACT), f_reflected)
        } else {
            (affine(&centroid, &worst.0, CONTRACT), worst.1)
        };
        let f_contracted = search.eval(&contracted)?;
        if f_contracted > threshold {
            simplex[dim] = (contracted, f_contracted);
            continue;
        }

        let anchor = simplex[0].0.clone();
        let shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|(u, _)| affine(&anchor, u, SHRINK))
            .collect();
        let values = search.eval_batch(&shrunk)?;
        for (slot, (u, v)) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(values)) {
            *slot = (u, v);
        }
    }

    let (best_u, value) = simplex[0].clone();
    Ok(SimplexOutcome {
        best: search.to_params(&best_u),
        value,
        evaluations: search.evaluations,
        converged,
        trace: search.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(max_evaluations: usize) -> SimplexOptions {
        SimplexOptions {
            max_evaluations,
            tolerance: 1e-9,
            initial_step: 0.1,
            execution: Execution::Sequential,
        }
    }

    #[test]
    fn finds_interior_maximum() {
        let f = |x: &[f64]| Ok(-((x[0] - 0.3).powi(2) + 4.0 * (x[1] + 0.7).powi(2) + (x[2] - 1.1).powi(2)));
        let r = maximize(&f, &[0.0, 0.0, 0.0], &[-2.0; 3], &[2.0; 3], opts(5000)).unwrap();
        assert!(r.converged);
        for (x, want) in r.best.iter().zip([0.3, -0.7, 1.1]) {
            assert!((x - want).abs() < 1e-7, "{:?}", r.best);
        }
        assert_eq!(r.trace.len(), r.evaluations);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn respects_bounds() {
        // unconstrained optimum at (5, -5) lies outside the box
        let f = |x: &[f64]| Ok(-((x[0] - 5.0).powi(2) + (x[1] + 5.0).powi(2)));
        let r = maximize(&f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], opts(5000)).unwrap();
        assert!((r.best[0] - 1.0).abs() < 1e-7 && r.best[1].abs() < 1e-7, "{:?}", r.best);
        assert!(r.best.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn budget_exhaustion_is_not_an_error() {
        let f = |x: &[f64]| Ok(-(x[0] * x[0] + x[1] * x[1]));
        let r = maximize(&f, &[0.9, -0.8], &[-1.0, -1.0], &[1.0, 1.0], opts(10)).unwrap();
        assert!(!r.converged);
        assert!(r.evaluations <= 12);
    }

    #[test]
    fn flat_objective_still_converges() {
        let f = |_: &[f64]| Ok(1.0);
        let r = maximize(&f, &[0.2, 0.4], &[0.0, 0.0], &[1.0, 1.0], opts(5000)).unwrap();
        assert!(r.converged);
    }
}
