//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are projected onto the box before evaluation. A run stops
//! once every vertex of the simplex is within `ftol` of the best one, i.e. a
//! full polytope update cannot gain more than `ftol`.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub ftol: f64,
    pub max_iterations: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            ftol: 1e-8,
            max_iterations: 5_000,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Bounded<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Bounded<'_, F> {
    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(self.lower).zip(self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn eval(&mut self, x: &mut [f64]) -> f64 {
        self.project(x);
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge
/// lengths `step`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    let mut b = Bounded {
        f,
        lower,
        upper,
        evaluations: 0,
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let f0 = b.eval(&mut start);
    simplex.push((start.clone(), f0));
    for j in 0..n {
        let mut v = start.clone();
        v[j] += step[j];
        if v[j] > upper[j] {
            v[j] = start[j] - step[j];
        }
        let fv = b.eval(&mut v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && (worst - best).abs() < opts.ftol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let mut xr = along(opts.reflection);
        let fr = b.eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(opts.reflection * opts.expansion);
            let fe = b.eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (mut xc, fc) = if fr < simplex[n].1 {
            let mut xc = along(opts.reflection * opts.contraction);
            let fc = b.eval(&mut xc);
            (xc, fc)
        } else {
            let mut xc = along(-opts.contraction);
            let fc = b.eval(&mut xc);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (std::mem::take(&mut xc), fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (x, a) in v.iter_mut().zip(&anchor) {
                *x = a + opts.shrink * (*x - a);
            }
            *fv = b.eval(v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations: b.evaluations,
        converged,
    }
}

/// Compass search polish: for each step size, move along coordinate
/// directions while that strictly improves `f`. On return no in-box move of
/// the last step size along a single coordinate improves `f`.
pub fn compass_polish<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &mut Vec<f64>,
    value: &mut f64,
    steps: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> usize {
    let mut evaluations = 0;
    for &h in steps {
        loop {
            let mut improved = false;
            for j in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut trial = x.clone();
                    trial[j] = (trial[j] + dir * h).clamp(lower[j], upper[j]);
                    if trial[j] == x[j] {
                        continue;
                    }
                    evaluations += 1;
                    let v = f(&trial);
                    if v < *value {
                        *x = trial;
                        *value = v;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    evaluations
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + (x[2] - 2.0).powi(2);
        let m = minimize(
            f,
            &[0.0, 0.0, 0.0],
            &[0.5, 0.5, 0.5],
            &[-10.0; 3],
            &[10.0; 3],
            &NelderMeadOptions { ftol: 1e-14, ..Default::default() },
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.5).abs() < 1e-4 && (m.x[1] + 0.5).abs() < 1e-4 && (m.x[2] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn respects_box() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 1.0).powi(2);
        let m = minimize(f, &[1.0, 1.0], &[0.3, 0.3], &[0.0, 0.0], &[5.0, 5.0], &NelderMeadOptions::default());
        assert!(m.x[0] >= 0.0 && m.x[0] < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let mut x = vec![-1.2, 1.0];
        let mut best = f64::INFINITY;
        for _ in 0..10 {
            let m = minimize(f, &x, &[0.1, 0.1], &[-5.0; 2], &[5.0; 2], &NelderMeadOptions { ftol: 1e-16, ..Default::default() });
            x = m.x;
            best = m.value;
        }
        assert!(best < 1e-8, "{best}");
    }

    #[test]
    fn polish_leaves_no_improving_coordinate_move() {
        let f = |x: &[f64]| (x[0] - 0.123_456).powi(2) + (x[1] - 0.654_321).powi(2);
        let mut x = vec![0.1, 0.7];
        let mut v = f(&x);
        compass_polish(f, &mut x, &mut v, &[1e-2, 1e-3, 1e-4], &[0.0; 2], &[1.0; 2]);
        for j in 0..2 {
            for d in [1e-4, -1e-4] {
                let mut t = x.clone();
                t[j] += d;
                assert!(f(&t) >= v);
            }
        }
    }
}
