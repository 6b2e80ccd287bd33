//! Derivative-free Nelder-Mead simplex search with adaptive coefficients.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop when `f_worst - f_best <= rel_tol * |f_best| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimises `f` starting from `x0` with per-coordinate initial step `step`.
///
/// Non-finite objective values are treated as `+inf`. Uses the
/// dimension-adaptive reflection/expansion/contraction/shrink coefficients of
/// Gao and Han, which behave better than the classic ones above four
/// dimensions.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (rho, chi, gamma, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if step[i] != 0.0 { step[i] } else { 0.05 };
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst - best <= opts.rel_tol * best.abs() + opts.abs_tol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let along = |coef: f64, out: &mut Vec<f64>, worst: &[f64]| {
            for i in 0..n {
                out[i] = centroid[i] + coef * (centroid[i] - worst[i]);
            }
        };

        along(rho, &mut trial, &simplex[n].0);
        let fr = eval(&trial);
        if fr < simplex[0].1 {
            let mut expanded = vec![0.0; n];
            along(rho * chi, &mut expanded, &simplex[n].0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (trial.clone(), fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (trial.clone(), fr);
            continue;
        }
        let (coef, bound) = if fr < simplex[n].1 {
            (rho * gamma, fr)
        } else {
            (-gamma, simplex[n].1)
        };
        let mut contracted = vec![0.0; n];
        along(coef, &mut contracted, &simplex[n].0);
        let fc = eval(&contracted);
        if fc <= bound {
            simplex[n] = (contracted, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for i in 0..n {
                x[i] = x_best[i] + sigma * (x[i] - x_best[i]);
            }
            *fx = eval(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum {
        x,
        f,
        iterations,
        evaluations: evals,
        converged,
    }
}

/// Runs Nelder-Mead from `x0`, then restarts from the incumbent until a
/// restart no longer improves it. Restarting rebuilds a fresh simplex, which
/// escapes the premature collapse plain Nelder-Mead is prone to.
pub fn nelder_mead_restarted<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    opts: NelderMeadOptions,
    max_restarts: usize,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = nelder_mead(&mut f, x0, step, opts);
    let mut small: Vec<f64> = step.iter().map(|s| s * 0.1).collect();
    for _ in 0..max_restarts {
        let next = nelder_mead(&mut f, &best.x, &small, opts);
        let improved = next.f < best.f - opts.rel_tol * best.f.abs() - opts.abs_tol;
        let evaluations = best.evaluations + next.evaluations;
        let iterations = best.iterations + next.iterations;
        if next.f <= best.f {
            best = Minimum {
                evaluations,
                iterations,
                ..next
            };
        } else {
            best.evaluations = evaluations;
            best.iterations = iterations;
        }
        if !improved {
            break;
        }
        small.iter_mut().for_each(|s| *s *= 0.5);
    }
    best
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Scans `grid`, then refines around the best grid point with golden section.
pub fn grid_then_golden<F>(mut f: F, grid: &[f64], tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let values: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let i = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty grid");
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (x, fx) = golden_section(&mut f, lo, hi, tol);
    if fx <= values[i] {
        (x, fx)
    } else {
        (grid[i], values[i])
    }
}
