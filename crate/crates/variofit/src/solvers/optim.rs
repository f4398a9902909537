//! Derivative-free minimizers: Nelder-Mead simplex and Powell's direction
//! set method with a Brent line search. Both treat non-finite objective
//! values as +inf, so callers can reject bad parameter probes by returning
//! NaN or infinity.

/// Options shared by the optimizers.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Maximum outer iterations (simplex steps / direction cycles).
    pub max_iters: usize,
    /// Stop when the loss change over an iteration drops below
    /// `tolerance * (1 + |f_best|)`.
    pub tolerance: f64,
    /// Initial step along each coordinate.
    pub initial_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iters: 200,
            tolerance: 1e-8,
            initial_step: 0.2,
        }
    }
}

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration (non-increasing).
    pub trace: Vec<f64>,
}

fn guard(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Nelder-Mead downhill simplex with the standard coefficients.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &OptimOptions) -> OptimOutcome {
    let n = x0.len();
    assert!(n >= 1, "need at least one parameter");
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    // Simplex: x0 plus a step along each coordinate.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        let step = if p[i].abs() > 1e-12 {
            opts.initial_step * p[i].abs()
        } else {
            opts.initial_step
        };
        p[i] += step;
        simplex.push(p);
    }
    let mut fx: Vec<f64> = simplex.iter().map(|p| guard(f(p))).collect();

    let mut trace = Vec::with_capacity(opts.max_iters);
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iters {
        iterations += 1;
        // Order the simplex.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fx[a].partial_cmp(&fx[b]).unwrap_or(std::cmp::Ordering::Equal));
        let reorder: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let refx: Vec<f64> = idx.iter().map(|&i| fx[i]).collect();
        simplex = reorder;
        fx = refx;

        let best = fx[0];
        let worst = fx[n];
        trace.push(best);
        // Loss spread alone can vanish on a simplex straddling the optimum,
        // so require the simplex itself to have collapsed as well.
        let mut diameter = 0.0f64;
        let mut xnorm = 0.0f64;
        for p in simplex.iter().skip(1) {
            for (a, b) in p.iter().zip(simplex[0].iter()) {
                diameter = diameter.max((a - b).abs());
                xnorm = xnorm.max(b.abs());
            }
        }
        if worst.is_finite()
            && (worst - best).abs() <= opts.tolerance * (1.0 + best.abs())
            && diameter <= opts.tolerance.sqrt() * (1.0 + xnorm)
        {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for p in simplex.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(p.iter()) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b.iter()).map(|(x, y)| x + t * (y - x)).collect()
        };

        // Reflect.
        let xr = blend(&centroid, &simplex[n], -alpha);
        let fr = guard(f(&xr));
        if fr < fx[0] {
            // Expand.
            let xe = blend(&centroid, &simplex[n], -gamma);
            let fe = guard(f(&xe));
            if fe < fr {
                simplex[n] = xe;
                fx[n] = fe;
            } else {
                simplex[n] = xr;
                fx[n] = fr;
            }
            continue;
        }
        if fr < fx[n - 1] {
            simplex[n] = xr;
            fx[n] = fr;
            continue;
        }
        // Contract (outside if the reflection helped at all, else inside).
        let xc = if fr < fx[n] {
            blend(&centroid, &xr, rho)
        } else {
            blend(&centroid, &simplex[n], rho)
        };
        let fc = guard(f(&xc));
        if fc < fx[n].min(fr) {
            simplex[n] = xc;
            fx[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        let best_point = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = blend(&best_point, &simplex[i], sigma);
            fx[i] = guard(f(&simplex[i]));
        }
    }

    let mut bi = 0;
    for i in 1..=n {
        if fx[i] < fx[bi] {
            bi = i;
        }
    }
    trace.push(fx[bi]);
    OptimOutcome {
        x: simplex[bi].clone(),
        fx: fx[bi],
        iterations,
        converged,
        trace,
    }
}

/// Bracket a 1-d minimum starting from `a = 0` with the given step.
fn bracket<F: FnMut(f64) -> f64>(f: &mut F, step: f64) -> (f64, f64, f64) {
    let golden = 1.618_033_988_749_895;
    let (mut a, mut b) = (0.0, step);
    let (mut fa, mut fb) = (guard(f(a)), guard(f(b)));
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + golden * (b - a);
    let mut fc = guard(f(c));
    let mut tries = 0;
    while fb > fc && tries < 60 {
        a = b;
        b = c;
        fb = fc;
        c = b + golden * (b - a);
        fc = guard(f(c));
        tries += 1;
    }
    if a > c {
        (c, b, a)
    } else {
        (a, b, c)
    }
}

/// Brent's parabolic-interpolation line minimizer on a bracket.
fn brent<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, c: f64, tol: f64) -> (f64, f64) {
    let cgold = 0.381_966_011_250_105;
    let (mut lo, mut hi) = (a.min(c), a.max(c));
    let mut x = b;
    let (mut w, mut v) = (b, b);
    let mut fx = guard(f(x));
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..80 {
        let m = 0.5 * (lo + hi);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabolic fit through x, w, v.
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (lo - x) && p < q * (hi - x) {
                d = p / q;
                let u = x + d;
                if (u - lo) < tol2 || (hi - u) < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { hi - x } else { lo - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + if d > 0.0 { tol1 } else { -tol1 }
        };
        let fu = guard(f(u));
        if fu <= fx {
            if u < x {
                hi = x;
            } else {
                lo = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Powell's method: cycle through a direction set with line minimizations,
/// replacing the direction of largest decrease by the cycle displacement.
pub fn powell<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &OptimOptions) -> OptimOutcome {
    let n = x0.len();
    assert!(n >= 1, "need at least one parameter");
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        })
        .collect();
    let mut x = x0.to_vec();
    let mut fx = guard(f(&x));
    let mut trace = vec![fx];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let x_start = x.clone();
        let f_start = fx;
        let mut biggest_drop = 0.0;
        let mut biggest_idx = 0;

        for (i, dir) in dirs.iter().enumerate() {
            let f_before = fx;
            let (t, ft) = {
                let mut line = |t: f64| {
                    let p: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
                    f(&p)
                };
                let scale = x
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0f64, f64::max)
                    .max(1.0);
                let (a, b, c) = bracket(&mut line, opts.initial_step * scale.min(1.0));
                brent(&mut line, a, b, c, 1e-8)
            };
            if ft < fx {
                for (xv, d) in x.iter_mut().zip(dir.iter()) {
                    *xv += t * d;
                }
                fx = ft;
            }
            if f_before - fx > biggest_drop {
                biggest_drop = f_before - fx;
                biggest_idx = i;
            }
        }

        trace.push(fx);
        if (f_start - fx).abs() <= opts.tolerance * (1.0 + fx.abs()) {
            converged = true;
            break;
        }

        // Powell's direction update along the overall displacement.
        let disp: Vec<f64> = x.iter().zip(x_start.iter()).map(|(a, b)| a - b).collect();
        let norm = disp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-14 {
            let extrapolated: Vec<f64> = x.iter().zip(disp.iter()).map(|(a, d)| a + d).collect();
            let fe = guard(f(&extrapolated));
            if fe < f_start {
                let t1 = f_start - fx - biggest_drop;
                let t2 = f_start - fe;
                if 2.0 * (f_start - 2.0 * fx + fe) * t1 * t1 < t2 * t2 * biggest_drop {
                    let unit: Vec<f64> = disp.iter().map(|v| v / norm).collect();
                    dirs[biggest_idx] = unit;
                    // Minimize along the new direction too.
                    let dir = dirs[biggest_idx].clone();
                    let (t, ft) = {
                        let mut line = |t: f64| {
                            let p: Vec<f64> =
                                x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
                            f(&p)
                        };
                        let (a, b, c) = bracket(&mut line, opts.initial_step);
                        brent(&mut line, a, b, c, 1e-8)
                    };
                    if ft < fx {
                        for (xv, d) in x.iter_mut().zip(dir.iter()) {
                            *xv += t * d;
                        }
                        fx = ft;
                    }
                }
            }
        }
    }
    trace.push(fx);
    OptimOutcome {
        x,
        fx,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2)
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_quadratic() {
        let out = nelder_mead(quadratic, &[0.0, 0.0], &OptimOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-4, "{:?}", out.x);
        assert!((out.x[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn powell_quadratic() {
        let out = powell(quadratic, &[0.0, 0.0], &OptimOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-5, "{:?}", out.x);
        assert!((out.x[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn both_handle_rosenbrock() {
        let opts = OptimOptions {
            max_iters: 2000,
            tolerance: 1e-12,
            initial_step: 0.5,
        };
        let nm = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(nm.fx < 1e-6, "nm fx={}", nm.fx);
        let pw = powell(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(pw.fx < 1e-6, "powell fx={}", pw.fx);
    }

    #[test]
    fn traces_are_non_increasing() {
        for out in [
            nelder_mead(rosenbrock, &[2.0, -2.0], &OptimOptions::default()),
            powell(rosenbrock, &[2.0, -2.0], &OptimOptions::default()),
        ] {
            assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        // A pocket of NaN next to the optimum must not trap the search.
        let f = |x: &[f64]| {
            if x[0] < -0.5 {
                f64::NAN
            } else {
                (x[0] - 1.0).powi(2) + x[1].powi(2)
            }
        };
        let out = nelder_mead(f, &[0.2, 0.7], &OptimOptions::default());
        assert!((out.x[0] - 1.0).abs() < 1e-3);
        let out = powell(f, &[0.2, 0.7], &OptimOptions::default());
        assert!((out.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn one_dimensional_problems_work() {
        let f = |x: &[f64]| (x[0] - 0.25).powi(2);
        let out = nelder_mead(f, &[5.0], &OptimOptions::default());
        assert!((out.x[0] - 0.25).abs() < 1e-4);
        let out = powell(f, &[5.0], &OptimOptions::default());
        assert!((out.x[0] - 0.25).abs() < 1e-6);
    }
}
