//! Derivative-free one-dimensional minimization.

/// Outcome of a 1-D minimization.
#[derive(Debug, Clone, Copy)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Brent's method (golden section with parabolic steps) on `[lo, hi]`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Minimum {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evals = 1;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        evals += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
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
    Minimum {
        x,
        value: fx,
        evaluations: evals,
    }
}

/// Coarse grid scan followed by Brent refinement around the best grid point.
/// Endpoints are included, so a monotone objective ends at the boundary.
pub fn grid_then_brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> Minimum {
    let n = grid.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (0, f64::INFINITY);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let x = lo + step * i as f64;
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        values.push(v);
        if v < best.1 {
            best = (i, v);
        }
    }
    let (i, v) = best;
    let a = lo + step * i.saturating_sub(1) as f64;
    let b = (lo + step * (i + 1) as f64).min(hi);
    let refined = brent(&mut f, a, b, tol, 200);
    let endpoint = lo + step * i as f64;
    let mut out = if refined.value <= v {
        refined
    } else {
        Minimum {
            x: endpoint,
            value: v,
            evaluations: 0,
        }
    };
    out.evaluations += n;
    out
}
