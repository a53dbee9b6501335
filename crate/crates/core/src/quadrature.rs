//! Adaptive composite Gauss–Legendre integration of small vector integrands.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 20;
const MAX_DEPTH: u32 = 48;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

fn panel<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> [f64; N] {
    let (nodes, weights) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = [0.0; N];
    for (x, w) in nodes.iter().zip(weights) {
        let v = f(mid + half * x);
        for j in 0..N {
            acc[j] += w * v[j];
        }
    }
    for v in &mut acc {
        *v *= half;
    }
    acc
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
}

/// Integrates `f` over `[a, b]`, splitting first at every breakpoint inside
/// the interval. Panels are bisected until the coarse and refined estimates
/// agree to `rel_tol` of the component's total (with `abs_tol` as a floor).
pub fn integrate<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral<N>> {
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::numeric(format!("bad integration range [{a}, {b}]")));
    }
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(|x, y| x.total_cmp(y));
    cuts.extend(inner);
    cuts.push(b);

    // coarse pass fixes the per-component error budget
    let mut coarse = [0.0; N];
    let mut initial = Vec::new();
    for w in cuts.windows(2) {
        let sub = 8;
        let h = (w[1] - w[0]) / sub as f64;
        for i in 0..sub {
            let lo = w[0] + i as f64 * h;
            let hi = if i + 1 == sub { w[1] } else { lo + h };
            let est = panel(f, lo, hi);
            for j in 0..N {
                coarse[j] += est[j].abs();
            }
            initial.push((lo, hi, est));
        }
    }
    let width = b - a;
    let mut budget = [0.0; N];
    for j in 0..N {
        budget[j] = (rel_tol * coarse[j]).max(abs_tol);
    }

    let mut value = [0.0; N];
    let mut error = [0.0; N];
    let mut stack: Vec<(f64, f64, [f64; N], u32)> = initial.into_iter().map(|(lo, hi, est)| (lo, hi, est, 0)).collect();
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(f, lo, mid);
        let right = panel(f, mid, hi);
        let share = (hi - lo) / width;
        let mut ok = true;
        let mut diff = [0.0; N];
        for j in 0..N {
            diff[j] = (left[j] + right[j] - whole[j]).abs();
            if !diff[j].is_finite() {
                return Err(Error::numeric("non-finite integrand value"));
            }
            let roundoff = 64.0 * f64::EPSILON * (left[j].abs() + right[j].abs());
            if diff[j] > (budget[j] * share).max(roundoff) {
                ok = false;
            }
        }
        if ok || depth >= MAX_DEPTH {
            if !ok {
                let worst = (0..N).map(|j| diff[j]).fold(0.0, f64::max);
                return Err(Error::numeric(format!(
                    "quadrature did not converge on [{lo}, {hi}], residual {worst:e}"
                )));
            }
            for j in 0..N {
                value[j] += left[j] + right[j];
                error[j] += diff[j];
            }
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(Integral { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_and_weights_are_exact_for_polynomials() {
        let (x, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 12 monomial: ∫ x^12 = 2/13
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m12 - 2.0 / 13.0).abs() < 1e-14);
        let (x20, _) = gauss_legendre(20);
        assert!(x20.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn integrates_kinked_and_peaked_functions() {
        let f = |x: f64| [(-x.abs()).exp(), (-1e4 * (x - 0.3) * (x - 0.3)).exp()];
        let r = integrate(&f, -30.0, 30.0, &[0.0, 0.3], 1e-13, 1e-300).unwrap();
        assert!((r.value[0] - 2.0).abs() < 1e-11);
        let exact = (std::f64::consts::PI / 1e4).sqrt();
        assert!((r.value[1] - exact).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_range() {
        let f = |_x: f64| [1.0];
        assert!(integrate(&f, 1.0, 1.0, &[], 1e-10, 0.0).is_err());
    }
}
