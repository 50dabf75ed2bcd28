//! Central-difference gradient verification.

/// Maximum relative discrepancy between `grad(point)` and central differences
/// of `f` with step `h`, taken over coordinates.
///
/// Coordinates where both the analytic and numeric derivatives are below
/// `1e-14` in magnitude count as exact.
pub fn check_gradient<F, G>(f: F, grad: G, point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let g = grad(point);
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let step = h * point[i].abs().max(1.0);
        x[i] = point[i] + step;
        let fp = f(&x);
        x[i] = point[i] - step;
        let fm = f(&x);
        x[i] = point[i];
        let fd = (fp - fm) / (2.0 * step);
        let scale = fd.abs().max(g[i].abs());
        if scale < 1e-14 {
            continue;
        }
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    worst
}
