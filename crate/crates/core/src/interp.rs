//! Piecewise cubic Hermite interpolation with a Fritsch-Carlson limiter.

/// Index `i` of the interval `[xs[i], xs[i+1]]` containing `x`, for strictly increasing `xs`.
/// Returns `None` outside `[xs[0], xs[last]]`.
pub fn locate(xs: &[f64], x: f64) -> Option<usize> {
    let n = xs.len();
    if n < 2 || !(x >= xs[0] && x <= xs[n - 1]) {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    Some(i.saturating_sub(1).min(n - 2))
}

/// Limits the endpoint slopes so that the cubic on one interval is monotone
/// whenever the data are.
pub fn limit_slopes(dy: f64, dx: f64, d0: f64, d1: f64) -> (f64, f64) {
    let delta = dy / dx;
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    let mut d0 = if d0 * delta < 0.0 { 0.0 } else { d0 };
    let mut d1 = if d1 * delta < 0.0 { 0.0 } else { d1 };
    let a = d0 / delta;
    let b = d1 / delta;
    let r2 = a * a + b * b;
    if r2 > 9.0 {
        let t = 3.0 / r2.sqrt();
        d0 = t * a * delta;
        d1 = t * b * delta;
    }
    (d0, d1)
}

/// Cubic Hermite value on `[x0, x1]` with endpoint values and slopes.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of [`hermite`] with respect to `x`.
pub fn hermite_deriv(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let g00 = (6.0 * t2 - 6.0 * t) / h;
    let g10 = 3.0 * t2 - 4.0 * t + 1.0;
    let g01 = (-6.0 * t2 + 6.0 * t) / h;
    let g11 = 3.0 * t2 - 2.0 * t;
    g00 * y0 + g10 * d0 + g01 * y1 + g11 * d1
}

/// Monotone piecewise Hermite interpolation of `(xs, ys)` with supplied slopes `ds`.
pub fn monotone_hermite(xs: &[f64], ys: &[f64], ds: &[f64], x: f64) -> Option<f64> {
    let i = locate(xs, x)?;
    let (x0, x1, y0, y1) = (xs[i], xs[i + 1], ys[i], ys[i + 1]);
    let (d0, d1) = finite_slopes(x0, x1, y0, y1, ds[i], ds[i + 1]);
    Some(hermite(x0, x1, y0, y1, d0, d1, x))
}

fn finite_slopes(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> (f64, f64) {
    let secant = (y1 - y0) / (x1 - x0);
    let d0 = if d0.is_finite() { d0 } else { secant };
    let d1 = if d1.is_finite() { d1 } else { secant };
    limit_slopes(y1 - y0, x1 - x0, d0, d1)
}

/// [`monotone_hermite`] on `(x, y, dy/dx)` samples with non-decreasing `x`;
/// a sample that does not advance `x` is skipped.
pub fn monotone_hermite_samples<I: IntoIterator<Item = (f64, f64, f64)>>(samples: I, x: f64) -> Option<f64> {
    let (mut xs, mut ys, mut ds) = (Vec::new(), Vec::new(), Vec::new());
    for (xi, yi, di) in samples {
        if xs.last().is_some_and(|&last| xi <= last) {
            continue;
        }
        xs.push(xi);
        ys.push(yi);
        ds.push(di);
    }
    monotone_hermite(&xs, &ys, &ds, x)
}

/// Linear interpolation, `None` outside the data range.
pub fn linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let i = locate(xs, x)?;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    Some(ys[i] + t * (ys[i + 1] - ys[i]))
}
