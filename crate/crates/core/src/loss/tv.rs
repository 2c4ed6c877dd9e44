//! Charbonnier-smoothed anisotropic total variation.

/// `ρ(δ) = √(δ² + ε²) − ε`, averaged over all horizontal and vertical
/// forward differences of a `width`x`height` patch.
pub fn tv_term(d: &[f64], width: usize, height: usize, eps: f64) -> f64 {
    tv_with_grad(d, width, height, eps, None)
}

/// Value and, when `grad` is given, its gradient added into `grad` scaled by `k`.
pub fn tv_with_grad(d: &[f64], width: usize, height: usize, eps: f64, mut grad: Option<(&mut [f64], f64)>) -> f64 {
    let count = (width.saturating_sub(1)) * height + width * (height.saturating_sub(1));
    if count == 0 {
        return 0.0;
    }
    let norm = 1.0 / count as f64;
    let mut total = 0.0;
    let mut visit = |i: usize, j: usize, total: &mut f64| {
        let delta = d[j] - d[i];
        let r = (delta * delta + eps * eps).sqrt();
        *total += r - eps;
        if let Some((g, k)) = grad.as_mut() {
            let slope = *k * norm * delta / r;
            g[j] += slope;
            g[i] -= slope;
        }
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                visit(i, i + 1, &mut total);
            }
            if y + 1 < height {
                visit(i, i + width, &mut total);
            }
        }
    }
    total * norm
}
