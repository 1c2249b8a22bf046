//! Proximal maps: isotropic TV (Chambolle), soft thresholding, and the
//! projection onto an ℓ2 ball.

use ndarray::{Array2, Zip};

/// Chambolle dual field, kept between calls for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct TvDual {
    pub px: Array2<f64>,
    pub py: Array2<f64>,
}

impl TvDual {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            px: Array2::zeros((rows, cols)),
            py: Array2::zeros((rows, cols)),
        }
    }
}

/// Forward differences with a zero last row/column.
pub fn gradient(u: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (r, c) = u.dim();
    let gx = Array2::from_shape_fn((r, c), |(i, j)| if i + 1 < r { u[(i + 1, j)] - u[(i, j)] } else { 0.0 });
    let gy = Array2::from_shape_fn((r, c), |(i, j)| if j + 1 < c { u[(i, j + 1)] - u[(i, j)] } else { 0.0 });
    (gx, gy)
}

/// Negative adjoint of [`gradient`].
pub fn divergence(px: &Array2<f64>, py: &Array2<f64>) -> Array2<f64> {
    let (r, c) = px.dim();
    Array2::from_shape_fn((r, c), |(i, j)| {
        let dx = if r == 1 {
            0.0
        } else if i == 0 {
            px[(i, j)]
        } else if i + 1 == r {
            -px[(i - 1, j)]
        } else {
            px[(i, j)] - px[(i - 1, j)]
        };
        let dy = if c == 1 {
            0.0
        } else if j == 0 {
            py[(i, j)]
        } else if j + 1 == c {
            -py[(i, j - 1)]
        } else {
            py[(i, j)] - py[(i, j - 1)]
        };
        dx + dy
    })
}

/// Isotropic total variation `Σ |∇u|`.
pub fn total_variation(u: &Array2<f64>) -> f64 {
    let (gx, gy) = gradient(u);
    Zip::from(&gx).and(&gy).fold(0.0, |acc, a, b| acc + a.hypot(*b))
}

/// `TV(u) + ‖u − z‖² / (2·weight)`, the function [`prox_tv`] minimises.
pub fn tv_objective(u: &Array2<f64>, z: &Array2<f64>, weight: f64) -> f64 {
    let fid: f64 = Zip::from(u).and(z).fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
    total_variation(u) + fid / (2.0 * weight)
}

/// Approximate `argmin_u TV(u) + ‖u − z‖² / (2·weight)` by `iters` steps of
/// Chambolle's dual projection with step `step` (< 1/4), starting from and
/// updating `dual`.
pub fn prox_tv(z: &Array2<f64>, weight: f64, iters: usize, step: f64, dual: &mut TvDual) -> Array2<f64> {
    assert!(weight > 0.0, "TV weight must be positive");
    if dual.px.dim() != z.dim() {
        *dual = TvDual::zeros(z.nrows(), z.ncols());
    }
    let inv_w = 1.0 / weight;
    for _ in 0..iters {
        let mut d = divergence(&dual.px, &dual.py);
        Zip::from(&mut d).and(z).for_each(|d, &zv| *d -= zv * inv_w);
        let (gx, gy) = gradient(&d);
        Zip::from(&mut dual.px)
            .and(&mut dual.py)
            .and(&gx)
            .and(&gy)
            .for_each(|px, py, &wx, &wy| {
                let den = 1.0 + step * wx.hypot(wy);
                *px = (*px + step * wx) / den;
                *py = (*py + step * wy) / den;
            });
    }
    let div = divergence(&dual.px, &dual.py);
    let mut u = z.clone();
    Zip::from(&mut u).and(&div).for_each(|u, &d| *u -= weight * d);
    u
}

/// Elementwise `sign(z)·max(|z| − threshold, 0)`.
pub fn prox_soft(z: &Array2<f64>, threshold: f64) -> Array2<f64> {
    z.mapv(|v| soft(v, threshold))
}

#[inline]
pub fn soft(v: f64, threshold: f64) -> f64 {
    let m = v.abs() - threshold;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Relative slack under which a point counts as inside the ball; makes the
/// projection exactly idempotent.
const BALL_SLACK: f64 = 1e-12;

/// Projects the stack `s` onto `{v : ‖v − y‖₂ ≤ ε}`.
pub fn project_epsilon_ball(s: &[Array2<f64>], y: &[Array2<f64>], epsilon: f64) -> Vec<Array2<f64>> {
    assert!(epsilon >= 0.0, "ball radius must be nonnegative");
    let dist = s
        .iter()
        .zip(y)
        .map(|(a, b)| Zip::from(a).and(b).fold(0.0, |acc, x, w| acc + (x - w) * (x - w)))
        .sum::<f64>()
        .sqrt();
    if dist <= epsilon * (1.0 + BALL_SLACK) {
        return s.to_vec();
    }
    let scale = epsilon / dist;
    s.iter()
        .zip(y)
        .map(|(a, b)| {
            let mut out = b.clone();
            Zip::from(&mut out).and(a).for_each(|o, &x| *o += scale * (x - *o));
            out
        })
        .collect()
}
