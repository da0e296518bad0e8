//! Loss values and their adjoints on plain arrays.

use ndarray::{Array2, Axis};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(1/M) sum_i ||x_i - t_i||^2`.
pub fn reconstruction_loss(x: &Array2<f64>, target: &Array2<f64>) -> f64 {
    assert_eq!(x.dim(), target.dim(), "reconstruction shapes differ");
    let m = x.nrows();
    if m == 0 {
        return 0.0;
    }
    let sq: f64 = x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    sq / m as f64
}

/// `(1/M) sum_i (1 - cos(t_i, x_i))^delta`; norms are floored at `eps`.
pub fn scaled_cosine_loss(target: &Array2<f64>, x: &Array2<f64>, delta: f64, eps: f64) -> f64 {
    assert_eq!(x.dim(), target.dim(), "reconstruction shapes differ");
    let m = x.nrows();
    if m == 0 {
        return 0.0;
    }
    let total: f64 = target
        .rows()
        .into_iter()
        .zip(x.rows())
        .map(|(t, xr)| {
            let c = t.dot(&xr) / (norm(t.iter()).max(eps) * norm(xr.iter()).max(eps));
            (1.0 - c).max(0.0).powf(delta)
        })
        .sum();
    total / m as f64
}

fn norm<'a>(v: impl Iterator<Item = &'a f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

/// Gradient of [`scaled_cosine_loss`] with respect to `x`.
pub fn scaled_cosine_grad(target: &Array2<f64>, x: &Array2<f64>, delta: f64, eps: f64) -> Array2<f64> {
    let m = x.nrows().max(1) as f64;
    let mut out = Array2::zeros(x.dim());
    for (i, (t, xr)) in target.rows().into_iter().zip(x.rows()).enumerate() {
        let x_norm = norm(xr.iter());
        let nx = x_norm.max(eps);
        let nt = norm(t.iter()).max(eps);
        let dot = t.dot(&xr);
        let u = 1.0 - dot / (nx * nt);
        if u <= 0.0 && delta > 1.0 {
            continue;
        }
        let outer = delta * u.max(0.0).powf(delta - 1.0) / m;
        let radial = if x_norm > eps { dot / (nx * nx * nt * x_norm) } else { 0.0 };
        for k in 0..xr.len() {
            let dc = t[k] / (nx * nt) - radial * xr[k];
            out[[i, k]] = -outer * dc;
        }
    }
    out
}

/// `-(1/P) sum_p sum_c [y log s(z) + (1-y) log(1-s(z))]` via the softplus form.
pub fn multilabel_bce(logits: &Array2<f64>, labels: &Array2<f64>) -> f64 {
    assert_eq!(logits.dim(), labels.dim(), "logit/label shapes differ");
    let p = logits.nrows();
    if p == 0 {
        return 0.0;
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - y * z + (-z.abs()).exp().ln_1p())
        .sum();
    total / p as f64
}

/// InfoNCE of anchors `a` against view `b` with the positive excluded from
/// the denominator. Also returns `dL/dS` for `S = a b^T / tau`.
pub fn info_nce_with_weights(a: &Array2<f64>, b: &Array2<f64>, tau: f64) -> (f64, Array2<f64>) {
    assert_eq!(a.dim(), b.dim(), "views must have equal shape");
    let n = a.nrows();
    assert!(n >= 2, "info_nce needs at least two rows");
    let sim = a.dot(&b.t()) / tau;
    let nf = n as f64;
    let mut weights = Array2::zeros((n, n));
    let mut total = 0.0;
    for (i, row) in sim.axis_iter(Axis(0)).enumerate() {
        let shift = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| (v - shift).exp())
            .sum();
        total += -row[i] + shift + z.ln();
        for (j, &v) in row.iter().enumerate() {
            weights[[i, j]] = if j == i { -1.0 / nf } else { (v - shift).exp() / z / nf };
        }
    }
    (total / nf, weights)
}
