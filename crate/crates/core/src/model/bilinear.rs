//! Spatial 2x bilinear upsampling with half-pixel centres.

use crate::tensor::{Shape4, Tensor4};

/// Source taps `(lo, hi, frac)` for each output index along one axis.
///
/// Output index `o` samples source coordinate `(o + 0.5) / 2 - 0.5`, clamped
/// to `[0, n - 1]`.
fn axis_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Upsamples `[C, H, W, T]` to `[C, 2H, 2W, T]`, identically at each step.
pub fn bilinear_upsample_2x(input: &Tensor4) -> Tensor4 {
    let s = input.shape();
    let mut out = Tensor4::zeros(Shape4::new(s.c, 2 * s.h, 2 * s.w, s.t));
    if s.is_empty() {
        return out;
    }
    let ys = axis_taps(s.h);
    let xs = axis_taps(s.w);
    for c in 0..s.c {
        for (yo, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (xo, &(x0, x1, fx)) in xs.iter().enumerate() {
                let corners = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x1, (1.0 - fy) * fx),
                    (y1, x0, fy * (1.0 - fx)),
                    (y1, x1, fy * fx),
                ];
                let dst = out.series_mut(c, yo, xo);
                for (y, x, wgt) in corners {
                    if wgt == 0.0 {
                        continue;
                    }
                    for (d, v) in dst.iter_mut().zip(input.series(c, y, x)) {
                        *d += wgt * v;
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`bilinear_upsample_2x`].
pub fn bilinear_upsample_2x_adjoint(grad: &Tensor4) -> Tensor4 {
    let s = grad.shape();
    let (h, w) = (s.h / 2, s.w / 2);
    let mut out = Tensor4::zeros(Shape4::new(s.c, h, w, s.t));
    if out.shape().is_empty() {
        return out;
    }
    let ys = axis_taps(h);
    let xs = axis_taps(w);
    for c in 0..s.c {
        for (yo, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (xo, &(x0, x1, fx)) in xs.iter().enumerate() {
                let corners = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x1, (1.0 - fy) * fx),
                    (y1, x0, fy * (1.0 - fx)),
                    (y1, x1, fy * fx),
                ];
                let src = grad.series(c, yo, xo);
                for (y, x, wgt) in corners {
                    if wgt == 0.0 {
                        continue;
                    }
                    for (d, g) in out.series_mut(c, y, x).iter_mut().zip(src) {
                        *d += wgt * g;
                    }
                }
            }
        }
    }
    out
}
