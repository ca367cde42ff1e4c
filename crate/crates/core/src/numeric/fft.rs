use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::kernels::PAR_MIN;
use super::Tensor;

/// Complex vector stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVector {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, forward))
            .or_insert_with(|| {
                let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
                planner.plan_fft(len, dir)
            })
            .clone()
    })
}

/// Forward DFT `X_k = Σ_j x_j e^{-2πi jk/L}` of a real signal. Power-of-two
/// lengths take a radix-2 path; other lengths go through mixed-radix or
/// Bluestein plans.
pub fn fft(x: &[f64]) -> ComplexVector {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        plan(buf.len(), true).process(&mut buf);
    }
    ComplexVector {
        re: buf.iter().map(|c| c.re).collect(),
        im: buf.iter().map(|c| c.im).collect(),
    }
}

/// Inverse DFT with `1/L` normalisation. Returns the real part and the
/// largest absolute imaginary residue.
pub fn ifft(z: &ComplexVector) -> (Vec<f64>, f64) {
    let mut buf: Vec<Complex64> = z.re.iter().zip(&z.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
    if buf.is_empty() {
        return (Vec::new(), 0.0);
    }
    let l = buf.len() as f64;
    plan(buf.len(), false).process(&mut buf);
    let residue = buf.iter().fold(0.0_f64, |m, c| m.max((c.im / l).abs()));
    (buf.iter().map(|c| c.re / l).collect(), residue)
}

/// Row-wise forward DFT of a real tensor `[..., L]` into interleaved complex
/// `[..., L, 2]`.
pub(crate) fn fft_rows(x: &Tensor) -> Tensor {
    let l = *x.shape().last().unwrap();
    let mut out = vec![0.0; x.numel() * 2];
    let run = |(dst, src): (&mut [f64], &[f64])| {
        let p = plan(l, true);
        let mut buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        p.process(&mut buf);
        for (d, c) in dst.chunks_mut(2).zip(&buf) {
            d[0] = c.re;
            d[1] = c.im;
        }
    };
    if x.numel() >= PAR_MIN / 4 {
        out.par_chunks_mut(2 * l).zip(x.data().par_chunks(l)).for_each(run);
    } else {
        out.chunks_mut(2 * l).zip(x.data().chunks(l)).for_each(run);
    }
    let mut shape = x.shape().to_vec();
    shape.push(2);
    Tensor::from_parts(shape, out)
}

/// Row-wise inverse DFT of interleaved complex `[..., L, 2]`, keeping the
/// real part, scaled by `scale / L`.
pub(crate) fn ifft_rows_real(z: &Tensor, scale: f64) -> Tensor {
    let r = z.rank();
    let l = z.shape()[r - 2];
    let mut out = vec![0.0; z.numel() / 2];
    let k = scale / l as f64;
    let run = |(dst, src): (&mut [f64], &[f64])| {
        let p = plan(l, false);
        let mut buf: Vec<Complex64> = src.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        p.process(&mut buf);
        for (d, c) in dst.iter_mut().zip(&buf) {
            *d = c.re * k;
        }
    };
    if z.numel() >= PAR_MIN / 2 {
        out.par_chunks_mut(l).zip(z.data().par_chunks(2 * l)).for_each(run);
    } else {
        out.chunks_mut(l).zip(z.data().chunks(2 * l)).for_each(run);
    }
    Tensor::from_parts(z.shape()[..r - 1].to_vec(), out)
}
