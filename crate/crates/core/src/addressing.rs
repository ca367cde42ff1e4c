//! Location addressing by three-tap circular shifts.
//!
//! The sequential path convolves the previous weighting with the shift
//! vector. The parallel path turns every shift into a length-`m` kernel,
//! moves to the frequency domain, sums approximate logs over time and maps
//! back, so all `T` weightings come out of one cumulative sum.

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::numeric::kernels::{self, approx_log_scalar};
use crate::numeric::{Graph, NumericError, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AddressingError {
    #[error("memory needs at least 3 cells for a 3-tap shift, got {0}")]
    MemoryTooSmall(usize),
    #[error("invalid shift vector {0:?}: strengths must be non-negative and sum to 1")]
    InvalidShift([f64; 3]),
    #[error("stabilization threshold {0} outside [0, 1)")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, AddressingError>;

/// Shift strengths ordered `[left, stay, right]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftVector([f64; 3]);

impl ShiftVector {
    pub const STAY: ShiftVector = ShiftVector([0.0, 1.0, 0.0]);
    pub const RIGHT: ShiftVector = ShiftVector([0.0, 0.0, 1.0]);
    pub const LEFT: ShiftVector = ShiftVector([1.0, 0.0, 0.0]);

    pub fn new(left: f64, stay: f64, right: f64) -> Result<Self> {
        let s = [left, stay, right];
        let sum: f64 = s.iter().sum();
        if s.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > 1e-6 {
            return Err(AddressingError::InvalidShift(s));
        }
        Ok(ShiftVector(s))
    }

    /// Softmax of three logits.
    pub fn from_logits(logits: [f64; 3]) -> Self {
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = logits.map(|l| (l - mx).exp());
        let z: f64 = e.iter().sum();
        ShiftVector(e.map(|v| v / z))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
    pub fn left(&self) -> f64 {
        self.0[0]
    }
    pub fn stay(&self) -> f64 {
        self.0[1]
    }
    pub fn right(&self) -> f64 {
        self.0[2]
    }
}

/// Non-negative weighting over memory cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AddressWeights(Vec<f64>);

impl AddressWeights {
    /// All mass on the first cell.
    pub fn initial(m: usize) -> Self {
        let mut w = vec![0.0; m];
        w[0] = 1.0;
        AddressWeights(w)
    }

    pub fn from_vec(w: Vec<f64>) -> Self {
        AddressWeights(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the single non-zero entry if the weighting is exactly one-hot.
    pub fn one_hot_index(&self) -> Option<usize> {
        let mut hot = None;
        for (i, &v) in self.0.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if v != 0.0 {
                return None;
            }
        }
        hot
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 3 {
        Err(AddressingError::MemoryTooSmall(m))
    } else {
        Ok(())
    }
}

/// `a[i] = a_prev[i+1]·left + a_prev[i]·stay + a_prev[i−1]·right`, indices
/// mod `m`.
pub fn shift_sequential(a_prev: &AddressWeights, s: &ShiftVector) -> Result<AddressWeights> {
    let m = a_prev.len();
    check_m(m)?;
    let a = Tensor::from_vec(a_prev.0.clone());
    let out = kernels::shift3(&a, &Tensor::from_vec(s.0.to_vec()))?;
    Ok(AddressWeights(out.into_vec()))
}

/// Length-`m` convolution kernel `[stay, right, 0, …, 0, left]`, i.e. the
/// shift vector zero-padded to `m` and rolled one place to the left.
pub fn make_kernel(s: &ShiftVector, m: usize) -> Result<Tensor> {
    check_m(m)?;
    let mut k = vec![0.0; m];
    k[0] = s.stay();
    k[1] = s.right();
    k[m - 1] = s.left();
    Ok(Tensor::from_vec(k))
}

/// `ln(z + ε·z/|z|)` on the principal branch, `ln ε` at the origin.
pub fn approx_log(z: Complex64, eps: f64) -> Complex64 {
    let (re, im) = approx_log_scalar(z.re, z.im, eps);
    Complex64::new(re, im)
}

/// Drops strengths below `tau` and renormalises the survivors. If nothing
/// survives, the largest strength is kept alone (ties prefer stay, then
/// right).
pub fn stabilize(s: &ShiftVector, tau: f64) -> Result<ShiftVector> {
    if !(0.0..1.0).contains(&tau) {
        return Err(AddressingError::InvalidThreshold(tau));
    }
    Ok(ShiftVector(stabilize_row(s.0, tau)))
}

fn stabilize_row(s: [f64; 3], tau: f64) -> [f64; 3] {
    let kept = s.map(|v| if v < tau { 0.0 } else { v });
    let total: f64 = kept.iter().sum();
    if total > 0.0 {
        return kept.map(|v| v / total);
    }
    let mut best = 1;
    for i in [2, 0] {
        if s[i] > s[best] {
            best = i;
        }
    }
    let mut out = [0.0; 3];
    out[best] = 1.0;
    out
}

/// Row-wise [`stabilize`] over a `[..., 3]` tensor.
pub fn stabilize_rows(s: &Tensor, tau: f64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&tau) {
        return Err(AddressingError::InvalidThreshold(tau));
    }
    let mut out = s.clone();
    for row in out.data_mut().chunks_mut(3) {
        let r = stabilize_row([row[0], row[1], row[2]], tau);
        row.copy_from_slice(&r);
    }
    Ok(out)
}

/// Three-tap shifts `[..., 3]` as length-`m` circular kernels, i.e. each
/// shift zero-padded to `m` and rolled one place left.
pub fn shift_kernels(g: &mut Graph, shifts: Var, m: usize) -> Result<Var> {
    check_m(m)?;
    let padded = g.pad_last(shifts, m)?;
    Ok(g.roll_last(padded, -1))
}

/// Cumulative circular convolution of `kernels: [..., T, m]` along the time
/// axis through the frequency domain: output `t` is
/// `kernels[0] ⊛ … ⊛ kernels[t]`, clamped to `[0, 1]`.
pub fn convolve_cumulative(g: &mut Graph, kernels: Var, eps: f64) -> Result<Var> {
    let time_axis = g.shape(kernels).len() - 2;
    let spectrum = g.fft_real(kernels);
    let logs = g.approx_log(spectrum, eps)?;
    let acc = g.cumsum(logs, time_axis)?;
    let prod = g.cexp(acc)?;
    let a = g.ifft_real(prod)?;
    Ok(g.clamp(a, 0.0, 1.0))
}

/// Addresses in effect at each of `T` positions given the shifts emitted at
/// those positions, `[..., T, 3] -> [..., T, m]`, plus the address after the
/// last shift, `[..., m]`.
///
/// Position 0 uses `init` (`e₁` when absent); position `t` uses it shifted by
/// the shifts of positions `0..t`.
pub fn conv_shift_graph(
    g: &mut Graph,
    shifts: Var,
    init: Option<Var>,
    m: usize,
    eps: f64,
) -> Result<(Var, Var)> {
    let shape = g.shape(shifts).to_vec();
    let rank = shape.len();
    if rank < 2 || shape[rank - 1] != 3 {
        return Err(NumericError::ShapeMismatch {
            op: "conv_shift",
            left: shape,
            right: vec![3],
        }
        .into());
    }
    let t = shape[rank - 2];
    let mut first_shape = shape.clone();
    first_shape[rank - 2] = 1;
    first_shape[rank - 1] = m;
    let first = match init {
        Some(a) => g.reshape(a, &first_shape)?,
        None => {
            let rows: usize = first_shape[..rank - 2].iter().product();
            let e1 = AddressWeights::initial(m).into_vec();
            let data = std::iter::repeat_n(e1, rows).flatten().collect();
            g.constant(Tensor::new(&first_shape, data)?)
        }
    };
    let kernels = shift_kernels(g, shifts, m)?;
    let steps = g.concat(&[first, kernels], rank - 2)?;
    let all = convolve_cumulative(g, steps, eps)?;
    let in_effect = g.narrow(all, rank - 2, 0, t)?;
    let next = g.narrow(all, rank - 2, t, 1)?;
    let mut next_shape = shape[..rank - 2].to_vec();
    next_shape.push(m);
    let next = g.reshape(next, &next_shape)?;
    Ok((in_effect, next))
}

/// Parallel addresses `a₀ … a_{T−1}` from `T−1` shifts.
pub fn conv_shift(shifts: &[ShiftVector], m: usize, eps: f64) -> Result<Vec<AddressWeights>> {
    check_m(m)?;
    if shifts.is_empty() {
        return Ok(vec![AddressWeights::initial(m)]);
    }
    let mut g = Graph::no_grad();
    let data: Vec<f64> = shifts.iter().flat_map(|s| s.0).collect();
    let sv = g.constant(Tensor::new(&[shifts.len(), 3], data)?);
    let (in_effect, next) = conv_shift_graph(&mut g, sv, None, m, eps)?;
    let next = g.reshape(next, &[1, m])?;
    let all = g.concat(&[in_effect, next], 0)?;
    Ok(g.value(all).data().chunks(m).map(|r| AddressWeights(r.to_vec())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(m: usize, i: usize) -> AddressWeights {
        AddressWeights(Tensor::one_hot(m, i).into_vec())
    }

    #[test]
    fn stay_and_right_shifts() {
        assert_eq!(shift_sequential(&e(4, 0), &ShiftVector::STAY).unwrap(), e(4, 0));
        let mut a = e(4, 0);
        a = shift_sequential(&a, &ShiftVector::RIGHT).unwrap();
        assert_eq!(a, e(4, 1));
        for _ in 0..3 {
            a = shift_sequential(&a, &ShiftVector::RIGHT).unwrap();
        }
        assert_eq!(a, e(4, 0));
        assert_eq!(shift_sequential(&e(4, 0), &ShiftVector::LEFT).unwrap(), e(4, 3));
    }

    #[test]
    fn small_memory_rejected() {
        assert_eq!(
            shift_sequential(&e(2, 0), &ShiftVector::STAY),
            Err(AddressingError::MemoryTooSmall(2))
        );
        assert!(make_kernel(&ShiftVector::STAY, 2).is_err());
    }

    #[test]
    fn kernel_layouts() {
        assert_eq!(make_kernel(&ShiftVector::STAY, 5).unwrap().data(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(make_kernel(&ShiftVector::RIGHT, 5).unwrap().data(), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(make_kernel(&ShiftVector::LEFT, 5).unwrap().data(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn approx_log_branches() {
        let eps = 1e-12;
        let z0 = approx_log(Complex64::new(0.0, 0.0), eps);
        assert_eq!((z0.re, z0.im), (eps.ln(), 0.0));
        let z1 = approx_log(Complex64::new(1.0, 0.0), eps);
        assert!((z1.re - eps).abs() < 1e-24 && z1.im == 0.0);
        let z2 = approx_log(Complex64::new(-2.0, 0.0), eps);
        assert!((z2.re - (2.0 + eps).ln()).abs() < 1e-15);
        assert!((z2.im - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn stabilize_examples() {
        let s = ShiftVector::new(0.004, 0.992, 0.004).unwrap();
        assert_eq!(stabilize(&s, 0.01).unwrap(), ShiftVector::STAY);
        let s = ShiftVector::new(0.2, 0.5, 0.3).unwrap();
        assert_eq!(stabilize(&s, 0.01).unwrap(), s);
        let s = ShiftVector::new(0.009, 0.495, 0.496).unwrap();
        let out = stabilize(&s, 0.01).unwrap().as_array();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 0.495 / 0.991).abs() < 1e-9);
        assert!((out[2] - 0.496 / 0.991).abs() < 1e-9);
        assert!(stabilize(&s, 1.0).is_err());
    }

    #[test]
    fn stabilize_degenerate_keeps_argmax() {
        let s = ShiftVector::new(0.3, 0.3, 0.4).unwrap();
        assert_eq!(stabilize(&s, 0.5).unwrap(), ShiftVector::RIGHT);
        let s = ShiftVector::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        assert_eq!(stabilize(&s, 0.5).unwrap(), ShiftVector::STAY);
    }

    #[test]
    fn conv_shift_stay_and_cycle() {
        let a = conv_shift(&[ShiftVector::STAY; 9], 5, 1e-12).unwrap();
        assert_eq!(a.len(), 10);
        for w in &a {
            assert!(Tensor::from_vec(w.0.clone()).max_abs_diff(&Tensor::one_hot(5, 0)) <= 1e-6);
        }
        let a = conv_shift(&[ShiftVector::RIGHT; 20], 8, 1e-12).unwrap();
        for (t, w) in a.iter().enumerate() {
            let want = Tensor::one_hot(8, t % 8);
            assert!(Tensor::from_vec(w.0.clone()).max_abs_diff(&want) <= 1e-6, "t={t}");
        }
    }

    #[test]
    fn one_hot_detection() {
        assert_eq!(e(4, 2).one_hot_index(), Some(2));
        assert_eq!(AddressWeights(vec![0.5, 0.5, 0.0]).one_hot_index(), None);
    }
}
