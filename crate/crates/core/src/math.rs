//! Scalar float functions that resolve to `std` or `libm` depending on features.

use num_traits::Float;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    Float::exp(x)
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    Float::ln(x)
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

#[inline(always)]
pub fn powf(x: f64, y: f64) -> f64 {
    Float::powf(x, y)
}

#[inline(always)]
pub fn abs(x: f64) -> f64 {
    Float::abs(x)
}

#[inline(always)]
pub fn powi(x: f64, n: i32) -> f64 {
    Float::powi(x, n)
}

/// `exp` written with plain arithmetic so loops over slices auto-vectorize.
///
/// Range reduction `x = k ln2 + r` with a two-part `ln2`, a degree-13
/// Taylor polynomial on `|r| <= ln2/2`, and the exponent spliced in by bit
/// manipulation. Relative error stays within a few ulp. Inputs are clamped
/// to `[-708, 709]`, so results never underflow to subnormals or zero.
#[inline(always)]
pub fn exp_poly(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const INV_LN2: f64 = core::f64::consts::LOG2_E;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let x = x.max(-708.0).min(709.0);
    let shifted = x * INV_LN2 + SHIFT;
    let k = shifted - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * r + 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // The low bits of `shifted` hold k; shifting them into the exponent
    // field builds 2^k.
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    p * scale
}


/// Dot product with eight independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Sum with eight independent accumulators (see [`dot`]).
#[inline]
pub fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    for x in &mut ca {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    let tail: f64 = ca.remainder().iter().sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
