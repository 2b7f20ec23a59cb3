//! Scalar activations used in the hot loops.
//!
//! `exp64` is a Cephes-style rational approximation (~1 ulp over the normal
//! range). Unlike the libm call it is branch-free straight-line arithmetic,
//! so gate loops that use it can be auto-vectorized, and the value stream is
//! pinned by this crate rather than the host's libm build.

/// exp(x) with |x| clamped to the normal range; ~1e-16 relative error.
#[inline]
pub fn exp64(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    // ln 2 split high/low for exact range reduction
    const C1: f64 = 6.931_457_519_531_25e-1;
    const C2: f64 = 1.428_606_820_309_417_2e-6;
    const P0: f64 = 1.261_771_930_748_105_9e-4;
    const P1: f64 = 3.029_944_077_074_419_6e-2;
    const P2: f64 = 1.0;
    const Q0: f64 = 3.001_985_051_386_644_6e-6;
    const Q1: f64 = 2.524_483_403_496_841e-3;
    const Q2: f64 = 2.272_655_482_081_550_3e-1;
    const Q3: f64 = 2.0;

    let x = x.clamp(-708.0, 708.0);
    let n = (LOG2E * x).round();
    let r = x - n * C1 - n * C2;
    let rr = r * r;
    let p = r * (P2 + rr * (P1 + rr * P0));
    let q = Q3 + rr * (Q2 + rr * (Q1 + rr * Q0));
    let e = 1.0 + 2.0 * p / (q - p);
    // scale by 2^n through the exponent bits
    let scale = f64::from_bits(((n as i64 + 1023) as u64) << 52);
    e * scale
}

#[inline]
pub fn sigmoid64(x: f64) -> f64 {
    1.0 / (1.0 + exp64(-x))
}

#[inline]
pub fn tanh64(x: f64) -> f64 {
    // computed on |x| so the small-x numerator (1 - e^-2|x|) never cancels
    let e = exp64(-2.0 * x.abs());
    let t = (1.0 - e) / (1.0 + e);
    t.copysign(x)
}
