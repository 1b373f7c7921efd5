use std::f64::consts::PI;

/// Width of the encoding of a 3-vector with `levels` frequency bands.
pub const fn encoded_dim(levels: usize) -> usize {
    3 + 6 * levels
}

/// `[x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx)]`, where each
/// sin/cos entry is a 3-vector. Inputs are expected in `[−1, 1]`.
pub fn positional_encode(x: [f64; 3], levels: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_dim(levels)];
    encode_into(x, levels, &mut out);
    out
}

pub(crate) fn encode_into(x: [f64; 3], levels: usize, out: &mut [f64]) {
    out[..3].copy_from_slice(&x);
    let mut freq = PI;
    for l in 0..levels {
        let base = 3 + 6 * l;
        for c in 0..3 {
            let (s, co) = (freq * x[c]).sin_cos();
            out[base + c] = s;
            out[base + 3 + c] = co;
        }
        freq *= 2.0;
    }
}
