//! Shared numeric helpers: dB conversions, complex vector algebra, and the
//! power-iteration singular solver used to normalize self-interference
//! channels.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Linear floor applied before dB conversion. Keeps orthogonal beams at a
/// finite -200 dB instead of -inf so measurements stay usable as network
/// inputs.
pub const DB_FLOOR_LINEAR: f64 = 1e-20;

/// dB value of [`DB_FLOOR_LINEAR`].
pub const DB_FLOOR_DB: f64 = -200.0;

/// Power ratio to dB with the linear floor applied.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.max(DB_FLOOR_LINEAR).log10()
}

/// dB to power ratio. `-inf` maps to 0.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// SINR reconstructed from dB-domain signal and interference readings.
pub fn sinr_from_db_parts(snr_db: f64, inr_db: f64) -> f64 {
    from_db(snr_db) / (1.0 + from_db(inr_db))
}

/// Conjugated inner product `sum_i conj(a_i) * b_i`.
pub fn cdot(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sq(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Frobenius norm of a complex matrix.
pub fn frobenius_norm(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Matrix-vector product `m * v`.
pub fn matvec(m: &Array2<Complex64>, v: &Array1<Complex64>) -> Array1<Complex64> {
    let (rows, cols) = m.dim();
    debug_assert_eq!(cols, v.len());
    Array1::from_iter((0..rows).map(|r| (0..cols).map(|c| m[[r, c]] * v[c]).sum()))
}

/// Conjugate-transposed matrix-vector product `m^H * v`.
pub fn matvec_herm(m: &Array2<Complex64>, v: &Array1<Complex64>) -> Array1<Complex64> {
    let (rows, cols) = m.dim();
    debug_assert_eq!(rows, v.len());
    Array1::from_iter((0..cols).map(|c| (0..rows).map(|r| m[[r, c]].conj() * v[r]).sum()))
}

/// Largest singular value and the corresponding left/right singular vectors
/// of a complex matrix, via power iteration on the Gram matrix `m^H m`.
///
/// Deterministic: the iteration starts from a fixed vector, so repeated calls
/// on the same matrix are bit-identical.
pub fn top_singular_triple(
    m: &Array2<Complex64>,
) -> Result<(f64, Array1<Complex64>, Array1<Complex64>)> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::DegenerateChannel("empty matrix".into()));
    }
    let fro = frobenius_norm(m);
    if fro == 0.0 || !fro.is_finite() {
        return Err(Error::DegenerateChannel(
            "matrix has zero or non-finite Frobenius norm".into(),
        ));
    }

    // Fixed, mildly irregular start vector; avoids the measure-zero case of
    // starting orthogonal to the top eigenvector of the Gram matrix.
    let mut v: Array1<Complex64> = Array1::from_iter(
        (0..cols).map(|i| Complex64::new(1.0 + 0.31 * (i as f64), 0.17 * ((i % 3) as f64))),
    );
    let vn = norm_sq(&v).sqrt();
    v.mapv_inplace(|z| z / vn);

    let mut rayleigh = 0.0f64;
    for _ in 0..20_000 {
        // gram * v computed as m^H (m v); avoids forming the Gram matrix.
        let mv = matvec(m, &v);
        let gv = matvec_herm(m, &mv);
        let gn = norm_sq(&gv).sqrt();
        if gn == 0.0 {
            return Err(Error::DegenerateChannel(
                "power iteration collapsed to zero".into(),
            ));
        }
        let next = gv.mapv(|z| z / gn);
        let new_rayleigh = norm_sq(&matvec(m, &next));
        v = next;
        if (new_rayleigh - rayleigh).abs() <= 1e-15 * new_rayleigh.max(1.0) {
            rayleigh = new_rayleigh;
            break;
        }
        rayleigh = new_rayleigh;
    }

    let sigma = rayleigh.sqrt();
    let mv = matvec(m, &v);
    let un = norm_sq(&mv).sqrt();
    let u = mv.mapv(|z| z / un);
    Ok((sigma, u, v))
}

/// SplitMix64-style mixing of a base seed with context words. Used to derive
/// independent, reproducible RNG streams per (pair, purpose, ...) without
/// coordinating counters.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    let mix = |x: u64, state: &mut u64| {
        *state = state.wrapping_add(x).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut out = mix(base, &mut state);
    for &p in parts {
        out ^= mix(p, &mut state).rotate_left(17);
    }
    out
}
