//! Bessel functions of the first kind, evaluated two independent ways.
//!
//! The power series is used for the fixed-argument constants `J0(pi/2)` and
//! `J1(pi/2)` entering the device-parameter mapping; the Miller downward
//! recurrence produces the whole coefficient array `J_0..J_pmax(x)` needed by
//! the propagator plan.

/// `J_n(x)` by direct power-series summation.
///
/// Converges quickly for the moderate arguments used here (|x| up to a few
/// tens); terms are added until they drop below 1e-18 relative.
pub fn jn_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // term_k = (-1)^k (x/2)^{n+2k} / (k! (n+k)!)
    let mut term = 1.0;
    for j in 1..=n {
        term *= half / j as f64;
    }
    let mut sum = term;
    let mut k = 1u32;
    loop {
        term *= -(half * half) / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) || k > 300 {
            break;
        }
        k += 1;
    }
    sum
}

/// `[J_0(x), .., J_pmax(x)]` by Miller's downward recurrence, normalized with
/// the Neumann sum `J_0 + 2 sum_k J_2k = 1`.
pub fn jn_array(pmax: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; pmax + 1];
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    // Start the recurrence far enough above both pmax and |x| that the
    // unnormalized solution is dominated by J.
    let start = pmax.max(ax as usize) + 30 + (ax.sqrt() as usize) * 2;
    let mut jp1 = 0.0f64;
    let mut j = 1e-30f64;
    let mut out = vec![0.0; pmax + 1];
    let mut norm = 0.0f64;
    for p in (0..=start).rev() {
        let jm1 = 2.0 * (p as f64 + 1.0) / ax * j - jp1;
        jp1 = j;
        j = jm1;
        if p <= pmax {
            out[p] = j;
        }
        if p % 2 == 0 {
            norm += if p == 0 { j } else { 2.0 * j };
        }
        // rescale to avoid overflow
        if j.abs() > 1e100 {
            jp1 /= 1e100;
            j /= 1e100;
            norm /= 1e100;
            for v in out.iter_mut() {
                *v /= 1e100;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (p, v) in out.iter_mut().enumerate() {
            if p % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}
