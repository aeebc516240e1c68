//! Discrete Teager-Kaiser energy operator.

use crate::error::{Error, Result};

/// `ψ(n) = x(n)² − x(n−1)·x(n+1)` on interior points; each endpoint copies
/// its nearest interior value so the output has the input's length.
pub fn tkeo(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::SignalTooShort { len: n, min: 3 });
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = x[i] * x[i] - x[i - 1] * x[i + 1];
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    Ok(out)
}
