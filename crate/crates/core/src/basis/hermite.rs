/// Orthonormal probabilists' Hermite functions `h_0..h_{n-1}` at `z`,
/// i.e. `He_k(z) / sqrt(k!)`, via the three-term recurrence.
pub fn orthonormal_hermite(z: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    out[1] = z;
    for k in 1..n - 1 {
        let kf = k as f64;
        out[k + 1] = (z * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

/// Derivatives `h_k'(z) = sqrt(k) h_{k-1}(z)`.
pub fn hermite_derivatives(z: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let mut vals = vec![0.0; n];
    orthonormal_hermite(z, &mut vals);
    out[0] = 0.0;
    for k in 1..n {
        out[k] = (k as f64).sqrt() * vals[k - 1];
    }
}
