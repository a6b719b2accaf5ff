//! Independent brute-force references used by tests and the gradcheck
//! command. These share no code with the production tensor/model paths:
//! plain nested loops over plain buffers, so agreement is evidence.

use crate::error::{HgError, Result};

/// Central finite differences of a scalar function, default eps 1e-5.
pub fn fd_gradient<F>(mut f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        work[i] = theta[i] + eps;
        let fp = f(&work);
        work[i] = theta[i] - eps;
        let fm = f(&work);
        work[i] = theta[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(HgError::numerical(format!(
                "non-finite function value while probing coordinate {i}"
            )));
        }
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    Ok(grad)
}

fn gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Literal transcription of the two aggregation equations, no options, no
/// norms, no dropout. Dense row-major buffers, scalar loops.
///
/// `xn` is n x h, `w_a` is h x h, `w_b` is h x m; returns n x h.
pub fn dense_ha_forward(
    xn: &[f64],
    n: usize,
    h: usize,
    w_a: &[f64],
    w_b: &[f64],
    m: usize,
) -> Vec<f64> {
    assert_eq!(xn.len(), n * h);
    assert_eq!(w_a.len(), h * h);
    assert_eq!(w_b.len(), h * m);

    // hidden = sigma(Xn * W_A)            (n x h)
    let mut hidden = vec![0.0; n * h];
    for i in 0..n {
        for j in 0..h {
            let mut acc = 0.0;
            for k in 0..h {
                acc += xn[i * h + k] * w_a[k * h + j];
            }
            hidden[i * h + j] = gelu(acc);
        }
    }
    // w_tar = hidden * W_B                (n x m)
    let mut w_tar = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..h {
                acc += hidden[i * h + k] * w_b[k * m + j];
            }
            w_tar[i * m + j] = acc;
        }
    }
    // mixed = sigma(Xn^T * w_tar)         (h x m)
    let mut mixed = vec![0.0; h * m];
    for i in 0..h {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..n {
                acc += xn[k * h + i] * w_tar[k * m + j];
            }
            mixed[i * m + j] = gelu(acc);
        }
    }
    // out^T = mixed * w_tar^T             (h x n), returned transposed (n x h)
    let mut out = vec![0.0; n * h];
    for i in 0..h {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..m {
                acc += mixed[i * m + k] * w_tar[j * m + k];
            }
            out[j * h + i] = acc;
        }
    }
    out
}

/// All permutations of 0..n in lexicographic order; n capped at 6.
pub fn enumerate_permutations(n: usize) -> Result<Vec<Vec<usize>>> {
    if n > 6 {
        return Err(HgError::config(format!(
            "permutation enumeration capped at n=6, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    permute(&mut items, 0, &mut out);
    out.sort();
    Ok(out)
}

fn permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, out);
        items.swap(k, i);
    }
}
