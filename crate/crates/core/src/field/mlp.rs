//! Batched residual MLP: `h0 = sp(W0 x + b0)`, `h_l = h_{l-1} + sp(W_l h_{l-1} + b_l)`,
//! `out = W_o h_3 + b_o`, with `sp` the softplus. Rows are samples.

use super::{sigmoid, HeadLayout, HEAD_DEPTH};

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `c (m×n) = alpha · a·bᵀ + beta · c` with `a` row-major `m×k` and `b` row-major `n×k`.
fn gemm_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: the slices cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×n) += aᵀ·b` with `a` row-major `k×m` and `b` row-major `k×n`.
fn gemm_atb_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×n) = a·b` with `a` row-major `m×k` and `b` row-major `k×n`.
fn gemm_ab(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

pub(crate) struct Cache {
    pub rows: usize,
    /// Pre-activations of each hidden layer, `rows × H`.
    pub pre: Vec<Vec<f64>>,
    /// Hidden states after each layer, `rows × H`.
    pub hid: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

fn add_bias(y: &mut [f64], b: &[f64]) {
    for row in y.chunks_mut(b.len()) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

pub(crate) fn forward(params: &[f64], l: &HeadLayout, input: &[f64], rows: usize) -> Cache {
    let h = l.hidden;
    debug_assert_eq!(input.len(), rows * l.input);
    let mut pre = Vec::with_capacity(HEAD_DEPTH);
    let mut hid: Vec<Vec<f64>> = Vec::with_capacity(HEAD_DEPTH);
    for layer in 0..HEAD_DEPTH {
        let (x, fan_in) = if layer == 0 { (input, l.input) } else { (hid[layer - 1].as_slice(), h) };
        let w = &params[l.weights[layer]..l.weights[layer] + h * fan_in];
        let mut a = vec![0.0; rows * h];
        gemm_abt(rows, fan_in, h, x, w, 0.0, &mut a);
        add_bias(&mut a, &params[l.biases[layer]..l.biases[layer] + h]);
        let mut next: Vec<f64> = a.iter().map(|&v| softplus(v)).collect();
        if layer > 0 {
            for (n, p) in next.iter_mut().zip(&hid[layer - 1]) {
                *n += p;
            }
        }
        pre.push(a);
        hid.push(next);
    }
    let mut out = vec![0.0; rows * l.output];
    let wo = &params[l.out_weight..l.out_weight + l.output * h];
    gemm_abt(rows, h, l.output, &hid[HEAD_DEPTH - 1], wo, 0.0, &mut out);
    add_bias(&mut out, &params[l.out_bias..l.out_bias + l.output]);
    Cache { rows, pre, hid, out }
}

fn col_sums_acc(x: &[f64], cols: usize, acc: &mut [f64]) {
    for row in x.chunks(cols) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Accumulates parameter gradients into `grad` (indexed like `params`) and returns
/// the gradient with respect to the input rows.
pub(crate) fn backward(
    params: &[f64],
    l: &HeadLayout,
    input: &[f64],
    cache: &Cache,
    d_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let (rows, h) = (cache.rows, l.hidden);
    gemm_atb_acc(l.output, rows, h, d_out, &cache.hid[HEAD_DEPTH - 1], &mut grad[l.out_weight..l.out_weight + l.output * h]);
    col_sums_acc(d_out, l.output, &mut grad[l.out_bias..l.out_bias + l.output]);
    let mut dh = vec![0.0; rows * h];
    gemm_ab(rows, l.output, h, d_out, &params[l.out_weight..l.out_weight + l.output * h], &mut dh);
    for layer in (0..HEAD_DEPTH).rev() {
        let (x, fan_in) = if layer == 0 { (input, l.input) } else { (cache.hid[layer - 1].as_slice(), h) };
        let da: Vec<f64> = dh.iter().zip(&cache.pre[layer]).map(|(d, &a)| d * sigmoid(a)).collect();
        let w_off = l.weights[layer];
        gemm_atb_acc(h, rows, fan_in, &da, x, &mut grad[w_off..w_off + h * fan_in]);
        col_sums_acc(&da, h, &mut grad[l.biases[layer]..l.biases[layer] + h]);
        let mut dx = vec![0.0; rows * fan_in];
        gemm_ab(rows, h, fan_in, &da, &params[w_off..w_off + h * fan_in], &mut dx);
        if layer == 0 {
            return dx;
        }
        // the residual path carries dh straight through
        for (a, b) in dx.iter_mut().zip(&dh) {
            *a += b;
        }
        dh = dx;
    }
    unreachable!("loop returns at layer 0")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive single-row forward for comparison.
    fn naive(params: &[f64], l: &HeadLayout, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = Vec::new();
        for layer in 0..HEAD_DEPTH {
            let fan_in = if layer == 0 { l.input } else { l.hidden };
            let src = if layer == 0 { x.to_vec() } else { h.clone() };
            let mut next = vec![0.0; l.hidden];
            for o in 0..l.hidden {
                let mut a = params[l.biases[layer] + o];
                for i in 0..fan_in {
                    a += params[l.weights[layer] + o * fan_in + i] * src[i];
                }
                next[o] = (1.0 + a.exp()).ln() + if layer > 0 { h[o] } else { 0.0 };
            }
            h = next;
        }
        (0..l.output)
            .map(|o| params[l.out_bias + o] + (0..l.hidden).map(|i| params[l.out_weight + o * l.hidden + i] * h[i]).sum::<f64>())
            .collect()
    }

    #[test]
    fn batched_gemm_matches_naive_loops() {
        let l = HeadLayout::new(0, 5, 7, 3);
        let params: Vec<f64> = (0..l.end).map(|i| ((i * 37 % 101) as f64 / 101.0 - 0.5) * 0.8).collect();
        let rows = 4;
        let input: Vec<f64> = (0..rows * 5).map(|i| (i as f64 * 0.31).sin()).collect();
        let c = forward(&params, &l, &input, rows);
        for r in 0..rows {
            let want = naive(&params, &l, &input[r * 5..r * 5 + 5]);
            for o in 0..3 {
                assert!((c.out[r * 3 + o] - want[o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let l = HeadLayout::new(0, 4, 6, 2);
        let mut params: Vec<f64> = (0..l.end).map(|i| ((i * 53 % 97) as f64 / 97.0 - 0.5) * 0.9).collect();
        let rows = 3;
        let input: Vec<f64> = (0..rows * 4).map(|i| (i as f64 * 0.77).cos()).collect();
        // loss = Σ out · coeff
        let coeff: Vec<f64> = (0..rows * 2).map(|i| 0.3 + 0.1 * i as f64).collect();
        let loss = |p: &[f64], x: &[f64]| -> f64 { forward(p, &l, x, rows).out.iter().zip(&coeff).map(|(a, b)| a * b).sum() };
        let c = forward(&params, &l, &input, rows);
        let mut grad = vec![0.0; l.end];
        let dx = backward(&params, &l, &input, &c, &coeff, &mut grad);
        let h = 1e-6;
        for i in 0..l.end {
            let orig = params[i];
            params[i] = orig + h;
            let a = loss(&params, &input);
            params[i] = orig - h;
            let b = loss(&params, &input);
            params[i] = orig;
            let num = (a - b) / (2.0 * h);
            assert!((num - grad[i]).abs() < 1e-7 * (1.0 + num.abs()), "param {i}: {num} vs {}", grad[i]);
        }
        let mut x = input.clone();
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let a = loss(&params, &x);
            x[i] = orig - h;
            let b = loss(&params, &x);
            x[i] = orig;
            assert!(((a - b) / (2.0 * h) - dx[i]).abs() < 1e-7);
        }
    }
}
