//! Intrinsic-convolution and fully connected layers with hand-written backward passes.
//!
//! Activations are row-major `n x channels` matrices. Parameter gradients are
//! accumulated per fixed chunk of vertices and summed in chunk order.

use super::pseudo::PseudoCoords;
use crate::exec;

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`softplus`] for positive `y`.
pub(crate) fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Shape of one intrinsic-convolution layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct IcShape {
    pub cin: usize,
    pub cout: usize,
    pub gaussians: usize,
    pub relu: bool,
}

/// Read-only views of one IC layer's parameters.
pub(crate) struct IcParams<'a> {
    /// `J x 2` Gaussian centres in pseudo-coordinate space.
    pub means: &'a [f64],
    /// `J x 2` raw values; precisions are their softplus.
    pub raw_precision: &'a [f64],
    /// `J x cin x cout` mixing tensor.
    pub mixing: &'a [f64],
}

/// What the backward pass needs from the forward pass.
pub(crate) struct IcCache {
    /// Normalized patch weights, `entries x J`.
    pub alpha: Vec<f64>,
    /// Patch aggregates `a_j`, `n x J x cin`.
    pub agg: Vec<f64>,
    /// Pre-activation outputs, `n x cout`.
    pub pre: Vec<f64>,
}

pub(crate) struct IcGrads {
    pub means: Vec<f64>,
    pub raw_precision: Vec<f64>,
    pub mixing: Vec<f64>,
    /// `n x cin`, empty when not requested.
    pub input: Vec<f64>,
}

fn concat<T: Clone>(parts: Vec<Vec<T>>) -> Vec<T> {
    let mut out = Vec::with_capacity(parts.iter().map(Vec::len).sum());
    for p in parts {
        out.extend(p);
    }
    out
}

/// `out(v) = sum_j G_j^T sum_k alpha_jk(v) x(y_k)` with
/// `alpha_jk = softmax_k(-1/2 sum_d D_jd (u_kd - mu_jd)^2)`, then optional ReLU.
pub(crate) fn ic_forward(
    input: &[f64],
    pc: &PseudoCoords,
    p: &IcParams,
    s: IcShape,
) -> (Vec<f64>, IcCache) {
    let n = pc.vertex_count();
    let (cin, cout, jn) = (s.cin, s.cout, s.gaussians);
    let precision: Vec<f64> = p.raw_precision.iter().map(|&r| softplus(r)).collect();
    let parts = exec::map_chunks(n, exec::CHUNK, |range| {
        let first_entry = pc.entry_range(range.start).start;
        let last_entry = pc.entry_range(range.end - 1).end;
        let mut alpha = vec![0.0; (last_entry - first_entry) * jn];
        let mut agg = vec![0.0; range.len() * jn * cin];
        let mut pre = vec![0.0; range.len() * cout];
        for (local, v) in range.clone().enumerate() {
            let entries = pc.entry_range(v);
            let ys = pc.neighbors(v);
            let us = pc.coords(v);
            for j in 0..jn {
                let (m0, m1) = (p.means[2 * j], p.means[2 * j + 1]);
                let (d0, d1) = (precision[2 * j], precision[2 * j + 1]);
                let mut max = f64::NEG_INFINITY;
                for (k, u) in us.iter().enumerate() {
                    let l = -0.5 * (d0 * (u[0] - m0).powi(2) + d1 * (u[1] - m1).powi(2));
                    alpha[(entries.start - first_entry + k) * jn + j] = l;
                    max = max.max(l);
                }
                let mut sum = 0.0;
                for k in 0..us.len() {
                    let a = &mut alpha[(entries.start - first_entry + k) * jn + j];
                    *a = (*a - max).exp();
                    sum += *a;
                }
                let a_j = &mut agg[(local * jn + j) * cin..(local * jn + j + 1) * cin];
                for (k, &y) in ys.iter().enumerate() {
                    let a = &mut alpha[(entries.start - first_entry + k) * jn + j];
                    *a /= sum;
                    let w = *a;
                    for (acc, x) in a_j.iter_mut().zip(&input[y * cin..(y + 1) * cin]) {
                        *acc += w * x;
                    }
                }
                let out = &mut pre[local * cout..(local + 1) * cout];
                for (ci, &a) in a_j.iter().enumerate() {
                    let g = &p.mixing[(j * cin + ci) * cout..(j * cin + ci + 1) * cout];
                    for (o, w) in out.iter_mut().zip(g) {
                        *o += a * w;
                    }
                }
            }
        }
        (alpha, agg, pre)
    });
    let mut alpha = Vec::new();
    let mut agg = Vec::new();
    let mut pre = Vec::new();
    for (a, g, z) in parts {
        alpha.push(a);
        agg.push(g);
        pre.push(z);
    }
    let cache = IcCache { alpha: concat(alpha), agg: concat(agg), pre: concat(pre) };
    let out = if s.relu { cache.pre.iter().map(|&z| z.max(0.0)).collect() } else { cache.pre.clone() };
    (out, cache)
}

/// Backward pass of [`ic_forward`] given `grad_out = dL/d(output)`.
pub(crate) fn ic_backward(
    grad_out: &[f64],
    input: &[f64],
    pc: &PseudoCoords,
    p: &IcParams,
    s: IcShape,
    cache: &IcCache,
    want_input: bool,
) -> IcGrads {
    let n = pc.vertex_count();
    let (cin, cout, jn) = (s.cin, s.cout, s.gaussians);
    let precision: Vec<f64> = p.raw_precision.iter().map(|&r| softplus(r)).collect();
    let n_means = 2 * jn;
    let n_mix = jn * cin * cout;
    let parts = exec::map_chunks(n, exec::CHUNK, |range| {
        // layout: dmeans | dprecision | dmixing
        let mut grad = vec![0.0; 2 * n_means + n_mix];
        let mut b = vec![0.0; range.len() * jn * cin];
        let mut g = vec![0.0; cout];
        for (local, v) in range.clone().enumerate() {
            for (o, gz) in g.iter_mut().enumerate() {
                let z = cache.pre[v * cout + o];
                *gz = if s.relu && z <= 0.0 { 0.0 } else { grad_out[v * cout + o] };
            }
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let entries = pc.entry_range(v);
            let ys = pc.neighbors(v);
            let us = pc.coords(v);
            for j in 0..jn {
                let a_j = &cache.agg[(v * jn + j) * cin..(v * jn + j + 1) * cin];
                let b_j = &mut b[(local * jn + j) * cin..(local * jn + j + 1) * cin];
                for ci in 0..cin {
                    let row = (j * cin + ci) * cout;
                    let gm = &p.mixing[row..row + cout];
                    b_j[ci] = gm.iter().zip(&g).map(|(w, x)| w * x).sum();
                    let dg = &mut grad[2 * n_means + row..2 * n_means + row + cout];
                    for (d, x) in dg.iter_mut().zip(&g) {
                        *d += a_j[ci] * x;
                    }
                }
                let ba: f64 = b_j.iter().zip(a_j).map(|(x, y)| x * y).sum();
                let (m0, m1) = (p.means[2 * j], p.means[2 * j + 1]);
                let (d0, d1) = (precision[2 * j], precision[2 * j + 1]);
                for (k, &y) in ys.iter().enumerate() {
                    let alpha = cache.alpha[(entries.start + k) * jn + j];
                    let beta: f64 = b_j.iter().zip(&input[y * cin..(y + 1) * cin]).map(|(x, y)| x * y).sum();
                    let dl = alpha * (beta - ba);
                    let (e0, e1) = (us[k][0] - m0, us[k][1] - m1);
                    grad[2 * j] += dl * d0 * e0;
                    grad[2 * j + 1] += dl * d1 * e1;
                    grad[n_means + 2 * j] += dl * (-0.5 * e0 * e0);
                    grad[n_means + 2 * j + 1] += dl * (-0.5 * e1 * e1);
                }
            }
        }
        (grad, b)
    });
    let mut grads = Vec::with_capacity(parts.len());
    let mut bs = Vec::with_capacity(parts.len());
    for (g, b) in parts {
        grads.push(g);
        bs.push(b);
    }
    let mut total = exec::sum_partials(grads);
    for (i, &r) in p.raw_precision.iter().enumerate() {
        total[n_means + i] *= sigmoid(r);
    }
    let b = concat(bs);
    let input_grad = if want_input {
        let rows = exec::map_chunks(n, exec::CHUNK, |range| {
            let mut out = vec![0.0; range.len() * cin];
            for (local, y) in range.enumerate() {
                let dst = &mut out[local * cin..(local + 1) * cin];
                for &e in pc.entries_pointing_at(y) {
                    let v = pc.owner_of(e);
                    for j in 0..jn {
                        let alpha = cache.alpha[e * jn + j];
                        let b_j = &b[(v * jn + j) * cin..(v * jn + j + 1) * cin];
                        for (d, x) in dst.iter_mut().zip(b_j) {
                            *d += alpha * x;
                        }
                    }
                }
            }
            out
        });
        concat(rows)
    } else {
        Vec::new()
    };
    IcGrads {
        means: total[..n_means].to_vec(),
        raw_precision: total[n_means..2 * n_means].to_vec(),
        mixing: total[2 * n_means..].to_vec(),
        input: input_grad,
    }
}

/// Shape of one per-vertex fully connected layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FcShape {
    pub cin: usize,
    pub cout: usize,
    pub relu: bool,
}

/// `out = W x + b` per vertex, with `W` stored `cout x cin`, then optional ReLU.
/// Returns the post-activation output and the pre-activation values.
pub(crate) fn fc_forward(input: &[f64], n: usize, weight: &[f64], bias: &[f64], s: FcShape) -> (Vec<f64>, Vec<f64>) {
    let parts = exec::map_chunks(n, exec::CHUNK, |range| {
        let mut pre = vec![0.0; range.len() * s.cout];
        for (local, v) in range.enumerate() {
            let x = &input[v * s.cin..(v + 1) * s.cin];
            for o in 0..s.cout {
                let w = &weight[o * s.cin..(o + 1) * s.cin];
                pre[local * s.cout + o] = bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        pre
    });
    let pre = concat(parts);
    let out = if s.relu { pre.iter().map(|&z| z.max(0.0)).collect() } else { pre.clone() };
    (out, pre)
}

pub(crate) struct FcGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

pub(crate) fn fc_backward(
    grad_out: &[f64],
    input: &[f64],
    pre: &[f64],
    n: usize,
    weight: &[f64],
    s: FcShape,
) -> FcGrads {
    let (cin, cout) = (s.cin, s.cout);
    let parts = exec::map_chunks(n, exec::CHUNK, |range| {
        let mut grad = vec![0.0; cout * cin + cout];
        let mut dx = vec![0.0; range.len() * cin];
        for (local, v) in range.enumerate() {
            let x = &input[v * cin..(v + 1) * cin];
            let dst = &mut dx[local * cin..(local + 1) * cin];
            for o in 0..cout {
                let z = pre[v * cout + o];
                let g = if s.relu && z <= 0.0 { 0.0 } else { grad_out[v * cout + o] };
                if g == 0.0 {
                    continue;
                }
                let w = &weight[o * cin..(o + 1) * cin];
                let dw = &mut grad[o * cin..(o + 1) * cin];
                for i in 0..cin {
                    dw[i] += g * x[i];
                    dst[i] += g * w[i];
                }
                grad[cout * cin + o] += g;
            }
        }
        (grad, dx)
    });
    let mut grads = Vec::with_capacity(parts.len());
    let mut dxs = Vec::with_capacity(parts.len());
    for (g, d) in parts {
        grads.push(g);
        dxs.push(d);
    }
    let total = exec::sum_partials(grads);
    FcGrads { weight: total[..cout * cin].to_vec(), bias: total[cout * cin..].to_vec(), input: concat(dxs) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_helpers() {
        for x in [-5.0, 0.0, 0.7, 40.0] {
            assert!((softplus_inverse(softplus(x)) - x).abs() < 1e-9);
        }
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn self_only_neighbourhood_is_plain_mixing() {
        let pc = PseudoCoords::from_grid(&[(0, 0), (5, 5)], 8, 8, 1).unwrap();
        let input = vec![1.0, 2.0, -1.0, 0.5];
        let mixing = vec![1.0, 0.0, 3.0, 2.0, -1.0, 1.0];
        let means = [0.0, 0.0];
        let raw = [softplus_inverse(1.0); 2];
        let p = IcParams { means: &means, raw_precision: &raw, mixing: &mixing };
        let s = IcShape { cin: 2, cout: 3, gaussians: 1, relu: false };
        let (out, _) = ic_forward(&input, &pc, &p, s);
        // G is 2x3; out = G^T x
        assert_eq!(&out[..3], &[1.0 + 4.0, -2.0, 3.0 + 2.0]);
        assert_eq!(&out[3..], &[-1.0 + 1.0, -0.5, -3.0 + 0.5]);
        let (zero, _) = ic_forward(&[0.0; 4], &pc, &p, s);
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_vertex_weighted_sum_by_hand() {
        // vertices at columns 0 and 1 of one row, r = 1; J = 1 with mu = (0, 0.5), D = (2, 1)
        let pc = PseudoCoords::from_grid(&[(0, 0), (0, 1)], 2, 1, 1).unwrap();
        let input = vec![1.0, 3.0];
        let means = [0.0, 0.5];
        let raw = [softplus_inverse(2.0), softplus_inverse(1.0)];
        let mixing = vec![1.0];
        let p = IcParams { means: &means, raw_precision: &raw, mixing: &mixing };
        let s = IcShape { cin: 1, cout: 1, gaussians: 1, relu: false };
        let (out, _) = ic_forward(&input, &pc, &p, s);
        // vertex 0 sees itself at (0,0) and vertex 1 at (0,1):
        //   w(0,0) = exp(-0.5 * 0.25), w(0,1) = exp(-0.5 * 0.25): equal, so the mean is 2
        // vertex 1 sees vertex 0 at (0,-1) and itself at (0,0):
        //   w(0,-1) = exp(-0.5 * 2.25), w(0,0) = exp(-0.5 * 0.25)
        let w_far = (-1.125f64).exp();
        let w_self = (-0.125f64).exp();
        let expect1 = (w_far * 1.0 + w_self * 3.0) / (w_far + w_self);
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!((out[1] - expect1).abs() < 1e-12, "{} vs {expect1}", out[1]);
    }

    #[test]
    fn fc_forward_by_hand() {
        let w = [1.0, 2.0, -1.0, 0.0];
        let b = [0.5, -0.5];
        let (out, pre) = fc_forward(&[1.0, 1.0], 1, &w, &b, FcShape { cin: 2, cout: 2, relu: true });
        assert_eq!(pre, vec![3.5, -1.5]);
        assert_eq!(out, vec![3.5, 0.0]);
    }
}
