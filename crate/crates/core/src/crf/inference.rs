use super::{CrfParams, KernelMatrices, Unary};
use crate::error::{Error, Result};
use crate::optim::Params;
use crate::prob::{softmax_in_place, ProbabilityField};

/// Intermediate values of an unrolled mean-field run.
#[derive(Debug, Clone)]
pub struct MeanFieldTrace {
    /// `Q^0 .. Q^T`, each `N x L`.
    pub q: Vec<Vec<f64>>,
    /// Unscaled kernel messages of iterations `1..=T`.
    messages: Vec<[Vec<f64>; 3]>,
    /// Combined messages `P^t` of iterations `1..=T`.
    combined: Vec<Vec<f64>>,
}

impl MeanFieldTrace {
    pub fn output(&self, classes: usize) -> ProbabilityField {
        let q = self.q.last().expect("trace holds Q^0").clone();
        ProbabilityField::new(q.len() / classes, classes, q).expect("mean-field rows are normalized")
    }
}

/// Gradients of a scalar loss with respect to the CRF parameters (laid out
/// as [`CrfParams::learnable`]) and to the unary costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub params: Params,
    pub unary: Vec<f64>,
}

fn check(unary: &Unary, params: &CrfParams, kernels: &KernelMatrices) -> Result<()> {
    params.validate()?;
    if unary.classes() != params.classes {
        return Err(Error::Dimension(format!("unary has {} classes, CRF has {}", unary.classes(), params.classes)));
    }
    if unary.vertex_count() != kernels.n {
        return Err(Error::Dimension(format!("unary has {} vertices, kernels have {}", unary.vertex_count(), kernels.n)));
    }
    Ok(())
}

fn initial(unary: &Unary) -> Vec<f64> {
    let mut q: Vec<f64> = unary.values().iter().map(|u| -u).collect();
    for row in q.chunks_mut(unary.classes()) {
        softmax_in_place(row);
    }
    q
}

/// `Z = -U - P mu^T`, then a row softmax.
fn update(unary: &Unary, mu: &[f64], combined: &[f64], t: usize) -> Result<Vec<f64>> {
    let l = unary.classes();
    let mut z = vec![0.0; combined.len()];
    for ((zr, pr), ur) in z.chunks_mut(l).zip(combined.chunks(l)).zip(unary.values().chunks(l)) {
        for a in 0..l {
            let c: f64 = mu[a * l..(a + 1) * l].iter().zip(pr).map(|(m, p)| m * p).sum();
            zr[a] = -ur[a] - c;
        }
        softmax_in_place(zr);
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("mean-field iteration {t}")));
    }
    Ok(z)
}

fn combine(messages: &[Vec<f64>; 3], c: [f64; 3]) -> Vec<f64> {
    messages[0]
        .iter()
        .zip(&messages[1])
        .zip(&messages[2])
        .map(|((a, b), d)| c[0] * a + c[1] * b + c[2] * d)
        .collect()
}

/// Run `T` mean-field updates and keep every intermediate for backpropagation.
pub fn mean_field_forward(unary: &Unary, params: &CrfParams, kernels: &KernelMatrices) -> Result<MeanFieldTrace> {
    check(unary, params, kernels)?;
    let c = params.coefficients(kernels);
    let l = params.classes;
    let mut trace = MeanFieldTrace { q: vec![initial(unary)], messages: Vec::new(), combined: Vec::new() };
    for t in 1..=params.iterations {
        let m = kernels.messages(trace.q.last().unwrap(), l);
        let p = combine(&m, c);
        let q = update(unary, &params.mu, &p, t)?;
        trace.messages.push(m);
        trace.combined.push(p);
        trace.q.push(q);
    }
    Ok(trace)
}

/// Approximate marginals `Q^T` after `T` mean-field updates.
pub fn mean_field_infer(unary: &Unary, params: &CrfParams, kernels: &KernelMatrices) -> Result<ProbabilityField> {
    check(unary, params, kernels)?;
    let c = params.coefficients(kernels);
    let l = params.classes;
    let mut q = initial(unary);
    for t in 1..=params.iterations {
        let p = if c == [0.0; 3] { vec![0.0; q.len()] } else { combine(&kernels.messages(&q, l), c) };
        q = update(unary, &params.mu, &p, t)?;
    }
    Ok(ProbabilityField::new(kernels.n, l, q)?)
}

/// `dL/dZ` of a row softmax from `dL/dQ`.
fn softmax_backward(q: &[f64], gq: &[f64], l: usize) -> Vec<f64> {
    let mut gz = vec![0.0; q.len()];
    for ((z, qr), gr) in gz.chunks_mut(l).zip(q.chunks(l)).zip(gq.chunks(l)) {
        let inner: f64 = qr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for k in 0..l {
            z[k] = qr[k] * (gr[k] - inner);
        }
    }
    gz
}

/// Backpropagate `dL/dQ^T` through the unrolled updates of `trace`.
pub fn mean_field_backward(
    trace: &MeanFieldTrace,
    params: &CrfParams,
    kernels: &KernelMatrices,
    grad_q: &[f64],
) -> Result<CrfGradient> {
    let l = params.classes;
    let n = kernels.n;
    if grad_q.len() != n * l || trace.q.len() != params.iterations + 1 {
        return Err(Error::Dimension("gradient or trace does not match the CRF".into()));
    }
    let c = params.coefficients(kernels);
    let mut g_mu = vec![0.0; l * l];
    let mut g_coef = [0.0; 3];
    let mut g_unary = vec![0.0; n * l];
    let mut g_q = grad_q.to_vec();
    for t in (1..=params.iterations).rev() {
        let g_z = softmax_backward(&trace.q[t], &g_q, l);
        let p = &trace.combined[t - 1];
        let mut g_p = vec![0.0; n * l];
        for v in 0..n {
            let gz = &g_z[v * l..(v + 1) * l];
            let pr = &p[v * l..(v + 1) * l];
            let gp = &mut g_p[v * l..(v + 1) * l];
            for a in 0..l {
                g_unary[v * l + a] -= gz[a];
                // dL/dC = -dL/dZ
                let gc = -gz[a];
                for b in 0..l {
                    g_mu[a * l + b] += gc * pr[b];
                    gp[b] += gc * params.mu[a * l + b];
                }
            }
        }
        for (k, m) in trace.messages[t - 1].iter().enumerate() {
            g_coef[k] += g_p.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
        }
        let back = kernels.messages(&g_p, l);
        g_q = combine(&back, c);
    }
    let g_z = softmax_backward(&trace.q[0], &g_q, l);
    for (u, z) in g_unary.iter_mut().zip(&g_z) {
        *u -= z;
    }
    let mut g = params.learnable().zeros_like();
    g.block_mut(0).copy_from_slice(&g_mu);
    g.block_mut(1).copy_from_slice(&[
        g_coef[0] * kernels.scale[0],
        g_coef[1] * params.far_sign * kernels.scale[1],
        g_coef[2] * kernels.scale[2],
    ]);
    Ok(CrfGradient { params: g, unary: g_unary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::Bandwidth;

    fn kernels2() -> KernelMatrices {
        let f = vec![[0.0; 6], [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]];
        KernelMatrices::from_parts(&[0.0, 0.5, 0.5, 0.0], f, [1.0, 1.0, 2.0], false).unwrap()
    }

    #[test]
    fn zero_weights_give_softmax_of_unary() {
        let k = kernels2();
        let u = Unary::new(2, 2, vec![0.1, 2.0, 1.5, 0.2]).unwrap();
        let mut p = CrfParams::identity(2);
        [p.w_near, p.w_far, p.w_feat] = [0.0; 3];
        for t in [1, 3, 7] {
            p.iterations = t;
            let q = mean_field_infer(&u, &p, &k).unwrap();
            let q0 = initial(&u);
            assert_eq!(q.values(), q0.as_slice());
        }
    }

    #[test]
    fn single_update_matches_hand_unrolling() {
        let k = kernels2();
        let u = Unary::new(2, 2, vec![0.1, 2.0, 1.5, 0.2]).unwrap();
        let mut p = CrfParams::identity(2);
        p.normalize_kernels = false;
        p.iterations = 1;
        [p.w_near, p.w_far, p.w_feat] = [0.5, 0.3, 0.2];
        p.mu = vec![1.0, 0.4, -0.2, 0.8];
        let s = |a: f64, b: f64| {
            let (ea, eb) = (a.exp(), b.exp());
            [ea / (ea + eb), eb / (ea + eb)]
        };
        let q0 = [s(-0.1, -2.0), s(-1.5, -0.2)];
        let kk = 0.5 * (-0.5f64).exp() - 0.3 * (1.0 - (-0.5f64).exp()) + 0.2 * (-0.5f64).exp();
        // vertex 0 hears vertex 1 and vice versa
        let m = [[kk * q0[1][0], kk * q0[1][1]], [kk * q0[0][0], kk * q0[0][1]]];
        let c = |m: [f64; 2]| [1.0 * m[0] + 0.4 * m[1], -0.2 * m[0] + 0.8 * m[1]];
        let (c0, c1) = (c(m[0]), c(m[1]));
        let want = [s(-0.1 - c0[0], -2.0 - c0[1]), s(-1.5 - c1[0], -0.2 - c1[1])];
        let q = mean_field_infer(&u, &p, &k).unwrap();
        for v in 0..2 {
            for a in 0..2 {
                assert!((q.row(v)[a] - want[v][a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn non_finite_reports_iteration() {
        let k = kernels2();
        let u = Unary::new(2, 2, vec![0.1, 2.0, 1.5, 0.2]).unwrap();
        let mut p = CrfParams::identity(2);
        p.w_near = 1e308;
        p.mu = vec![1e308, -1e308, 0.0, 1.0];
        let err = mean_field_infer(&u, &p, &k).unwrap_err().to_string();
        assert!(err.contains("iteration 1"), "{err}");
    }

    fn loss_of(p: &CrfParams, u: &Unary, k: &KernelMatrices, weights: &[f64]) -> f64 {
        let q = mean_field_infer(u, p, k).unwrap();
        q.values().iter().zip(weights).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let l = 3;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let x = rng.gen_range(0.1..2.0);
                d[i * n + j] = x;
                d[j * n + i] = x;
            }
        }
        let f: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let k = KernelMatrices::from_parts(&d, f, [0.7, 1.3, 0.9], true).unwrap();
        let u = Unary::new(n, l, (0..n * l).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
        let mut p = CrfParams::identity(l);
        p.sigma_near = Bandwidth::Absolute(0.7);
        p.mu.iter_mut().for_each(|m| *m += rng.gen_range(-0.5..0.5));
        [p.w_near, p.w_far, p.w_feat] = [0.8, -0.6, 1.1];
        p.iterations = 4;
        let weights: Vec<f64> = (0..n * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let trace = mean_field_forward(&u, &p, &k).unwrap();
        assert_eq!(trace.output(l), mean_field_infer(&u, &p, &k).unwrap());
        let g = mean_field_backward(&trace, &p, &k, &weights).unwrap();
        let eps = 1e-6;
        let base = p.learnable();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus.values_mut()[i] += eps;
            let mut minus = base.clone();
            minus.values_mut()[i] -= eps;
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.set_learnable(&plus).unwrap();
            pm.set_learnable(&minus).unwrap();
            let fd = (loss_of(&pp, &u, &k, &weights) - loss_of(&pm, &u, &k, &weights)) / (2.0 * eps);
            let an = g.params.values()[i];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(an.abs()).max(1e-3), "param {i}: {fd} vs {an}");
        }
        for i in 0..n * l {
            let mut up = u.values().to_vec();
            up[i] += eps;
            let mut um = u.values().to_vec();
            um[i] -= eps;
            let fd = (loss_of(&p, &Unary::new(n, l, up).unwrap(), &k, &weights)
                - loss_of(&p, &Unary::new(n, l, um).unwrap(), &k, &weights))
                / (2.0 * eps);
            assert!((fd - g.unary[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "unary {i}: {fd} vs {}", g.unary[i]);
        }
    }
}
