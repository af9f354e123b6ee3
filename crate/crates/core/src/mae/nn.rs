//! Row-major dense primitives with explicit backward passes.
//!
//! Every `*_backward` accumulates parameter gradients into the supplied
//! slices and returns the gradient with respect to its input.

pub const LN_EPS: f64 = 1e-5;

/// `y[r] = W x[r] + b` for `n` rows; `w` is `out x inp`.
pub fn linear(x: &[f64], n: usize, inp: usize, out: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n * out];
    for r in 0..n {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..out {
            let wr = &w[o * inp..(o + 1) * inp];
            y[r * out + o] = b[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward(x: &[f64], dy: &[f64], n: usize, inp: usize, out: usize, w: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; n * inp];
    for r in 0..n {
        let xr = &x[r * inp..(r + 1) * inp];
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for o in 0..out {
            let g = dy[r * out + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &w[o * inp..(o + 1) * inp];
            let dwr = &mut dw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    dx
}

pub struct LnCache {
    pub xhat: Vec<f64>,
    pub inv: Vec<f64>,
}

pub fn layer_norm(x: &[f64], n: usize, d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv = vec![0.0; n];
    for r in 0..n {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        inv[r] = 1.0 / (var + LN_EPS).sqrt();
        for i in 0..d {
            let h = (xr[i] - mean) * inv[r];
            xhat[r * d + i] = h;
            y[r * d + i] = g[i] * h + b[i];
        }
    }
    (y, LnCache { xhat, inv })
}

pub fn layer_norm_backward(c: &LnCache, dy: &[f64], n: usize, d: usize, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    for r in 0..n {
        let mut sum = 0.0;
        let mut dot = 0.0;
        let mut dh = vec![0.0; d];
        for i in 0..d {
            let k = r * d + i;
            dg[i] += dy[k] * c.xhat[k];
            db[i] += dy[k];
            dh[i] = dy[k] * g[i];
            sum += dh[i];
            dot += dh[i] * c.xhat[k];
        }
        for i in 0..d {
            let k = r * d + i;
            dx[k] = c.inv[r] / d as f64 * (d as f64 * dh[i] - sum - c.xhat[k] * dot);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Parameter count of an attention layer of width `d`: four `d x d`
/// projections with biases, stored `[wq, bq, wk, bk, wv, bv, wo, bo]`.
pub fn attention_params(d: usize) -> usize {
    4 * (d * d + d)
}

fn proj(p: &[f64], i: usize, d: usize) -> (&[f64], &[f64]) {
    p[i * (d * d + d)..(i + 1) * (d * d + d)].split_at(d * d)
}

pub struct AttnCache {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// `probs[h][i * n + j]`.
    pub probs: Vec<Vec<f64>>,
    pub o: Vec<f64>,
}

/// Full (unmasked) self-attention over `n` rows of width `d` with `heads` heads.
pub fn attention(x: &[f64], n: usize, d: usize, heads: usize, p: &[f64]) -> (Vec<f64>, AttnCache) {
    let [q, k, v] = [0, 1, 2].map(|i| {
        let (w, b) = proj(p, i, d);
        linear(x, n, d, d, w, b)
    });
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut o = vec![0.0; n * d];
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut pr = vec![0.0; n * n];
        for i in 0..n {
            let qi = &q[i * d + cols.start..i * d + cols.end];
            let row = &mut pr[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] = scale * qi.iter().zip(&k[j * d + cols.start..j * d + cols.end]).map(|(a, b)| a * b).sum::<f64>();
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in row.iter_mut() {
                *s = (*s - m).exp();
                z += *s;
            }
            for s in row.iter_mut() {
                *s /= z;
            }
            for j in 0..n {
                let pij = row[j];
                for c in cols.clone() {
                    o[i * d + c] += pij * v[j * d + c];
                }
            }
        }
        probs.push(pr);
    }
    let (wo, bo) = proj(p, 3, d);
    let y = linear(&o, n, d, d, wo, bo);
    (y, AttnCache { x: x.to_vec(), q, k, v, probs, o })
}

/// `g` is the gradient slice laid out like `p`.
pub fn attention_backward(c: &AttnCache, dy: &[f64], n: usize, d: usize, heads: usize, p: &[f64], g: &mut [f64]) -> Vec<f64> {
    let mut gs: Vec<(&mut [f64], &mut [f64])> = g.chunks_exact_mut(d * d + d).map(|c| c.split_at_mut(d * d)).collect();
    let d_o = {
        let (dw, db) = &mut gs[3];
        linear_backward(&c.o, dy, n, d, d, proj(p, 3, d).0, dw, db)
    };
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let pr = &c.probs[h];
        for i in 0..n {
            let doi = &d_o[i * d + cols.start..i * d + cols.end];
            let mut dp = vec![0.0; n];
            for j in 0..n {
                dp[j] = doi.iter().zip(&c.v[j * d + cols.start..j * d + cols.end]).map(|(a, b)| a * b).sum::<f64>();
                let pij = pr[i * n + j];
                for (t, col) in cols.clone().enumerate() {
                    dv[j * d + col] += pij * doi[t];
                }
            }
            let dot: f64 = (0..n).map(|j| pr[i * n + j] * dp[j]).sum();
            for j in 0..n {
                let ds = pr[i * n + j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for col in cols.clone() {
                    dq[i * d + col] += ds * c.k[j * d + col];
                    dk[j * d + col] += ds * c.q[i * d + col];
                }
            }
        }
    }
    let mut dx = vec![0.0; n * d];
    for (i, dz) in [dq, dk, dv].iter().enumerate() {
        let (dw, db) = &mut gs[i];
        for (a, b) in dx.iter_mut().zip(linear_backward(&c.x, dz, n, d, d, proj(p, i, d).0, dw, db)) {
            *a += b;
        }
    }
    dx
}

/// Sinusoidal encoding of `pos` in `d` dimensions.
pub fn positional_encoding(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 * freq;
            if i % 2 == 0 {
                a.sin()
            } else {
                a.cos()
            }
        })
        .collect()
}
