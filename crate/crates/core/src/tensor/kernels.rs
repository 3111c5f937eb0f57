//! Slice-level numeric kernels shared by the tape's forward and backward rules.

use super::{Real, COSINE_EPS};

/// `c += a · b` with `a: m×k`, `b: k×n`.
pub fn gemm_nn(a: &[Real], b: &[Real], c: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`.
pub fn gemm_nt(a: &[Real], b: &[Real], c: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`.
pub fn gemm_tn(a: &[Real], b: &[Real], c: &mut [Real], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for (i, &api) in a[p * m..(p + 1) * m].iter().enumerate() {
            if api == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += api * bv;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[Real], b: &[Real]) -> Real {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Returns `(cosine, ‖a‖, ‖b‖)`; cosine is 0 under the zero-vector convention.
pub fn cosine_parts(a: &[Real], b: &[Real]) -> (Real, Real, Real) {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < COSINE_EPS || nb < COSINE_EPS {
        return (0.0, na, nb);
    }
    ((dot(a, b) / (na * nb)).clamp(-1.0, 1.0), na, nb)
}

/// Forward of the fused LSTM cell. `z: rows×4h` holds pre-activations in
/// input/forget/candidate/output order; output rows are `[h | c]`.
pub fn lstm_cell_forward(z: &[Real], c_prev: &[Real], rows: usize, h: usize) -> Vec<Real> {
    let mut out = vec![0.0; rows * 2 * h];
    for r in 0..rows {
        let zr = &z[r * 4 * h..(r + 1) * 4 * h];
        let cp = &c_prev[r * h..(r + 1) * h];
        let (ho, co) = out[r * 2 * h..(r + 1) * 2 * h].split_at_mut(h);
        for u in 0..h {
            let i = sigmoid(zr[u]);
            let f = sigmoid(zr[h + u]);
            let g = zr[2 * h + u].tanh();
            let o = sigmoid(zr[3 * h + u]);
            let c = f * cp[u] + i * g;
            co[u] = c;
            ho[u] = o * c.tanh();
        }
    }
    out
}

/// Backward of [`lstm_cell_forward`]; returns `(dz, dc_prev)`.
pub fn lstm_cell_backward(
    z: &[Real],
    c_prev: &[Real],
    out: &[Real],
    g_out: &[Real],
    rows: usize,
    h: usize,
) -> (Vec<Real>, Vec<Real>) {
    let mut dz = vec![0.0; rows * 4 * h];
    let mut dcp = vec![0.0; rows * h];
    for r in 0..rows {
        let zr = &z[r * 4 * h..(r + 1) * 4 * h];
        let cp = &c_prev[r * h..(r + 1) * h];
        let c = &out[r * 2 * h + h..(r + 1) * 2 * h];
        let gh = &g_out[r * 2 * h..r * 2 * h + h];
        let gc = &g_out[r * 2 * h + h..(r + 1) * 2 * h];
        let dzr = &mut dz[r * 4 * h..(r + 1) * 4 * h];
        for u in 0..h {
            let i = sigmoid(zr[u]);
            let f = sigmoid(zr[h + u]);
            let g = zr[2 * h + u].tanh();
            let o = sigmoid(zr[3 * h + u]);
            let tc = c[u].tanh();
            let d_o = gh[u] * tc;
            let dc = gc[u] + gh[u] * o * (1.0 - tc * tc);
            dzr[u] = dc * g * i * (1.0 - i);
            dzr[h + u] = dc * cp[u] * f * (1.0 - f);
            dzr[2 * h + u] = dc * i * (1.0 - g * g);
            dzr[3 * h + u] = d_o * o * (1.0 - o);
            dcp[r * h + u] = dc * f;
        }
    }
    (dz, dcp)
}

/// Weighted cosine between every row of `p` (n×d) and every row of `q` (m×d)
/// under every perspective row of `w` (l×d). Output layout is `[n, m, l]`.
pub fn mp_cosine_forward(
    p: &[Real],
    q: &[Real],
    w: &[Real],
    n: usize,
    m: usize,
    l: usize,
    d: usize,
) -> Vec<Real> {
    let mut out = vec![0.0; n * m * l];
    let mut pw = vec![0.0; n * d];
    let mut num = vec![0.0; n * m];
    for k in 0..l {
        let w2: Vec<Real> = w[k * d..(k + 1) * d].iter().map(|x| x * x).collect();
        let (pn, qn) = weighted_norms(p, q, &w2, n, m, d, &mut pw);
        num.iter_mut().for_each(|x| *x = 0.0);
        gemm_nt(&pw, q, &mut num, n, d, m);
        for j in 0..n {
            for i in 0..m {
                let val = if pn[j] < COSINE_EPS || qn[i] < COSINE_EPS {
                    0.0
                } else {
                    (num[j * m + i] / (pn[j] * qn[i])).clamp(-1.0, 1.0)
                };
                out[(j * m + i) * l + k] = val;
            }
        }
    }
    out
}

/// Fills `pw` with `p ∘ w²` row-wise and returns the weighted row norms of `p` and `q`.
fn weighted_norms(
    p: &[Real],
    q: &[Real],
    w2: &[Real],
    n: usize,
    m: usize,
    d: usize,
    pw: &mut [Real],
) -> (Vec<Real>, Vec<Real>) {
    let mut pn = vec![0.0; n];
    for j in 0..n {
        let pr = &p[j * d..(j + 1) * d];
        let pwr = &mut pw[j * d..(j + 1) * d];
        let mut s = 0.0;
        for u in 0..d {
            pwr[u] = pr[u] * w2[u];
            s += pwr[u] * pr[u];
        }
        pn[j] = s.sqrt();
    }
    let qn = (0..m)
        .map(|i| {
            let qr = &q[i * d..(i + 1) * d];
            qr.iter()
                .zip(w2)
                .map(|(x, w)| x * x * w)
                .sum::<Real>()
                .sqrt()
        })
        .collect();
    (pn, qn)
}

pub struct MpCosineGrads {
    pub dp: Vec<Real>,
    pub dq: Vec<Real>,
    pub dw: Vec<Real>,
}

/// Backward of [`mp_cosine_forward`] given the upstream gradient `g` (`[n, m, l]`).
#[allow(clippy::too_many_arguments)]
pub fn mp_cosine_backward(
    p: &[Real],
    q: &[Real],
    w: &[Real],
    out: &[Real],
    g: &[Real],
    n: usize,
    m: usize,
    l: usize,
    d: usize,
) -> MpCosineGrads {
    let mut dp = vec![0.0; n * d];
    let mut dq = vec![0.0; m * d];
    let mut dw = vec![0.0; l * d];
    let mut pw = vec![0.0; n * d];
    let mut alpha = vec![0.0; n * m];
    let mut s = vec![0.0; n * d];
    let mut t = vec![0.0; m * d];
    for k in 0..l {
        let wk = &w[k * d..(k + 1) * d];
        let w2: Vec<Real> = wk.iter().map(|x| x * x).collect();
        let (pn, qn) = weighted_norms(p, q, &w2, n, m, d, &mut pw);
        let mut beta_p = vec![0.0; n];
        let mut beta_q = vec![0.0; m];
        let mut any = false;
        for j in 0..n {
            for i in 0..m {
                let idx = (j * m + i) * l + k;
                let gv = g[idx];
                if gv == 0.0 || pn[j] < COSINE_EPS || qn[i] < COSINE_EPS {
                    alpha[j * m + i] = 0.0;
                    continue;
                }
                any = true;
                alpha[j * m + i] = gv / (pn[j] * qn[i]);
                let gm = gv * out[idx];
                beta_p[j] += gm / (pn[j] * pn[j]);
                beta_q[i] += gm / (qn[i] * qn[i]);
            }
        }
        if !any {
            continue;
        }
        s.iter_mut().for_each(|x| *x = 0.0);
        t.iter_mut().for_each(|x| *x = 0.0);
        gemm_nn(&alpha, q, &mut s, n, m, d);
        gemm_tn(&alpha, p, &mut t, n, m, d);
        let mut cross = vec![0.0; d];
        let mut selfp = vec![0.0; d];
        let mut selfq = vec![0.0; d];
        for j in 0..n {
            let pr = &p[j * d..(j + 1) * d];
            let sr = &s[j * d..(j + 1) * d];
            let dpr = &mut dp[j * d..(j + 1) * d];
            for u in 0..d {
                dpr[u] += w2[u] * (sr[u] - beta_p[j] * pr[u]);
                cross[u] += pr[u] * sr[u];
                selfp[u] += beta_p[j] * pr[u] * pr[u];
            }
        }
        for i in 0..m {
            let qr = &q[i * d..(i + 1) * d];
            let tr = &t[i * d..(i + 1) * d];
            let dqr = &mut dq[i * d..(i + 1) * d];
            for u in 0..d {
                dqr[u] += w2[u] * (tr[u] - beta_q[i] * qr[u]);
                selfq[u] += beta_q[i] * qr[u] * qr[u];
            }
        }
        let dwr = &mut dw[k * d..(k + 1) * d];
        for u in 0..d {
            dwr[u] += 2.0 * wk[u] * (cross[u] - 0.5 * (selfp[u] + selfq[u]));
        }
    }
    MpCosineGrads { dp, dq, dw }
}
