//! Dense tensors and a single-direction LSTM with explicit backpropagation.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    /// `out = self * x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out += self^T * v`
    pub fn matvec_t_acc(&self, v: &[f64], out: &mut [f64]) {
        for (&s, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if s != 0.0 {
                axpy(s, row, out);
            }
        }
    }

    /// `self += u * x^T`
    pub fn outer_acc(&mut self, u: &[f64], x: &[f64]) {
        for (&s, row) in u.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if s != 0.0 {
                axpy(s, x, row);
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() / 4 * 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gates are stacked as `[input; forget; output; cell]` in both `w` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w: Matrix,
    pub b: Matrix,
    pub input: usize,
    pub hidden: usize,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone, Default)]
pub struct LstmTrace {
    z: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Lstm {
            w: Matrix::uniform(4 * hidden, input + hidden, scale, rng),
            b: Matrix::uniform(1, 4 * hidden, scale, rng),
            input,
            hidden,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Lstm {
            w: Matrix::zeros(self.w.rows, self.w.cols),
            b: Matrix::zeros(1, self.b.cols),
            input: self.input,
            hidden: self.hidden,
        }
    }

    pub fn forward<X: AsRef<[f64]>>(&self, xs: &[X]) -> LstmTrace {
        let h_dim = self.hidden;
        let mut tr = LstmTrace::default();
        let mut h_prev = vec![0.0; h_dim];
        let mut c_prev = vec![0.0; h_dim];
        for x in xs {
            let x = x.as_ref();
            debug_assert_eq!(x.len(), self.input);
            let mut z = Vec::with_capacity(self.input + h_dim);
            z.extend_from_slice(x);
            z.extend_from_slice(&h_prev);
            let mut pre = self.b.data.clone();
            let mut tmp = vec![0.0; 4 * h_dim];
            self.w.matvec(&z, &mut tmp);
            for (p, t) in pre.iter_mut().zip(&tmp) {
                *p += t;
            }
            for k in 0..3 * h_dim {
                pre[k] = sigmoid(pre[k]);
            }
            for k in 3 * h_dim..4 * h_dim {
                pre[k] = pre[k].tanh();
            }
            let gates = pre;
            let mut c = vec![0.0; h_dim];
            let mut tc = vec![0.0; h_dim];
            let mut h = vec![0.0; h_dim];
            for k in 0..h_dim {
                let (i, f, o, g) = (gates[k], gates[h_dim + k], gates[2 * h_dim + k], gates[3 * h_dim + k]);
                c[k] = f * c_prev[k] + i * g;
                tc[k] = c[k].tanh();
                h[k] = o * tc[k];
            }
            h_prev.clone_from(&h);
            c_prev.clone_from(&c);
            tr.z.push(z);
            tr.gates.push(gates);
            tr.c.push(c);
            tr.tanh_c.push(tc);
            tr.h.push(h);
        }
        tr
    }

    /// Backpropagates `dh[t]` (gradient w.r.t. each output state) through the
    /// sequence, accumulating parameter gradients into `grad` and returning the
    /// gradient w.r.t. each input.
    pub fn backward(&self, tr: &LstmTrace, dh: &[Vec<f64>], grad: &mut Lstm) -> Vec<Vec<f64>> {
        let h_dim = self.hidden;
        let n = tr.h.len();
        let mut dxs = vec![Vec::new(); n];
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        let zero = vec![0.0; h_dim];
        let mut dpre = vec![0.0; 4 * h_dim];
        for t in (0..n).rev() {
            let gates = &tr.gates[t];
            let c_prev = if t > 0 { &tr.c[t - 1] } else { &zero };
            for k in 0..h_dim {
                let (i, f, o, g) = (gates[k], gates[h_dim + k], gates[2 * h_dim + k], gates[3 * h_dim + k]);
                let dhk = dh[t][k] + dh_next[k];
                let tc = tr.tanh_c[t][k];
                let d_o = dhk * tc;
                let dc = dc_next[k] + dhk * o * (1.0 - tc * tc);
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * f;
                dpre[k] = d_i * i * (1.0 - i);
                dpre[h_dim + k] = d_f * f * (1.0 - f);
                dpre[2 * h_dim + k] = d_o * o * (1.0 - o);
                dpre[3 * h_dim + k] = d_g * (1.0 - g * g);
            }
            grad.w.outer_acc(&dpre, &tr.z[t]);
            axpy(1.0, &dpre, &mut grad.b.data);
            let mut dz = vec![0.0; self.input + h_dim];
            self.w.matvec_t_acc(&dpre, &mut dz);
            dh_next.copy_from_slice(&dz[self.input..]);
            dz.truncate(self.input);
            dxs[t] = dz;
        }
        dxs
    }
}
