use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, sigmoid};
use super::{Result, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

enum Op {
    Leaf,
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Conv1d {
        x: usize,
        kernel: usize,
        bias: usize,
    },
    Lstm {
        x: usize,
        w_in: usize,
        w_hid: usize,
        bias: usize,
        /// post-activation gates `[B,T,4H]` in i, f, g, o order
        gates: Vec<f64>,
        cells: Vec<f64>,
        tanh_cells: Vec<f64>,
    },
    Attention {
        h: usize,
        w: usize,
        lengths: Vec<usize>,
        alpha: Vec<f64>,
        score: Vec<f64>,
    },
    MaxPool {
        x: usize,
        argmax: Vec<usize>,
    },
    Dense {
        x: usize,
        w: usize,
        b: usize,
        act: Activation,
    },
    Dropout {
        x: usize,
        mask: Vec<f64>,
    },
    SoftmaxCe {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum {
        x: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records one forward computation in creation (= topological) order.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, expected: impl Into<String>, got: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        expected: expected.into(),
        got: got.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    /// A trainable leaf; gradients are reported for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::DetachedTensor);
        }
        Ok(v.index)
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.index(v)?].value)
    }

    /// Panics if `v` was recorded on another tape.
    pub fn value(&self, v: Var) -> &Tensor {
        self.try_value(v).expect("variable belongs to this tape")
    }

    fn push(&mut self, name: &'static str, value: Tensor, inputs: &[usize], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    /// `[B,L]` ids gathered from a `[V,D]` table into `[B,L,D]`.
    pub fn embedding(&mut self, ids: &[Vec<usize>], table: Var) -> Result<Var> {
        let t = self.index(table)?;
        let tv = &self.nodes[t].value;
        if tv.shape().len() != 2 {
            return Err(mismatch("embedding", "[V,D] table", tv.shape()));
        }
        let (rows, dim) = (tv.shape()[0], tv.shape()[1]);
        let len = ids.first().map_or(0, Vec::len);
        if ids.iter().any(|s| s.len() != len) {
            return Err(mismatch("embedding", "equal-length id rows", &[ids.len()]));
        }
        let flat: Vec<usize> = ids.iter().flatten().copied().collect();
        let mut out = Vec::with_capacity(flat.len() * dim);
        for &id in &flat {
            if id >= rows {
                return Err(TensorError::IdOutOfRange { id, rows });
            }
            out.extend_from_slice(&tv.data()[id * dim..(id + 1) * dim]);
        }
        let value = Tensor::new(vec![ids.len(), len, dim], out)?;
        self.push("embedding", value, &[t], Op::Embedding { table: t, ids: flat })
    }

    /// Valid 1-d convolution over time followed by ReLU:
    /// `[B,L,Cin] * [k,Cin,Cout] + [Cout] -> [B,L-k+1,Cout]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (xi, ki, bi) = (self.index(x)?, self.index(kernel)?, self.index(bias)?);
        let (xv, kv, bv) = (&self.nodes[xi].value, &self.nodes[ki].value, &self.nodes[bi].value);
        if xv.shape().len() != 3 {
            return Err(mismatch("conv1d", "[B,L,Cin] input", xv.shape()));
        }
        let (b, l, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if kv.shape().len() != 3 || kv.shape()[1] != cin {
            return Err(mismatch("conv1d", format!("[k,{cin},Cout] kernel"), kv.shape()));
        }
        let (k, cout) = (kv.shape()[0], kv.shape()[2]);
        if bv.shape() != [cout] {
            return Err(mismatch("conv1d", format!("[{cout}] bias"), bv.shape()));
        }
        if k == 0 || l < k {
            return Err(mismatch("conv1d", format!("sequence length >= kernel size {k}"), xv.shape()));
        }
        let lout = l - k + 1;
        let mut out = vec![0.0; b * lout * cout];
        for bb in 0..b {
            let ob = &mut out[bb * lout * cout..(bb + 1) * lout * cout];
            for row in ob.chunks_mut(cout) {
                row.copy_from_slice(bv.data());
            }
            for j in 0..k {
                let xs = &xv.data()[(bb * l + j) * cin..(bb * l + j + lout) * cin];
                let kj = &kv.data()[j * cin * cout..(j + 1) * cin * cout];
                matmul_acc(xs, kj, ob, lout, cin, cout);
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        let value = Tensor::new(vec![b, lout, cout], out)?;
        self.push(
            "conv1d",
            value,
            &[xi, ki, bi],
            Op::Conv1d {
                x: xi,
                kernel: ki,
                bias: bi,
            },
        )
    }

    /// Single-layer LSTM from zero state, returning every hidden state.
    ///
    /// `x: [B,T,D]`, `w_in: [D,4H]`, `w_hid: [H,4H]`, `bias: [4H]` with gate
    /// blocks ordered input, forget, candidate, output.
    pub fn lstm(&mut self, x: Var, w_in: Var, w_hid: Var, bias: Var) -> Result<Var> {
        let (xi, wi, hi, bi) = (self.index(x)?, self.index(w_in)?, self.index(w_hid)?, self.index(bias)?);
        let (xv, wiv, whv, bv) = (
            &self.nodes[xi].value,
            &self.nodes[wi].value,
            &self.nodes[hi].value,
            &self.nodes[bi].value,
        );
        if xv.shape().len() != 3 || xv.shape()[1] == 0 {
            return Err(mismatch("lstm", "[B,T,D] input with T >= 1", xv.shape()));
        }
        let (b, t_len, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if whv.shape().len() != 2 || whv.shape()[1] != 4 * whv.shape()[0] {
            return Err(mismatch("lstm", "[H,4H] recurrent weights", whv.shape()));
        }
        let h = whv.shape()[0];
        let g4 = 4 * h;
        if wiv.shape() != [d, g4] {
            return Err(mismatch("lstm", format!("[{d},{g4}] input weights"), wiv.shape()));
        }
        if bv.shape() != [g4] {
            return Err(mismatch("lstm", format!("[{g4}] bias"), bv.shape()));
        }

        let mut gates = vec![0.0; b * t_len * g4];
        matmul_acc(xv.data(), wiv.data(), &mut gates, b * t_len, d, g4);
        let mut cells = vec![0.0; b * t_len * h];
        let mut tanh_cells = vec![0.0; b * t_len * h];
        let mut out = vec![0.0; b * t_len * h];
        for bb in 0..b {
            for t in 0..t_len {
                let row = (bb * t_len + t) * g4;
                {
                    let z = &mut gates[row..row + g4];
                    for (zv, bias) in z.iter_mut().zip(bv.data()) {
                        *zv += bias;
                    }
                    if t > 0 {
                        let prev = (bb * t_len + t - 1) * h;
                        matmul_acc(&out[prev..prev + h], whv.data(), z, 1, h, g4);
                    }
                    for (j, zv) in z.iter_mut().enumerate() {
                        *zv = if (2 * h..3 * h).contains(&j) { zv.tanh() } else { sigmoid(*zv) };
                    }
                }
                let z = &gates[row..row + g4];
                let base = (bb * t_len + t) * h;
                for j in 0..h {
                    let (ig, fg, gg, og) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                    let c_prev = if t > 0 { cells[base - h + j] } else { 0.0 };
                    let c = fg * c_prev + ig * gg;
                    let tc = c.tanh();
                    cells[base + j] = c;
                    tanh_cells[base + j] = tc;
                    out[base + j] = og * tc;
                }
            }
        }
        let value = Tensor::new(vec![b, t_len, h], out)?;
        self.push(
            "lstm",
            value,
            &[xi, wi, hi, bi],
            Op::Lstm {
                x: xi,
                w_in: wi,
                w_hid: hi,
                bias: bi,
                gates,
                cells,
                tanh_cells,
            },
        )
    }

    /// Additive attention with a single score vector.
    ///
    /// `score[b,t] = tanh(h[b,t,:]·w)`, softmax over the first `lengths[b]`
    /// positions (the rest get weight 0), and the output keeps the sequence
    /// shape: `context[b,t,:] = α[b,t]·h[b,t,:]`. Returns the weights too.
    pub fn attention(&mut self, h: Var, w: Var, lengths: &[usize]) -> Result<(Var, Tensor)> {
        let (hi, wi) = (self.index(h)?, self.index(w)?);
        let (hv, wv) = (&self.nodes[hi].value, &self.nodes[wi].value);
        if hv.shape().len() != 3 {
            return Err(mismatch("attention", "[B,T,H] input", hv.shape()));
        }
        let (b, t_len, hd) = (hv.shape()[0], hv.shape()[1], hv.shape()[2]);
        if wv.shape() != [hd] {
            return Err(mismatch("attention", format!("[{hd}] score vector"), wv.shape()));
        }
        if lengths.len() != b {
            return Err(mismatch("attention", format!("{b} lengths"), &[lengths.len()]));
        }
        let mut alpha = vec![0.0; b * t_len];
        let mut score = vec![0.0; b * t_len];
        let mut out = vec![0.0; b * t_len * hd];
        for bb in 0..b {
            let n = lengths[bb];
            if n == 0 {
                return Err(TensorError::AllMasked { row: bb });
            }
            if n > t_len {
                return Err(mismatch("attention", format!("lengths <= {t_len}"), &[n]));
            }
            let s = &mut score[bb * t_len..bb * t_len + n];
            for (t, sv) in s.iter_mut().enumerate() {
                let hrow = &hv.data()[(bb * t_len + t) * hd..(bb * t_len + t + 1) * hd];
                *sv = hrow.iter().zip(wv.data()).map(|(a, c)| a * c).sum::<f64>().tanh();
            }
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let a = &mut alpha[bb * t_len..bb * t_len + n];
            let mut total = 0.0;
            for (av, sv) in a.iter_mut().zip(s.iter()) {
                *av = (sv - max).exp();
                total += *av;
            }
            a.iter_mut().for_each(|v| *v /= total);
            for t in 0..n {
                let at = alpha[bb * t_len + t];
                let range = (bb * t_len + t) * hd..(bb * t_len + t + 1) * hd;
                for (o, x) in out[range.clone()].iter_mut().zip(&hv.data()[range]) {
                    *o = at * x;
                }
            }
        }
        let weights = Tensor::new(vec![b, t_len], alpha.clone())?;
        let value = Tensor::new(vec![b, t_len, hd], out)?;
        let var = self.push(
            "attention",
            value,
            &[hi, wi],
            Op::Attention {
                h: hi,
                w: wi,
                lengths: lengths.to_vec(),
                alpha,
                score,
            },
        )?;
        Ok((var, weights))
    }

    /// Max over time: `[B,T,H] -> [B,H]`. Ties go to the earliest step.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let xv = &self.nodes[xi].value;
        if xv.shape().len() != 3 || xv.shape()[1] == 0 {
            return Err(mismatch("global_max_pool", "[B,T,H] with T >= 1", xv.shape()));
        }
        let (b, t_len, hd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut out = vec![f64::NEG_INFINITY; b * hd];
        let mut argmax = vec![0usize; b * hd];
        for bb in 0..b {
            for t in 0..t_len {
                let row = &xv.data()[(bb * t_len + t) * hd..(bb * t_len + t + 1) * hd];
                for (j, &v) in row.iter().enumerate() {
                    if v > out[bb * hd + j] {
                        out[bb * hd + j] = v;
                        argmax[bb * hd + j] = t;
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, hd], out)?;
        self.push("global_max_pool", value, &[xi], Op::MaxPool { x: xi, argmax })
    }

    /// `[B,Din] · [Din,Dout] + [Dout]`, optionally rectified.
    pub fn dense(&mut self, x: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
        let (xi, wi, bi) = (self.index(x)?, self.index(w)?, self.index(b)?);
        let (xv, wv, bv) = (&self.nodes[xi].value, &self.nodes[wi].value, &self.nodes[bi].value);
        if xv.shape().len() != 2 {
            return Err(mismatch("dense", "[B,Din] input", xv.shape()));
        }
        let (n, din) = (xv.shape()[0], xv.shape()[1]);
        if wv.shape().len() != 2 || wv.shape()[0] != din {
            return Err(mismatch("dense", format!("[{din},Dout] weights"), wv.shape()));
        }
        let dout = wv.shape()[1];
        if bv.shape() != [dout] {
            return Err(mismatch("dense", format!("[{dout}] bias"), bv.shape()));
        }
        let mut out = Vec::with_capacity(n * dout);
        for _ in 0..n {
            out.extend_from_slice(bv.data());
        }
        matmul_acc(xv.data(), wv.data(), &mut out, n, din, dout);
        if act == Activation::Relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let value = Tensor::new(vec![n, dout], out)?;
        self.push("dense", value, &[xi, wi, bi], Op::Dense { x: xi, w: wi, b: bi, act })
    }

    /// Inverted dropout. Eval mode and `rate == 0` return `x` unchanged; in
    /// train mode the keep mask is a pure function of `seed`.
    ///
    /// Panics unless `0 <= rate < 1`.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: DropoutMode, seed: u64) -> Result<Var> {
        assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
        let xi = self.index(x)?;
        if mode == DropoutMode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let xv = &self.nodes[xi].value;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let out = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        self.push("dropout", value, &[xi], Op::Dropout { x: xi, mask })
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `[B,C]` logits. Returns the scalar loss and the probability rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, Tensor)> {
        let li = self.index(logits)?;
        let lv = &self.nodes[li].value;
        if lv.shape().len() != 2 || lv.shape()[0] == 0 || lv.shape()[0] != labels.len() {
            return Err(mismatch(
                "softmax_cross_entropy",
                format!("[{},C] logits", labels.len()),
                lv.shape(),
            ));
        }
        let (n, c) = (lv.shape()[0], lv.shape()[1]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(TensorError::LabelOutOfRange { label: bad, classes: c });
        }
        let (probs, nll) = softmax_rows(lv.data(), n, c, Some(labels));
        let loss = nll / n as f64;
        let probs_t = Tensor::new(vec![n, c], probs.clone())?;
        let var = self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            &[li],
            Op::SoftmaxCe {
                logits: li,
                labels: labels.to_vec(),
                probs,
            },
        )?;
        Ok((var, probs_t))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let s = self.nodes[xi].value.data().iter().sum();
        self.push("sum", Tensor::scalar(s), &[xi], Op::Sum { x: xi })
    }

    /// Elementwise product of equal-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.index(a)?, self.index(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", format!("{:?}", av.shape()), bv.shape()));
        }
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), out)?;
        self.push("mul", value, &[ai, bi], Op::Mul { a: ai, b: bi })
    }

    /// Propagates d(loss)/d(node) back to every trainable leaf. Consumes the
    /// tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let li = self.index(loss)?;
        let lv = &self.nodes[li].value;
        if lv.len() != 1 {
            return Err(TensorError::NotScalarLoss(lv.shape().to_vec()));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![1.0]);

        for i in (0..=li).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(nodes, &mut grads, node, &g);
        }

        let mut out = Vec::with_capacity(nodes.len());
        for (node, g) in nodes.iter().zip(grads) {
            let t = match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => {
                    let data = g.unwrap_or_else(|| vec![0.0; node.value.len()]);
                    if data.iter().any(|v| !v.is_finite()) {
                        return Err(TensorError::NonFinite("backward"));
                    }
                    Some(Tensor::new(node.value.shape().to_vec(), data)?)
                }
                _ => None,
            };
            out.push(t);
        }
        Ok(Gradients {
            tape: self.id,
            grads: out,
        })
    }
}

/// Row-wise stable softmax. With labels, also returns the summed NLL.
pub(crate) fn softmax_rows(logits: &[f64], n: usize, c: usize, labels: Option<&[usize]>) -> (Vec<f64>, f64) {
    let mut probs = vec![0.0; n * c];
    let mut nll = 0.0;
    for r in 0..n {
        let z = &logits[r * c..(r + 1) * c];
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = &mut probs[r * c..(r + 1) * c];
        let mut total = 0.0;
        for (pv, zv) in p.iter_mut().zip(z) {
            *pv = (zv - max).exp();
            total += *pv;
        }
        p.iter_mut().for_each(|v| *v /= total);
        if let Some(labels) = labels {
            nll -= z[labels[r]] - max - total.ln();
        }
    }
    (probs, nll)
}

/// Gradient buffer of input `i`, or `None` if it needs no gradient.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], i: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[i].requires_grad {
        return None;
    }
    Some(grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]))
}

fn backprop(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    match &node.op {
        Op::Leaf => {}
        Op::Embedding { table, ids } => {
            let dim = nodes[*table].value.shape()[1];
            if let Some(gt) = slot(nodes, grads, *table) {
                for (pos, &id) in ids.iter().enumerate() {
                    let src = &g[pos * dim..(pos + 1) * dim];
                    for (d, s) in gt[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
        Op::Conv1d { x, kernel, bias } => {
            let (xv, kv) = (&nodes[*x].value, &nodes[*kernel].value);
            let (b, l, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
            let (k, cout) = (kv.shape()[0], kv.shape()[2]);
            let lout = l - k + 1;
            let dz: Vec<f64> = g
                .iter()
                .zip(node.value.data())
                .map(|(gv, y)| if *y > 0.0 { *gv } else { 0.0 })
                .collect();
            if let Some(gb) = slot(nodes, grads, *bias) {
                for row in dz.chunks(cout) {
                    for (d, s) in gb.iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
            if let Some(gk) = slot(nodes, grads, *kernel) {
                for bb in 0..b {
                    let dzb = &dz[bb * lout * cout..(bb + 1) * lout * cout];
                    for j in 0..k {
                        let xs = &xv.data()[(bb * l + j) * cin..(bb * l + j + lout) * cin];
                        let gkj = &mut gk[j * cin * cout..(j + 1) * cin * cout];
                        matmul_at_b_acc(xs, dzb, gkj, lout, cin, cout);
                    }
                }
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                for bb in 0..b {
                    let dzb = &dz[bb * lout * cout..(bb + 1) * lout * cout];
                    for j in 0..k {
                        let kj = &kv.data()[j * cin * cout..(j + 1) * cin * cout];
                        let gxs = &mut gx[(bb * l + j) * cin..(bb * l + j + lout) * cin];
                        matmul_a_bt_acc(dzb, kj, gxs, lout, cin, cout);
                    }
                }
            }
        }
        Op::Lstm {
            x,
            w_in,
            w_hid,
            bias,
            gates,
            cells,
            tanh_cells,
        } => {
            let (xv, wiv, whv) = (&nodes[*x].value, &nodes[*w_in].value, &nodes[*w_hid].value);
            let (b, t_len, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
            let h = whv.shape()[0];
            let g4 = 4 * h;
            let hs = node.value.data();
            let mut dz_all = vec![0.0; b * t_len * g4];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for bb in 0..b {
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                dc_next.iter_mut().for_each(|v| *v = 0.0);
                for t in (0..t_len).rev() {
                    let base = (bb * t_len + t) * h;
                    let z = &gates[(bb * t_len + t) * g4..(bb * t_len + t + 1) * g4];
                    let dz = &mut dz_all[(bb * t_len + t) * g4..(bb * t_len + t + 1) * g4];
                    for j in 0..h {
                        let (ig, fg, gg, og) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                        let tc = tanh_cells[base + j];
                        let c_prev = if t > 0 { cells[base - h + j] } else { 0.0 };
                        let dh = g[base + j] + dh_next[j];
                        let dc = dh * og * (1.0 - tc * tc) + dc_next[j];
                        dz[j] = dc * gg * ig * (1.0 - ig);
                        dz[h + j] = dc * c_prev * fg * (1.0 - fg);
                        dz[2 * h + j] = dc * ig * (1.0 - gg * gg);
                        dz[3 * h + j] = dh * tc * og * (1.0 - og);
                        dc_next[j] = dc * fg;
                    }
                    dh_next.iter_mut().for_each(|v| *v = 0.0);
                    matmul_a_bt_acc(dz, whv.data(), &mut dh_next, 1, h, g4);
                }
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                for row in dz_all.chunks(g4) {
                    for (d, s) in gb.iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
            if let Some(gwi) = slot(nodes, grads, *w_in) {
                matmul_at_b_acc(xv.data(), &dz_all, gwi, b * t_len, d, g4);
            }
            if let Some(gwh) = slot(nodes, grads, *w_hid) {
                // h_{t-1} rows, zero at t = 0
                let mut prev = vec![0.0; b * t_len * h];
                for bb in 0..b {
                    for t in 1..t_len {
                        let dst = (bb * t_len + t) * h;
                        let src = (bb * t_len + t - 1) * h;
                        prev[dst..dst + h].copy_from_slice(&hs[src..src + h]);
                    }
                }
                matmul_at_b_acc(&prev, &dz_all, gwh, b * t_len, h, g4);
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                matmul_a_bt_acc(&dz_all, wiv.data(), gx, b * t_len, d, g4);
            }
        }
        Op::Attention {
            h,
            w,
            lengths,
            alpha,
            score,
        } => {
            let (hv, wv) = (&nodes[*h].value, &nodes[*w].value);
            let (b, t_len, hd) = (hv.shape()[0], hv.shape()[1], hv.shape()[2]);
            let mut de = vec![0.0; b * t_len];
            for bb in 0..b {
                let n = lengths[bb];
                let mut dalpha = vec![0.0; n];
                for (t, da) in dalpha.iter_mut().enumerate() {
                    let r = (bb * t_len + t) * hd..(bb * t_len + t + 1) * hd;
                    *da = g[r.clone()].iter().zip(&hv.data()[r]).map(|(a, c)| a * c).sum();
                }
                let a = &alpha[bb * t_len..bb * t_len + n];
                let mean: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
                for t in 0..n {
                    let s = score[bb * t_len + t];
                    de[bb * t_len + t] = a[t] * (dalpha[t] - mean) * (1.0 - s * s);
                }
            }
            if let Some(gw) = slot(nodes, grads, *w) {
                for (pos, &e) in de.iter().enumerate() {
                    if e != 0.0 {
                        for (d, x) in gw.iter_mut().zip(&hv.data()[pos * hd..(pos + 1) * hd]) {
                            *d += e * x;
                        }
                    }
                }
            }
            if let Some(gh) = slot(nodes, grads, *h) {
                for pos in 0..b * t_len {
                    let (a, e) = (alpha[pos], de[pos]);
                    let r = pos * hd..(pos + 1) * hd;
                    for ((d, up), wv) in gh[r.clone()].iter_mut().zip(&g[r]).zip(wv.data()) {
                        *d += a * up + e * wv;
                    }
                }
            }
        }
        Op::MaxPool { x, argmax } => {
            let xv = &nodes[*x].value;
            let (t_len, hd) = (xv.shape()[1], xv.shape()[2]);
            if let Some(gx) = slot(nodes, grads, *x) {
                for (pos, &t) in argmax.iter().enumerate() {
                    let (bb, j) = (pos / hd, pos % hd);
                    gx[(bb * t_len + t) * hd + j] += g[pos];
                }
            }
        }
        Op::Dense { x, w, b, act } => {
            let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
            let (n, din) = (xv.shape()[0], xv.shape()[1]);
            let dout = wv.shape()[1];
            let dz: Vec<f64> = match act {
                Activation::Relu => g
                    .iter()
                    .zip(node.value.data())
                    .map(|(gv, y)| if *y > 0.0 { *gv } else { 0.0 })
                    .collect(),
                Activation::None => g.to_vec(),
            };
            if let Some(gb) = slot(nodes, grads, *b) {
                for row in dz.chunks(dout) {
                    for (d, s) in gb.iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
            if let Some(gw) = slot(nodes, grads, *w) {
                matmul_at_b_acc(xv.data(), &dz, gw, n, din, dout);
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                matmul_a_bt_acc(&dz, wv.data(), gx, n, din, dout);
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, up), m) in gx.iter_mut().zip(g).zip(mask) {
                    *d += up * m;
                }
            }
        }
        Op::SoftmaxCe { logits, labels, probs } => {
            let c = nodes[*logits].value.shape()[1];
            let scale = g[0] / labels.len() as f64;
            if let Some(gl) = slot(nodes, grads, *logits) {
                for (r, &y) in labels.iter().enumerate() {
                    for j in 0..c {
                        let target = if j == y { 1.0 } else { 0.0 };
                        gl[r * c + j] += scale * (probs[r * c + j] - target);
                    }
                }
            }
        }
        Op::Sum { x } => {
            if let Some(gx) = slot(nodes, grads, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mul { a, b } => {
            let (av, bv) = (nodes[*a].value.data().to_vec(), nodes[*b].value.data().to_vec());
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((d, up), o) in ga.iter_mut().zip(g).zip(&bv) {
                    *d += up * o;
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for ((d, up), o) in gb.iter_mut().zip(g).zip(&av) {
                    *d += up * o;
                }
            }
        }
    }
}

/// Gradients of the trainable leaves of a consumed tape.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Fails with `DetachedTensor` for variables from another tape or
    /// leaves created with [`Tape::constant`].
    pub fn get(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.tape {
            return Err(TensorError::DetachedTensor);
        }
        self.grads
            .get(v.index)
            .and_then(Option::as_ref)
            .ok_or(TensorError::DetachedTensor)
    }
}
