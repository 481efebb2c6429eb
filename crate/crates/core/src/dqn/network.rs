use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("input branch {branch} has width {got}, network expects {expected}")]
pub struct WidthMismatch {
    pub branch: usize,
    pub expected: usize,
    pub got: usize,
}

/// Fully connected layer, `y = W x + b` with `W` row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Dense {
        Dense {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn xavier<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Dense {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        Dense {
            n_in,
            n_out,
            w: (0..n_in * n_out).map(|_| rng.gen_range(-a..=a)).collect(),
            b: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut y = self.b.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            *yo += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = o * self.n_in..(o + 1) * self.n_in;
            for ((gw, w), (xi, dxi)) in grad.w[row.clone()]
                .iter_mut()
                .zip(&self.w[row])
                .zip(x.iter().zip(dx.iter_mut()))
            {
                *gw += g * xi;
                *dxi += g * w;
            }
        }
        dx
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn relu_grad(pre: &[f64], d: &mut [f64]) {
    for (g, p) in d.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub branch_inputs: Vec<usize>,
    pub embed: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

/// Branch embeddings `h_b = relu(E_b x_b)`, softmax gate over scores
/// `s_b = g_b · h_b + c_b`, concatenation of `α_b h_b`, ReLU hidden layers,
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub shape: NetShape,
    pub branches: Vec<Dense>,
    /// One row per branch: the gate score vector `g_b` (length `embed`).
    pub gate_w: Vec<Vec<f64>>,
    pub gate_b: Vec<f64>,
    pub layers: Vec<Dense>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<Vec<f64>>,
    pre_embed: Vec<Vec<f64>>,
    embed: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    /// Input of each layer in `layers`, followed by the output.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("network has an output layer")
    }

    pub fn gate(&self) -> &[f64] {
        &self.alpha
    }
}

impl QNetwork {
    fn build(shape: &NetShape, mut dense: impl FnMut(usize, usize) -> Dense) -> QNetwork {
        let nb = shape.branch_inputs.len();
        let branches = shape
            .branch_inputs
            .iter()
            .map(|&n| dense(n, shape.embed))
            .collect();
        let gate = dense(shape.embed, nb);
        let gate_w = (0..nb)
            .map(|b| gate.w[b * shape.embed..(b + 1) * shape.embed].to_vec())
            .collect();
        let mut widths = vec![nb * shape.embed];
        widths.extend(&shape.hidden);
        widths.push(shape.outputs);
        let layers = widths.windows(2).map(|w| dense(w[0], w[1])).collect();
        QNetwork {
            shape: shape.clone(),
            branches,
            gate_w,
            gate_b: vec![0.0; nb],
            layers,
        }
    }

    pub fn new<R: Rng>(shape: &NetShape, rng: &mut R) -> QNetwork {
        QNetwork::build(shape, |i, o| Dense::xavier(i, o, rng))
    }

    pub fn zeros(shape: &NetShape) -> QNetwork {
        QNetwork::build(shape, Dense::zeros)
    }

    pub fn zeros_like(&self) -> QNetwork {
        QNetwork::zeros(&self.shape)
    }

    pub fn outputs(&self) -> usize {
        self.shape.outputs
    }

    fn check(&self, inputs: &[&[f64]]) -> Result<(), WidthMismatch> {
        if inputs.len() != self.branches.len() {
            return Err(WidthMismatch {
                branch: inputs.len().min(self.branches.len()),
                expected: self.branches.len(),
                got: inputs.len(),
            });
        }
        for (b, (x, d)) in inputs.iter().zip(&self.branches).enumerate() {
            if x.len() != d.n_in {
                return Err(WidthMismatch {
                    branch: b,
                    expected: d.n_in,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, WidthMismatch> {
        Ok(self.forward_cached(inputs)?.acts.pop().expect("output"))
    }

    pub fn forward_cached(&self, inputs: &[&[f64]]) -> Result<Cache, WidthMismatch> {
        self.check(inputs)?;
        let mut pre_embed = Vec::with_capacity(inputs.len());
        let mut embed = Vec::with_capacity(inputs.len());
        let mut scores = Vec::with_capacity(inputs.len());
        for (b, x) in inputs.iter().enumerate() {
            let pre = self.branches[b].forward(x);
            let mut h = pre.clone();
            relu(&mut h);
            scores.push(self.gate_b[b] + dot(&self.gate_w[b], &h));
            pre_embed.push(pre);
            embed.push(h);
        }
        let alpha = softmax(&scores);
        let mut z = Vec::with_capacity(inputs.len() * self.shape.embed);
        for (h, a) in embed.iter().zip(&alpha) {
            z.extend(h.iter().map(|v| a * v));
        }
        let mut acts = vec![z];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let p = layer.forward(acts.last().expect("input"));
            let mut a = p.clone();
            if i + 1 < self.layers.len() {
                relu(&mut a);
            }
            pre.push(p);
            acts.push(a);
        }
        Ok(Cache {
            inputs: inputs.iter().map(|x| x.to_vec()).collect(),
            pre_embed,
            embed,
            alpha,
            acts,
            pre,
        })
    }

    /// Back-propagates `d_out = dL/dq` through the pass in `cache`,
    /// accumulating into `grad` (same shape as `self`).
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut QNetwork) {
        let n = self.layers.len();
        let mut d = d_out.to_vec();
        for i in (0..n).rev() {
            if i + 1 < n {
                relu_grad(&cache.pre[i], &mut d);
            }
            d = self.layers[i].backward(&cache.acts[i], &d, &mut grad.layers[i]);
        }
        // d is now dL/dz, z = concat(α_b h_b).
        let e = self.shape.embed;
        let nb = self.branches.len();
        let mut d_alpha = vec![0.0; nb];
        let mut d_h: Vec<Vec<f64>> = Vec::with_capacity(nb);
        for b in 0..nb {
            let dz = &d[b * e..(b + 1) * e];
            d_alpha[b] = dot(dz, &cache.embed[b]);
            d_h.push(dz.iter().map(|g| g * cache.alpha[b]).collect());
        }
        let mean = dot(&cache.alpha, &d_alpha);
        for b in 0..nb {
            let ds = cache.alpha[b] * (d_alpha[b] - mean);
            grad.gate_b[b] += ds;
            for j in 0..e {
                grad.gate_w[b][j] += ds * cache.embed[b][j];
                d_h[b][j] += ds * self.gate_w[b][j];
            }
            relu_grad(&cache.pre_embed[b], &mut d_h[b]);
            self.branches[b].backward(&cache.inputs[b], &d_h[b], &mut grad.branches[b]);
        }
    }

    /// Every parameter tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (i, d) in self.branches.iter().enumerate() {
            out.push((format!("branch{i}.w"), vec![d.n_out, d.n_in], &d.w));
            out.push((format!("branch{i}.b"), vec![d.n_out], &d.b));
        }
        for (i, g) in self.gate_w.iter().enumerate() {
            out.push((format!("gate{i}.w"), vec![g.len()], g));
        }
        out.push(("gate.b".into(), vec![self.gate_b.len()], &self.gate_b));
        for (i, d) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w"), vec![d.n_out, d.n_in], &d.w));
            out.push((format!("layer{i}.b"), vec![d.n_out], &d.b));
        }
        out
    }

    /// Mutable views in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for d in &mut self.branches {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        for g in &mut self.gate_w {
            out.push(g);
        }
        out.push(&mut self.gate_b);
        for d in &mut self.layers {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.2.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= k;
            }
        }
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, other: &QNetwork, k: f64) {
        let src = other.tensors();
        for (dst, (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += k * v;
            }
        }
    }

    /// One SGD step with global-norm clipping. Returns the unclipped norm.
    pub fn sgd_step(&mut self, grad: &QNetwork, lr: f64, clip: f64) -> f64 {
        let norm = grad.norm();
        let k = if norm > clip { clip / norm } else { 1.0 };
        self.add_scaled(grad, -lr * k);
        norm
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}
