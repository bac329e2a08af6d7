use rand::Rng;
use rand_distr::StandardNormal;

use super::AgentError;

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters are stored flat, layer by layer, each as a row-major
/// `outputs x inputs` weight block followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry is the output.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut n = 0;
    for w in sizes.windows(2) {
        offsets.push(n);
        n += w[0] * w[1] + w[1];
    }
    (offsets, n)
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self, AgentError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(AgentError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let (offsets, n) = layout(sizes);
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; n], offsets })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, AgentError> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(AgentError::Shape(format!(
                "expected {} parameters for {sizes:?}, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    /// Orthogonal initialisation: hidden layers with `hidden_gain`, the output
    /// layer with `output_gain`, zero biases.
    pub fn orthogonal<R: Rng>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Result<Self, AgentError> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = net.n_layers();
        for l in 0..n_layers {
            let gain = if l + 1 == n_layers { output_gain } else { hidden_gain };
            let (inputs, outputs) = (sizes[l], sizes[l + 1]);
            let w = orthogonal_matrix(outputs, inputs, rng);
            let off = net.offsets[l];
            for (dst, src) in net.params[off..off + inputs * outputs].iter_mut().zip(w) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward_cached(input)?.activations.pop().unwrap())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, AgentError> {
        if input.len() != self.input_len() {
            return Err(AgentError::Shape(format!(
                "input length {} does not match network input {}",
                input.len(),
                self.input_len()
            )));
        }
        let n_layers = self.n_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let x = &activations[l];
            let inputs = x.len();
            let mut y: Vec<f64> = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * inputs..(o + 1) * inputs];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(y);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse-mode pass: adds `d loss / d params` into `grads` and returns
    /// `d loss / d input`.
    pub fn backprop(&self, cache: &ForwardCache, output_grad: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, AgentError> {
        if output_grad.len() != self.output_len() || grads.len() != self.params.len() {
            return Err(AgentError::Shape("gradient buffers do not match the network".into()));
        }
        let mut g = output_grad.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (inputs, outputs) = (self.sizes[l], self.sizes[l + 1]);
            let (w, _) = self.layer(l);
            let x = &cache.activations[l];
            let off = self.offsets[l];
            let (gw, gb) = grads[off..off + inputs * outputs + outputs].split_at_mut(inputs * outputs);
            let mut g_in = vec![0.0; inputs];
            for o in 0..outputs {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                gb[o] += go;
                let row = &w[o * inputs..(o + 1) * inputs];
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                for i in 0..inputs {
                    grow[i] += go * x[i];
                    g_in[i] += go * row[i];
                }
            }
            if l > 0 {
                // x = tanh(pre-activation)
                for (gi, xi) in g_in.iter_mut().zip(x) {
                    *gi *= 1.0 - xi * xi;
                }
            }
            g = g_in;
        }
        Ok(g)
    }

    /// Parameter gradient of `output_grad . f(input)`.
    pub fn gradient(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>, AgentError> {
        let cache = self.forward_cached(input)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backprop(&cache, output_grad, &mut grads)?;
        Ok(grads)
    }
}

/// `rows x cols` matrix (row-major) with orthonormal rows or columns,
/// whichever is fewer, via modified Gram-Schmidt on a Gaussian draw.
pub fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (k, n) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    out
}
