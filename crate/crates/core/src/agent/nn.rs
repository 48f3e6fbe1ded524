use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Layer shapes of a fully connected tanh network whose weights live in an
/// external flat parameter slice starting at `offset`.
///
/// Per layer the slice holds the `out x in` weight matrix row-major, then
/// the `out` biases. The last layer is linear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offset: usize,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    /// `acts[0]` is the input, `acts[k]` the output of layer `k - 1`.
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, offset: usize) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Self { sizes, offset }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.num_params()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut at = self.offset;
        self.sizes.windows(2).map(move |w| {
            let start = at;
            at += w[1] * w[0] + w[1];
            (start, w[0], w[1])
        })
    }

    /// Orthogonal weights scaled by the per-layer gains, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], gains: &[f64], rng: &mut R) {
        assert_eq!(gains.len(), self.sizes.len() - 1);
        for ((start, fan_in, fan_out), &gain) in self.layers().zip(gains) {
            let w = orthogonal(fan_out, fan_in, gain, rng);
            params[start..start + fan_out * fan_in].copy_from_slice(&w);
            params[start + fan_out * fan_in..start + fan_out * fan_in + fan_out].fill(0.0);
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> MlpTrace {
        assert_eq!(input.len(), self.input_len());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for (k, (start, fan_in, fan_out)) in self.layers().enumerate() {
            let x = &acts[k];
            let w = &params[start..start + fan_out * fan_in];
            let b = &params[start + fan_out * fan_in..start + fan_out * fan_in + fan_out];
            let mut y: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + w[o * fan_in..(o + 1) * fan_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if k + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
        }
        MlpTrace { acts }
    }

    /// Adds `d loss / d params` to `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], trace: &MlpTrace, d_out: &[f64], grad: &mut [f64]) {
        assert_eq!(d_out.len(), self.output_len());
        let layers: Vec<_> = self.layers().collect();
        let mut delta = d_out.to_vec();
        for (k, &(start, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let x = &trace.acts[k];
            for o in 0..fan_out {
                let row = start + o * fan_in;
                for i in 0..fan_in {
                    grad[row + i] += delta[o] * x[i];
                }
                grad[start + fan_out * fan_in + o] += delta[o];
            }
            if k == 0 {
                break;
            }
            // previous activation is tanh: d/dz = 1 - a^2
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = start + o * fan_in;
                for i in 0..fan_in {
                    prev[i] += params[row + i] * delta[o];
                }
            }
            for (p, a) in prev.iter_mut().zip(x) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

/// Row-major `rows x cols` matrix with orthonormal rows or columns
/// (whichever is fewer), times `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (m, n) = if rows < cols { (cols, rows) } else { (rows, cols) };
    let a = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows < cols { q.transpose() } else { q };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(gain * q[(i, j)]);
        }
    }
    out
}
