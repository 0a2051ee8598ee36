use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            out.push(row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b);
        }
    }
}

/// A small ReLU MLP. Hidden layers are always rectified; the output layer is
/// rectified only for control-message segments.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSegment {
    layers: Vec<DenseLayer>,
    rectify_output: bool,
}

/// Post-activation values of every layer, input first.
#[derive(Clone, Debug)]
pub struct SegmentCache {
    pub activations: Vec<Vec<f64>>,
}

impl SegmentCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input at least")
    }
}

impl MlpSegment {
    /// Uniform init in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rectify_output: bool, rng: &mut R) -> Self {
        let mut seg = Self::zeros(sizes, rectify_output);
        for layer in &mut seg.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        seg
    }

    pub fn zeros(sizes: &[usize], rectify_output: bool) -> Self {
        assert!(sizes.len() >= 2, "a segment needs input and output sizes");
        let layers = sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Self { layers, rectify_output }
    }

    pub fn from_layers(layers: Vec<DenseLayer>, rectify_output: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::SizeMismatch("segment without layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::WidthMismatch { expected: pair[0].outputs, got: pair[1].inputs });
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::SizeMismatch("layer parameter count".into()));
            }
        }
        Ok(Self { layers, rectify_output })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn rectify_output(&self) -> bool {
        self.rectify_output
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Multiply-accumulate operations of one forward pass.
    pub fn macs(&self) -> usize {
        self.layers.iter().map(|l| l.inputs * l.outputs).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn rectified(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.rectify_output
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch { expected: self.input_width(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if self.rectified(k) {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<SegmentCache> {
        self.check_width(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.affine(&activations[k], &mut out);
            if self.rectified(k) {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        Ok(SegmentCache { activations })
    }

    /// Accumulates parameter gradients into `grads` (same shape as `self`)
    /// and returns the gradient with respect to the segment input.
    pub fn backward(&self, cache: &SegmentCache, grad_out: &[f64], grads: &mut MlpSegment) -> Vec<f64> {
        let mut delta = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let out = &cache.activations[k + 1];
            if self.rectified(k) {
                for (d, &o) in delta.iter_mut().zip(out) {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.activations[k];
            let g = &mut grads.layers[k];
            let mut grad_in = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = o * layer.inputs;
                for i in 0..layer.inputs {
                    g.weights[row + i] += d * input[i];
                    grad_in[i] += d * layer.weights[row + i];
                }
            }
            delta = grad_in;
        }
        delta
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_segment_outputs_zero() {
        let seg = MlpSegment::zeros(&[4, 16, 16, 8], true);
        assert_eq!(seg.forward(&[1.0, 0.0, 2.0, -1.0]).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn param_count_matches_sizes() {
        let seg = MlpSegment::zeros(&[6, 16, 16, 8], true);
        assert_eq!(seg.param_count(), 6 * 16 + 16 + 16 * 16 + 16 + 16 * 8 + 8);
        assert_eq!(seg.params().count(), seg.param_count());
    }

    #[test]
    fn width_mismatch_is_reported() {
        let seg = MlpSegment::zeros(&[3, 2], false);
        assert!(matches!(seg.forward(&[1.0]), Err(Error::WidthMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn rectified_output_is_non_negative() {
        let mut rng = stream(2, Stream::Init);
        let seg = MlpSegment::new(&[5, 16, 8], true, &mut rng);
        for k in 0..5 {
            let mut x = vec![0.0; 5];
            x[k] = 1.0;
            assert!(seg.forward(&x).unwrap().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cached_forward_agrees_with_forward() {
        let mut rng = stream(8, Stream::Init);
        let seg = MlpSegment::new(&[3, 7, 4], false, &mut rng);
        let x = [0.3, -1.2, 0.8];
        assert_eq!(seg.forward_cached(&x).unwrap().output(), seg.forward(&x).unwrap().as_slice());
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut rng = stream(4, Stream::Init);
        let seg = MlpSegment::new(&[3, 6, 2], false, &mut rng);
        let x = [0.4, -0.7, 1.1];
        let cache = seg.forward_cached(&x).unwrap();
        let mut grads = MlpSegment::zeros(&seg.layer_sizes(), false);
        // objective: sum of outputs
        let g = seg.backward(&cache, &[1.0, 1.0], &mut grads);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fp: f64 = seg.forward(&xp).unwrap().iter().sum();
            let fm: f64 = seg.forward(&xm).unwrap().iter().sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }
}
