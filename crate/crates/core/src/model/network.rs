use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

/// Affine layer with an input-major weight matrix (`in x out`).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: DenseMatrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform `[-a, a]` weights with `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn xavier(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Linear::zeros(inputs, outputs);
        for w in layer.weight.as_mut_slice() {
            *w = rng.uniform_range(-a, a);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

/// Encoder `g_phi` and decoder `f_theta` of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainNetwork {
    /// items -> hidden, tanh
    pub enc_hidden: Linear,
    /// hidden -> [mean, log sigma]
    pub enc_out: Linear,
    /// latent -> hidden, tanh
    pub dec_hidden: Linear,
    /// hidden -> item logits
    pub dec_out: Linear,
}

impl DomainNetwork {
    const LAYER_NAMES: [&'static str; 4] = ["enc_hidden", "enc_out", "dec_hidden", "dec_out"];

    fn layers(&self) -> [&Linear; 4] {
        [
            &self.enc_hidden,
            &self.enc_out,
            &self.dec_hidden,
            &self.dec_out,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Linear; 4] {
        [
            &mut self.enc_hidden,
            &mut self.enc_out,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ]
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub item_counts: Vec<usize>,
    pub hidden: usize,
    pub latent: usize,
}

impl ModelShape {
    pub fn new(item_counts: Vec<usize>, hidden: usize, latent: usize) -> Self {
        ModelShape {
            item_counts,
            hidden,
            latent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.item_counts.is_empty() {
            return Err(Error::Config("model needs at least one domain".into()));
        }
        if self.item_counts.contains(&0) || self.hidden == 0 || self.latent == 0 {
            return Err(Error::Config(format!("degenerate model shape {self:?}")));
        }
        Ok(())
    }
}

/// Parameters of the POE model. Also used as the container for gradients,
/// which have the same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct PoeModel {
    shape: ModelShape,
    pub(crate) domains: Vec<DomainNetwork>,
}

impl PoeModel {
    /// Seeded Xavier-uniform initialization.
    pub fn new(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let root = SeededRng::new(seed);
        let (h, k) = (shape.hidden, shape.latent);
        let domains = shape
            .item_counts
            .iter()
            .enumerate()
            .map(|(d, &items)| {
                let mut rng = root.substream(&[d as u64]);
                DomainNetwork {
                    enc_hidden: Linear::xavier(items, h, &mut rng),
                    enc_out: Linear::xavier(h, 2 * k, &mut rng),
                    dec_hidden: Linear::xavier(k, h, &mut rng),
                    dec_out: Linear::xavier(h, items, &mut rng),
                }
            })
            .collect();
        Ok(PoeModel { shape, domains })
    }

    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let (h, k) = (shape.hidden, shape.latent);
        let domains = shape
            .item_counts
            .iter()
            .map(|&items| DomainNetwork {
                enc_hidden: Linear::zeros(items, h),
                enc_out: Linear::zeros(h, 2 * k),
                dec_hidden: Linear::zeros(k, h),
                dec_out: Linear::zeros(h, items),
            })
            .collect();
        Ok(PoeModel { shape, domains })
    }

    pub fn zeros_like(&self) -> Self {
        PoeModel::zeros(self.shape.clone()).expect("shape already validated")
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.shape.latent
    }

    pub fn num_items(&self, d: usize) -> usize {
        self.shape.item_counts[d]
    }

    pub fn domain(&self, d: usize) -> &DomainNetwork {
        &self.domains[d]
    }

    pub fn domain_mut(&mut self, d: usize) -> &mut DomainNetwork {
        &mut self.domains[d]
    }

    /// Named tensors in canonical order with their `(rows, cols)` shapes.
    /// Biases are reported as `1 x n`.
    pub fn tensors(&self) -> Vec<(String, (usize, usize), &[f64])> {
        let mut out = Vec::with_capacity(8 * self.domains.len());
        for (d, net) in self.domains.iter().enumerate() {
            for (name, layer) in DomainNetwork::LAYER_NAMES.iter().zip(net.layers()) {
                out.push((
                    format!("d{d}.{name}.weight"),
                    layer.weight.shape(),
                    layer.weight.as_slice(),
                ));
                out.push((
                    format!("d{d}.{name}.bias"),
                    (1, layer.bias.len()),
                    layer.bias.as_slice(),
                ));
            }
        }
        out
    }

    /// Mutable parameter slices in the same order as [`Self::tensors`].
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(8 * self.domains.len());
        for net in &mut self.domains {
            for layer in net.layers_mut() {
                let Linear { weight, bias } = layer;
                out.push(weight.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, _, p)| p).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            p.copy_from_slice(&flat[offset..offset + p.len()]);
            offset += p.len();
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PoeModel, scale: f64) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for p in self.params_mut() {
            p.fill(0.0);
        }
    }

    /// Euclidean norm of the decoder parameters of domain `d`.
    pub fn decoder_norm(&self, d: usize) -> f64 {
        let net = &self.domains[d];
        [&net.dec_hidden, &net.dec_out]
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Replaces one named tensor, checking its length.
    pub fn set_tensor(&mut self, index: usize, values: &[f64]) -> Result<()> {
        let mut params = self.params_mut();
        let slot = params
            .get_mut(index)
            .ok_or_else(|| Error::Shape(format!("no tensor #{index}")))?;
        if slot.len() != values.len() {
            return Err(Error::Shape(format!(
                "tensor #{index} holds {} values, got {}",
                slot.len(),
                values.len()
            )));
        }
        slot.copy_from_slice(values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let shape = ModelShape::new(vec![6, 5], 8, 3);
        let a = PoeModel::new(shape.clone(), 1).unwrap();
        let b = PoeModel::new(shape.clone(), 1).unwrap();
        let c = PoeModel::new(shape, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (6.0f64 / 14.0).sqrt();
        assert!(a
            .domain(0)
            .enc_hidden
            .weight
            .as_slice()
            .iter()
            .all(|w| w.abs() <= bound));
        assert!(a.domain(0).enc_hidden.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn flatten_round_trip() {
        let mut m = PoeModel::new(ModelShape::new(vec![4], 3, 2), 5).unwrap();
        let flat = m.flatten();
        assert_eq!(flat.len(), m.num_params());
        let mut other = m.zeros_like();
        other.assign_flat(&flat).unwrap();
        assert_eq!(other, m);
        m.fill_zero();
        assert!(m.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_names_are_unique() {
        let m = PoeModel::new(ModelShape::new(vec![4, 2], 3, 2), 5).unwrap();
        let names: std::collections::BTreeSet<_> = m.tensors().into_iter().map(|t| t.0).collect();
        assert_eq!(names.len(), 16);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(PoeModel::new(ModelShape::new(vec![], 3, 2), 0).is_err());
        assert!(PoeModel::new(ModelShape::new(vec![3], 0, 2), 0).is_err());
    }
}
