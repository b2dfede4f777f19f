//! Fully-connected ReLU generator with hand-derived backpropagation.
//!
//! The network is `x = W_L relu(W_{L-1} relu(... relu(W_1 z)...))`: ReLU after
//! every layer except the last, no bias terms. Absence of biases keeps the
//! map positively homogeneous in `z` and lets a first-layer weight matrix be
//! absorbed into an enlarged latent, which the representation-error probes
//! rely on.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{matvec, matvec_transpose, outer, Tensor};

/// Weight stack `[W_1 ... W_L]` with `W_l` of shape `[k_l, k_{l-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    dims: Vec<usize>,
    weights: Vec<Tensor>,
}

/// Intermediates cached by a forward pass: the input, each pre-activation,
/// and each post-activation.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input: Tensor,
    pre: Vec<Tensor>,
    post: Vec<Tensor>,
}

impl ForwardTape {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn pre_activations(&self) -> &[Tensor] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Tensor] {
        &self.post
    }
}

impl GeneratorParams {
    /// Build from explicit weights; dims are inferred and chained shapes
    /// validated. Equal consecutive dims are allowed.
    pub fn from_weights(weights: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("generator needs at least one layer".into()));
        }
        let mut dims = Vec::with_capacity(weights.len() + 1);
        dims.push(weights[0].shape()[1]);
        for (l, w) in weights.iter().enumerate() {
            if w.shape().len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "weight {l} must be a matrix, got shape {:?}",
                    w.shape()
                )));
            }
            if w.shape()[1] != dims[l] {
                return Err(Error::ShapeMismatch {
                    context: "GeneratorParams::from_weights",
                    expected: vec![dims[l]],
                    got: vec![w.shape()[1]],
                });
            }
            dims.push(w.shape()[0]);
        }
        Ok(GeneratorParams { dims, weights })
    }

    /// He-style random initialization: `W_l` entries i.i.d. N(0, 2/k_{l-1}).
    /// With `strict` set, dims must be strictly increasing.
    pub fn init(rng: &mut RngStream, dims: &[usize], strict: bool) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "generator dims need at least an input and an output".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "generator dims {dims:?} contain a zero"
            )));
        }
        if strict && dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "strict mode requires strictly increasing dims, got {dims:?}"
            )));
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        for l in 1..dims.len() {
            let std = (2.0 / dims[l - 1] as f64).sqrt();
            weights.push(rng.sample_gaussian(&[dims[l], dims[l - 1]], 0.0, std)?);
        }
        Ok(GeneratorParams {
            dims: dims.to_vec(),
            weights,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn latent_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Tensor {
        &mut self.weights[layer]
    }

    /// Forward pass returning the output and the tape needed by `backward`.
    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, ForwardTape)> {
        if z.shape() != [self.dims[0]] {
            return Err(Error::ShapeMismatch {
                context: "generator forward",
                expected: vec![self.dims[0]],
                got: z.shape().to_vec(),
            });
        }
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers);
        let mut h = z.clone();
        for (l, w) in self.weights.iter().enumerate() {
            let a = matvec(w, &h)?;
            h = if l + 1 < layers {
                let mut r = a.clone();
                for v in r.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                r
            } else {
                a.clone()
            };
            pre.push(a);
            post.push(h.clone());
        }
        let tape = ForwardTape {
            input: z.clone(),
            pre,
            post,
        };
        Ok((h, tape))
    }

    /// Gradients of `<g_out, G(z)>` with respect to `z` and every weight,
    /// using the subgradient relu'(0) = 0.
    pub fn backward(&self, tape: &ForwardTape, g_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let layers = self.weights.len();
        if tape.pre.len() != layers || tape.input.shape() != [self.dims[0]] {
            return Err(Error::InvalidArgument(
                "forward tape does not match generator layout".into(),
            ));
        }
        for (l, a) in tape.pre.iter().enumerate() {
            if a.shape() != [self.dims[l + 1]] {
                return Err(Error::InvalidArgument(
                    "forward tape does not match generator layout".into(),
                ));
            }
        }
        if g_out.shape() != [self.output_dim()] {
            return Err(Error::ShapeMismatch {
                context: "generator backward",
                expected: vec![self.output_dim()],
                got: g_out.shape().to_vec(),
            });
        }
        let mut g_weights = vec![Tensor::zeros(&[1]); layers];
        let mut delta = g_out.clone();
        for l in (0..layers).rev() {
            let upstream = if l == 0 { &tape.input } else { &tape.post[l - 1] };
            g_weights[l] = outer(&delta, upstream);
            delta = matvec_transpose(&self.weights[l], &delta)?;
            if l > 0 {
                // Gate by the ReLU mask of the previous layer's pre-activation.
                let mask_src = &tape.pre[l - 1];
                for (d, a) in delta.data_mut().iter_mut().zip(mask_src.data()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }
        Ok((delta, g_weights))
    }

    pub fn save(&self, dir: &Path, seed: Option<u64>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut weight_files = Vec::with_capacity(self.weights.len());
        for (l, w) in self.weights.iter().enumerate() {
            let name = format!("w{:02}.iatf", l + 1);
            w.save_iatf(&dir.join(&name))?;
            weight_files.push(name);
        }
        let manifest = GeneratorManifest {
            dims: self.dims.clone(),
            seed,
            bias: false,
            latent_radius: (self.dims[0] as f64).sqrt(),
            weight_files,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Parse(format!("manifest serialization: {e}")))?;
        fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let raw = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: GeneratorManifest =
            serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        let mut weights = Vec::with_capacity(manifest.weight_files.len());
        for name in &manifest.weight_files {
            weights.push(Tensor::load_iatf(&dir.join(name))?);
        }
        let params = GeneratorParams::from_weights(weights)?;
        if params.dims != manifest.dims {
            return Err(Error::Parse(format!(
                "manifest dims {:?} disagree with weight shapes {:?}",
                manifest.dims, params.dims
            )));
        }
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct GeneratorManifest {
    dims: Vec<usize>,
    seed: Option<u64>,
    bias: bool,
    latent_radius: f64,
    weight_files: Vec<String>,
}

/// Draw from the latent prior: N(0, I_k) truncated to the ball of radius
/// sqrt(k) by radial projection.
pub fn sample_latent(rng: &mut RngStream, k: usize) -> Tensor {
    sample_latent_with_radius(rng, k, (k as f64).sqrt())
}

pub fn sample_latent_with_radius(rng: &mut RngStream, k: usize, radius: f64) -> Tensor {
    let z = rng
        .sample_gaussian(&[k], 0.0, 1.0)
        .expect("latent dim validated by caller");
    project_to_ball(&z, radius)
}

/// Scale `z` onto the ball of the given radius if it lies outside.
pub fn project_to_ball(z: &Tensor, radius: f64) -> Tensor {
    let n = crate::tensor::norm2(z);
    if n > radius {
        z.scale(radius / n)
    } else {
        z.clone()
    }
}
