use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::model::config::GlassConfig;
use crate::nn::{DecoderBlock, EncoderBlock, KeyValue, LayerNorm, Linear};
use crate::params::{uniform, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Splits a `T × D` window into `T/P` rows of `P·D` consecutive values.
pub fn patchify(x: &Tensor, patch: usize) -> Result<Tensor> {
    let (t, d) = (x.rows(), x.cols());
    if patch == 0 || t % patch != 0 {
        return shape_err(format!("patch size {patch} does not divide {t} frames"));
    }
    x.as_matrix().reshape(vec![t / patch, patch * d])
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &Tensor, dims: usize) -> Result<Tensor> {
    let width = patches.cols();
    if dims == 0 || !width.is_multiple_of(dims) {
        return shape_err(format!("patch width {width} is not a multiple of {dims} dims"));
    }
    patches.as_matrix().reshape(vec![patches.rows() * width / dims, dims])
}

/// Repeats the last observed frame for every output frame.
pub fn predict_previous(window: &Tensor, output_frames: usize) -> Result<Tensor> {
    if window.rows() == 0 {
        return shape_err("predict-previous needs at least one input frame");
    }
    let last = window.row(window.rows() - 1);
    Tensor::from_rows(&vec![last; output_frames])
}

/// Patch-based encoder–decoder Transformer forecaster.
#[derive(Clone, Debug)]
pub struct Glass {
    cfg: GlassConfig,
    store: ParamStore,
    enc_embed: Linear,
    encoder: Vec<EncoderBlock>,
    enc_norm: LayerNorm,
    start: ParamId,
    dec_embed: Linear,
    decoder: Vec<DecoderBlock>,
    dec_norm: LayerNorm,
    out_proj: Linear,
}

/// Per-block decoder self-attention keys/values for a cached token prefix.
struct PrefixCache {
    blocks: Vec<Option<KeyValue>>,
    /// For each cached token after the start token: was it ground truth?
    choices: Vec<bool>,
}

impl Glass {
    /// Fresh model with seeded initialization. Parameters are rounded to
    /// `f32` so checkpoints reproduce them exactly.
    pub fn new(cfg: GlassConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.model_dim;
        let pw = cfg.patch_width();
        let enc_embed = Linear::new(&mut store, "enc.embed", pw, d, &mut rng);
        let encoder = (0..cfg.enc_layers)
            .map(|i| EncoderBlock::new(&mut store, &format!("enc.block{i}"), d, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let enc_norm = LayerNorm::new(&mut store, "enc.norm", d);
        let start = store.add("dec.start", uniform(&mut rng, &[1, d], 1.0 / (d as f64).sqrt()));
        let dec_embed = Linear::new(&mut store, "dec.embed", pw, d, &mut rng);
        let decoder = (0..cfg.dec_layers)
            .map(|i| DecoderBlock::new(&mut store, &format!("dec.block{i}"), d, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let dec_norm = LayerNorm::new(&mut store, "dec.norm", d);
        let out_proj = Linear::new(&mut store, "dec.out", d, pw, &mut rng);
        store.round_to_f32();
        Ok(Self {
            cfg,
            store,
            enc_embed,
            encoder,
            enc_norm,
            start,
            dec_embed,
            decoder,
            dec_norm,
            out_proj,
        })
    }

    pub fn config(&self) -> &GlassConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Ids of the encoder-side parameters (embedding, blocks, final norm).
    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, p)| p.name.starts_with("enc."))
            .map(|(id, _)| id)
            .collect()
    }

    fn check_window(&self, x: &Tensor, frames: usize, what: &str) -> Result<()> {
        if x.rows() != frames || x.cols() != self.cfg.input_dims {
            return shape_err(format!(
                "{what} must be {frames}×{}, got {}",
                self.cfg.input_dims,
                x.shape_str()
            ));
        }
        if !x.is_finite() {
            return Err(Error::Numeric(format!("{what} contains non-finite values")));
        }
        Ok(())
    }

    /// Encoder states (`T_i/P × d`) of `window` inside `g`.
    pub fn encode_graph(&self, g: &mut Graph<'_>, window: &Tensor) -> Result<Var> {
        self.check_window(window, self.cfg.input_frames, "input window")?;
        let patches = g.constant(patchify(window, self.cfg.patch)?);
        let mut h = self.enc_embed.forward(g, patches)?;
        let positions: Vec<usize> = (0..self.cfg.in_patches()).collect();
        for block in &self.encoder {
            h = block.forward(g, h, &positions)?;
        }
        self.enc_norm.forward(g, h)
    }

    /// Autoregressive decoding inside `g`, returning the `T_o × D` forecast.
    ///
    /// Before each step every previously generated patch is independently
    /// replaced by its ground truth with probability `tf_prob`, drawn from
    /// `tf_rng`. No draws are made when `tf_prob` is 0 or 1.
    pub fn decode_graph(
        &self,
        g: &mut Graph<'_>,
        enc: Var,
        target: Option<&Tensor>,
        tf_prob: f64,
        tf_rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if !(0.0..=1.0).contains(&tf_prob) {
            return Err(Error::Contract(format!(
                "teacher forcing probability {tf_prob} outside [0, 1]"
            )));
        }
        let truth = match target {
            Some(t) => {
                self.check_window(t, self.cfg.output_frames, "target")?;
                Some(patchify(t, self.cfg.patch)?)
            }
            None if tf_prob > 0.0 => {
                return Err(Error::Contract("teacher forcing requires a target".into()));
            }
            None => None,
        };
        let n_in = self.cfg.in_patches();
        let n_out = self.cfg.out_patches();
        let enc_positions: Vec<usize> = (0..n_in).collect();
        let memory = self
            .decoder
            .iter()
            .map(|b| b.memory(g, enc, &enc_positions))
            .collect::<Result<Vec<_>>>()?;

        let start = g.param(self.start);
        let mut cache = PrefixCache {
            blocks: vec![None; self.decoder.len()],
            choices: Vec::new(),
        };
        let mut truth_tokens: Vec<Option<Var>> = vec![None; n_out];
        let mut preds: Vec<Var> = Vec::with_capacity(n_out);
        let mut pred_tokens: Vec<Var> = Vec::with_capacity(n_out);

        for step in 0..n_out {
            let choices: Vec<bool> = (0..step)
                .map(|_| {
                    if tf_prob >= 1.0 {
                        true
                    } else if tf_prob <= 0.0 {
                        false
                    } else {
                        tf_rng.gen::<f64>() < tf_prob
                    }
                })
                .collect();
            // tokens 0..=keep are reusable: start token plus the matching prefix
            let keep = cache.choices.iter().zip(&choices).take_while(|(a, b)| a == b).count();
            let first_new = keep + 1;
            let mut rows = Vec::with_capacity(step + 1 - keep);
            if step == 0 {
                rows.push(start);
            }
            for j in first_new.max(1)..=step {
                let token = if choices[j - 1] {
                    match truth_tokens[j - 1] {
                        Some(t) => t,
                        None => {
                            let truth = truth.as_ref().expect("target checked above");
                            let p = g.constant(truth.slice_rows(j - 1, 1)?);
                            let t = self.dec_embed.forward(g, p)?;
                            truth_tokens[j - 1] = Some(t);
                            t
                        }
                    }
                } else {
                    pred_tokens[j - 1]
                };
                rows.push(token);
            }
            let cached = if step == 0 { 0 } else { first_new };
            let mut x = if rows.len() == 1 {
                rows[0]
            } else {
                g.concat_rows(&rows)?
            };
            let positions: Vec<usize> = (cached..=step).map(|j| n_in - 1 + j).collect();
            for (b, block) in self.decoder.iter().enumerate() {
                x = self.decoder_block_step(g, block, x, &positions, cached, &mut cache.blocks[b], memory[b])?;
            }
            cache.choices = choices;

            let last = if positions.len() == 1 {
                x
            } else {
                g.slice_rows(x, positions.len() - 1, 1)?
            };
            let h = self.dec_norm.forward(g, last)?;
            let patch = self.out_proj.forward(g, h)?;
            preds.push(patch);
            if step + 1 < n_out {
                pred_tokens.push(self.dec_embed.forward(g, patch)?);
            }
        }
        let all = if preds.len() == 1 {
            preds[0]
        } else {
            g.concat_rows(&preds)?
        };
        g.reshape(all, vec![self.cfg.output_frames, self.cfg.input_dims])
    }

    /// One decoder block over the new rows `x` whose first row sits at token
    /// index `cached`, attending to cached keys/values of earlier tokens.
    #[allow(clippy::too_many_arguments)]
    fn decoder_block_step(
        &self,
        g: &mut Graph<'_>,
        block: &DecoderBlock,
        x: Var,
        positions: &[usize],
        cached: usize,
        cache: &mut Option<KeyValue>,
        memory: KeyValue,
    ) -> Result<Var> {
        let h = block.norm1.forward(g, x)?;
        let new = block.self_attn.key_value(g, h, positions)?;
        let kv = match cache.take() {
            Some(old) if cached > 0 => {
                let (k, v) = if g.value(old.k).rows() == cached {
                    (old.k, old.v)
                } else {
                    (g.slice_rows(old.k, 0, cached)?, g.slice_rows(old.v, 0, cached)?)
                };
                KeyValue {
                    k: g.concat_rows(&[k, new.k])?,
                    v: g.concat_rows(&[v, new.v])?,
                }
            }
            _ => new,
        };
        *cache = Some(kv);
        let a = block.self_attn.attend(g, h, positions, kv)?;
        let x = g.add(x, a)?;
        let h = block.norm2.forward(g, x)?;
        let c = block.cross_attn.attend(g, h, positions, memory)?;
        let x = g.add(x, c)?;
        let h = block.norm3.forward(g, x)?;
        let m = block.mlp.forward(g, h)?;
        g.add(x, m)
    }

    /// Full forward pass; returns the forecast node.
    pub fn forward_graph(
        &self,
        g: &mut Graph<'_>,
        window: &Tensor,
        target: Option<&Tensor>,
        tf_prob: f64,
        tf_rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let enc = self.encode_graph(g, window)?;
        self.decode_graph(g, enc, target, tf_prob, tf_rng)
    }

    /// Encoder states of one window.
    pub fn encode(&self, window: &Tensor) -> Result<Tensor> {
        let mut g = Graph::with_params(&self.store);
        let enc = self.encode_graph(&mut g, window)?;
        Ok(g.value(enc).clone())
    }

    /// Decodes from given encoder states.
    pub fn decode(&self, enc: &Tensor, target: Option<&Tensor>, tf_prob: f64, seed: u64) -> Result<Tensor> {
        let want = [self.cfg.in_patches(), self.cfg.model_dim];
        if enc.rows() != want[0] || enc.cols() != want[1] {
            return shape_err(format!(
                "encoder states must be {}×{}, got {}",
                want[0],
                want[1],
                enc.shape_str()
            ));
        }
        let mut g = Graph::with_params(&self.store);
        let e = g.constant(enc.as_matrix());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = self.decode_graph(&mut g, e, target, tf_prob, &mut rng)?;
        Ok(g.value(out).clone())
    }

    /// Fully autoregressive forecast of the frames following `window`.
    pub fn forecast(&self, window: &Tensor) -> Result<Tensor> {
        let mut g = Graph::with_params(&self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward_graph(&mut g, window, None, 0.0, &mut rng)?;
        Ok(g.value(out).clone())
    }

    /// Rebuilds a model around stored parameter values; used by checkpoint
    /// loading. The layout must match the one `cfg` produces.
    pub(crate) fn with_values(cfg: GlassConfig, values: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::new(cfg, 0)?;
        if values.len() != model.store.len() {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "{} parameters, configuration expects {}",
                    values.len(),
                    model.store.len()
                ),
            });
        }
        for ((_, p), (name, value)) in model.store.iter_mut().zip(values) {
            if p.name != name || p.value.dims() != value.dims() {
                return Err(Error::Format {
                    offset: 0,
                    message: format!(
                        "parameter `{name}` {} does not match expected `{}` {}",
                        value.shape_str(),
                        p.name,
                        p.value.shape_str()
                    ),
                });
            }
            p.value = value;
        }
        Ok(model)
    }
}
