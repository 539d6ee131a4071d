//! Encoder, generator and discriminator.
//!
//! The encoder is a small post-LN transformer mapping token ids to an L×d
//! hidden sequence (the "real" representation). The generator maps
//! Gaussian noise to an L×d sequence of its own (the "fake"
//! representation). The discriminator sees either through one code path:
//! a shared hidden layer feeds a per-token fluent/disfluent head and, after
//! masked mean pooling, a single real/fake logit.
//!
//! All forward functions are generic over the scalar type and record onto a
//! caller-supplied [`Graph`], so the same code serves training (`f32`) and
//! finite-difference checks (`f64`).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar, Tensor};
use crate::textnorm::Vocabulary;

pub const INIT_STD: f64 = 0.02;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Parameter-name prefixes of the three networks.
pub const ENCODER_PREFIX: &str = "enc.";
pub const GENERATOR_PREFIX: &str = "gen.";
pub const DISCRIMINATOR_PREFIX: &str = "disc.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub ff_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub noise_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub hidden_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    /// CPU-friendly defaults: d=32, 2 layers, 2 heads, L=32, feedforward 64,
    /// noise 16, generator hidden 64.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                vocab_size,
                model_dim: 32,
                n_layers: 2,
                n_heads: 2,
                max_len: 32,
                ff_dim: 64,
            },
            generator: GeneratorConfig {
                noise_dim: 16,
                hidden_dim: 64,
            },
            discriminator: DiscriminatorConfig { hidden_dim: 32 },
        }
    }

    pub fn max_len(&self) -> usize {
        self.encoder.max_len
    }

    pub fn model_dim(&self) -> usize {
        self.encoder.model_dim
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let positive = [
            ("vocab_size", e.vocab_size),
            ("model_dim", e.model_dim),
            ("n_layers", e.n_layers),
            ("n_heads", e.n_heads),
            ("max_len", e.max_len),
            ("ff_dim", e.ff_dim),
            ("noise_dim", self.generator.noise_dim),
            ("generator hidden_dim", self.generator.hidden_dim),
            ("discriminator hidden_dim", self.discriminator.hidden_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !e.model_dim.is_multiple_of(e.n_heads) {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by n_heads {}",
                e.model_dim, e.n_heads
            )));
        }
        Ok(())
    }
}

fn normal_tensor(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<f32> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Embeddings and weight matrices ~ N(0, 0.02²); biases 0; layer-norm gains 1.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<f32>> {
    cfg.validate()?;
    let mut rng = seed::rng(seed, "init");
    let mut s = ParamStore::new();
    let e = &cfg.encoder;
    let d = e.model_dim;
    let mut weight = |s: &mut ParamStore<f32>, name: &str, rows: usize, cols: usize| {
        s.add(name, normal_tensor(&mut rng, &[rows, cols], INIT_STD))
            .map(|_| ())
    };
    let zeros = |s: &mut ParamStore<f32>, name: &str, cols: usize| s.add(name, Tensor::zeros(&[1, cols])).map(|_| ());
    let ones =
        |s: &mut ParamStore<f32>, name: &str, cols: usize| s.add(name, Tensor::full(&[1, cols], 1.0)).map(|_| ());

    weight(&mut s, "enc.tok_emb", e.vocab_size, d)?;
    weight(&mut s, "enc.pos_emb", e.max_len, d)?;
    ones(&mut s, "enc.emb_ln.g", d)?;
    zeros(&mut s, "enc.emb_ln.b", d)?;
    for l in 0..e.n_layers {
        for proj in ["q", "k", "v", "o"] {
            weight(&mut s, &format!("enc.l{l}.w{proj}"), d, d)?;
            zeros(&mut s, &format!("enc.l{l}.b{proj}"), d)?;
        }
        ones(&mut s, &format!("enc.l{l}.ln1.g"), d)?;
        zeros(&mut s, &format!("enc.l{l}.ln1.b"), d)?;
        weight(&mut s, &format!("enc.l{l}.ff1.w"), d, e.ff_dim)?;
        zeros(&mut s, &format!("enc.l{l}.ff1.b"), e.ff_dim)?;
        weight(&mut s, &format!("enc.l{l}.ff2.w"), e.ff_dim, d)?;
        zeros(&mut s, &format!("enc.l{l}.ff2.b"), d)?;
        ones(&mut s, &format!("enc.l{l}.ln2.g"), d)?;
        zeros(&mut s, &format!("enc.l{l}.ln2.b"), d)?;
    }

    let gcfg = &cfg.generator;
    weight(&mut s, "gen.l1.w", gcfg.noise_dim, gcfg.hidden_dim)?;
    zeros(&mut s, "gen.l1.b", gcfg.hidden_dim)?;
    weight(&mut s, "gen.l2.w", gcfg.hidden_dim, e.max_len * d)?;
    zeros(&mut s, "gen.l2.b", e.max_len * d)?;

    let dh = cfg.discriminator.hidden_dim;
    weight(&mut s, "disc.hidden.w", d, dh)?;
    zeros(&mut s, "disc.hidden.b", dh)?;
    weight(&mut s, "disc.tok.w", dh, 2)?;
    zeros(&mut s, "disc.tok.b", 2)?;
    weight(&mut s, "disc.rf.w", dh, 1)?;
    zeros(&mut s, "disc.rf.b", 1)?;
    Ok(s)
}

/// A batch of B sentences padded to L: ids and mask of length B·L.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedBatch {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub size: usize,
    pub max_len: usize,
}

impl EncodedBatch {
    pub fn empty(max_len: usize) -> Self {
        Self {
            ids: Vec::new(),
            mask: Vec::new(),
            size: 0,
            max_len,
        }
    }

    pub fn from_sentences<S: AsRef<[String]>>(sentences: &[S], vocab: &Vocabulary, max_len: usize) -> Self {
        let mut b = Self::empty(max_len);
        for s in sentences {
            let (ids, mask) = vocab.encode(s.as_ref(), max_len);
            b.ids.extend(ids);
            b.mask.extend(mask);
            b.size += 1;
        }
        b
    }

    pub fn push_encoded(&mut self, ids: &[usize], mask: &[bool]) -> Result<()> {
        if ids.len() != self.max_len || mask.len() != self.max_len {
            return Err(Error::Shape(format!(
                "expected {} ids and mask entries, got {} and {}",
                self.max_len,
                ids.len(),
                mask.len()
            )));
        }
        self.ids.extend_from_slice(ids);
        self.mask.extend_from_slice(mask);
        self.size += 1;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Concatenation of two batches with the same padding length.
    pub fn concat(&self, other: &EncodedBatch) -> Self {
        assert_eq!(self.max_len, other.max_len);
        let mut out = self.clone();
        out.ids.extend_from_slice(&other.ids);
        out.mask.extend_from_slice(&other.mask);
        out.size += other.size;
        out
    }
}

fn p<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, name: &str) -> Result<NodeId> {
    g.param_by_name(store, name)
}

fn masked_self_attention<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    cfg: &EncoderConfig,
    layer: usize,
    x: NodeId,
    mask: &[bool],
    batch: usize,
) -> Result<NodeId> {
    let l = cfg.max_len;
    let d = cfg.model_dim;
    let dh = d / cfg.n_heads;
    let scale = T::c(1.0 / (dh as f64).sqrt());
    let proj = |name: &str, g: &mut Graph<T>| -> Result<NodeId> {
        let w = p(g, store, &format!("enc.l{layer}.w{name}"))?;
        let b = p(g, store, &format!("enc.l{layer}.b{name}"))?;
        g.linear(x, w, b)
    };
    let q = proj("q", g)?;
    let k = proj("k", g)?;
    let v = proj("v", g)?;

    let mut sentences = Vec::with_capacity(batch);
    for b in 0..batch {
        let key_mask = &mask[b * l..(b + 1) * l];
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let qh = g.slice(q, b * l, l, h * dh, dh)?;
            let kh = g.slice(k, b * l, l, h * dh, dh)?;
            let vh = g.slice(v, b * l, l, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let attn = g.masked_softmax_rows(scores, key_mask)?;
            heads.push(g.matmul(attn, vh)?);
        }
        sentences.push(if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        });
    }
    let ctx = if sentences.len() == 1 {
        sentences[0]
    } else {
        g.concat_rows(&sentences)?
    };
    let wo = p(g, store, &format!("enc.l{layer}.wo"))?;
    let bo = p(g, store, &format!("enc.l{layer}.bo"))?;
    g.linear(ctx, wo, bo)
}

/// Token + position embeddings through the transformer stack:
/// (B·L) ids → (B·L)×d hidden states.
pub fn encode_batch<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    batch: &EncodedBatch,
) -> Result<NodeId> {
    let e = &cfg.encoder;
    let l = e.max_len;
    if batch.max_len != l || batch.ids.len() != batch.size * l || batch.mask.len() != batch.size * l {
        return Err(Error::Shape(format!(
            "batch of {} sentences padded to {} does not match max_len {l}",
            batch.size, batch.max_len
        )));
    }
    if batch.size == 0 {
        return Err(Error::EmptyBatch("encode called on an empty batch".into()));
    }
    let tok = p(g, store, "enc.tok_emb")?;
    let pos = p(g, store, "enc.pos_emb")?;
    let positions: Vec<usize> = (0..batch.size).flat_map(|_| 0..l).collect();
    let te = g.embedding(tok, &batch.ids)?;
    let pe = g.embedding(pos, &positions)?;
    let x = g.add(te, pe)?;
    let (lg, lb) = (p(g, store, "enc.emb_ln.g")?, p(g, store, "enc.emb_ln.b")?);
    let mut x = g.layer_norm(x, lg, lb, LAYER_NORM_EPS)?;

    for layer in 0..e.n_layers {
        let attn = masked_self_attention(g, store, e, layer, x, &batch.mask, batch.size)?;
        let res = g.add(x, attn)?;
        let (g1, b1) = (
            p(g, store, &format!("enc.l{layer}.ln1.g"))?,
            p(g, store, &format!("enc.l{layer}.ln1.b"))?,
        );
        x = g.layer_norm(res, g1, b1, LAYER_NORM_EPS)?;

        let (w1, bb1) = (
            p(g, store, &format!("enc.l{layer}.ff1.w"))?,
            p(g, store, &format!("enc.l{layer}.ff1.b"))?,
        );
        let (w2, bb2) = (
            p(g, store, &format!("enc.l{layer}.ff2.w"))?,
            p(g, store, &format!("enc.l{layer}.ff2.b"))?,
        );
        let hdn = g.linear(x, w1, bb1)?;
        let hdn = g.gelu(hdn)?;
        let ff = g.linear(hdn, w2, bb2)?;
        let res = g.add(x, ff)?;
        let (g2, b2) = (
            p(g, store, &format!("enc.l{layer}.ln2.g"))?,
            p(g, store, &format!("enc.l{layer}.ln2.b"))?,
        );
        x = g.layer_norm(res, g2, b2, LAYER_NORM_EPS)?;
    }
    Ok(x)
}

/// Noise B×z → fake hidden sequences (B·L)×d.
pub fn generate_batch<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    noise: &Tensor<T>,
) -> Result<NodeId> {
    let (b, z) = noise.expect_rank2("generate")?;
    if z != cfg.generator.noise_dim {
        return Err(Error::Shape(format!(
            "noise dimension {z} does not match generator noise_dim {}",
            cfg.generator.noise_dim
        )));
    }
    if b == 0 {
        return Err(Error::EmptyBatch("generate called with no noise vectors".into()));
    }
    let zin = g.constant(noise.clone())?;
    let (w1, b1) = (p(g, store, "gen.l1.w")?, p(g, store, "gen.l1.b")?);
    let (w2, b2) = (p(g, store, "gen.l2.w")?, p(g, store, "gen.l2.b")?);
    let h = g.linear(zin, w1, b1)?;
    let h = g.gelu(h)?;
    let out = g.linear(h, w2, b2)?;
    g.reshape(out, &[b * cfg.max_len(), cfg.model_dim()])
}

/// Graph handles of the discriminator outputs for a batch.
#[derive(Clone, Copy, Debug)]
pub struct DiscNodes {
    /// (B·L)×2, columns (fluent, disfluent).
    pub token_logits: NodeId,
    /// B×1 real/fake logit.
    pub rf_logit: NodeId,
    /// B×1 probability of "real".
    pub p_real: NodeId,
    /// B×h pooled shared features.
    pub pooled: NodeId,
}

pub fn discriminate_batch<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    hidden: NodeId,
    mask: &[bool],
    batch: usize,
) -> Result<DiscNodes> {
    let l = cfg.max_len();
    let shape = g.value(hidden).shape().to_vec();
    if shape != [batch * l, cfg.model_dim()] || mask.len() != batch * l {
        return Err(Error::Shape(format!(
            "discriminator expects {}x{} hidden states with a matching mask, got {shape:?} and {}",
            batch * l,
            cfg.model_dim(),
            mask.len()
        )));
    }
    let (wh, bh) = (p(g, store, "disc.hidden.w")?, p(g, store, "disc.hidden.b")?);
    let (wt, bt) = (p(g, store, "disc.tok.w")?, p(g, store, "disc.tok.b")?);
    let (wr, br) = (p(g, store, "disc.rf.w")?, p(g, store, "disc.rf.b")?);
    let shared = g.linear(hidden, wh, bh)?;
    let shared = g.gelu(shared)?;
    let token_logits = g.linear(shared, wt, bt)?;
    let pooled = g.mean_pool_masked(shared, mask, l)?;
    let rf_logit = g.linear(pooled, wr, br)?;
    let p_real = g.sigmoid(rf_logit)?;
    Ok(DiscNodes {
        token_logits,
        rf_logit,
        p_real,
        pooled,
    })
}

/// L×d hidden states with their mask.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenSequence {
    pub hidden: Tensor<f32>,
    pub mask: Vec<bool>,
}

/// Standard-normal noise fed to the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseVector(pub Vec<f32>);

impl NoiseVector {
    pub fn sample(rng: &mut impl Rng, dim: usize) -> Self {
        Self((0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }
}

/// Noise matrix with one standard-normal row per fake sequence.
pub fn sample_noise(rng: &mut impl Rng, rows: usize, dim: usize) -> Tensor<f32> {
    let data = (0..rows * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    Tensor::matrix(rows, dim, data).expect("noise shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    /// L×2 (fluent, disfluent) logits.
    pub token_logits: Tensor<f32>,
    pub p_real: f32,
    pub pooled_features: Vec<f32>,
}

/// Parameters plus configuration: the three networks as one value.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqGan {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl SeqGan {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            params: init_params(&config, seed)?,
            config,
        })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        config.validate()?;
        let expected = init_params(&config, 0)?;
        for (_, want) in expected.iter() {
            match params.by_name(&want.name) {
                Some(have) if have.value.shape() == want.value.shape() => {}
                Some(have) => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {} has shape {:?}, expected {:?}",
                        want.name,
                        have.value.shape(),
                        want.value.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("missing parameter {}", want.name))),
            }
        }
        if params.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, model needs {}",
                params.len(),
                expected.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn encode(&self, ids: &[usize], mask: &[bool]) -> Result<HiddenSequence> {
        let mut batch = EncodedBatch::empty(self.config.max_len());
        batch.push_encoded(ids, mask)?;
        let mut g = Graph::new();
        let h = encode_batch(&mut g, &self.params, &self.config, &batch)?;
        Ok(HiddenSequence {
            hidden: g.value(h).clone(),
            mask: mask.to_vec(),
        })
    }

    pub fn generate(&self, z: &NoiseVector) -> Result<HiddenSequence> {
        let noise = Tensor::matrix(1, z.0.len(), z.0.clone())?;
        let mut g = Graph::new();
        let h = generate_batch(&mut g, &self.params, &self.config, &noise)?;
        Ok(HiddenSequence {
            hidden: g.value(h).clone(),
            mask: vec![true; self.config.max_len()],
        })
    }

    pub fn discriminate(&self, h: &HiddenSequence) -> Result<DiscriminatorOutput> {
        let mut g = Graph::new();
        let x = g.constant(h.hidden.clone())?;
        let out = discriminate_batch(&mut g, &self.params, &self.config, x, &h.mask, 1)?;
        Ok(DiscriminatorOutput {
            token_logits: g.value(out.token_logits).clone(),
            p_real: g.scalar_value(out.p_real),
            pooled_features: g.value(out.pooled).data().to_vec(),
        })
    }

    /// Token logits for a batch of encoded sentences, (B·L)×2.
    pub fn token_logits(&self, batch: &EncodedBatch) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let h = encode_batch(&mut g, &self.params, &self.config, batch)?;
        let out = discriminate_batch(&mut g, &self.params, &self.config, h, &batch.mask, batch.size)?;
        Ok(g.value(out.token_logits).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        let mut c = ModelConfig::desk(30);
        c.encoder.model_dim = 16;
        c.encoder.max_len = 8;
        c.encoder.ff_dim = 24;
        c.generator.noise_dim = 6;
        c.generator.hidden_dim = 12;
        c.discriminator.hidden_dim = 10;
        c
    }

    fn ids_mask(n_real: usize, l: usize, offset: usize) -> (Vec<usize>, Vec<bool>) {
        let ids = (0..l)
            .map(|i| if i < n_real { 2 + (i + offset) % 20 } else { 0 })
            .collect();
        let mask = (0..l).map(|i| i < n_real).collect();
        (ids, mask)
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.encoder.n_heads = 3;
        assert!(c.validate().is_err());
        c.encoder.n_heads = 2;
        c.generator.noise_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let (v, d, l, layers, ff) = (200usize, 32usize, 16usize, 2usize, 64usize);
        let mut c = ModelConfig::desk(v);
        c.encoder.max_len = l;
        let (z, gh, dh) = (16usize, 64usize, 32usize);
        let per_layer = 4 * (d * d + d) + 2 * (2 * d) + (d * ff + ff) + (ff * d + d);
        let expected = v * d
            + l * d
            + 2 * d
            + layers * per_layer
            + (z * gh + gh)
            + (gh * l * d + l * d)
            + (d * dh + dh)
            + (dh * 2 + 2)
            + (dh + 1);
        let s = init_params(&c, 1).unwrap();
        assert_eq!(s.num_scalars(), expected);
    }

    #[test]
    fn init_is_seeded() {
        let a = init_params(&tiny(), 5).unwrap();
        assert_eq!(a, init_params(&tiny(), 5).unwrap());
        let b = init_params(&tiny(), 6).unwrap();
        assert_ne!(a.by_name("enc.tok_emb"), b.by_name("enc.tok_emb"));
        assert!(a
            .by_name("enc.l0.ln1.g")
            .unwrap()
            .value
            .data()
            .iter()
            .all(|&x| x == 1.0));
        assert!(a.by_name("disc.rf.b").unwrap().value.data().iter().all(|&x| x == 0.0));
        let emb = &a.by_name("enc.tok_emb").unwrap().value;
        let var = emb.data().iter().map(|&x| f64::from(x).powi(2)).sum::<f64>() / emb.numel() as f64;
        assert!((var.sqrt() - INIT_STD).abs() < 0.005, "{}", var.sqrt());
    }

    #[test]
    fn encode_shape_masking_and_determinism() {
        let m = SeqGan::new(tiny(), 1).unwrap();
        let (ids, mask) = ids_mask(5, 8, 0);
        let h = m.encode(&ids, &mask).unwrap();
        assert_eq!(h.hidden.shape(), &[8, 16]);
        assert_eq!(m.encode(&ids, &mask).unwrap(), h);

        let mut other = ids.clone();
        other[6] = 17;
        let h2 = m.encode(&other, &mask).unwrap();
        for r in 0..5 {
            assert_eq!(h.hidden.row(r), h2.hidden.row(r));
        }
        assert!(m.encode(&ids[..7], &mask[..7]).is_err());
    }

    #[test]
    fn generate_shapes_and_distinct_outputs() {
        let m = SeqGan::new(tiny(), 1).unwrap();
        let h = m.generate(&NoiseVector::zeros(6)).unwrap();
        assert_eq!(h.hidden.shape(), &[8, 16]);
        assert!(h.mask.iter().all(|&b| b));
        assert_eq!(m.generate(&NoiseVector::zeros(6)).unwrap(), h);
        assert!(m.generate(&NoiseVector::zeros(5)).is_err());

        let mut rng = seed::rng(9, "noise-test");
        for _ in 0..100 {
            let a = m.generate(&NoiseVector::sample(&mut rng, 6)).unwrap();
            let b = m.generate(&NoiseVector::sample(&mut rng, 6)).unwrap();
            assert_ne!(a.hidden, b.hidden);
        }
    }

    #[test]
    fn discriminator_outputs_are_normalized() {
        let m = SeqGan::new(tiny(), 2).unwrap();
        let (ids, mask) = ids_mask(6, 8, 1);
        let out = m.discriminate(&m.encode(&ids, &mask).unwrap()).unwrap();
        assert_eq!(out.token_logits.shape(), &[8, 2]);
        assert!((0.0..=1.0).contains(&out.p_real));
        assert_eq!(out.pooled_features.len(), 10);
        for r in 0..8 {
            let row = out.token_logits.row(r);
            let mx = row[0].max(row[1]);
            let z: f32 = row.iter().map(|x| (x - mx).exp()).sum();
            let probs: f32 = row.iter().map(|x| (x - mx).exp() / z).sum();
            assert!((probs - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn permuting_positions_permutes_token_logits() {
        let m = SeqGan::new(tiny(), 3).unwrap();
        let mut rng = seed::rng(1, "perm");
        let hidden = normal_tensor(&mut rng, &[8, 16], 1.0);
        let mask = vec![true, true, true, true, true, false, false, false];
        let a = m
            .discriminate(&HiddenSequence {
                hidden: hidden.clone(),
                mask: mask.clone(),
            })
            .unwrap();
        let mut swapped = hidden.clone();
        let (r1, r2) = (1, 3);
        for j in 0..16 {
            swapped.data_mut()[r1 * 16 + j] = hidden.at(r2, j);
            swapped.data_mut()[r2 * 16 + j] = hidden.at(r1, j);
        }
        let b = m.discriminate(&HiddenSequence { hidden: swapped, mask }).unwrap();
        assert_eq!(a.token_logits.row(r1), b.token_logits.row(r2));
        assert_eq!(a.token_logits.row(r2), b.token_logits.row(r1));
        assert!((a.p_real - b.p_real).abs() < 1e-6);
    }
}
