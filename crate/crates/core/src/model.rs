//! Toy open-vocabulary video detector: frozen linear patch encoder, pre-norm
//! transformer decoder run recurrently over frames, class and box heads.
//!
//! Slot `q` of every frame's output is the same track: the decoder's output
//! queries at frame `t` become its input queries at frame `t + 1`.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::seed;
use crate::tape::{Matrix, ParamId, ParamSpec, Params, Tape, Var};
use crate::video::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub patch_size: usize,
    /// Token and query width `D`.
    pub encoder_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub qkv_dim: usize,
    pub mlp_dim: usize,
    pub num_queries: usize,
    /// Prompt vocabulary size; prompts themselves are supplied per call.
    pub embed_dim: usize,
    pub box_hidden: usize,
    pub dropout: f64,
    /// Initial value of the learned logit shift.
    pub logit_shift_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        // Reference scale: 6 layers, 8 heads, qkv 1024, mlp 4096, 100+ queries.
        ModelConfig {
            image_height: 32,
            image_width: 32,
            patch_size: 4,
            encoder_dim: 32,
            layers: 2,
            heads: 4,
            qkv_dim: 32,
            mlp_dim: 64,
            num_queries: 16,
            embed_dim: 32,
            box_hidden: 32,
            dropout: 0.1,
            logit_shift_init: -3.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.patch_size == 0 || !self.image_height.is_multiple_of(self.patch_size) || !self.image_width.is_multiple_of(self.patch_size) {
            return bad("model.patch_size must be positive and divide the image size");
        }
        if self.image_height == 0 || self.image_width == 0 {
            return bad("model image size must be positive");
        }
        if self.heads == 0 || !self.qkv_dim.is_multiple_of(self.heads) {
            return bad("model.qkv_dim must be divisible by model.heads");
        }
        if self.num_queries == 0 {
            return bad("model.num_queries must be at least 1");
        }
        if self.encoder_dim == 0 || self.mlp_dim == 0 || self.embed_dim == 0 || self.box_hidden == 0 {
            return bad("model dimensions must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("model.dropout must be in [0, 1)");
        }
        Ok(())
    }

    pub fn num_tokens(&self) -> usize {
        (self.image_height / self.patch_size) * (self.image_width / self.patch_size)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerIds {
    ln1: (ParamId, ParamId),
    self_attn: AttnIds,
    ln2: (ParamId, ParamId),
    cross_attn: AttnIds,
    ln3: (ParamId, ParamId),
    mlp_w1: ParamId,
    mlp_b1: ParamId,
    mlp_w2: ParamId,
    mlp_b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct AttnIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Ids {
    patch_proj: ParamId,
    pos: ParamId,
    queries: ParamId,
    layers: Vec<LayerIds>,
    head_ln: (ParamId, ParamId),
    class_w: ParamId,
    class_b: ParamId,
    box_w: [ParamId; 3],
    box_b: [ParamId; 3],
    logit_scale: ParamId,
    logit_shift: ParamId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPrediction {
    pub bbox: BBox,
    pub logits: Vec<f64>,
    /// Maximum logit; a raw logit, not a probability.
    pub objectness: f64,
    pub class_embedding: Vec<f64>,
}

pub type FramePrediction = Vec<SlotPrediction>;

/// Tape nodes of one frame's head outputs.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub queries: Var,
    pub logits: Var,
    pub boxes: Var,
    pub class_embed: Var,
}

/// Seeded inverted dropout for training passes.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        if self.rate <= 0.0 {
            return x;
        }
        let (r, c) = tape.value(x).shape();
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = tape.constant(Matrix::from_vec(r, c, mask));
        tape.mul(x, m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Params,
    ids: Ids,
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let dist = Normal::new(0.0, std).expect("finite std");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

/// Fixed 2D sinusoidal embedding: first half of the channels encodes the patch
/// row, second half the patch column.
pub fn positional_embedding(grid_h: usize, grid_w: usize, dim: usize) -> Matrix {
    let mut m = Matrix::zeros(grid_h * grid_w, dim);
    let half = dim / 2;
    let fill = |m: &mut Matrix, tok: usize, offset: usize, width: usize, pos: f64| {
        for k in 0..width {
            let freq = 1.0 / 100f64.powf((k / 2 * 2) as f64 / width as f64);
            let v = if k % 2 == 0 { (pos * freq).sin() } else { (pos * freq).cos() };
            m.set(tok, offset + k, v);
        }
    };
    for r in 0..grid_h {
        for c in 0..grid_w {
            let tok = r * grid_w + c;
            fill(&mut m, tok, 0, half, r as f64);
            fill(&mut m, tok, half, dim - half, c as f64);
        }
    }
    m
}

/// Stack prompt vectors into a `P x E` matrix.
pub fn prompt_matrix(prompts: &[Vec<f64>]) -> Matrix {
    let cols = prompts.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(prompts.len() * cols);
    for p in prompts {
        assert_eq!(p.len(), cols, "prompt dimension mismatch");
        data.extend_from_slice(p);
    }
    Matrix::from_vec(prompts.len(), cols, data)
}

impl Model {
    pub fn new(config: ModelConfig, seed_value: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = seed::rng(seed_value, "model", 0);
        let mut p = Params::new();
        let d = config.encoder_dim;
        let scaled = |rng: &mut ChaCha8Rng, r: usize, c: usize| normal(rng, r, c, 1.0 / (r as f64).sqrt());
        let zeros = Matrix::zeros;
        let ones = |c| Matrix::filled(1, c, 1.0);

        let patch_proj = p.add("encoder.patch_proj", scaled(&mut rng, config.patch_dim(), d), false);
        let gh = config.image_height / config.patch_size;
        let gw = config.image_width / config.patch_size;
        let pos = p.add("encoder.pos", positional_embedding(gh, gw, d), false);
        let queries = p.add("decoder.queries", normal(&mut rng, config.num_queries, d, 1.0), true);

        let attn = |p: &mut Params, rng: &mut ChaCha8Rng, name: String| AttnIds {
            wq: p.add(format!("{name}.wq"), scaled(rng, d, config.qkv_dim), true),
            bq: p.add(format!("{name}.bq"), zeros(1, config.qkv_dim), true),
            wk: p.add(format!("{name}.wk"), scaled(rng, d, config.qkv_dim), true),
            bk: p.add(format!("{name}.bk"), zeros(1, config.qkv_dim), true),
            wv: p.add(format!("{name}.wv"), scaled(rng, d, config.qkv_dim), true),
            bv: p.add(format!("{name}.bv"), zeros(1, config.qkv_dim), true),
            wo: p.add(format!("{name}.wo"), scaled(rng, config.qkv_dim, d), true),
            bo: p.add(format!("{name}.bo"), zeros(1, d), true),
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let pre = format!("decoder.layer{l}");
            let ln1 = (p.add(format!("{pre}.ln1.g"), ones(d), true), p.add(format!("{pre}.ln1.b"), zeros(1, d), true));
            let self_attn = attn(&mut p, &mut rng, format!("{pre}.self"));
            let ln2 = (p.add(format!("{pre}.ln2.g"), ones(d), true), p.add(format!("{pre}.ln2.b"), zeros(1, d), true));
            let cross_attn = attn(&mut p, &mut rng, format!("{pre}.cross"));
            let ln3 = (p.add(format!("{pre}.ln3.g"), ones(d), true), p.add(format!("{pre}.ln3.b"), zeros(1, d), true));
            layers.push(LayerIds {
                ln1,
                self_attn,
                ln2,
                cross_attn,
                ln3,
                mlp_w1: p.add(format!("{pre}.mlp.w1"), scaled(&mut rng, d, config.mlp_dim), true),
                mlp_b1: p.add(format!("{pre}.mlp.b1"), zeros(1, config.mlp_dim), true),
                mlp_w2: p.add(format!("{pre}.mlp.w2"), scaled(&mut rng, config.mlp_dim, d), true),
                mlp_b2: p.add(format!("{pre}.mlp.b2"), zeros(1, d), true),
            });
        }
        let head_ln = (p.add("head.ln.g", ones(d), true), p.add("head.ln.b", zeros(1, d), true));
        let class_w = p.add("head.class.w", scaled(&mut rng, d, config.embed_dim), true);
        let class_b = p.add("head.class.b", zeros(1, config.embed_dim), true);
        let bh = config.box_hidden;
        let box_w = [
            p.add("head.box.w1", scaled(&mut rng, d, bh), true),
            p.add("head.box.w2", scaled(&mut rng, bh, bh), true),
            p.add("head.box.w3", normal(&mut rng, bh, 4, 0.1 / (bh as f64).sqrt()), true),
        ];
        // Start boxes near the frame centre at roughly a quarter of its size.
        let b3 = Matrix::from_vec(1, 4, vec![0.0, 0.0, -1.1, -1.1]);
        let box_b = [
            p.add("head.box.b1", zeros(1, bh), true),
            p.add("head.box.b2", zeros(1, bh), true),
            p.add("head.box.b3", b3, true),
        ];
        let logit_scale = p.add("head.logit_scale", Matrix::scalar(1.0), true);
        let logit_shift = p.add("head.logit_shift", Matrix::scalar(config.logit_shift_init), true);

        Ok(Model {
            config,
            seed: seed_value,
            params: p,
            ids: Ids {
                patch_proj,
                pos,
                queries,
                layers,
                head_ln,
                class_w,
                class_b,
                box_w,
                box_b,
                logit_scale,
                logit_shift,
            },
        })
    }

    pub fn initial_queries(&self) -> &Matrix {
        &self.params.values[self.ids.queries]
    }

    pub fn logit_scale_id(&self) -> ParamId {
        self.ids.logit_scale
    }

    pub fn logit_shift_id(&self) -> ParamId {
        self.ids.logit_shift
    }

    /// Frozen patch embedding: `N x D` tokens in raster order.
    pub fn encode_frame(&self, image: &Image) -> Result<Matrix> {
        let c = &self.config;
        if image.height != c.image_height || image.width != c.image_width {
            return Err(Error::Invalid(format!(
                "image is {}x{}, model expects {}x{}",
                image.height, image.width, c.image_height, c.image_width
            )));
        }
        let ps = c.patch_size;
        let gw = c.image_width / ps;
        let n = c.num_tokens();
        let mut patches = Matrix::zeros(n, c.patch_dim());
        for tok in 0..n {
            let (pr, pc) = (tok / gw, tok % gw);
            let mut k = 0;
            for r in 0..ps {
                for col in 0..ps {
                    let px = image.pixel(pr * ps + r, pc * ps + col);
                    for ch in px {
                        patches.data[tok * c.patch_dim() + k] = ch as f64;
                        k += 1;
                    }
                }
            }
        }
        let mut tokens = crate::tape::matmul(&patches, &self.params.values[self.ids.patch_proj]);
        tokens.add_assign(&self.params.values[self.ids.pos]);
        Ok(tokens)
    }

    fn attention(&self, tape: &mut Tape, ids: &AttnIds, x: Var, kv: Var) -> Var {
        let heads = self.config.heads;
        let dh = self.config.qkv_dim / heads;
        let (wq, bq, wk, bk) = (tape.param(ids.wq), tape.param(ids.bq), tape.param(ids.wk), tape.param(ids.bk));
        let (wv, bv, wo, bo) = (tape.param(ids.wv), tape.param(ids.bv), tape.param(ids.wo), tape.param(ids.bo));
        let q = tape.linear(x, wq, bq);
        let k = tape.linear(kv, wk, bk);
        let v = tape.linear(kv, wv, bv);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let att = tape.softmax_rows(scores);
            outs.push(tape.matmul(att, vh));
        }
        let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs) };
        tape.linear(cat, wo, bo)
    }

    /// One pass through all decoder layers on the tape.
    pub fn decode_on(&self, tape: &mut Tape, tokens: Var, queries: Var, mut dropout: Option<&mut Dropout>) -> Var {
        let mut q = queries;
        for layer in &self.ids.layers {
            let ln = |tape: &mut Tape, x: Var, (g, b): (ParamId, ParamId)| {
                let (g, b) = (tape.param(g), tape.param(b));
                tape.layer_norm(x, g, b)
            };
            let h = ln(tape, q, layer.ln1);
            let mut sa = self.attention(tape, &layer.self_attn, h, h);
            if let Some(d) = dropout.as_deref_mut() {
                sa = d.apply(tape, sa);
            }
            q = tape.add(q, sa);

            let h = ln(tape, q, layer.ln2);
            let mut ca = self.attention(tape, &layer.cross_attn, h, tokens);
            if let Some(d) = dropout.as_deref_mut() {
                ca = d.apply(tape, ca);
            }
            q = tape.add(q, ca);

            let h = ln(tape, q, layer.ln3);
            let (w1, b1, w2, b2) = (
                tape.param(layer.mlp_w1),
                tape.param(layer.mlp_b1),
                tape.param(layer.mlp_w2),
                tape.param(layer.mlp_b2),
            );
            let m = tape.linear(h, w1, b1);
            let m = tape.gelu(m);
            let mut m = tape.linear(m, w2, b2);
            if let Some(d) = dropout.as_deref_mut() {
                m = d.apply(tape, m);
            }
            q = tape.add(q, m);
        }
        q
    }

    pub fn heads_on(&self, tape: &mut Tape, queries: Var, prompts: Var) -> HeadVars {
        let (g, b) = (tape.param(self.ids.head_ln.0), tape.param(self.ids.head_ln.1));
        let h = tape.layer_norm(queries, g, b);
        let (cw, cb) = (tape.param(self.ids.class_w), tape.param(self.ids.class_b));
        let class_embed = tape.linear(h, cw, cb);
        let sims = tape.matmul_nt(class_embed, prompts);
        let (m, s) = (tape.param(self.ids.logit_scale), tape.param(self.ids.logit_shift));
        let scaled = tape.mul_scalar(sims, m);
        let logits = tape.add_scalar(scaled, s);
        let mut x = h;
        for i in 0..3 {
            let (w, b) = (tape.param(self.ids.box_w[i]), tape.param(self.ids.box_b[i]));
            x = tape.linear(x, w, b);
            x = if i < 2 { tape.gelu(x) } else { tape.sigmoid(x) };
        }
        HeadVars {
            queries,
            logits,
            boxes: x,
            class_embed,
        }
    }

    /// Recurrent pass over pre-encoded frames on a training tape, starting from
    /// the learned initial queries.
    pub fn forward_clip(&self, tape: &mut Tape, tokens: &[Matrix], prompts: Var, mut dropout: Option<&mut Dropout>) -> Vec<HeadVars> {
        let mut q = tape.param(self.ids.queries);
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens {
            let tv = tape.constant(t.clone());
            q = self.decode_on(tape, tv, q, dropout.as_deref_mut());
            out.push(self.heads_on(tape, q, prompts));
        }
        out
    }

    fn check_prompts(&self, prompts: &Matrix) -> Result<()> {
        if prompts.cols != self.config.embed_dim {
            return Err(Error::Invalid(format!(
                "prompt dimension {} does not match class embedding dimension {}",
                prompts.cols, self.config.embed_dim
            )));
        }
        Ok(())
    }

    /// Eval-mode decoder step outside any training tape.
    pub fn decode_step(&self, tokens: &Matrix, queries: &Matrix) -> Result<Matrix> {
        let c = &self.config;
        if queries.cols != c.encoder_dim || tokens.cols != c.encoder_dim {
            return Err(Error::Invalid("query or token width does not match encoder_dim".into()));
        }
        if !queries.is_finite() || !tokens.is_finite() {
            return Err(Error::Invalid("non-finite decoder input".into()));
        }
        let mut tape = Tape::new(&self.params);
        let t = tape.constant(tokens.clone());
        let q = tape.constant(queries.clone());
        let out = self.decode_on(&mut tape, t, q, None);
        Ok(tape.value(out).clone())
    }

    pub fn predict_heads(&self, queries: &Matrix, prompts: &Matrix) -> Result<FramePrediction> {
        self.check_prompts(prompts)?;
        let mut tape = Tape::new(&self.params);
        let q = tape.constant(queries.clone());
        let p = tape.constant(prompts.clone());
        let hv = self.heads_on(&mut tape, q, p);
        Ok(read_heads(&tape, &hv))
    }

    /// Recurrent rollout; returns per-frame predictions.
    pub fn rollout(&self, frames: &[Image], prompts: &Matrix) -> Result<Vec<FramePrediction>> {
        self.check_prompts(prompts)?;
        let mut queries = self.initial_queries().clone();
        let mut out = Vec::with_capacity(frames.len());
        for frame in frames {
            let tokens = self.encode_frame(frame)?;
            let mut tape = Tape::new(&self.params);
            let t = tape.constant(tokens);
            let q = tape.constant(queries);
            let p = tape.constant(prompts.clone());
            let next = self.decode_on(&mut tape, t, q, None);
            let hv = self.heads_on(&mut tape, next, p);
            out.push(read_heads(&tape, &hv));
            queries = tape.value(next).clone();
        }
        Ok(out)
    }

    /// Every frame decoded from the learned initial queries, with no propagation.
    pub fn rollout_independent(&self, frames: &[Image], prompts: &Matrix) -> Result<Vec<FramePrediction>> {
        frames
            .iter()
            .map(|f| Ok(self.rollout(std::slice::from_ref(f), prompts)?.remove(0)))
            .collect()
    }

    /// Box centres per slot over each video, where objectness exceeds `floor`.
    pub fn slot_center_dump(&self, videos: &[Vec<Image>], prompts: &Matrix, floor: f64) -> Result<Vec<SlotCenter>> {
        let mut rows = Vec::new();
        for (vi, frames) in videos.iter().enumerate() {
            for (t, frame) in self.rollout(frames, prompts)?.iter().enumerate() {
                for (slot, s) in frame.iter().enumerate() {
                    if s.objectness > floor {
                        rows.push(SlotCenter {
                            video: vi,
                            slot,
                            frame: t,
                            cx: s.bbox.cx,
                            cy: s.bbox.cy,
                            w: s.bbox.w,
                            h: s.bbox.h,
                            objectness: s.objectness,
                        });
                    }
                }
            }
        }
        Ok(rows)
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            params: self
                .params
                .specs
                .iter()
                .zip(&self.params.values)
                .map(|(s, v)| StoredTensor {
                    spec: s.clone(),
                    data: v.data.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse {
            record: 0,
            offset: e.column(),
            message: e.to_string(),
        })?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {}", ck.version)));
        }
        let mut model = Model::new(ck.config, ck.seed)?;
        if ck.params.len() != model.params.len() {
            return Err(Error::Data("checkpoint tensor count does not match config".into()));
        }
        for (i, t) in ck.params.into_iter().enumerate() {
            if t.spec != model.params.specs[i] || t.data.len() != t.spec.rows * t.spec.cols {
                return Err(Error::Data(format!("checkpoint tensor {} has unexpected name or shape", t.spec.name)));
            }
            model.params.values[i] = Matrix::from_vec(t.spec.rows, t.spec.cols, t.data);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text)
    }
}

/// One emitted point of a slot's trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotCenter {
    pub video: usize,
    pub slot: usize,
    pub frame: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub objectness: f64,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    #[serde(flatten)]
    spec: ParamSpec,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    seed: u64,
    config: ModelConfig,
    params: Vec<StoredTensor>,
}

pub fn read_heads(tape: &Tape, hv: &HeadVars) -> FramePrediction {
    let logits = tape.value(hv.logits);
    let boxes = tape.value(hv.boxes);
    let ce = tape.value(hv.class_embed);
    (0..logits.rows)
        .map(|q| {
            let l = logits.row(q).to_vec();
            let objectness = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let b = boxes.row(q);
            SlotPrediction {
                bbox: BBox::new(b[0], b[1], b[2], b[3]),
                logits: l,
                objectness,
                class_embedding: ce.row(q).to_vec(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Model {
        let cfg = ModelConfig {
            image_height: 8,
            image_width: 8,
            patch_size: 4,
            encoder_dim: 8,
            heads: 2,
            qkv_dim: 8,
            mlp_dim: 12,
            num_queries: 3,
            embed_dim: 4,
            box_hidden: 6,
            ..ModelConfig::default()
        };
        Model::new(cfg, 5).unwrap()
    }

    fn prompts() -> Matrix {
        prompt_matrix(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]])
    }

    fn image(seed_value: u64) -> Image {
        let mut rng = seed::rng(seed_value, "img", 0);
        let mut img = Image::new(8, 8);
        img.data.iter_mut().for_each(|v| *v = rng.random::<f32>());
        img
    }

    #[test]
    fn zero_image_gives_positional_embedding() {
        let m = small();
        let t = m.encode_frame(&Image::new(8, 8)).unwrap();
        assert_eq!(t.shape(), (4, 8));
        assert_eq!(t, m.params.values[m.ids.pos]);
    }

    #[test]
    fn patch_locality() {
        let m = small();
        let a = image(1);
        let mut b = a.clone();
        b.set_pixel(5, 1, [0.9, 0.1, 0.3]);
        let (ta, tb) = (m.encode_frame(&a).unwrap(), m.encode_frame(&b).unwrap());
        for tok in 0..4 {
            assert_eq!(ta.row(tok) == tb.row(tok), tok != 2, "token {tok}");
        }
    }

    #[test]
    fn rejects_wrong_size() {
        assert!(small().encode_frame(&Image::new(8, 12)).is_err());
        let cfg = ModelConfig {
            image_height: 30,
            ..ModelConfig::default()
        };
        assert!(Model::new(cfg, 0).is_err());
        let cfg = ModelConfig {
            qkv_dim: 30,
            ..ModelConfig::default()
        };
        assert!(Model::new(cfg, 0).is_err());
    }

    #[test]
    fn zero_sublayers_are_identity() {
        let mut m = small();
        for l in m.ids.layers.clone() {
            for id in [l.self_attn.wo, l.self_attn.bo, l.cross_attn.wo, l.cross_attn.bo, l.mlp_w2, l.mlp_b2] {
                m.params.values[id].data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let tokens = m.encode_frame(&image(2)).unwrap();
        let q = m.initial_queries().clone();
        assert_eq!(m.decode_step(&tokens, &q).unwrap(), q);
    }

    #[test]
    fn decoder_is_permutation_equivariant() {
        let m = small();
        let tokens = m.encode_frame(&image(3)).unwrap();
        let q = m.initial_queries().clone();
        let perm = [2, 0, 1];
        let a = m.decode_step(&tokens, &q).unwrap().permute_rows(&perm);
        let b = m.decode_step(&tokens, &q.permute_rows(&perm)).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_rejects_non_finite() {
        let m = small();
        let tokens = m.encode_frame(&image(3)).unwrap();
        let mut q = m.initial_queries().clone();
        q.data[0] = f64::NAN;
        assert!(m.decode_step(&tokens, &q).is_err());
    }

    #[test]
    fn head_logit_contract() {
        let mut m = small();
        let q = m.initial_queries().clone();
        m.params.values[m.ids.logit_scale].data[0] = 0.0;
        m.params.values[m.ids.logit_shift].data[0] = -1.25;
        for slot in m.predict_heads(&q, &prompts()).unwrap() {
            assert!(slot.logits.iter().all(|&l| l == -1.25));
            assert_eq!(slot.objectness, -1.25);
        }
        m.params.values[m.ids.logit_scale].data[0] = 1.0;
        m.params.values[m.ids.logit_shift].data[0] = 0.0;
        // Force class embedding to prompt 0 for every slot.
        m.params.values[m.ids.class_w].data.iter_mut().for_each(|v| *v = 0.0);
        m.params.values[m.ids.class_b] = Matrix::from_vec(1, 4, vec![1.0, 0.0, 0.0, 0.0]);
        for slot in m.predict_heads(&q, &prompts()).unwrap() {
            assert_eq!(slot.logits, vec![1.0, 0.0]);
            assert_eq!(slot.objectness, 1.0);
            for v in slot.bbox.to_array() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn rollout_shapes_base_case_and_prefix() {
        let m = small();
        let frames: Vec<Image> = (0..4).map(image).collect();
        let r = m.rollout(&frames, &prompts()).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|f| f.len() == 3));
        let single = {
            let tokens = m.encode_frame(&frames[0]).unwrap();
            let q = m.decode_step(&tokens, m.initial_queries()).unwrap();
            m.predict_heads(&q, &prompts()).unwrap()
        };
        assert_eq!(r[0], single);
        assert_eq!(m.rollout(&frames[..2], &prompts()).unwrap(), r[..2].to_vec());
        assert_eq!(m.rollout(&frames, &prompts()).unwrap(), r);
    }

    #[test]
    fn repeated_frame_reaches_fixed_point() {
        let mut m = small();
        // Residual branches write nothing, so every query state is a fixed point.
        for l in m.ids.layers.clone() {
            for id in [l.self_attn.wo, l.self_attn.bo, l.cross_attn.wo, l.cross_attn.bo, l.mlp_w2, l.mlp_b2] {
                m.params.values[id].data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let img = image(9);
        let tokens = m.encode_frame(&img).unwrap();
        let mut q = m.initial_queries().clone();
        let mut steps = 0;
        loop {
            let next = m.decode_step(&tokens, &q).unwrap();
            let delta = next.data.iter().zip(&q.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = next;
            steps += 1;
            if delta < 1e-12 || steps > 100 {
                break;
            }
        }
        assert!(steps <= 100, "no fixed point");
        let frames = vec![img; 6];
        let r = m.rollout(&frames, &prompts()).unwrap();
        for f in &r[1..] {
            for (x, y) in f.iter().zip(&r[0]) {
                for (u, v) in x.logits.iter().zip(&y.logits) {
                    assert!((u - v).abs() < 1e-6);
                }
                for (u, v) in x.bbox.to_array().iter().zip(y.bbox.to_array()) {
                    assert!((u - v).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn slot_dump_floors() {
        let m = small();
        let videos = vec![(0..3).map(image).collect::<Vec<_>>()];
        assert!(m.slot_center_dump(&videos, &prompts(), f64::INFINITY).unwrap().is_empty());
        let all = m.slot_center_dump(&videos, &prompts(), f64::NEG_INFINITY).unwrap();
        assert_eq!(all.len(), 3 * 3);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = small();
        let back = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(Model::from_json("{\"version\":1").is_err());
    }
}
