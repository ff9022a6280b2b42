use std::fmt;

use crate::autograd::{Graph, UpsampleMode, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::config::{FrdfMode, NetConfig, DECODER_CHANNELS, PATCH_SIZE, SDM_CHANNELS, STAGES};
use super::layers::{self, BlockShape};
use super::params::{Bound, Initializer, ParamStore};

/// Rng stream used for parameter init.
pub const INIT_STREAM: u64 = 1;

const STREAMS: [&str; 2] = ["rgb", "thermal"];

/// Every intermediate shape of a forward pass, derived from the config alone.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeChain {
    /// Per-stream encoder outputs x^1..x^4.
    pub encoder: [[usize; 3]; STAGES],
    /// SDM branch features y^1..y^3.
    pub sdm_features: [[usize; 3]; 3],
    pub sdm: [usize; 3],
    /// Decoder states z^1..z^4.
    pub decoder: [[usize; 3]; STAGES],
    pub z: [usize; 3],
    pub field: [usize; 3],
    pub z_star: [usize; 3],
    pub saliency: [usize; 3],
}

impl ShapeChain {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let hw = cfg.image_size;
        let at = |i: usize| [cfg.grid(i), cfg.grid(i), cfg.width(i)];
        let g1 = cfg.grid(0);
        Ok(Self {
            encoder: [at(0), at(1), at(2), at(3)],
            sdm_features: [[g1, g1, SDM_CHANNELS]; 3],
            sdm: [hw, hw, 1],
            decoder: [at(0), at(1), at(2), at(3)],
            z: [hw, hw, DECODER_CHANNELS],
            field: [hw, hw, 2],
            z_star: [hw, hw, 2 * cfg.embed_dim],
            saliency: [hw, hw, 1],
        })
    }

    /// (label, shape) pairs in pipeline order.
    pub fn entries(&self) -> Vec<(String, [usize; 3])> {
        let mut out = Vec::new();
        for (i, s) in self.encoder.iter().enumerate() {
            out.push((format!("x{}", i + 1), *s));
        }
        for (i, s) in self.sdm_features.iter().enumerate() {
            out.push((format!("y{}", i + 1), *s));
        }
        out.push(("D".into(), self.sdm));
        for (i, s) in self.decoder.iter().enumerate().rev() {
            out.push((format!("z{}", i + 1), *s));
        }
        out.push(("z".into(), self.z));
        out.push(("F".into(), self.field));
        out.push(("z*".into(), self.z_star));
        out.push(("O_sal".into(), self.saliency));
        out
    }
}

impl fmt::Display for ShapeChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, [h, w, c]) in self.entries() {
            writeln!(f, "{label:<6} {h}x{w}x{c}")?;
        }
        Ok(())
    }
}

/// Named handles to every stage of one forward pass.
pub struct Outputs {
    /// `pyramids[s][i]`: stream `s` (0 RGB, 1 thermal), scale `i`.
    pub pyramids: [[Var; STAGES]; 2],
    pub sdm_features: [Var; 3],
    /// Predicted SDM, `[h, w, 1]` in (-1, 1).
    pub sdm: Var,
    /// z^1..z^4.
    pub decoder: [Var; STAGES],
    pub z: Var,
    /// Predicted direction field, `[h, w, 2]` (row, column) offsets.
    pub field: Var,
    /// z_0..z_K of the refinement.
    pub refined: Vec<Var>,
    pub z_star: Var,
    /// `[h, w, 1]` in [0, 1].
    pub saliency: Var,
}

/// Values of the three prediction heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub saliency: Tensor,
    pub sdm: Tensor,
    pub field: Tensor,
}

/// Dual-stream swin encoder/decoder with the SDM branch and FRDF refinement.
#[derive(Clone, Debug)]
pub struct PrlNet {
    config: NetConfig,
    chain: ShapeChain,
    params: ParamStore,
}

impl PrlNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let chain = ShapeChain::new(&config)?;
        let mut init = Initializer::new(Rng::new(seed, INIT_STREAM));
        init_params(&config, &mut init);
        Ok(Self { config, chain, params: init.finish() })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn shape_chain(&self) -> &ShapeChain {
        &self.chain
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Records a forward pass. `rgb` and `thermal` are `[h, w, 3]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, rgb: Var, thermal: Var) -> Result<Outputs> {
        let cfg = &self.config;
        let hw = cfg.image_size;
        for x in [rgb, thermal] {
            if g.shape(x) != [hw, hw, 3] {
                return Err(Error::shape("forward", format!("input {:?}, expected [{hw}, {hw}, 3]", g.shape(x))));
            }
        }
        let pyr_r = self.encode(g, p, 0, rgb)?;
        let pyr_t = self.encode(g, p, 1, thermal)?;
        let (sdm_features, sdm) = self.sdmam(g, p, &pyr_r, &pyr_t)?;
        let z4 = self.fuse(g, p, pyr_r[3], pyr_t[3])?;
        let decoder = self.decode(g, p, z4, &pyr_r, &pyr_t)?;
        let z = layers::linear(g, p, "out.proj", decoder[0])?;
        let z = g.upsample(z, PATCH_SIZE, UpsampleMode::Bilinear)?;
        self.check(g, z, self.chain.z, "z")?;
        let field = layers::linear(g, p, "df_head", z)?;
        let refined = frdf_refine(g, p, z, field, cfg.frdf_iterations, cfg.frdf_mode)?;
        let z_star = layers::linear(g, p, "refine.proj", *refined.last().unwrap())?;
        self.check(g, z_star, self.chain.z_star, "z*")?;
        let both = g.concat(&[z, z_star], 2)?;
        let logits = layers::linear(g, p, "head", both)?;
        let saliency = g.sigmoid(logits)?;
        Ok(Outputs {
            pyramids: [pyr_r, pyr_t],
            sdm_features,
            sdm,
            decoder,
            z,
            field,
            refined,
            z_star,
            saliency,
        })
    }

    /// Forward pass on plain tensors.
    pub fn predict(&self, rgb: &Tensor, thermal: &Tensor) -> Result<Prediction> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let r = g.constant(rgb.clone());
        let t = g.constant(thermal.clone());
        let out = self.forward(&mut g, &p, r, t)?;
        Ok(Prediction {
            saliency: g.value(out.saliency).clone(),
            sdm: g.value(out.sdm).clone(),
            field: g.value(out.field).clone(),
        })
    }

    fn check(&self, g: &Graph, v: Var, expected: [usize; 3], label: &str) -> Result<()> {
        if g.shape(v) != expected {
            return Err(Error::shape("forward", format!("{label} is {:?}, expected {expected:?}", g.shape(v))));
        }
        Ok(())
    }

    fn block_shape(&self, stage: usize) -> BlockShape {
        let (window, shift) = self.config.window_for(self.config.grid(stage));
        BlockShape { window, shift, heads: self.config.heads[stage] }
    }

    /// Patch embedding then four swin stages, returning x^1..x^4.
    pub fn encode(&self, g: &mut Graph, p: &Bound, stream: usize, image: Var) -> Result<[Var; STAGES]> {
        let s = STREAMS[stream];
        let patches = layers::space_to_depth(g, image, PATCH_SIZE)?;
        let mut x = layers::linear(g, p, &format!("enc.{s}.embed"), patches)?;
        let mut out = [x; STAGES];
        for (i, slot) in out.iter_mut().enumerate() {
            if i > 0 {
                x = layers::patch_merging(g, p, &format!("enc.{s}.merge{i}"), x)?;
            }
            for b in 0..self.config.blocks {
                x = layers::swin_block_pair(g, p, &format!("enc.{s}.stage{i}.block{b}"), x, self.block_shape(i))?;
            }
            self.check(g, x, self.chain.encoder[i], &format!("x{} ({s})", i + 1))?;
            *slot = x;
        }
        Ok(out)
    }

    /// SDM branch on the three shallow scales.
    pub fn sdmam(
        &self,
        g: &mut Graph,
        p: &Bound,
        pyr_r: &[Var; STAGES],
        pyr_t: &[Var; STAGES],
    ) -> Result<([Var; 3], Var)> {
        let mut ys = [pyr_r[0]; 3];
        for (i, y) in ys.iter_mut().enumerate() {
            let x = g.concat(&[pyr_r[i], pyr_t[i]], 2)?;
            let mut v = layers::linear(g, p, &format!("sdm.pw{}", i + 1), x)?;
            if i > 0 {
                v = g.upsample(v, 1 << i, UpsampleMode::Bilinear)?;
            }
            self.check(g, v, self.chain.sdm_features[i], &format!("y{}", i + 1))?;
            *y = v;
        }
        let y = g.concat(&ys, 2)?;
        let d = g.conv3x3(y, p.var("sdm.conv.w"), Some(p.var("sdm.conv.b")))?;
        let d = g.tanh(d)?;
        let d = g.upsample(d, PATCH_SIZE, UpsampleMode::Bilinear)?;
        self.check(g, d, self.chain.sdm, "D")?;
        Ok((ys, d))
    }

    /// Full attention over the concatenated deepest features.
    pub fn fuse(&self, g: &mut Graph, p: &Bound, x4_r: Var, x4_t: Var) -> Result<Var> {
        let [gh, gw, _] = self.chain.encoder[3];
        let x = g.concat(&[x4_r, x4_t], 2)?;
        let c = g.shape(x)[2];
        let tokens = g.reshape(x, &[1, gh * gw, c])?;
        let qkv = layers::linear(g, p, "fuse.qkv", tokens)?;
        let att = layers::multi_head_attention(g, qkv, self.config.fusion_heads, None)?;
        let width = self.config.width(3);
        let z4 = g.reshape(att.out, &[gh, gw, width])?;
        self.check(g, z4, self.chain.decoder[3], "z4")?;
        Ok(z4)
    }

    /// Reverse swin stages: returns z^1..z^4.
    pub fn decode(
        &self,
        g: &mut Graph,
        p: &Bound,
        z4: Var,
        pyr_r: &[Var; STAGES],
        pyr_t: &[Var; STAGES],
    ) -> Result<[Var; STAGES]> {
        let mut out = [z4; STAGES];
        let mut z = z4;
        for i in (0..STAGES - 1).rev() {
            // z^{i+1} from z^{i+2} and the skip x^{i+2}; both live on grid i+1.
            let s = i + 1;
            let cat = g.concat(&[z, pyr_r[s], pyr_t[s]], 2)?;
            let mut x = layers::linear(g, p, &format!("dec.stage{s}.skip"), cat)?;
            for b in 0..self.config.blocks {
                x = layers::swin_block_pair(g, p, &format!("dec.stage{s}.block{b}"), x, self.block_shape(s))?;
            }
            z = layers::patch_separating(g, p, &format!("dec.stage{s}.separate"), x)?;
            self.check(g, z, self.chain.decoder[i], &format!("z{}", i + 1))?;
            out[i] = z;
        }
        Ok(out)
    }
}

/// `K` refinement steps of `z` along `field`; returns z_0..z_K.
pub fn frdf_refine(g: &mut Graph, p: &Bound, z: Var, field: Var, k: usize, mode: FrdfMode) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(z);
    let mut cur = z;
    let lifted = match mode {
        FrdfMode::Warp => None,
        FrdfMode::Additive if k > 0 => Some(g.linear(field, p.var("refine.field.w"), None)?),
        FrdfMode::Additive => None,
    };
    for _ in 0..k {
        cur = match lifted {
            None => g.grid_sample(cur, field)?,
            Some(f) => g.add(cur, f)?,
        };
        out.push(cur);
    }
    Ok(out)
}

fn init_params(cfg: &NetConfig, init: &mut Initializer) {
    let c = cfg.embed_dim;
    for s in STREAMS {
        init.linear(&format!("enc.{s}.embed"), 3 * PATCH_SIZE * PATCH_SIZE, c);
        for i in 0..STAGES {
            if i > 0 {
                init.linear(&format!("enc.{s}.merge{i}"), 4 * cfg.width(i - 1), cfg.width(i));
            }
            for b in 0..cfg.blocks {
                layers::init_swin_block_pair(init, &format!("enc.{s}.stage{i}.block{b}"), cfg.width(i), cfg.mlp_ratio);
            }
        }
    }
    for i in 0..3 {
        init.linear(&format!("sdm.pw{}", i + 1), 2 * cfg.width(i), SDM_CHANNELS);
    }
    init.conv3x3("sdm.conv", 3 * SDM_CHANNELS, 1);
    init.linear("fuse.qkv", 2 * cfg.width(3), 3 * cfg.width(3));
    for s in (1..STAGES).rev() {
        let w = cfg.width(s);
        init.linear(&format!("dec.stage{s}.skip"), 3 * w, w);
        for b in 0..cfg.blocks {
            layers::init_swin_block_pair(init, &format!("dec.stage{s}.block{b}"), w, cfg.mlp_ratio);
        }
        init.linear(&format!("dec.stage{s}.separate"), w, 2 * w);
    }
    init.linear("out.proj", c, DECODER_CHANNELS);
    init.linear("df_head", DECODER_CHANNELS, 2);
    if cfg.frdf_mode == FrdfMode::Additive {
        init.linear_no_bias("refine.field", 2, DECODER_CHANNELS);
    }
    init.linear("refine.proj", DECODER_CHANNELS, 2 * c);
    init.linear("head", DECODER_CHANNELS + 2 * c, 1);
}
