use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const PATCH_SIZE: usize = 4;
pub const STAGES: usize = 4;
pub const SDM_CHANNELS: usize = 32;
pub const DECODER_CHANNELS: usize = 64;
pub const LN_EPS: f64 = 1e-5;
pub const DEFAULT_FRDF_ITERATIONS: usize = 5;

/// How the decoder feature is refined along the predicted field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FrdfMode {
    /// `z_k(p) = z_{k-1}(p + F(p))`, bilinear with border clamp.
    #[default]
    Warp,
    /// `z_k = z_{k-1} + W F`, with a learned 2 -> 64 projection.
    Additive,
}

impl FrdfMode {
    pub fn name(self) -> &'static str {
        match self {
            FrdfMode::Warp => "warp",
            FrdfMode::Additive => "additive",
        }
    }
}

impl FromStr for FrdfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warp" => Ok(FrdfMode::Warp),
            "additive" => Ok(FrdfMode::Additive),
            _ => Err(Error::Config(format!("unknown frdf mode {s:?} (expected warp or additive)"))),
        }
    }
}

impl fmt::Display for FrdfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Input height and width.
    pub image_size: usize,
    pub embed_dim: usize,
    pub window_size: usize,
    /// Attention heads for encoder stages 1..4; decoder stages reuse the
    /// count of the stage whose grid they run on.
    pub heads: [usize; STAGES],
    /// Swin block pairs (W-MSA then SW-MSA) per stage.
    pub blocks: usize,
    pub fusion_heads: usize,
    pub mlp_ratio: usize,
    /// FRDF iterations K.
    pub frdf_iterations: usize,
    pub frdf_mode: FrdfMode,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl NetConfig {
    pub fn toy() -> Self {
        Self {
            image_size: 96,
            embed_dim: 16,
            window_size: 6,
            heads: [2; STAGES],
            blocks: 1,
            fusion_heads: 2,
            mlp_ratio: 4,
            frdf_iterations: DEFAULT_FRDF_ITERATIONS,
            frdf_mode: FrdfMode::Warp,
        }
    }

    /// Full-size dimensions. Window 12 is the nearest size that tiles the
    /// 96/48/24/12 stage grids.
    pub fn paper() -> Self {
        Self {
            image_size: 384,
            embed_dim: 128,
            window_size: 12,
            heads: [4, 8, 16, 32],
            blocks: 1,
            fusion_heads: 8,
            mlp_ratio: 4,
            frdf_iterations: DEFAULT_FRDF_ITERATIONS,
            frdf_mode: FrdfMode::Warp,
        }
    }

    /// Token grid side at encoder stage `i` (0-based).
    pub fn grid(&self, i: usize) -> usize {
        self.image_size / PATCH_SIZE >> i
    }

    /// Channel width at encoder stage `i` (0-based).
    pub fn width(&self, i: usize) -> usize {
        self.embed_dim << i
    }

    /// Effective (window, shift) on a square grid: grids no larger than the
    /// window use one global window and no shift.
    pub fn window_for(&self, grid: usize) -> (usize, usize) {
        if grid > self.window_size {
            (self.window_size, self.window_size / 2)
        } else {
            (grid, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.image_size == 0 || self.image_size % (PATCH_SIZE * 8) != 0 {
            return fail(format!("image size {} must be a positive multiple of {}", self.image_size, PATCH_SIZE * 8));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return fail(format!("embed dim {} must be positive and even", self.embed_dim));
        }
        if self.window_size == 0 {
            return fail("window size must be positive".into());
        }
        for i in 0..STAGES {
            let g = self.grid(i);
            if g > self.window_size && g % self.window_size != 0 {
                return fail(format!("stage {} grid {g} is not divisible by window {}", i + 1, self.window_size));
            }
            if self.heads[i] == 0 || self.width(i) % self.heads[i] != 0 {
                return fail(format!("stage {} width {} not divisible by {} heads", i + 1, self.width(i), self.heads[i]));
            }
        }
        let fused = self.width(3);
        if self.fusion_heads == 0 || fused % self.fusion_heads != 0 {
            return fail(format!("fusion width {fused} not divisible by {} heads", self.fusion_heads));
        }
        if self.blocks == 0 || self.mlp_ratio == 0 {
            return fail("blocks and mlp ratio must be positive".into());
        }
        Ok(())
    }

    /// `key = value` lines, sorted by key.
    pub fn to_ini(&self) -> String {
        let heads: Vec<String> = self.heads.iter().map(|h| h.to_string()).collect();
        let mut lines = [
            format!("blocks = {}", self.blocks),
            format!("embed_dim = {}", self.embed_dim),
            format!("frdf_iterations = {}", self.frdf_iterations),
            format!("frdf_mode = {}", self.frdf_mode),
            format!("fusion_heads = {}", self.fusion_heads),
            format!("heads = {}", heads.join(",")),
            format!("image_size = {}", self.image_size),
            format!("mlp_ratio = {}", self.mlp_ratio),
            format!("window_size = {}", self.window_size),
        ];
        lines.sort();
        lines.join("\n") + "\n"
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys this
    /// struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "image_size" => self.image_size = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "window_size" => self.window_size = parse(key, value)?,
            "heads" => {
                let parts: Vec<usize> = value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_>>()?;
                self.heads = match parts.as_slice() {
                    [h] => [*h; STAGES],
                    [a, b, c, d] => [*a, *b, *c, *d],
                    _ => return Err(Error::Config(format!("heads takes 1 or 4 values, got {value:?}"))),
                };
            }
            "blocks" => self.blocks = parse(key, value)?,
            "fusion_heads" => self.fusion_heads = parse(key, value)?,
            "mlp_ratio" => self.mlp_ratio = parse(key, value)?,
            "frdf_iterations" | "K" => self.frdf_iterations = parse(key, value)?,
            "frdf_mode" => self.frdf_mode = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}
