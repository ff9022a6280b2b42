//! Ground-truth geometry derived from binary masks: the object boundary,
//! the signed distance map and the direction field.
//!
//! Sign convention: negative inside the object, zero on the boundary,
//! positive in the background. Direction-field offsets are stored as
//! (row, column) pairs; `fx` is the row offset and `fy` the column offset,
//! so `p - F(p)` is the nearest boundary pixel of a foreground pixel `p`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// H×W mask with 1 = salient, 0 = background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("mask", format!("{height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::shape("mask", format!("{height}x{width} needs {} values, got {}", height * width, data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Format { format: "mask", detail: "values must be 0 or 1".into() });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width) as u8).collect();
        Self::new(height, width, data).expect("from_fn produces a valid mask")
    }

    /// Binarize 8-bit intensities: `v >= threshold` is foreground.
    pub fn from_gray(height: usize, width: usize, gray: &[u8], threshold: u8) -> Result<Self> {
        Self::new(height, width, gray.iter().map(|&v| (v >= threshold) as u8).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.width + c] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_constant(&self) -> bool {
        let fg = self.foreground_count();
        fg == 0 || fg == self.data.len()
    }

    pub fn inverted(&self) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|v| 1 - v).collect() }
    }

    /// `[H, W]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|&v| v as f64).collect();
        Tensor::from_vec(&[self.height, self.width], data).expect("mask extents are positive")
    }

    fn degenerate(&self) -> Error {
        Error::DegenerateMask { height: self.height, width: self.width }
    }
}

/// Which foreground pixels count as boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundaryRule {
    /// Foreground pixels with a 4-connected background neighbour.
    #[default]
    Interface,
    /// Additionally, foreground pixels on the image border.
    IncludeBorder,
}

impl std::str::FromStr for BoundaryRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interface" => Ok(Self::Interface),
            "include-border" => Ok(Self::IncludeBorder),
            _ => Err(Error::Config(format!("unknown border rule {s:?}"))),
        }
    }
}

impl BoundaryRule {
    pub fn name(self) -> &'static str {
        match self {
            Self::Interface => "interface",
            Self::IncludeBorder => "include-border",
        }
    }
}

/// Boundary pixels in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundarySet {
    height: usize,
    width: usize,
    pixels: Vec<(usize, usize)>,
    member: Vec<bool>,
}

impl BoundarySet {
    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r < self.height && c < self.width && self.member[r * self.width + c]
    }
}

pub fn extract_boundary(mask: &BinaryMask) -> BoundarySet {
    extract_boundary_with(mask, BoundaryRule::Interface)
}

pub fn extract_boundary_with(mask: &BinaryMask, rule: BoundaryRule) -> BoundarySet {
    let (h, w) = (mask.height, mask.width);
    let mut member = vec![false; h * w];
    let mut pixels = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let bg_neighbour = (r > 0 && !mask.get(r - 1, c))
                || (r + 1 < h && !mask.get(r + 1, c))
                || (c > 0 && !mask.get(r, c - 1))
                || (c + 1 < w && !mask.get(r, c + 1));
            let on_border = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
            if bg_neighbour || (rule == BoundaryRule::IncludeBorder && on_border) {
                member[r * w + c] = true;
                pixels.push((r, c));
            }
        }
    }
    BoundarySet { height: h, width: w, pixels, member }
}

/// How the raw distances are scaled into the `normalized` channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Divide by the largest absolute distance in the image.
    #[default]
    MaxAbs,
    /// Divide by the image diagonal.
    Diagonal,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-abs" => Ok(Self::MaxAbs),
            "diagonal" => Ok(Self::Diagonal),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown normalization {s:?}"))),
        }
    }
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Self::MaxAbs => "max-abs",
            Self::Diagonal => "diagonal",
            Self::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceMap {
    height: usize,
    width: usize,
    raw: Vec<f64>,
    normalized: Vec<f64>,
    mode: Normalization,
}

impl SignedDistanceMap {
    /// Wraps raw signed distances; the normalized channel starts as a copy.
    pub fn from_raw(height: usize, width: usize, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != height * width || height == 0 || width == 0 {
            return Err(Error::shape("sdm", format!("{height}x{width} with {} values", raw.len())));
        }
        Ok(Self { height, width, normalized: raw.clone(), raw, mode: Normalization::None })
    }

    /// All-zero map used in place of a degenerate mask's SDM.
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![0.0; height * width]).expect("positive extents")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn mode(&self) -> Normalization {
        self.mode
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.raw[r * self.width + c]
    }

    /// Normalized channel as an `[H, W, 1]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.height, self.width, 1], self.normalized.clone()).expect("positive extents")
    }
}

/// Recompute the normalized channel under `mode`.
pub fn normalize_sdm(sdm: &SignedDistanceMap, mode: Normalization) -> SignedDistanceMap {
    let scale = match mode {
        Normalization::MaxAbs => {
            let m = sdm.raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
        Normalization::Diagonal => ((sdm.height * sdm.height + sdm.width * sdm.width) as f64).sqrt(),
        Normalization::None => 1.0,
    };
    SignedDistanceMap {
        normalized: sdm.raw.iter().map(|v| v / scale).collect(),
        mode,
        ..sdm.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionField {
    height: usize,
    width: usize,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl DirectionField {
    pub fn new(height: usize, width: usize, fx: Vec<f64>, fy: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if n == 0 || fx.len() != n || fy.len() != n {
            return Err(Error::shape("direction field", format!("{height}x{width}")));
        }
        Ok(Self { height, width, fx, fy })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self { height, width, fx: vec![0.0; n], fy: vec![0.0; n] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row offsets.
    pub fn fx(&self) -> &[f64] {
        &self.fx
    }

    /// Column offsets.
    pub fn fy(&self) -> &[f64] {
        &self.fy
    }

    pub fn at(&self, r: usize, c: usize) -> (f64, f64) {
        let i = r * self.width + c;
        (self.fx[i], self.fy[i])
    }

    pub fn norm_at(&self, r: usize, c: usize) -> f64 {
        let (a, b) = self.at(r, c);
        a.hypot(b)
    }

    /// `[H, W, 2]` tensor, channel 0 = row offset, channel 1 = column offset.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.fx.iter().zip(&self.fy).flat_map(|(&a, &b)| [a, b]).collect();
        Tensor::from_vec(&[self.height, self.width, 2], data).expect("positive extents")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [h, w, 2] = t.shape()[..] else {
            return Err(Error::shape("direction field", format!("{:?}", t.shape())));
        };
        let (fx, fy) = t.data().chunks_exact(2).map(|p| (p[0], p[1])).unzip();
        Self::new(h, w, fx, fy)
    }
}

/// Exact nearest-boundary query result for every pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NearestBoundary {
    pub height: usize,
    pub width: usize,
    /// Squared Euclidean distance to the nearest boundary pixel.
    pub sq_dist: Vec<u64>,
    /// Row-major index of that boundary pixel; ties resolve to the smallest
    /// (row, column).
    pub site: Vec<usize>,
}

/// Envelope breakpoints as exact rationals `num / den` (den > 0).
#[derive(Clone, Copy)]
enum Bound {
    NegInf,
    At(i128, i128),
    PosInf,
}

impl Bound {
    fn le(self, other: Bound) -> bool {
        match (self, other) {
            (Bound::NegInf, _) | (_, Bound::PosInf) => true,
            (_, Bound::NegInf) | (Bound::PosInf, _) => false,
            (Bound::At(a, b), Bound::At(c, d)) => a * d <= c * b,
        }
    }

    fn lt_int(self, x: i128) -> bool {
        match self {
            Bound::NegInf => true,
            Bound::PosInf => false,
            Bound::At(n, d) => n < x * d,
        }
    }
}

/// Separable exact EDT to a set of sites.
///
/// Column pass: nearest site per column (upper one on ties). Row pass: lower
/// envelope of parabolas `M·(c − q)² + M·g(q) + rank(q)` where `rank` is the
/// row-major index of the column's site and `M = H·W`. Folding the rank into
/// the offset makes the envelope minimum unique and equal to the
/// lexicographic minimum of (squared distance, rank) over all sites.
pub fn nearest_sites(height: usize, width: usize, is_site: &[bool]) -> Option<NearestBoundary> {
    if !is_site.iter().any(|&s| s) {
        return None;
    }
    let (h, w) = (height, width);
    const NONE: usize = usize::MAX;

    // column pass: nearest site row within each column
    let mut col_site = vec![NONE; h * w];
    for c in 0..w {
        let mut above = NONE;
        for r in 0..h {
            if is_site[r * w + c] {
                above = r;
            }
            col_site[r * w + c] = above;
        }
        let mut below = NONE;
        for r in (0..h).rev() {
            if is_site[r * w + c] {
                below = r;
            }
            let a = col_site[r * w + c];
            if below != NONE && (a == NONE || below - r < r - a) {
                col_site[r * w + c] = below;
            }
        }
    }

    let m = (h * w) as i128;
    let mut sq_dist = vec![0u64; h * w];
    let mut site = vec![0usize; h * w];
    let mut v: Vec<usize> = Vec::with_capacity(w);
    let mut offset: Vec<i128> = Vec::with_capacity(w);
    let mut z: Vec<Bound> = Vec::with_capacity(w + 1);
    for r in 0..h {
        v.clear();
        offset.clear();
        z.clear();
        z.push(Bound::NegInf);
        for q in 0..w {
            let sr = col_site[r * w + q];
            if sr == NONE {
                continue;
            }
            let dr = (r as i128 - sr as i128).pow(2);
            let f_q = m * dr + (sr * w + q) as i128;
            let qi = q as i128;
            loop {
                let Some(&p) = v.last() else { break };
                let pi = p as i128;
                let f_p = *offset.last().unwrap();
                let num = (f_q + m * qi * qi) - (f_p + m * pi * pi);
                let den = 2 * m * (qi - pi);
                let s = Bound::At(num, den);
                if s.le(z[v.len() - 1]) {
                    v.pop();
                    offset.pop();
                    z.pop();
                } else {
                    z.push(s);
                    break;
                }
            }
            if v.is_empty() {
                z.truncate(1);
            }
            v.push(q);
            offset.push(f_q);
        }
        z.push(Bound::PosInf);
        let mut k = 0;
        for c in 0..w {
            while z[k + 1].lt_int(c as i128) {
                k += 1;
            }
            let q = v[k];
            let val = m * (c as i128 - q as i128).pow(2) + offset[k];
            sq_dist[r * w + c] = (val / m) as u64;
            site[r * w + c] = (val % m) as usize;
        }
    }
    Some(NearestBoundary { height: h, width: w, sq_dist, site })
}

fn boundary_sites(mask: &BinaryMask, rule: BoundaryRule) -> Result<(BoundarySet, NearestBoundary)> {
    if mask.is_constant() {
        return Err(mask.degenerate());
    }
    let boundary = extract_boundary_with(mask, rule);
    let nearest = nearest_sites(mask.height, mask.width, &boundary.member).ok_or_else(|| mask.degenerate())?;
    Ok((boundary, nearest))
}

fn sdm_from_sq(mask: &BinaryMask, boundary: &BoundarySet, sq: impl Fn(usize) -> u64) -> SignedDistanceMap {
    let raw = (0..mask.data.len())
        .map(|i| {
            if boundary.member[i] {
                0.0
            } else {
                let d = (sq(i) as f64).sqrt();
                if mask.data[i] == 1 {
                    -d
                } else {
                    d
                }
            }
        })
        .collect();
    SignedDistanceMap::from_raw(mask.height, mask.width, raw).expect("mask extents")
}

fn df_from_sites(mask: &BinaryMask, site: impl Fn(usize) -> usize) -> DirectionField {
    let w = mask.width;
    let n = mask.data.len();
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    for i in 0..n {
        if mask.data[i] == 1 {
            let s = site(i);
            fx[i] = (i / w) as f64 - (s / w) as f64;
            fy[i] = (i % w) as f64 - (s % w) as f64;
        }
    }
    DirectionField { height: mask.height, width: w, fx, fy }
}

/// Raw (un-normalized) signed distance map.
pub fn signed_distance_map(mask: &BinaryMask) -> Result<SignedDistanceMap> {
    signed_distance_map_with(mask, BoundaryRule::Interface)
}

pub fn signed_distance_map_with(mask: &BinaryMask, rule: BoundaryRule) -> Result<SignedDistanceMap> {
    let (boundary, nearest) = boundary_sites(mask, rule)?;
    Ok(sdm_from_sq(mask, &boundary, |i| nearest.sq_dist[i]))
}

pub fn direction_field(mask: &BinaryMask) -> Result<DirectionField> {
    direction_field_with(mask, BoundaryRule::Interface)
}

pub fn direction_field_with(mask: &BinaryMask, rule: BoundaryRule) -> Result<DirectionField> {
    let (_, nearest) = boundary_sites(mask, rule)?;
    Ok(df_from_sites(mask, |i| nearest.site[i]))
}

/// Training targets for one mask.
#[derive(Clone, Debug)]
pub struct Supervision {
    pub sdm: SignedDistanceMap,
    pub field: DirectionField,
    /// Set when the mask was constant and the all-zero fallback was used.
    pub degenerate: bool,
}

/// SDM (normalized under `mode`) and direction field in one EDT pass.
/// Constant masks yield all-zero maps with `degenerate` set.
pub fn supervision(mask: &BinaryMask, mode: Normalization, rule: BoundaryRule) -> Supervision {
    match boundary_sites(mask, rule) {
        Ok((boundary, nearest)) => Supervision {
            sdm: normalize_sdm(&sdm_from_sq(mask, &boundary, |i| nearest.sq_dist[i]), mode),
            field: df_from_sites(mask, |i| nearest.site[i]),
            degenerate: false,
        },
        Err(_) => Supervision {
            sdm: normalize_sdm(&SignedDistanceMap::zeros(mask.height, mask.width), mode),
            field: DirectionField::zeros(mask.height, mask.width),
            degenerate: true,
        },
    }
}

/// Reference implementations by exhaustive search over boundary pixels.
/// O(N·|boundary|); meant for small masks and as test oracles.
pub mod oracle {
    use super::*;

    /// Squared distance and site index of the nearest boundary pixel, first
    /// in row-major order on ties.
    pub fn nearest(mask: &BinaryMask, rule: BoundaryRule) -> Result<(BoundarySet, Vec<u64>, Vec<usize>)> {
        if mask.is_constant() {
            return Err(mask.degenerate());
        }
        let boundary = extract_boundary_with(mask, rule);
        let w = mask.width;
        let n = mask.data.len();
        let mut sq = vec![u64::MAX; n];
        let mut site = vec![0; n];
        for i in 0..n {
            let (r, c) = ((i / w) as i64, (i % w) as i64);
            for &(br, bc) in boundary.pixels() {
                let d = ((r - br as i64).pow(2) + (c - bc as i64).pow(2)) as u64;
                if d < sq[i] {
                    sq[i] = d;
                    site[i] = br * w + bc;
                }
            }
        }
        Ok((boundary, sq, site))
    }

    pub fn brute_force_sdm(mask: &BinaryMask) -> Result<SignedDistanceMap> {
        let (boundary, sq, _) = nearest(mask, BoundaryRule::Interface)?;
        Ok(sdm_from_sq(mask, &boundary, |i| sq[i]))
    }

    pub fn brute_force_df(mask: &BinaryMask) -> Result<DirectionField> {
        let (_, _, site) = nearest(mask, BoundaryRule::Interface)?;
        Ok(df_from_sites(mask, |i| site[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn centered_block() -> BinaryMask {
        BinaryMask::from_fn(5, 5, |r, c| (1..=3).contains(&r) && (1..=3).contains(&c))
    }

    fn random_mask(rng: &mut Rng, h: usize, w: usize) -> BinaryMask {
        let p = rng.uniform(0.1, 0.9);
        loop {
            let m = BinaryMask::from_fn(h, w, |_, _| false);
            let data = (0..h * w).map(|_| rng.bernoulli(p) as u8).collect();
            let m = BinaryMask { data, ..m };
            if !m.is_constant() {
                return m;
            }
        }
    }

    #[test]
    fn boundary_examples() {
        assert!(extract_boundary(&BinaryMask::from_fn(4, 4, |_, _| false)).is_empty());
        let single = BinaryMask::from_fn(3, 3, |r, c| r == 1 && c == 1);
        assert_eq!(extract_boundary(&single).pixels(), &[(1, 1)]);
        let ring = extract_boundary(&centered_block());
        assert_eq!(ring.len(), 8);
        assert!(!ring.contains(2, 2));
    }

    #[test]
    fn image_border_is_not_boundary_by_default() {
        let m = BinaryMask::from_fn(4, 4, |_, c| c < 3);
        let b = extract_boundary(&m);
        assert_eq!(b.pixels(), &[(0, 2), (1, 2), (2, 2), (3, 2)]);
        let with_border = extract_boundary_with(&m, BoundaryRule::IncludeBorder);
        assert!(with_border.contains(0, 0) && with_border.contains(3, 1));
    }

    #[test]
    fn sdm_centered_block() {
        let sdm = signed_distance_map(&centered_block()).unwrap();
        assert_eq!(sdm.at(2, 2), -1.0);
        assert_eq!(sdm.at(0, 0), 2f64.sqrt());
        assert_eq!(sdm.at(1, 2), 0.0);
        assert_eq!(sdm.at(0, 2), 1.0);
    }

    #[test]
    fn one_by_three() {
        let m = BinaryMask::new(1, 3, vec![0, 1, 0]).unwrap();
        let sdm = oracle::brute_force_sdm(&m).unwrap();
        assert_eq!(sdm.raw(), &[1.0, 0.0, 1.0]);
        let df = oracle::brute_force_df(&m).unwrap();
        assert!(df.fx().iter().chain(df.fy()).all(|&v| v == 0.0));
        assert_eq!(signed_distance_map(&m).unwrap(), sdm);
        assert_eq!(direction_field(&m).unwrap(), df);
    }

    #[test]
    fn degenerate_masks() {
        let full = BinaryMask::from_fn(4, 4, |_, _| true);
        assert!(matches!(oracle::brute_force_sdm(&full), Err(Error::DegenerateMask { .. })));
        assert!(matches!(signed_distance_map(&full), Err(Error::DegenerateMask { .. })));
        assert!(matches!(direction_field(&full.inverted()), Err(Error::DegenerateMask { .. })));
        let s = supervision(&full, Normalization::MaxAbs, BoundaryRule::Interface);
        assert!(s.degenerate);
        assert!(s.sdm.normalized().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direction_field_points_away_from_nearer_end() {
        let m = BinaryMask::new(1, 8, vec![0, 1, 1, 1, 1, 1, 1, 0]).unwrap();
        let df = direction_field(&m).unwrap();
        assert_eq!(df.at(0, 3), (0.0, 2.0));
        assert_eq!(df.at(0, 0), (0.0, 0.0));
        assert_eq!(df.at(0, 5), (0.0, -1.0));
    }

    #[test]
    fn ties_pick_row_major_first() {
        // centre of a 5x5 block inside 7x7: four boundary pixels at distance 2
        let m = BinaryMask::from_fn(7, 7, |r, c| (1..=5).contains(&r) && (1..=5).contains(&c));
        let df = direction_field(&m).unwrap();
        assert_eq!(df.at(3, 3), (2.0, 0.0)); // nearest (1, 3)
        assert_eq!(df, oracle::brute_force_df(&m).unwrap());
    }

    #[test]
    fn normalization_modes() {
        let sdm = SignedDistanceMap::from_raw(1, 3, vec![-2.0, 0.0, 4.0]).unwrap();
        assert_eq!(normalize_sdm(&sdm, Normalization::MaxAbs).normalized(), &[-0.5, 0.0, 1.0]);
        let zero = SignedDistanceMap::zeros(2, 2);
        assert_eq!(normalize_sdm(&zero, Normalization::MaxAbs).normalized(), &[0.0; 4]);
        let sdm = SignedDistanceMap::from_raw(3, 4, vec![5.0; 12]).unwrap();
        assert_eq!(normalize_sdm(&sdm, Normalization::Diagonal).normalized(), &[1.0; 12]);
        assert_eq!(normalize_sdm(&sdm, Normalization::None).normalized(), sdm.raw());
    }

    #[test]
    fn fast_matches_oracle_on_small_random_masks() {
        let mut rng = Rng::new(11, 0);
        for _ in 0..50 {
            let h = 1 + rng.below(12);
            let w = 1 + rng.below(12);
            if h * w < 2 {
                continue;
            }
            let m = random_mask(&mut rng, h, w);
            for rule in [BoundaryRule::Interface, BoundaryRule::IncludeBorder] {
                let (_, sq, site) = oracle::nearest(&m, rule).unwrap();
                let (_, fast) = boundary_sites(&m, rule).unwrap();
                assert_eq!(fast.sq_dist, sq);
                assert_eq!(fast.site, site);
            }
        }
    }

    #[test]
    fn one_lipschitz_on_random_masks() {
        let mut rng = Rng::new(12, 0);
        for _ in 0..20 {
            let m = random_mask(&mut rng, 16, 16);
            let sdm = signed_distance_map(&m).unwrap();
            for r in 0..16 {
                for c in 0..16 {
                    if r + 1 < 16 {
                        assert!((sdm.at(r, c) - sdm.at(r + 1, c)).abs() <= 1.0 + 1e-12);
                    }
                    if c + 1 < 16 {
                        assert!((sdm.at(r, c) - sdm.at(r, c + 1)).abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }
}
