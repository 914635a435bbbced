//! Model parameters and per-level forward functions: bottom-up and top-down
//! prediction nets, position encoding, the patch embedder, and the
//! location-conditioned pixel decoder.

use std::io::{Read, Write};

use crate::config::GlomConfig;
use crate::error::{GlomError, Result};
use crate::mlp::{stage_mlp, stage_mlp_frozen, Activation, MlpParams, StagedMlp};
use crate::rng::derived_rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Grayscale image, row-major, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(h: usize, w: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != h * w {
            return Err(GlomError::config("image pixel count does not match extent"));
        }
        Ok(GrayImage { h, w, pixels })
    }

    pub fn filled(h: usize, w: usize, v: f64) -> Self {
        GrayImage { h, w, pixels: vec![v; h * w] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.w + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.pixels[r * self.w + c] = v;
    }
}

/// Per-pixel corruption mask; `true` marks a removed pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    pub h: usize,
    pub w: usize,
    pub masked: Vec<bool>,
}

impl PixelMask {
    pub fn clear(h: usize, w: usize) -> Self {
        PixelMask { h, w, masked: vec![false; h * w] }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.masked[r * self.w + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.masked[r * self.w + c] = v;
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Value substituted for removed pixels before embedding.
pub const MASK_FILL: f64 = 0.5;

/// Sin/cos position code of a grid location at `pos_freqs` octaves:
/// for u in {x, y} and f in 0..F, sin(2 pi 2^f u) then cos(2 pi 2^f u),
/// with x = col / grid_w and y = row / grid_h.
pub fn encode_position(row: usize, col: usize, config: &GlomConfig) -> Result<Vec<f64>> {
    if row >= config.grid_h || col >= config.grid_w {
        return Err(GlomError::usage(format!(
            "location ({row}, {col}) outside grid {}x{}",
            config.grid_h, config.grid_w
        )));
    }
    let x = col as f64 / config.grid_w as f64;
    let y = row as f64 / config.grid_h as f64;
    let mut code = Vec::with_capacity(config.pos_code_len());
    for u in [x, y] {
        for f in 0..config.pos_freqs {
            let angle = std::f64::consts::TAU * (1u64 << f) as f64 * u;
            code.push(angle.sin());
            code.push(angle.cos());
        }
    }
    Ok(code)
}

/// Codes for every grid location in raster order.
pub fn position_codes(config: &GlomConfig) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(config.grid_size());
    for r in 0..config.grid_h {
        for c in 0..config.grid_w {
            out.push(Tensor::vector(encode_position(r, c, config).unwrap()));
        }
    }
    out
}

/// Parameters of the whole model. Nets are shared across all locations and
/// all settling steps; with `share_nets_across_levels` the per-transition
/// vectors hold a single entry aliased by every level.
#[derive(Debug, Clone, PartialEq)]
pub struct GlomModel {
    pub config: GlomConfig,
    /// P^2 -> D affine map.
    pub embedder: MlpParams,
    /// Predicts level l from level l-1; indexed by target level - 1.
    pub bu_nets: Vec<MlpParams>,
    /// Predicts level l from (level l+1, position code); indexed by target level.
    pub td_nets: Vec<MlpParams>,
    /// (D + position code) -> P^2 pixel decoder, squashed to (0, 1).
    pub decoder: MlpParams,
}

impl GlomModel {
    pub fn init(config: &GlomConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let pos = config.pos_code_len();
        let p2 = config.patch * config.patch;
        let (w, depth) = (config.hidden_width, config.hidden_layers);

        let embedder_spec = [(d, p2, Activation::Identity)];
        let bu_spec = MlpParams::shape_of(d, w, depth, d, Activation::Relu, Activation::Identity);
        let td_spec =
            MlpParams::shape_of(d + pos, w, depth, d, Activation::Sine, Activation::Identity);
        let dec_spec =
            MlpParams::shape_of(d + pos, w, depth, p2, Activation::Sine, Activation::Sigmoid);

        let n_transitions = if config.share_nets_across_levels { 1 } else { config.levels - 1 };
        let mut rng = derived_rng(config.seed, "model-init", 0);
        let embedder = MlpParams::init(&embedder_spec, config.sine_w0, &mut rng);
        let bu_nets =
            (0..n_transitions).map(|_| MlpParams::init(&bu_spec, config.sine_w0, &mut rng)).collect();
        let td_nets =
            (0..n_transitions).map(|_| MlpParams::init(&td_spec, config.sine_w0, &mut rng)).collect();
        let decoder = MlpParams::init(&dec_spec, config.sine_w0, &mut rng);

        Ok(GlomModel { config: config.clone(), embedder, bu_nets, td_nets, decoder })
    }

    fn transition_index(&self, i: usize) -> usize {
        if self.config.share_nets_across_levels {
            0
        } else {
            i
        }
    }

    /// Net predicting embeddings at `level` from the level below (level >= 1).
    pub fn bu_net(&self, level: usize) -> Result<&MlpParams> {
        if level == 0 {
            return Err(GlomError::usage("level 0 receives image input, not a bottom-up net"));
        }
        if level >= self.config.levels {
            return Err(GlomError::usage(format!("no level {level}")));
        }
        Ok(&self.bu_nets[self.transition_index(level - 1)])
    }

    /// Net predicting embeddings at `level` from the level above (level <= L-2).
    pub fn td_net(&self, level: usize) -> Result<&MlpParams> {
        if level + 1 >= self.config.levels {
            return Err(GlomError::usage(format!(
                "level {level} has no level above it to predict from"
            )));
        }
        Ok(&self.td_nets[self.transition_index(level)])
    }

    /// Bottom-up prediction for `level` from the embedding one level below.
    /// A pure function of the parameters and `e_below` only.
    pub fn bottom_up_predict(&self, level: usize, e_below: &[f64]) -> Result<Vec<f64>> {
        let net = self.bu_net(level)?;
        if e_below.len() != net.in_dim() {
            return Err(GlomError::config("bottom_up_predict: embedding dim mismatch"));
        }
        Ok(net.eval(e_below))
    }

    /// Top-down prediction for `level` from the embedding above plus the
    /// position code of the location being predicted.
    pub fn top_down_predict(&self, level: usize, e_above: &[f64], pos: &[f64]) -> Result<Vec<f64>> {
        let net = self.td_net(level)?;
        if e_above.len() + pos.len() != net.in_dim() {
            return Err(GlomError::config("top_down_predict: input dim mismatch"));
        }
        let mut input = Vec::with_capacity(net.in_dim());
        input.extend_from_slice(e_above);
        input.extend_from_slice(pos);
        Ok(net.eval(&input))
    }

    /// The P x P patch of a location with removed pixels replaced by
    /// [`MASK_FILL`], flattened row-major.
    pub fn patch_values(
        &self,
        image: &GrayImage,
        mask: &PixelMask,
        grid_r: usize,
        grid_c: usize,
    ) -> Vec<f64> {
        let p = self.config.patch;
        let mut out = Vec::with_capacity(p * p);
        for dr in 0..p {
            for dc in 0..p {
                let (r, c) = (grid_r * p + dr, grid_c * p + dc);
                out.push(if mask.get(r, c) { MASK_FILL } else { image.get(r, c) });
            }
        }
        out
    }

    /// Affinely embed every patch into the level-0 grid, raster order.
    pub fn embed_image(&self, image: &GrayImage, mask: &PixelMask) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        if image.h != cfg.image_h() || image.w != cfg.image_w() {
            return Err(GlomError::config(format!(
                "image extent {}x{} does not match configured {}x{}",
                image.h,
                image.w,
                cfg.image_h(),
                cfg.image_w()
            )));
        }
        if mask.h != image.h || mask.w != image.w {
            return Err(GlomError::config("mask extent does not match image"));
        }
        let mut grid = Vec::with_capacity(cfg.grid_size());
        for r in 0..cfg.grid_h {
            for c in 0..cfg.grid_w {
                grid.push(self.embedder.eval(&self.patch_values(image, mask, r, c)));
            }
        }
        Ok(grid)
    }

    /// Decode a level-0 embedding at a location back to P^2 pixel values.
    pub fn decode_patch(&self, e0: &[f64], pos: &[f64]) -> Result<Vec<f64>> {
        if e0.len() != self.config.dim {
            return Err(GlomError::config("decode_patch: embedding dim mismatch"));
        }
        let mut input = Vec::with_capacity(e0.len() + pos.len());
        input.extend_from_slice(e0);
        input.extend_from_slice(pos);
        Ok(self.decoder.eval(&input))
    }

    /// Parameter tensors in the canonical (checkpoint) order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.embedder.params();
        for net in &self.bu_nets {
            out.extend(net.params());
        }
        for net in &self.td_nets {
            out.extend(net.params());
        }
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.embedder.params_mut();
        for net in &mut self.bu_nets {
            out.extend(net.params_mut());
        }
        for net in &mut self.td_nets {
            out.extend(net.params_mut());
        }
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Tape handles for every net of a model, staged in canonical order.
pub struct StagedModel {
    pub embedder: StagedMlp,
    pub bu_nets: Vec<StagedMlp>,
    pub td_nets: Vec<StagedMlp>,
    pub decoder: StagedMlp,
    shared: bool,
}

impl StagedModel {
    pub fn stage(tape: &mut Tape, model: &GlomModel, trainable: bool) -> Self {
        let stage = if trainable { stage_mlp } else { stage_mlp_frozen };
        StagedModel {
            embedder: stage(tape, &model.embedder),
            bu_nets: model.bu_nets.iter().map(|n| stage(tape, n)).collect(),
            td_nets: model.td_nets.iter().map(|n| stage(tape, n)).collect(),
            decoder: stage(tape, &model.decoder),
            shared: model.config.share_nets_across_levels,
        }
    }

    pub fn bu_net(&self, level: usize) -> &StagedMlp {
        &self.bu_nets[if self.shared { 0 } else { level - 1 }]
    }

    pub fn td_net(&self, level: usize) -> &StagedMlp {
        &self.td_nets[if self.shared { 0 } else { level }]
    }

    /// Parameter ValueIds in the same order as [`GlomModel::params`].
    pub fn param_ids(&self) -> Vec<crate::tape::ValueId> {
        let mut out = Vec::new();
        let mut push_net = |net: &StagedMlp, out: &mut Vec<crate::tape::ValueId>| {
            for &(w, b, _) in &net.layers {
                out.push(w);
                out.push(b);
            }
        };
        push_net(&self.embedder, &mut out);
        for net in &self.bu_nets {
            push_net(net, &mut out);
        }
        for net in &self.td_nets {
            push_net(net, &mut out);
        }
        push_net(&self.decoder, &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "GLOM", u32 version, binary config, then every
// net in canonical order as (u32 layer count, then per layer u32 rows,
// u32 cols, row-major f64 weights, f64 biases), all little-endian.
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GLOM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| GlomError::format("truncated data (u32)"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| GlomError::format("truncated data (u64)"))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| GlomError::format("truncated data (f64)"))?;
    Ok(f64::from_le_bytes(buf))
}

pub fn write_config<W: Write>(w: &mut W, cfg: &GlomConfig) -> Result<()> {
    for v in [cfg.levels, cfg.grid_h, cfg.grid_w, cfg.dim, cfg.patch, cfg.steps, cfg.pos_freqs,
        cfg.hidden_width, cfg.hidden_layers, cfg.neighbors]
    {
        write_u32(w, v as u32)?;
    }
    write_u32(w, cfg.sigma.len() as u32)?;
    for &s in &cfg.sigma {
        write_f64(w, s)?;
    }
    for v in [cfg.beta_start, cfg.beta_end, cfg.lambda_bu.0, cfg.lambda_bu.1, cfg.lambda_td.0,
        cfg.lambda_td.1, cfg.lambda_prev.0, cfg.lambda_prev.1, cfg.lambda_lateral.0,
        cfg.lambda_lateral.1, cfg.sine_w0]
    {
        write_f64(w, v)?;
    }
    w.write_all(&[cfg.share_nets_across_levels as u8, cfg.resample_neighbors_each_step as u8])?;
    write_u32(w, cfg.tau.len() as u32)?;
    for &t in &cfg.tau {
        write_f64(w, t)?;
    }
    write_u64(w, cfg.seed)?;
    Ok(())
}

pub fn read_config<R: Read>(r: &mut R) -> Result<GlomConfig> {
    let mut ints = [0usize; 10];
    for v in &mut ints {
        *v = read_u32(r)? as usize;
    }
    let sigma_len = read_u32(r)? as usize;
    let mut sigma = Vec::with_capacity(sigma_len);
    for _ in 0..sigma_len {
        sigma.push(read_f64(r)?);
    }
    let mut floats = [0f64; 11];
    for v in &mut floats {
        *v = read_f64(r)?;
    }
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags).map_err(|_| GlomError::format("truncated data (flags)"))?;
    let tau_len = read_u32(r)? as usize;
    let mut tau = Vec::with_capacity(tau_len);
    for _ in 0..tau_len {
        tau.push(read_f64(r)?);
    }
    let seed = read_u64(r)?;
    let cfg = GlomConfig {
        levels: ints[0],
        grid_h: ints[1],
        grid_w: ints[2],
        dim: ints[3],
        patch: ints[4],
        steps: ints[5],
        pos_freqs: ints[6],
        hidden_width: ints[7],
        hidden_layers: ints[8],
        neighbors: ints[9],
        sigma,
        beta_start: floats[0],
        beta_end: floats[1],
        lambda_bu: (floats[2], floats[3]),
        lambda_td: (floats[4], floats[5]),
        lambda_prev: (floats[6], floats[7]),
        lambda_lateral: (floats[8], floats[9]),
        sine_w0: floats[10],
        share_nets_across_levels: flags[0] != 0,
        resample_neighbors_each_step: flags[1] != 0,
        tau,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_net<W: Write>(w: &mut W, net: &MlpParams) -> Result<()> {
    write_u32(w, net.layers.len() as u32)?;
    for layer in &net.layers {
        write_u32(w, layer.out_dim() as u32)?;
        write_u32(w, layer.in_dim() as u32)?;
        for &v in layer.weight.data() {
            write_f64(w, v)?;
        }
        for &v in layer.bias.data() {
            write_f64(w, v)?;
        }
    }
    Ok(())
}

/// Layer activations are not stored; the loader reassigns them from the
/// net's role via `acts(layer_index, layer_count)`.
fn read_net<R: Read>(r: &mut R, acts: impl Fn(usize, usize) -> Activation) -> Result<MlpParams> {
    let n_layers = read_u32(r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(GlomError::format(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for li in 0..n_layers {
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if rows == 0 || cols == 0 || rows * cols > 64 * 1024 * 1024 {
            return Err(GlomError::format("implausible layer extent"));
        }
        let mut weight = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weight.push(read_f64(r)?);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(read_f64(r)?);
        }
        layers.push(crate::mlp::Layer {
            weight: Tensor::matrix(rows, cols, weight)?,
            bias: Tensor::vector(bias),
            activation: acts(li, n_layers),
        });
    }
    let net = MlpParams { layers };
    net.validate()?;
    Ok(net)
}

fn hidden_then(out_act: Activation, hidden_act: Activation) -> impl Fn(usize, usize) -> Activation {
    move |li, n| if li + 1 == n { out_act } else { hidden_act }
}

pub fn save_model<W: Write>(w: &mut W, model: &GlomModel) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(w, CHECKPOINT_VERSION)?;
    write_config(w, &model.config)?;
    write_net(w, &model.embedder)?;
    for net in &model.bu_nets {
        write_net(w, net)?;
    }
    for net in &model.td_nets {
        write_net(w, net)?;
    }
    write_net(w, &model.decoder)?;
    Ok(())
}

pub fn load_model<R: Read>(r: &mut R) -> Result<GlomModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| GlomError::format("not a GLOM checkpoint"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(GlomError::format("not a GLOM checkpoint"));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(GlomError::format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = read_config(r)?;
    let n_transitions = if config.share_nets_across_levels { 1 } else { config.levels - 1 };

    let embedder = read_net(r, |_, _| Activation::Identity)?;
    let mut bu_nets = Vec::with_capacity(n_transitions);
    for _ in 0..n_transitions {
        bu_nets.push(read_net(r, hidden_then(Activation::Identity, Activation::Relu))?);
    }
    let mut td_nets = Vec::with_capacity(n_transitions);
    for _ in 0..n_transitions {
        td_nets.push(read_net(r, hidden_then(Activation::Identity, Activation::Sine))?);
    }
    let decoder = read_net(r, hidden_then(Activation::Sigmoid, Activation::Sine))?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(GlomError::format("trailing bytes after checkpoint payload"));
    }
    Ok(GlomModel { config, embedder, bu_nets, td_nets, decoder })
}

pub fn save_model_to_path(path: &std::path::Path, model: &GlomModel) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_model(&mut file, model)?;
    Ok(())
}

pub fn load_model_from_path(path: &std::path::Path) -> Result<GlomModel> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_model(&mut file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Layer;

    #[test]
    fn position_code_origin() {
        // (0,0), F=1 -> (0, 1, 0, 1)
        let cfg = GlomConfig { pos_freqs: 1, ..GlomConfig::default() };
        let code = encode_position(0, 0, &cfg).unwrap();
        assert_eq!(code, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn position_code_length_and_range() {
        let cfg = GlomConfig { pos_freqs: 2, ..GlomConfig::default() };
        let code = encode_position(3, 11, &cfg).unwrap();
        assert_eq!(code.len(), 8);
        assert!(code.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn position_code_halfway_row() {
        // row = grid_h / 2 puts the y angle at pi: sin = 0, cos = -1.
        let cfg = GlomConfig { pos_freqs: 1, ..GlomConfig::default() };
        let code = encode_position(cfg.grid_h / 2, 0, &cfg).unwrap();
        assert!((code[2] - std::f64::consts::PI.sin()).abs() < 1e-15);
        assert!((code[3] - -1.0).abs() < 1e-12);
    }

    #[test]
    fn position_out_of_range_is_usage_error() {
        let cfg = GlomConfig::default();
        assert!(matches!(
            encode_position(cfg.grid_h, 0, &cfg),
            Err(GlomError::Usage(_))
        ));
    }

    /// Injective over the grid: no two locations share a code. Holds for the
    /// default F and for F = ceil(log2(max extent)).
    #[test]
    fn position_codes_injective_on_grid() {
        for freqs in [GlomConfig::default().pos_freqs, 4] {
            let cfg = GlomConfig { pos_freqs: freqs, ..GlomConfig::default() };
            let codes = position_codes(&cfg);
            for i in 0..codes.len() {
                for j in (i + 1)..codes.len() {
                    assert_ne!(codes[i].data(), codes[j].data(), "codes {i} and {j} collide");
                }
            }
        }
    }

    #[test]
    fn bottom_up_is_pure_and_rejects_level0() {
        let model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        let e: Vec<f64> = (0..model.config.dim).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = model.bottom_up_predict(1, &e).unwrap();
        let b = model.bottom_up_predict(1, &e).unwrap();
        assert_eq!(a, b);
        assert!(matches!(model.bottom_up_predict(0, &e), Err(GlomError::Usage(_))));
    }

    #[test]
    fn zeroed_bu_net_outputs_zero() {
        let mut model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        for p in model.bu_nets[0].params_mut() {
            *p = Tensor::zeros(p.shape().to_vec());
        }
        let e: Vec<f64> = (0..model.config.dim).map(|i| i as f64).collect();
        let out = model.bottom_up_predict(1, &e).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn top_down_determinism_and_level_check() {
        let cfg = GlomConfig::tiny();
        let model = GlomModel::init(&cfg).unwrap();
        let e: Vec<f64> = (0..cfg.dim).map(|i| (i as f64 * 0.1).cos()).collect();
        let p0 = encode_position(0, 0, &cfg).unwrap();
        let a = model.top_down_predict(0, &e, &p0).unwrap();
        let b = model.top_down_predict(0, &e, &p0).unwrap();
        assert_eq!(a, b);
        let top = cfg.levels - 1;
        assert!(matches!(model.top_down_predict(top, &e, &p0), Err(GlomError::Usage(_))));
    }

    #[test]
    fn embed_image_constant_inputs() {
        let cfg = GlomConfig::tiny();
        let model = GlomModel::init(&cfg).unwrap();
        // All-zero image with a zero-bias embedder gives a zero grid.
        let img = GrayImage::filled(cfg.image_h(), cfg.image_w(), 0.0);
        let mask = PixelMask::clear(img.h, img.w);
        let grid = model.embed_image(&img, &mask).unwrap();
        assert!(grid.iter().flatten().all(|&v| v == 0.0));

        // Fully masked image: every location sees the constant fill patch.
        let img2 = GrayImage::filled(cfg.image_h(), cfg.image_w(), 0.9);
        let mut full = PixelMask::clear(img2.h, img2.w);
        full.masked.iter_mut().for_each(|m| *m = true);
        let grid2 = model.embed_image(&img2, &full).unwrap();
        let fill_patch = vec![MASK_FILL; cfg.patch * cfg.patch];
        let expect = model.embedder.eval(&fill_patch);
        assert!(grid2.iter().all(|g| *g == expect));
    }

    #[test]
    fn identical_patches_embed_identically() {
        let cfg = GlomConfig::tiny();
        let model = GlomModel::init(&cfg).unwrap();
        let mut img = GrayImage::filled(cfg.image_h(), cfg.image_w(), 0.2);
        // Make patches (0,0) and (1,1) identical but different from the rest.
        for dr in 0..cfg.patch {
            for dc in 0..cfg.patch {
                img.set(dr, dc, 0.8);
                img.set(cfg.patch + dr, cfg.patch + dc, 0.8);
            }
        }
        let mask = PixelMask::clear(img.h, img.w);
        let grid = model.embed_image(&img, &mask).unwrap();
        assert_eq!(grid[0], grid[cfg.grid_w + 1]);
        assert_ne!(grid[0], grid[1]);
    }

    #[test]
    fn extent_mismatch_is_config_error() {
        let model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        let img = GrayImage::filled(3, 3, 0.0);
        let mask = PixelMask::clear(3, 3);
        assert!(matches!(model.embed_image(&img, &mask), Err(GlomError::Config(_))));
    }

    /// Hand-built linear field decoder: one code (a, b) plus a location
    /// input x decodes to a*x + b, so a single code reproduces a linear
    /// ramp across four pixels even though their intensities all differ.
    #[test]
    fn linear_field_decoder_reproduces_ramp() {
        let decode = |code: (f64, f64), x: f64| code.0 * x + code.1;
        let code = (0.25, 0.1);
        let got: Vec<f64> = (0..4).map(|x| decode(code, x as f64)).collect();
        assert_eq!(got, vec![0.1, 0.35, 0.6, 0.85]);
        // All four pixels come from the same code; only the location varies.
        assert!(got.windows(2).all(|w| (w[1] - w[0] - code.0).abs() < 1e-15));
    }

    /// The learned decoder has the same extra location input: one embedding
    /// can decode differently at different positions.
    #[test]
    fn decoder_output_depends_on_location() {
        let cfg = GlomConfig::tiny();
        let model = GlomModel::init(&cfg).unwrap();
        let e0: Vec<f64> = (0..cfg.dim).map(|i| (0.3 * i as f64).sin()).collect();
        let p_a = encode_position(0, 0, &cfg).unwrap();
        let p_b = encode_position(2, 3, &cfg).unwrap();
        let out_a = model.decode_patch(&e0, &p_a).unwrap();
        let out_b = model.decode_patch(&e0, &p_b).unwrap();
        let max_diff = out_a
            .iter()
            .zip(&out_b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 1e-6, "decoder ignored its location input");
        assert!(out_a.iter().chain(&out_b).all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_decoder_outputs_half() {
        let cfg = GlomConfig::tiny();
        let mut model = GlomModel::init(&cfg).unwrap();
        for p in model.decoder.params_mut() {
            *p = Tensor::zeros(p.shape().to_vec());
        }
        let e0 = vec![0.3; cfg.dim];
        let pos = encode_position(1, 2, &cfg).unwrap();
        let out = model.decode_patch(&e0, &pos).unwrap();
        assert_eq!(out.len(), cfg.patch * cfg.patch);
        assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn checkpoint_round_trip_is_byte_exact() {
        let model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        let mut bytes = Vec::new();
        save_model(&mut bytes, &model).unwrap();
        let loaded = load_model(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded, model);
        let mut bytes2 = Vec::new();
        save_model(&mut bytes2, &loaded).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn checkpoint_bad_magic_rejected() {
        let model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        let mut bytes = Vec::new();
        save_model(&mut bytes, &model).unwrap();
        bytes[0] = b'X';
        assert!(matches!(load_model(&mut bytes.as_slice()), Err(GlomError::Format(_))));
    }

    #[test]
    fn checkpoint_truncation_rejected() {
        let model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        let mut bytes = Vec::new();
        save_model(&mut bytes, &model).unwrap();
        bytes.truncate(bytes.len() - 9);
        assert!(matches!(load_model(&mut bytes.as_slice()), Err(GlomError::Format(_))));
    }

    #[test]
    fn shared_nets_alias_one_parameter_set() {
        let cfg = GlomConfig {
            levels: 3,
            share_nets_across_levels: true,
            sigma: vec![1.5, 3.0, 6.0],
            tau: vec![0.9; 3],
            ..GlomConfig::tiny()
        };
        let model = GlomModel::init(&cfg).unwrap();
        assert_eq!(model.bu_nets.len(), 1);
        assert!(std::ptr::eq(model.bu_net(1).unwrap(), model.bu_net(2).unwrap()));
    }

    #[test]
    fn weight_sharing_across_locations() {
        // Serialize, reload, and evaluate one net at two locations: the same
        // parameter bytes drive both, so equal inputs give equal outputs.
        let model = GlomModel::init(&GlomConfig::tiny()).unwrap();
        let mut bytes = Vec::new();
        save_model(&mut bytes, &model).unwrap();
        let loaded = load_model(&mut bytes.as_slice()).unwrap();
        let e: Vec<f64> = (0..model.config.dim).map(|i| (i as f64).sin()).collect();
        assert_eq!(
            loaded.bottom_up_predict(1, &e).unwrap(),
            model.bottom_up_predict(1, &e).unwrap()
        );
    }

    #[test]
    fn layer_dims_must_chain() {
        let bad = MlpParams {
            layers: vec![
                Layer {
                    weight: Tensor::zeros(vec![3, 2]),
                    bias: Tensor::zeros(vec![3]),
                    activation: Activation::Relu,
                },
                Layer {
                    weight: Tensor::zeros(vec![2, 4]),
                    bias: Tensor::zeros(vec![2]),
                    activation: Activation::Identity,
                },
            ],
        };
        assert!(bad.validate().is_err());
    }
}
