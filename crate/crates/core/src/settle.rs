//! Recurrent settling dynamics: per step and per location, combine
//! bottom-up, top-down, previous-state, and attention-weighted lateral
//! contributions into the new embedding at every level.
//!
//! Updates are synchronous (Jacobi style): every level at every location is
//! computed from step-t values only. The whole trajectory runs on a [`Tape`]
//! so training can backpropagate through the settling process; settling for
//! inference uses the same code path with frozen parameters.

use std::io::{Read, Write};

use rand::Rng;

use crate::config::GlomConfig;
use crate::error::{GlomError, Result};
use crate::mlp::mlp_forward;
use crate::model::{position_codes, read_config, write_config, GlomModel, GrayImage, PixelMask, StagedModel};
use crate::rng::derived_rng;
use crate::tape::{cosine_or_zero, softmax_scaled_values, Tape, ValueId};
use crate::tensor::{dot, Tensor};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// The [level x row x col x dim] embedding field at one settling step.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGridState {
    pub levels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    /// Settling step this state belongs to (0 = initialization).
    pub step: usize,
    data: Vec<f64>,
}

impl ColumnGridState {
    pub fn zeroed(levels: usize, grid_h: usize, grid_w: usize, dim: usize, step: usize) -> Self {
        ColumnGridState {
            levels,
            grid_h,
            grid_w,
            dim,
            step,
            data: vec![0.0; levels * grid_h * grid_w * dim],
        }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_h * self.grid_w
    }

    fn offset(&self, level: usize, loc: usize) -> usize {
        (level * self.grid_size() + loc) * self.dim
    }

    /// Embedding at (level, r * grid_w + c).
    pub fn embedding(&self, level: usize, loc: usize) -> &[f64] {
        let o = self.offset(level, loc);
        &self.data[o..o + self.dim]
    }

    pub fn embedding_mut(&mut self, level: usize, loc: usize) -> &mut [f64] {
        let o = self.offset(level, loc);
        &mut self.data[o..o + self.dim]
    }

    /// All embeddings of one level in raster order.
    pub fn level_grid(&self, level: usize) -> Vec<&[f64]> {
        (0..self.grid_size()).map(|loc| self.embedding(level, loc)).collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        for level in 0..self.levels {
            for loc in 0..self.grid_size() {
                if self.embedding(level, loc).iter().any(|v| !v.is_finite()) {
                    return Err(GlomError::numeric(format!(
                        "non-finite embedding at level {level}, location ({}, {}), step {}",
                        loc / self.grid_w,
                        loc % self.grid_w,
                        self.step
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Per-step inverse temperature and per-(step, level) contribution weights,
/// stored already masked (no top-down at the top level, no lateral when no
/// neighbors are configured) and renormalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub levels: usize,
    pub steps: usize,
    beta: Vec<f64>,
    /// [t * levels + level] -> (bu, td, prev, lateral).
    lambda: Vec<[f64; 4]>,
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac
}

impl Schedules {
    pub fn from_config(cfg: &GlomConfig) -> Result<Self> {
        cfg.validate()?;
        let steps = cfg.steps;
        let mut beta = Vec::with_capacity(steps);
        let mut lambda = Vec::with_capacity(steps * cfg.levels);
        for t in 0..steps {
            let frac = if steps > 1 { t as f64 / (steps - 1) as f64 } else { 0.0 };
            beta.push(lerp(cfg.beta_start, cfg.beta_end, frac));
            let raw = [
                lerp(cfg.lambda_bu.0, cfg.lambda_bu.1, frac),
                lerp(cfg.lambda_td.0, cfg.lambda_td.1, frac),
                lerp(cfg.lambda_prev.0, cfg.lambda_prev.1, frac),
                lerp(cfg.lambda_lateral.0, cfg.lambda_lateral.1, frac),
            ];
            for level in 0..cfg.levels {
                lambda.push(Self::mask_and_renorm(raw, level, cfg.levels, cfg.neighbors)?);
            }
        }
        Ok(Schedules { levels: cfg.levels, steps, beta, lambda })
    }

    /// Constant weights at every step and level (masked per level), mainly
    /// for tests and hand-built examples.
    pub fn constant(
        levels: usize,
        steps: usize,
        beta: f64,
        raw_lambda: [f64; 4],
        neighbors: usize,
    ) -> Result<Self> {
        let mut lambda = Vec::with_capacity(steps * levels);
        for _t in 0..steps {
            for level in 0..levels {
                lambda.push(Self::mask_and_renorm(raw_lambda, level, levels, neighbors)?);
            }
        }
        Ok(Schedules { levels, steps, beta: vec![beta; steps], lambda })
    }

    fn mask_and_renorm(
        raw: [f64; 4],
        level: usize,
        levels: usize,
        neighbors: usize,
    ) -> Result<[f64; 4]> {
        let mut l = raw;
        if level + 1 == levels {
            l[1] = 0.0; // no level above to predict from
        }
        if neighbors == 0 {
            l[3] = 0.0;
        }
        let sum: f64 = l.iter().sum();
        if sum <= 0.0 {
            return Err(GlomError::config(format!(
                "all contribution weights vanish at level {level} after masking"
            )));
        }
        for v in &mut l {
            *v /= sum;
        }
        Ok(l)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t.min(self.steps - 1)]
    }

    /// Masked, renormalized (bu, td, prev, lateral) weights.
    pub fn lambda(&self, t: usize, level: usize) -> [f64; 4] {
        self.lambda[t.min(self.steps - 1) * self.levels + level]
    }
}

// ---------------------------------------------------------------------------
// Neighborhoods
// ---------------------------------------------------------------------------

/// For each level and location, the lateral partners that compete for its
/// attention. Sampled once per model instance by default.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub levels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub k: usize,
    /// [level * grid_size + loc] -> k distinct locations, never containing loc.
    lists: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn neighbors(&self, level: usize, loc: usize) -> &[usize] {
        &self.lists[level * self.grid_h * self.grid_w + loc]
    }

    /// Build from explicit lists; for tests.
    pub fn from_lists(
        levels: usize,
        grid_h: usize,
        grid_w: usize,
        k: usize,
        lists: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if lists.len() != levels * grid_h * grid_w {
            return Err(GlomError::usage("neighbor list count does not match grid"));
        }
        Ok(NeighborTable { levels, grid_h, grid_w, k, lists })
    }
}

/// Sample k lateral partners per (level, location) without replacement, with
/// probability proportional to exp(-d^2 / (2 sigma_level^2)) around the
/// location. Higher levels use their (larger) sigma. Deterministic given the
/// rng state.
pub fn build_neighborhoods<R: Rng>(cfg: &GlomConfig, rng: &mut R) -> Result<NeighborTable> {
    cfg.validate()?;
    let (h, w) = (cfg.grid_h, cfg.grid_w);
    let size = h * w;
    let mut lists = Vec::with_capacity(cfg.levels * size);
    for level in 0..cfg.levels {
        let sigma = cfg.sigma[level];
        if sigma <= 0.0 {
            return Err(GlomError::config("sigma must be positive"));
        }
        let inv = 1.0 / (2.0 * sigma * sigma);
        for loc in 0..size {
            let (r0, c0) = ((loc / w) as f64, (loc % w) as f64);
            let mut weights: Vec<f64> = (0..size)
                .map(|y| {
                    if y == loc {
                        0.0
                    } else {
                        let (r1, c1) = ((y / w) as f64, (y % w) as f64);
                        let d2 = (r1 - r0) * (r1 - r0) + (c1 - c0) * (c1 - c0);
                        (-d2 * inv).exp()
                    }
                })
                .collect();
            let mut picks = Vec::with_capacity(cfg.neighbors);
            for _ in 0..cfg.neighbors {
                let total: f64 = weights.iter().sum();
                debug_assert!(total > 0.0);
                let mut u = rng.gen::<f64>() * total;
                let mut chosen = size - 1;
                for (y, &wgt) in weights.iter().enumerate() {
                    if wgt <= 0.0 {
                        continue;
                    }
                    u -= wgt;
                    if u <= 0.0 {
                        chosen = y;
                        break;
                    }
                }
                // Guard against accumulated rounding pushing past the end.
                if weights[chosen] <= 0.0 {
                    chosen = weights.iter().rposition(|&w| w > 0.0).unwrap();
                }
                picks.push(chosen);
                weights[chosen] = 0.0;
            }
            lists.push(picks);
        }
    }
    Ok(NeighborTable { levels: cfg.levels, grid_h: h, grid_w: w, k: cfg.neighbors, lists })
}

// ---------------------------------------------------------------------------
// Attention and combination (plain forms)
// ---------------------------------------------------------------------------

/// Attention weight per neighbor: softmax over beta-scaled dot products of
/// the embedding at `x` with each neighbor's embedding, max-subtracted for
/// stability. Empty neighbor lists yield an empty weight vector.
pub fn attention_weights(
    level_grid: &[&[f64]],
    x: usize,
    neighbors: &[usize],
    beta: f64,
) -> Result<Vec<f64>> {
    if beta < 0.0 {
        return Err(GlomError::usage("beta must be nonnegative"));
    }
    if neighbors.is_empty() {
        return Ok(Vec::new());
    }
    let me = level_grid[x];
    let dots: Vec<f64> = neighbors.iter().map(|&y| dot(me, level_grid[y])).collect();
    Ok(softmax_scaled_values(&dots, beta))
}

/// Weighted arithmetic mean of the available contributions followed by RMS
/// normalization. Absent contributions must carry zero weight; the caller is
/// expected to pass masked, renormalized weights (see [`Schedules`]).
pub fn combine_contributions(
    bu: Option<&[f64]>,
    td: Option<&[f64]>,
    prev: &[f64],
    lateral: Option<&[f64]>,
    lambda: [f64; 4],
) -> Result<Vec<f64>> {
    if lambda.iter().any(|&l| l < 0.0) {
        return Err(GlomError::usage("contribution weights must be nonnegative"));
    }
    let present_sum: f64 = [bu.is_some(), td.is_some(), true, lateral.is_some()]
        .iter()
        .zip(&lambda)
        .map(|(&p, &l)| if p { l } else { 0.0 })
        .sum();
    if present_sum <= 0.0 {
        return Err(GlomError::config("all contribution weights are zero"));
    }
    if (present_sum - 1.0).abs() > 1e-9 {
        return Err(GlomError::usage(format!(
            "contribution weights over present terms sum to {present_sum}, expected 1"
        )));
    }
    let mut out = vec![0.0; prev.len()];
    for (term, weight) in [(bu, lambda[0]), (td, lambda[1]), (Some(prev), lambda[2]), (lateral, lambda[3])]
    {
        if let Some(v) = term {
            if weight != 0.0 {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += weight * x;
                }
            }
        }
    }
    Ok(crate::tape::rms_norm_values(&Tensor::vector(out)).data().to_vec())
}

// ---------------------------------------------------------------------------
// Taped settling
// ---------------------------------------------------------------------------

/// Tape ids of the four contribution terms and the combined result at one
/// (step, level, location); recorded for the training regularizers.
#[derive(Debug, Clone, Copy)]
pub struct PredRecord {
    pub t: usize,
    pub level: usize,
    pub loc: usize,
    /// Bottom-up net prediction; None at level 0 (which sees the image).
    pub bu: Option<ValueId>,
    /// Top-down net prediction; None at the top level.
    pub td: Option<ValueId>,
    /// The combined post-update embedding at this slot.
    pub new: ValueId,
}

pub struct SettleOptions {
    /// Track parameter gradients (training) or stage parameters frozen.
    pub trainable: bool,
    /// Keep per-slot prediction ids for the regularizers.
    pub record_predictions: bool,
}

impl SettleOptions {
    pub fn inference() -> Self {
        SettleOptions { trainable: false, record_predictions: false }
    }

    pub fn training() -> Self {
        SettleOptions { trainable: true, record_predictions: true }
    }
}

/// A full settling trajectory plus the tape it was recorded on.
pub struct SettleRun {
    pub tape: Tape,
    pub staged: StagedModel,
    /// states[t][level * grid_size + loc] for t = 0..=T.
    pub states: Vec<Vec<ValueId>>,
    /// RMS-normalized level-0 input embeddings (also the bu term of level 0).
    pub level0_input: Vec<ValueId>,
    /// Position code constants per location.
    pub pos_ids: Vec<ValueId>,
    pub preds: Vec<PredRecord>,
    pub levels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
}

impl SettleRun {
    /// Copy a trajectory step out of the tape.
    pub fn state(&self, t: usize) -> ColumnGridState {
        let mut out = ColumnGridState::zeroed(self.levels, self.grid_h, self.grid_w, self.dim, t);
        let size = self.grid_h * self.grid_w;
        for level in 0..self.levels {
            for loc in 0..size {
                let id = self.states[t][level * size + loc];
                out.embedding_mut(level, loc).copy_from_slice(self.tape.value(id).data());
            }
        }
        out
    }

    pub fn final_state(&self) -> ColumnGridState {
        self.state(self.states.len() - 1)
    }

    pub fn trajectory(&self) -> Vec<ColumnGridState> {
        (0..self.states.len()).map(|t| self.state(t)).collect()
    }
}

/// Settling driver: owns the position codes and the architecture-fixed
/// neighbor table for one model instance.
pub struct Settler<'m> {
    pub model: &'m GlomModel,
    pub pos: Vec<Tensor>,
    pub table: NeighborTable,
    schedules: Schedules,
}

impl<'m> Settler<'m> {
    pub fn new(model: &'m GlomModel) -> Result<Self> {
        let cfg = &model.config;
        cfg.validate()?;
        let mut rng = derived_rng(cfg.seed, "neighborhoods", 0);
        let table = build_neighborhoods(cfg, &mut rng)?;
        Ok(Settler { model, pos: position_codes(cfg), table, schedules: Schedules::from_config(cfg)? })
    }

    pub fn schedules(&self) -> &Schedules {
        &self.schedules
    }

    fn table_for_step(&self, t: usize) -> Result<std::borrow::Cow<'_, NeighborTable>> {
        if self.model.config.resample_neighbors_each_step {
            let mut rng = derived_rng(self.model.config.seed, "neighborhoods-step", t as u64 + 1);
            Ok(std::borrow::Cow::Owned(build_neighborhoods(&self.model.config, &mut rng)?))
        } else {
            Ok(std::borrow::Cow::Borrowed(&self.table))
        }
    }

    /// Run the full trajectory: T updates from the initialized state, all on
    /// one tape. Returns all T+1 states.
    pub fn settle(
        &self,
        image: &GrayImage,
        mask: &PixelMask,
        opts: &SettleOptions,
    ) -> Result<SettleRun> {
        let cfg = &self.model.config;
        let mut tape = Tape::new();
        let staged = StagedModel::stage(&mut tape, self.model, opts.trainable);
        let size = cfg.grid_size();

        let pos_ids: Vec<ValueId> =
            self.pos.iter().map(|p| tape.constant(p.clone())).collect();

        // Level-0 input: embed every patch, then RMS-normalize so the initial
        // state is a fixed point of a prev-only schedule.
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
        let mut level0_input = Vec::with_capacity(size);
        for r in 0..cfg.grid_h {
            for c in 0..cfg.grid_w {
                let patch = Tensor::vector(self.model.patch_values(image, mask, r, c));
                let patch_id = tape.constant(patch);
                let emb = mlp_forward(&mut tape, &staged.embedder, patch_id)?;
                level0_input.push(tape.rms_norm(emb));
            }
        }

        // Initial state: level 0 is the input embedding, higher levels zero.
        let zero = tape.constant(Tensor::zeros(vec![cfg.dim]));
        let mut state0 = Vec::with_capacity(cfg.levels * size);
        state0.extend_from_slice(&level0_input);
        state0.extend(std::iter::repeat(zero).take((cfg.levels - 1) * size));

        let mut states = vec![state0];
        let mut preds = Vec::new();
        for t in 0..cfg.steps {
            let table = self.table_for_step(t)?;
            let next = step_on_tape(
                &mut tape,
                &staged,
                cfg,
                &self.schedules,
                &table,
                &pos_ids,
                &level0_input,
                states.last().unwrap(),
                t,
                if opts.record_predictions { Some(&mut preds) } else { None },
                None,
            )?;
            // NaN anywhere aborts with a diagnostic naming level/location.
            for (i, &id) in next.iter().enumerate() {
                if !tape.value(id).all_finite() {
                    let (level, loc) = (i / size, i % size);
                    return Err(GlomError::numeric(format!(
                        "non-finite embedding after step {t} at level {level}, location ({}, {})",
                        loc / cfg.grid_w,
                        loc % cfg.grid_w
                    )));
                }
            }
            states.push(next);
        }

        Ok(SettleRun {
            tape,
            staged,
            states,
            level0_input,
            pos_ids,
            preds,
            levels: cfg.levels,
            grid_h: cfg.grid_h,
            grid_w: cfg.grid_w,
            dim: cfg.dim,
        })
    }
}

/// One synchronous update of every level at every location, reading only
/// step-t values. `level0_input` supplies the bu term of level 0. The
/// `order` override exists so tests can verify iteration-order independence.
#[allow(clippy::too_many_arguments)]
fn step_on_tape(
    tape: &mut Tape,
    staged: &StagedModel,
    cfg: &GlomConfig,
    schedules: &Schedules,
    table: &NeighborTable,
    pos_ids: &[ValueId],
    level0_input: &[ValueId],
    prev: &[ValueId],
    t: usize,
    mut preds: Option<&mut Vec<PredRecord>>,
    order: Option<&[usize]>,
) -> Result<Vec<ValueId>> {
    let size = cfg.grid_size();
    let default_order: Vec<usize> = (0..size).collect();
    let order = order.unwrap_or(&default_order);
    let beta = schedules.beta(t);

    // Placeholder until written; every slot is assigned exactly once.
    let mut next = vec![prev[0]; cfg.levels * size];
    for level in 0..cfg.levels {
        let lambda = schedules.lambda(t, level);
        for &loc in order {
            let prev_id = prev[level * size + loc];

            let bu_id = if level == 0 {
                Some(level0_input[loc])
            } else {
                let below = prev[(level - 1) * size + loc];
                let out = mlp_forward(tape, staged.bu_net(level), below)?;
                Some(out)
            };

            let td_id = if level + 1 == cfg.levels {
                None
            } else {
                let above = prev[(level + 1) * size + loc];
                let input = tape.concat(&[above, pos_ids[loc]])?;
                Some(mlp_forward(tape, staged.td_net(level), input)?)
            };

            let ns = table.neighbors(level, loc);
            let lateral_id = if ns.is_empty() {
                None
            } else {
                let mut dots = Vec::with_capacity(ns.len());
                for &y in ns {
                    dots.push(tape.dot_product(prev_id, prev[level * size + y])?);
                }
                let logits = tape.stack(&dots)?;
                let weights = tape.softmax_scaled(logits, beta)?;
                let items: Vec<ValueId> = ns.iter().map(|&y| prev[level * size + y]).collect();
                Some(tape.weighted_sum(weights, &items)?)
            };

            let mut items = Vec::with_capacity(4);
            let mut coeffs = Vec::with_capacity(4);
            for (term, weight) in
                [(bu_id, lambda[0]), (td_id, lambda[1]), (Some(prev_id), lambda[2]), (lateral_id, lambda[3])]
            {
                if let Some(id) = term {
                    items.push(id);
                    coeffs.push(weight);
                }
            }
            let mixed = tape.affine(&items, &coeffs, 0.0)?;
            let new_id = tape.rms_norm(mixed);
            next[level * size + loc] = new_id;

            if let Some(rec) = preds.as_deref_mut() {
                rec.push(PredRecord {
                    t,
                    level,
                    loc,
                    bu: if level == 0 { None } else { bu_id },
                    td: td_id,
                    new: new_id,
                });
            }
        }
    }
    Ok(next)
}

/// One settling step on a plain state. `level0_input` must hold the
/// (normalized) level-0 input embedding per location, which doubles as the
/// bu term of level 0. The state's own step index selects the schedule row.
pub fn settle_step(
    model: &GlomModel,
    state: &ColumnGridState,
    level0_input: &[Vec<f64>],
    schedules: &Schedules,
    table: &NeighborTable,
) -> Result<ColumnGridState> {
    settle_step_ordered(model, state, level0_input, schedules, table, None)
}

fn settle_step_ordered(
    model: &GlomModel,
    state: &ColumnGridState,
    level0_input: &[Vec<f64>],
    schedules: &Schedules,
    table: &NeighborTable,
    order: Option<&[usize]>,
) -> Result<ColumnGridState> {
    let cfg = &model.config;
    let size = cfg.grid_size();
    if state.levels != cfg.levels || state.grid_size() != size || state.dim != cfg.dim {
        return Err(GlomError::config("state shape does not match configuration"));
    }
    if level0_input.len() != size {
        return Err(GlomError::config("level-0 input grid does not match grid size"));
    }
    if schedules.steps == 0 {
        return Err(GlomError::usage("schedules carry no steps"));
    }

    let mut tape = Tape::new();
    let staged = StagedModel::stage(&mut tape, model, false);
    let pos_ids: Vec<ValueId> =
        position_codes(cfg).into_iter().map(|p| tape.constant(p)).collect();
    let input_ids: Vec<ValueId> = level0_input
        .iter()
        .map(|v| tape.constant(Tensor::vector(v.clone())))
        .collect();
    let prev: Vec<ValueId> = (0..cfg.levels)
        .flat_map(|level| (0..size).map(move |loc| (level, loc)))
        .map(|(level, loc)| tape.constant(Tensor::vector(state.embedding(level, loc).to_vec())))
        .collect();

    let t = state.step;
    let next = step_on_tape(
        &mut tape, &staged, cfg, schedules, table, &pos_ids, &input_ids, &prev, t, None, order,
    )?;

    let mut out = ColumnGridState::zeroed(cfg.levels, cfg.grid_h, cfg.grid_w, cfg.dim, t + 1);
    for level in 0..cfg.levels {
        for loc in 0..size {
            out.embedding_mut(level, loc)
                .copy_from_slice(tape.value(next[level * size + loc]).data());
        }
    }
    out.check_finite()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// State dump format: magic "GSTA", u32 version, binary config echo, u32
// state count, then per state the f64 field e[level][r][c][d] in level-major
// order, little-endian.
// ---------------------------------------------------------------------------

pub const STATE_MAGIC: &[u8; 4] = b"GSTA";
pub const STATE_VERSION: u32 = 1;

pub fn write_states<W: Write>(
    w: &mut W,
    cfg: &GlomConfig,
    states: &[ColumnGridState],
) -> Result<()> {
    w.write_all(STATE_MAGIC)?;
    w.write_all(&STATE_VERSION.to_le_bytes())?;
    write_config(w, cfg)?;
    w.write_all(&(states.len() as u32).to_le_bytes())?;
    for s in states {
        if s.levels != cfg.levels || s.grid_h != cfg.grid_h || s.grid_w != cfg.grid_w
            || s.dim != cfg.dim
        {
            return Err(GlomError::usage("state shape does not match config being written"));
        }
        for &v in s.raw() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_states<R: Read>(r: &mut R) -> Result<(GlomConfig, Vec<ColumnGridState>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| GlomError::format("not a GLOM state dump"))?;
    if &magic != STATE_MAGIC {
        return Err(GlomError::format("not a GLOM state dump"));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(|_| GlomError::format("truncated state dump"))?;
    let version = u32::from_le_bytes(buf4);
    if version != STATE_VERSION {
        return Err(GlomError::format(format!("unsupported state dump version {version}")));
    }
    let cfg = read_config(r)?;
    r.read_exact(&mut buf4).map_err(|_| GlomError::format("truncated state dump"))?;
    let count = u32::from_le_bytes(buf4) as usize;
    let entry_len = cfg.levels * cfg.grid_size() * cfg.dim;
    let mut states = Vec::with_capacity(count);
    for t in 0..count {
        let mut s = ColumnGridState::zeroed(cfg.levels, cfg.grid_h, cfg.grid_w, cfg.dim, t);
        let mut buf8 = [0u8; 8];
        for i in 0..entry_len {
            r.read_exact(&mut buf8).map_err(|_| GlomError::format("truncated state dump"))?;
            s.raw_mut()[i] = f64::from_le_bytes(buf8);
        }
        states.push(s);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(GlomError::format("trailing bytes after state dump payload"));
    }
    Ok((cfg, states))
}

/// Mean pairwise distance between a location and its sampled partners,
/// averaged over all locations of a level. Used to verify that wider
/// neighborhood widths actually reach farther.
pub fn mean_neighbor_distance(table: &NeighborTable, level: usize) -> f64 {
    let (h, w) = (table.grid_h, table.grid_w);
    let mut total = 0.0;
    let mut count = 0usize;
    for loc in 0..h * w {
        let (r0, c0) = ((loc / w) as f64, (loc % w) as f64);
        for &y in table.neighbors(level, loc) {
            let (r1, c1) = ((y / w) as f64, (y % w) as f64);
            total += ((r1 - r0).powi(2) + (c1 - c0).powi(2)).sqrt();
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Cosine similarity between two embeddings of a level grid (helper shared
/// by diagnostics and tests).
pub fn level_cosine(state: &ColumnGridState, level: usize, a: usize, b: usize) -> f64 {
    cosine_or_zero(state.embedding(level, a), state.embedding(level, b))
}
