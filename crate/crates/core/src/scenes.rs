//! Synthetic scenes with exact part-whole ground truth: objects composed of
//! parts, rendered to grayscale with per-grid-cell labels at every hierarchy
//! level.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::GlomConfig;
use crate::error::{GlomError, Result};
use crate::model::GrayImage;
use crate::rng::derived_rng;

/// Shape primitives for parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartShape {
    Rect,
    Disc,
    /// Bars at the four supported orientations (degrees).
    Bar0,
    Bar45,
    Bar90,
    Bar135,
}

impl PartShape {
    pub fn type_id(self) -> u16 {
        match self {
            PartShape::Rect => 1,
            PartShape::Disc => 2,
            PartShape::Bar0 => 3,
            PartShape::Bar45 => 4,
            PartShape::Bar90 => 5,
            PartShape::Bar135 => 6,
        }
    }

    /// Point-in-shape test for a part of edge `size` centered at the origin.
    fn contains(self, dy: f64, dx: f64, size: f64) -> bool {
        let half = size / 2.0;
        let thick = (size / 3.0).max(2.0) / 2.0;
        match self {
            PartShape::Rect => dy.abs() <= half && dx.abs() <= half,
            PartShape::Disc => dy * dy + dx * dx <= half * half,
            PartShape::Bar0 => dy.abs() <= thick && dx.abs() <= half,
            PartShape::Bar90 => dx.abs() <= thick && dy.abs() <= half,
            PartShape::Bar45 => {
                let u = (dx + dy) * std::f64::consts::FRAC_1_SQRT_2;
                let v = (dx - dy) * std::f64::consts::FRAC_1_SQRT_2;
                v.abs() <= thick && u.abs() <= half
            }
            PartShape::Bar135 => {
                let u = (dx + dy) * std::f64::consts::FRAC_1_SQRT_2;
                let v = (dx - dy) * std::f64::consts::FRAC_1_SQRT_2;
                u.abs() <= thick && v.abs() <= half
            }
        }
    }
}

/// One part slot of an object template: relative placement, admissible
/// shapes, and nominal size in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSlot {
    pub dy: f64,
    pub dx: f64,
    pub shapes: Vec<PartShape>,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub slots: Vec<PartSlot>,
}

/// Object templates, part primitives, object count range, and jitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGrammar {
    pub templates: Vec<ObjectTemplate>,
    /// Inclusive range of objects per scene.
    pub object_count: (usize, usize),
    /// Uniform positional jitter (pixels) applied per part placement.
    pub pos_jitter: f64,
    /// Relative size jitter per part: size * (1 + U(-j, j)).
    pub scale_jitter: f64,
    pub background: f64,
    pub noise_sigma: f64,
    /// Object-instance intensities are evenly spaced in this range.
    pub intensity: (f64, f64),
}

/// Dial-level grammar knobs used by the run configuration; the templates
/// themselves are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarConfig {
    pub object_count_min: usize,
    pub object_count_max: usize,
    pub pos_jitter: f64,
    pub scale_jitter: f64,
    pub background: f64,
    pub noise_sigma: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            object_count_min: 1,
            object_count_max: 3,
            pos_jitter: 2.0,
            scale_jitter: 0.15,
            background: 0.08,
            noise_sigma: 0.02,
            intensity_min: 0.4,
            intensity_max: 0.95,
        }
    }
}

impl SceneGrammar {
    /// Three object types built from four part types (rect, disc, and bars
    /// at two of the four orientations), sized for a 64x64 image.
    pub fn standard(knobs: &GrammarConfig) -> Self {
        let slot = |dy: f64, dx: f64, shapes: Vec<PartShape>, size: f64| PartSlot {
            dy,
            dx,
            shapes,
            size,
        };
        let templates = vec![
            ObjectTemplate {
                slots: vec![
                    slot(0.0, -6.0, vec![PartShape::Rect], 10.0),
                    slot(-6.0, 5.0, vec![PartShape::Disc], 10.0),
                    slot(6.0, 4.0, vec![PartShape::Bar0], 12.0),
                ],
            },
            ObjectTemplate {
                slots: vec![
                    slot(0.0, -5.0, vec![PartShape::Disc], 12.0),
                    slot(0.0, 5.0, vec![PartShape::Bar90], 14.0),
                ],
            },
            ObjectTemplate {
                slots: vec![
                    slot(-7.0, 0.0, vec![PartShape::Bar0], 12.0),
                    slot(0.0, -7.0, vec![PartShape::Bar90], 12.0),
                    slot(1.0, 4.0, vec![PartShape::Rect, PartShape::Disc], 8.0),
                    slot(8.0, 5.0, vec![PartShape::Disc], 8.0),
                ],
            },
        ];
        SceneGrammar {
            templates,
            object_count: (knobs.object_count_min, knobs.object_count_max),
            pos_jitter: knobs.pos_jitter,
            scale_jitter: knobs.scale_jitter,
            background: knobs.background,
            noise_sigma: knobs.noise_sigma,
            intensity: (knobs.intensity_min, knobs.intensity_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty" {
            return Err(GlomError::config("grammar has no object templates"));
        }
        Ok(())
    }

    /// Worst-case reach of a template from its center, including jitters.
    fn reach(&self, template: &ObjectTemplate) -> f64 {
        template
            .slots
            .iter()
            .map(|s| {
                s.dy.abs().max(s.dx.abs())
                    + s.size * (1.0 + self.scale_jitter) / 2.0
                    + self.pos_jitter
            })
            .fold(0.0, f64::max)
            + 1.0
    }
}

/// A rendered scene with grid-granularity labels. Background is id 0 in
/// every label grid; instance ids start at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: GrayImage,
    pub grid_h: usize,
    pub grid_w: usize,
    /// 1 where any object occupies the cell, else 0.
    pub scene_id: Vec<u16>,
    pub object_instance: Vec<u16>,
    pub part_instance: Vec<u16>,
    pub object_type: Vec<u16>,
    pub part_type: Vec<u16>,
}

impl SyntheticScene {
    /// Label grids ordered bottom-up, matching embedding levels:
    /// part instances, then object instances, then the scene.
    pub fn level_labels(&self) -> [&[u16]; 3] {
        [&self.part_instance, &self.object_instance, &self.scene_id]
    }
}

fn sample_gauss<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; consumes two uniforms per call.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct PlacedPart {
    shape: PartShape,
    cy: f64,
    cx: f64,
    size: f64,
    part_id: u16,
}

/// Render one scene: rejection-sample non-overlapping objects, paint their
/// parts back-to-front, add noise, and label grid cells by majority pixel
/// ownership (ties to the lower id). Deterministic given the rng state.
pub fn generate_scene<R: Rng>(
    rng: &mut R,
    grammar: &SceneGrammar,
    config: &GlomConfig,
) -> Result<SyntheticScene> {
    grammar.validate()?;
    let (h, w) = (config.image_h(), config.image_w());
    let n_pixels = h * w;
    let mut obj_owner = vec![0u16; n_pixels];
    let mut part_owner = vec![0u16; n_pixels];
    let mut part_shape_at = vec![0u16; n_pixels];
    let mut intensity_map = vec![grammar.background; n_pixels];

    let (lo, hi) = grammar.object_count;
    let n_objects = if hi > lo { rng.gen_range(lo..=hi) } else { lo };

    // Evenly spaced instance intensities in shuffled order, so any two
    // objects in a scene render at clearly different levels.
    let mut intensities: Vec<f64> = (0..n_objects.max(1))
        .map(|i| {
            let frac =
                if n_objects > 1 { i as f64 / (n_objects - 1) as f64 } else { 0.5 };
            grammar.intensity.0 + frac * (grammar.intensity.1 - grammar.intensity.0)
        })
        .collect();
    for i in (1..intensities.len()).rev() {
        let j = rng.gen_range(0..=i);
        intensities.swap(i, j);
    }

    let mut object_types = Vec::with_capacity(n_objects);
    let mut next_part_id: u16 = 1;
    let mut tries = 0usize;

    for obj_idx in 0..n_objects {
        let obj_id = (obj_idx + 1) as u16;
        let type_idx = rng.gen_range(0..grammar.templates.len());
        let template = &grammar.templates[type_idx];
        let reach = grammar.reach(template);
        if 2.0 * reach >= h.min(w) as f64 {
            return Err(GlomError::config("grammar templates do not fit the image"));
        }

        loop {
            tries += 1;
            if tries > 1000 {
                return Err(GlomError::config(
                    "rejection sampling exceeded 1000 tries; grammar too crowded",
                ));
            }
            let cy = rng.gen_range(reach..h as f64 - reach);
            let cx = rng.gen_range(reach..w as f64 - reach);
            let mut parts = Vec::with_capacity(template.slots.len());
            for slot in &template.slots {
                let shape = slot.shapes[rng.gen_range(0..slot.shapes.len())];
                let jy = rng.gen_range(-grammar.pos_jitter..=grammar.pos_jitter);
                let jx = rng.gen_range(-grammar.pos_jitter..=grammar.pos_jitter);
                let scale = 1.0 + rng.gen_range(-grammar.scale_jitter..=grammar.scale_jitter);
                parts.push(PlacedPart {
                    shape,
                    cy: cy + slot.dy + jy,
                    cx: cx + slot.dx + jx,
                    size: slot.size * scale,
                    part_id: 0,
                });
            }

            // Collision test against previously placed objects.
            let mut collides = false;
            'scan: for part in &parts {
                let r0 = (part.cy - part.size).floor().max(0.0) as usize;
                let r1 = ((part.cy + part.size).ceil() as usize).min(h - 1);
                let c0 = (part.cx - part.size).floor().max(0.0) as usize;
                let c1 = ((part.cx + part.size).ceil() as usize).min(w - 1);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        if part.shape.contains(r as f64 - part.cy, c as f64 - part.cx, part.size)
                            && obj_owner[r * w + c] != 0
                        {
                            collides = true;
                            break 'scan;
                        }
                    }
                }
            }
            if collides {
                continue;
            }

            // Paint. Later slots of the same object overwrite earlier ones.
            for mut part in parts {
                part.part_id = next_part_id;
                next_part_id += 1;
                let r0 = (part.cy - part.size).floor().max(0.0) as usize;
                let r1 = ((part.cy + part.size).ceil() as usize).min(h - 1);
                let c0 = (part.cx - part.size).floor().max(0.0) as usize;
                let c1 = ((part.cx + part.size).ceil() as usize).min(w - 1);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        if part.shape.contains(r as f64 - part.cy, c as f64 - part.cx, part.size) {
                            let px = r * w + c;
                            obj_owner[px] = obj_id;
                            part_owner[px] = part.part_id;
                            part_shape_at[px] = part.shape.type_id();
                            intensity_map[px] = intensities[obj_idx];
                        }
                    }
                }
            }
            object_types.push((type_idx + 1) as u16);
            break;
        }
    }

    // Noise, clamp, and quantization through f32 (the dataset stores f32, so
    // keeping f32-representable values makes the round trip exact).
    let mut pixels = Vec::with_capacity(n_pixels);
    for &v in &intensity_map {
        let noisy = (v + grammar.noise_sigma * sample_gauss(rng)).clamp(0.0, 1.0);
        pixels.push(noisy as f32 as f64);
    }
    let image = GrayImage::new(h, w, pixels)?;

    // Grid labels by majority pixel ownership within each patch.
    let (gh, gw, p) = (config.grid_h, config.grid_w, config.patch);
    let size = gh * gw;
    let mut object_instance = vec![0u16; size];
    let mut part_instance = vec![0u16; size];
    let mut object_type = vec![0u16; size];
    let mut part_type = vec![0u16; size];
    let mut scene_id = vec![0u16; size];
    for gr in 0..gh {
        for gc in 0..gw {
            let cell = gr * gw + gc;
            let mut obj_counts: std::collections::HashMap<u16, usize> = Default::default();
            for dr in 0..p {
                for dc in 0..p {
                    let px = (gr * p + dr) * w + (gc * p + dc);
                    *obj_counts.entry(obj_owner[px]).or_insert(0) += 1;
                }
            }
            // Majority object (background id 0 participates); ties -> lower id.
            let (&winner, _) = obj_counts
                .iter()
                .max_by(|(ida, na), (idb, nb)| na.cmp(nb).then_with(|| idb.cmp(ida)))
                .unwrap();
            if winner == 0 {
                continue;
            }
            // Majority part among pixels of the winning object, preserving
            // the nesting of part ids inside object ids.
            let mut part_counts: std::collections::HashMap<u16, usize> = Default::default();
            let mut shape_of_part: std::collections::HashMap<u16, u16> = Default::default();
            for dr in 0..p {
                for dc in 0..p {
                    let px = (gr * p + dr) * w + (gc * p + dc);
                    if obj_owner[px] == winner {
                        *part_counts.entry(part_owner[px]).or_insert(0) += 1;
                        shape_of_part.insert(part_owner[px], part_shape_at[px]);
                    }
                }
            }
            let (&part_winner, _) = part_counts
                .iter()
                .max_by(|(ida, na), (idb, nb)| na.cmp(nb).then_with(|| idb.cmp(ida)))
                .unwrap();
            object_instance[cell] = winner;
            part_instance[cell] = part_winner;
            object_type[cell] = object_types[winner as usize - 1];
            part_type[cell] = shape_of_part[&part_winner];
            scene_id[cell] = 1;
        }
    }

    Ok(SyntheticScene {
        image,
        grid_h: gh,
        grid_w: gw,
        scene_id,
        object_instance,
        part_instance,
        object_type,
        part_type,
    })
}

/// Generate `count` scenes from per-scene rngs derived off one master seed.
pub fn generate_dataset(
    seed: u64,
    count: usize,
    grammar: &SceneGrammar,
    config: &GlomConfig,
) -> Result<Vec<SyntheticScene>> {
    (0..count)
        .map(|i| {
            let mut rng = derived_rng(seed, "scene", i as u64);
            generate_scene(&mut rng, grammar, config)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dataset format: magic "GDAT", u32 version, u32 count, u32 image_h,
// image_w, grid_h, grid_w, then per scene the f32 pixel array followed by
// the five u16 label grids (scene, object instance, part instance, object
// type, part type), little-endian.
// ---------------------------------------------------------------------------

pub const DATASET_MAGIC: &[u8; 4] = b"GDAT";
pub const DATASET_VERSION: u32 = 1;

pub fn save_dataset<W: Write>(w: &mut W, scenes: &[SyntheticScene]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(scenes.len() as u32).to_le_bytes())?;
    let (ih, iw, gh, gw) = scenes
        .first()
        .map(|s| (s.image.h, s.image.w, s.grid_h, s.grid_w))
        .unwrap_or((0, 0, 0, 0));
    for v in [ih, iw, gh, gw] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for scene in scenes {
        if (scene.image.h, scene.image.w, scene.grid_h, scene.grid_w) != (ih, iw, gh, gw) {
            return Err(GlomError::usage("scenes in one dataset must share extents"));
        }
        for &v in &scene.image.pixels {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for labels in [
            &scene.scene_id,
            &scene.object_instance,
            &scene.part_instance,
            &scene.object_type,
            &scene.part_type,
        ] {
            for &v in labels.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn load_dataset<R: Read>(r: &mut R) -> Result<Vec<SyntheticScene>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| GlomError::format("not a GLOM dataset"))?;
    if &magic != DATASET_MAGIC {
        return Err(GlomError::format("not a GLOM dataset"));
    }
    let mut b4 = [0u8; 4];
    let mut next_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut b4).map_err(|_| GlomError::format("truncated dataset"))?;
        Ok(u32::from_le_bytes(b4))
    };
    let version = next_u32(r)?;
    if version != DATASET_VERSION {
        return Err(GlomError::format(format!("unsupported dataset version {version}")));
    }
    let count = next_u32(r)? as usize;
    let ih = next_u32(r)? as usize;
    let iw = next_u32(r)? as usize;
    let gh = next_u32(r)? as usize;
    let gw = next_u32(r)? as usize;

    let mut scenes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pixels = Vec::with_capacity(ih * iw);
        let mut bf = [0u8; 4];
        for _ in 0..ih * iw {
            r.read_exact(&mut bf).map_err(|_| GlomError::format("truncated dataset"))?;
            pixels.push(f32::from_le_bytes(bf) as f64);
        }
        let mut read_labels = |r: &mut R| -> Result<Vec<u16>> {
            let mut out = Vec::with_capacity(gh * gw);
            let mut b2 = [0u8; 2];
            for _ in 0..gh * gw {
                r.read_exact(&mut b2).map_err(|_| GlomError::format("truncated dataset"))?;
                out.push(u16::from_le_bytes(b2));
            }
            Ok(out)
        };
        let scene_id = read_labels(r)?;
        let object_instance = read_labels(r)?;
        let part_instance = read_labels(r)?;
        let object_type = read_labels(r)?;
        let part_type = read_labels(r)?;
        scenes.push(SyntheticScene {
            image: GrayImage::new(ih, iw, pixels)?,
            grid_h: gh,
            grid_w: gw,
            scene_id,
            object_instance,
            part_instance,
            object_type,
            part_type,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(GlomError::format("trailing bytes after dataset payload"));
    }
    Ok(scenes)
}

pub fn save_dataset_to_path(path: &std::path::Path, scenes: &[SyntheticScene]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_dataset(&mut out, scenes)
}

pub fn load_dataset_from_path(path: &std::path::Path) -> Result<Vec<SyntheticScene>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    load_dataset(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_setup() -> (SceneGrammar, GlomConfig) {
        (SceneGrammar::standard(&GrammarConfig::default()), GlomConfig::default())
    }

    #[test]
    fn empty_range_gives_blank_scene() {
        let (mut grammar, cfg) = default_setup();
        grammar.object_count = (0, 0);
        let mut rng = derived_rng(1, "t", 0);
        let scene = generate_scene(&mut rng, &grammar, &cfg).unwrap();
        assert!(scene.object_instance.iter().all(|&v| v == 0));
        assert!(scene.part_instance.iter().all(|&v| v == 0));
        assert!(scene.scene_id.iter().all(|&v| v == 0));
        // Background plus noise only.
        let mean: f64 =
            scene.image.pixels.iter().sum::<f64>() / scene.image.pixels.len() as f64;
        assert!((mean - grammar.background).abs() < 0.01);
    }

    #[test]
    fn single_object_ids_cover_identical_cells() {
        let (mut grammar, cfg) = default_setup();
        grammar.object_count = (1, 1);
        // Single-part template.
        grammar.templates = vec![ObjectTemplate {
            slots: vec![PartSlot { dy: 0.0, dx: 0.0, shapes: vec![PartShape::Disc], size: 12.0 }],
        }];
        let mut rng = derived_rng(2, "t", 0);
        let scene = generate_scene(&mut rng, &grammar, &cfg).unwrap();
        let obj_cells: Vec<usize> = (0..scene.object_instance.len())
            .filter(|&i| scene.object_instance[i] != 0)
            .collect();
        let part_cells: Vec<usize> = (0..scene.part_instance.len())
            .filter(|&i| scene.part_instance[i] != 0)
            .collect();
        assert!(!obj_cells.is_empty());
        assert_eq!(obj_cells, part_cells);
        // Exactly one nonzero object id and one nonzero part id.
        let mut obj_ids: Vec<u16> =
            scene.object_instance.iter().copied().filter(|&v| v != 0).collect();
        obj_ids.dedup();
        assert_eq!(obj_ids.iter().collect::<std::collections::HashSet<_>>().len(), 1);
        let part_ids: std::collections::HashSet<u16> =
            scene.part_instance.iter().copied().filter(|&v| v != 0).collect();
        assert_eq!(part_ids.len(), 1);
    }

    #[test]
    fn mean_object_count_matches_range() {
        let (mut grammar, cfg) = default_setup();
        grammar.object_count = (2, 2);
        let scenes = generate_dataset(3, 100, &grammar, &cfg).unwrap();
        let mean: f64 = scenes
            .iter()
            .map(|s| {
                s.object_instance.iter().copied().filter(|&v| v != 0).collect::<std::collections::HashSet<_>>().len() as f64
            })
            .sum::<f64>()
            / scenes.len() as f64;
        assert!((mean - 2.0).abs() <= 0.1, "mean object count {mean}");
    }

    #[test]
    fn label_nesting_holds_everywhere() {
        let (grammar, cfg) = default_setup();
        let scenes = generate_dataset(4, 50, &grammar, &cfg).unwrap();
        for scene in &scenes {
            let mut part_to_obj: std::collections::HashMap<u16, u16> = Default::default();
            for i in 0..scene.part_instance.len() {
                let (p, o) = (scene.part_instance[i], scene.object_instance[i]);
                assert_eq!(p == 0, o == 0, "background must be 0 at every level");
                if p != 0 {
                    let prev = part_to_obj.insert(p, o);
                    if let Some(prev) = prev {
                        assert_eq!(prev, o, "part instance {p} spans two objects");
                    }
                    assert_eq!(scene.scene_id[i], 1);
                }
            }
        }
    }

    #[test]
    fn nonzero_cells_have_object_pixels() {
        let (grammar, cfg) = default_setup();
        let scenes = generate_dataset(5, 20, &grammar, &cfg).unwrap();
        for scene in &scenes {
            for gr in 0..scene.grid_h {
                for gc in 0..scene.grid_w {
                    let cell = gr * scene.grid_w + gc;
                    if scene.object_instance[cell] == 0 {
                        continue;
                    }
                    // The majority owner must show up as clearly non-background
                    // intensity somewhere in the patch (background is dark).
                    let mut any = false;
                    for dr in 0..cfg.patch {
                        for dc in 0..cfg.patch {
                            let v = scene.image.get(gr * cfg.patch + dr, gc * cfg.patch + dc);
                            if v > grammar.background + 0.15 {
                                any = true;
                            }
                        }
                    }
                    assert!(any, "cell ({gr},{gc}) labeled nonzero without object pixels");
                }
            }
        }
    }

    #[test]
    fn object_types_roughly_uniform() {
        let (mut grammar, cfg) = default_setup();
        grammar.object_count = (1, 1);
        let scenes = generate_dataset(6, 500, &grammar, &cfg).unwrap();
        let mut counts = [0usize; 3];
        for scene in &scenes {
            let t = scene.object_type.iter().copied().find(|&v| v != 0).unwrap();
            counts[t as usize - 1] += 1;
        }
        let expect = 500.0 / 3.0;
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - expect).abs() / expect;
            assert!(dev <= 0.2, "type {i} frequency {c} deviates {dev:.2} from uniform");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (grammar, cfg) = default_setup();
        let a = generate_dataset(7, 5, &grammar, &cfg).unwrap();
        let b = generate_dataset(7, 5, &grammar, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_round_trip_and_corruption() {
        let (grammar, cfg) = default_setup();
        let scenes = generate_dataset(8, 6, &grammar, &cfg).unwrap();
        let mut bytes = Vec::new();
        save_dataset(&mut bytes, &scenes).unwrap();
        let loaded = load_dataset(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded, scenes);

        // Truncated file: an error, never partial data.
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(load_dataset(&mut &cut[..]), Err(GlomError::Format(_))));

        // Corrupted magic.
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        let err = load_dataset(&mut bad.as_slice()).unwrap_err();
        assert!(err.to_string().contains("not a GLOM dataset"), "{err}");
    }
}
