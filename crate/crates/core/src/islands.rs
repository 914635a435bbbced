//! Islands of near-identical vectors per level, the parse tree they form,
//! and segmentation scoring against ground truth.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{GlomError, Result};
use crate::settle::ColumnGridState;

/// Cosine similarity in [-1, 1]. A zero vector is degenerate and compares
/// as 0 to everything, with a warning.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = crate::tensor::dot(u, u).sqrt();
    let nv = crate::tensor::dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        log::warn!("cosine of a zero vector is defined as 0 (degenerate embedding)");
        return 0.0;
    }
    crate::tensor::dot(u, v) / (nu * nv)
}

/// Per-location island ids at one level, dense in 0..n_islands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub grid_h: usize,
    pub grid_w: usize,
    pub ids: Vec<usize>,
    pub n_islands: usize,
}

/// A 4-connected region whose adjacent members agree above the level's
/// cosine threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Island {
    pub level: usize,
    /// Member locations (raster indices), ascending.
    pub members: Vec<usize>,
    /// Mean of the member embeddings.
    pub centroid: Vec<f64>,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of the 4-neighbor grid graph keeping only edges
/// whose endpoint embeddings have cosine >= tau. Ids are assigned in raster
/// order of each island's first member.
pub fn find_islands(
    level_grid: &[&[f64]],
    grid_h: usize,
    grid_w: usize,
    level: usize,
    tau: f64,
) -> Result<(Labeling, Vec<Island>)> {
    if !(0.0..1.0).contains(&tau) || tau == 0.0 {
        return Err(GlomError::usage(format!("tau must lie in (0, 1), got {tau}")));
    }
    if level_grid.len() != grid_h * grid_w {
        return Err(GlomError::config("level grid does not match extents"));
    }
    let size = grid_h * grid_w;
    let mut dsu = DisjointSet::new(size);
    for r in 0..grid_h {
        for c in 0..grid_w {
            let loc = r * grid_w + c;
            if c + 1 < grid_w && cosine(level_grid[loc], level_grid[loc + 1]) >= tau {
                dsu.union(loc, loc + 1);
            }
            if r + 1 < grid_h && cosine(level_grid[loc], level_grid[loc + grid_w]) >= tau {
                dsu.union(loc, loc + grid_w);
            }
        }
    }

    let mut root_to_id: HashMap<usize, usize> = HashMap::new();
    let mut ids = vec![0usize; size];
    for loc in 0..size {
        let root = dsu.find(loc);
        let next = root_to_id.len();
        let id = *root_to_id.entry(root).or_insert(next);
        ids[loc] = id;
    }
    let n_islands = root_to_id.len();

    let dim = if size > 0 { level_grid[0].len() } else { 0 };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_islands];
    let mut centroids = vec![vec![0.0; dim]; n_islands];
    for loc in 0..size {
        let id = ids[loc];
        members[id].push(loc);
        for (acc, v) in centroids[id].iter_mut().zip(level_grid[loc]) {
            *acc += v;
        }
    }
    let islands = members
        .into_iter()
        .zip(centroids)
        .map(|(m, mut cen)| {
            let n = m.len() as f64;
            for v in &mut cen {
                *v /= n;
            }
            Island { level, members: m, centroid: cen }
        })
        .collect();

    Ok((Labeling { grid_h, grid_w, ids, n_islands }, islands))
}

pub fn find_islands_in_state(
    state: &ColumnGridState,
    level: usize,
    tau: f64,
) -> Result<(Labeling, Vec<Island>)> {
    let grid = state.level_grid(level);
    find_islands(&grid, state.grid_h, state.grid_w, level, tau)
}

/// One parse-tree node: an island plus its parent at the level above.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub island: Island,
    /// Island id at level + 1 containing the plurality of this island's
    /// members; None only at the top level.
    pub parent: Option<usize>,
}

/// Islands at every level with plurality-containment parent links.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseTree {
    /// levels[l] are the nodes of level l; node index == island id.
    pub levels: Vec<Vec<TreeNode>>,
    pub labelings: Vec<Labeling>,
}

/// Build the parse tree of a state: islands per level via [`find_islands`],
/// parent = island above holding the plurality of member locations, ties
/// broken by the larger overlapping island, then the lower id.
pub fn extract_parse_tree(state: &ColumnGridState, tau: &[f64]) -> Result<ParseTree> {
    if state.levels < 2 {
        return Err(GlomError::usage("parse tree needs at least 2 levels"));
    }
    if tau.len() != state.levels {
        return Err(GlomError::usage("one tau per level required"));
    }
    let mut labelings = Vec::with_capacity(state.levels);
    let mut islands_per_level = Vec::with_capacity(state.levels);
    for level in 0..state.levels {
        let (lab, isl) = find_islands_in_state(state, level, tau[level])?;
        labelings.push(lab);
        islands_per_level.push(isl);
    }

    let mut levels = Vec::with_capacity(state.levels);
    for (level, islands) in islands_per_level.iter().enumerate() {
        let mut nodes = Vec::with_capacity(islands.len());
        for island in islands {
            let parent = if level + 1 == state.levels {
                None
            } else {
                let above = &labelings[level + 1];
                let mut overlap: HashMap<usize, usize> = HashMap::new();
                for &loc in &island.members {
                    *overlap.entry(above.ids[loc]).or_insert(0) += 1;
                }
                let best = overlap
                    .into_iter()
                    .max_by(|&(ida, na), &(idb, nb)| {
                        na.cmp(&nb)
                            .then_with(|| {
                                let sa = islands_per_level[level + 1][ida].members.len();
                                let sb = islands_per_level[level + 1][idb].members.len();
                                sa.cmp(&sb)
                            })
                            .then_with(|| idb.cmp(&ida))
                    })
                    .map(|(id, _)| id);
                best
            };
            nodes.push(TreeNode { island: island.clone(), parent });
        }
        levels.push(nodes);
    }
    Ok(ParseTree { levels, labelings })
}

impl ParseTree {
    /// Distinct islands at one level whose centroids match within tau even
    /// though connectivity keeps them apart (a disconnected entity shows up
    /// as several nodes sharing a centroid).
    pub fn matching_centroid_pairs(&self, level: usize, tau: f64) -> Vec<(usize, usize)> {
        let nodes = &self.levels[level];
        let mut out = Vec::new();
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if cosine(&nodes[i].island.centroid, &nodes[j].island.centroid) >= tau {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Standard adjusted Rand index between two labelings of the same locations.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GlomError::usage("labelings differ in length"));
    }
    if a.len() < 2 {
        return Err(GlomError::usage("adjusted Rand index is undefined below 2 elements"));
    }
    let n = a.len();
    let mut contingency: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *contingency.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let choose2 = |m: u64| -> f64 { (m * m.saturating_sub(1)) as f64 / 2.0 };
    let sum_ij: f64 = contingency.values().map(|&m| choose2(m)).sum();
    let sum_a: f64 = rows.values().map(|&m| choose2(m)).sum();
    let sum_b: f64 = cols.values().map(|&m| choose2(m)).sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        // Both partitions are trivial (all-singletons or one cluster each
        // way), which only ties out when they are identical partitions.
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / denom)
}

/// Per-level island statistics of a settled state.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelIslandStats {
    pub level: usize,
    pub count: usize,
    pub mean_size: f64,
    /// (size, islands of that size), ascending by size.
    pub size_histogram: Vec<(usize, usize)>,
}

pub fn island_stats(state: &ColumnGridState, tau: &[f64]) -> Result<Vec<LevelIslandStats>> {
    if tau.len() != state.levels {
        return Err(GlomError::usage("one tau per level required"));
    }
    let mut out = Vec::with_capacity(state.levels);
    for level in 0..state.levels {
        let (_, islands) = find_islands_in_state(state, level, tau[level])?;
        let count = islands.len();
        let mut hist: HashMap<usize, usize> = HashMap::new();
        for island in &islands {
            *hist.entry(island.members.len()).or_insert(0) += 1;
        }
        let mut size_histogram: Vec<(usize, usize)> = hist.into_iter().collect();
        size_histogram.sort_unstable();
        out.push(LevelIslandStats {
            level,
            count,
            mean_size: state.grid_size() as f64 / count.max(1) as f64,
            size_histogram,
        });
    }
    Ok(out)
}

/// One text line per grid row, space-separated island ids.
pub fn labeling_to_text(lab: &Labeling) -> String {
    let mut out = String::new();
    for r in 0..lab.grid_h {
        let row: Vec<String> =
            (0..lab.grid_w).map(|c| lab.ids[r * lab.grid_w + c].to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// One node per line: `level id parent size` with `-` for the missing
/// parent of top-level nodes.
pub fn tree_to_text(tree: &ParseTree) -> String {
    let mut out = String::new();
    for nodes in &tree.levels {
        for (id, node) in nodes.iter().enumerate() {
            let parent =
                node.parent.map(|p| p.to_string()).unwrap_or_else(|| "-".to_string());
            writeln!(
                out,
                "{} {} {} {}",
                node.island.level,
                id,
                parent,
                node.island.members.len()
            )
            .unwrap();
        }
    }
    out
}

/// Rows parsed back from [`tree_to_text`]: (level, id, parent, size).
pub fn parse_tree_text(text: &str) -> Result<Vec<(usize, usize, Option<usize>, usize)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(GlomError::format(format!("tree line {} malformed: {line:?}", ln + 1)));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| GlomError::format(format!("bad integer {s:?} on line {}", ln + 1)))
        };
        let parent = if fields[2] == "-" { None } else { Some(parse(fields[2])?) };
        out.push((parse(fields[0])?, parse(fields[1])?, parent, parse(fields[3])?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_refs(vs: &[Vec<f64>]) -> Vec<&[f64]> {
        vs.iter().map(|v| v.as_slice()).collect()
    }

    fn state_from_vectors(levels: usize, h: usize, w: usize, per_level: &[Vec<Vec<f64>>]) -> ColumnGridState {
        let dim = per_level[0][0].len();
        let mut s = ColumnGridState::zeroed(levels, h, w, dim, 0);
        for (level, vectors) in per_level.iter().enumerate() {
            for (loc, v) in vectors.iter().enumerate() {
                s.embedding_mut(level, loc).copy_from_slice(v);
            }
        }
        s
    }

    // ---- cosine ----

    #[test]
    fn cosine_examples() {
        let v = vec![0.3, -0.7, 2.0];
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]) - 0.70710678).abs() < 1e-8);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    // ---- find_islands ----

    #[test]
    fn uniform_grid_is_one_island() {
        let vs = vec![vec![0.5, 0.5]; 12];
        let (lab, islands) = find_islands(&grid_refs(&vs), 3, 4, 0, 0.9).unwrap();
        assert_eq!(lab.n_islands, 1);
        assert_eq!(islands.len(), 1);
        assert_eq!(islands[0].members.len(), 12);
        assert!(lab.ids.iter().all(|&id| id == 0));
    }

    #[test]
    fn checkerboard_of_orthogonal_vectors_is_all_singletons() {
        // 2x2 checkerboard of two orthogonal vectors at tau = 0.9: every
        // 4-neighbor edge crosses the orthogonal pair, so 4 singletons.
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let vs = vec![a.clone(), b.clone(), b, a];
        let (lab, islands) = find_islands(&grid_refs(&vs), 2, 2, 0, 0.9).unwrap();
        assert_eq!(lab.n_islands, 4);
        assert_eq!(islands.iter().map(|i| i.members.len()).sum::<usize>(), 4);
        assert_eq!(lab.ids, vec![0, 1, 2, 3]); // raster order of first member
    }

    #[test]
    fn iid_random_unit_vectors_are_singletons_at_high_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (h, w, d) = (6, 6, 32);
        let vs: Vec<Vec<f64>> = (0..h * w)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                crate::tape::rms_norm_values(&crate::tensor::Tensor::vector(v)).data().to_vec()
            })
            .collect();
        let (lab, _) = find_islands(&grid_refs(&vs), h, w, 0, 0.99).unwrap();
        assert_eq!(lab.n_islands, h * w);
    }

    /// Brute-force oracle: breadth-first flood fill over thresholded edges,
    /// with an independently written cosine. Must match exactly on 200
    /// random 6x6 states across three thresholds.
    #[test]
    fn matches_flood_fill_oracle() {
        fn oracle(vs: &[Vec<f64>], h: usize, w: usize, tau: f64) -> Vec<usize> {
            let cos = |a: &[f64], b: &[f64]| -> f64 {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for i in 0..a.len() {
                    ab += a[i] * b[i];
                    aa += a[i] * a[i];
                    bb += b[i] * b[i];
                }
                if aa == 0.0 || bb == 0.0 {
                    0.0
                } else {
                    ab / (aa.sqrt() * bb.sqrt())
                }
            };
            let size = h * w;
            let mut ids = vec![usize::MAX; size];
            let mut next_id = 0;
            for start in 0..size {
                if ids[start] != usize::MAX {
                    continue;
                }
                let mut queue = vec![start];
                ids[start] = next_id;
                while let Some(loc) = queue.pop() {
                    let (r, c) = (loc / w, loc % w);
                    let mut neighbors = Vec::new();
                    if r > 0 {
                        neighbors.push(loc - w);
                    }
                    if r + 1 < h {
                        neighbors.push(loc + w);
                    }
                    if c > 0 {
                        neighbors.push(loc - 1);
                    }
                    if c + 1 < w {
                        neighbors.push(loc + 1);
                    }
                    for nb in neighbors {
                        if ids[nb] == usize::MAX && cos(&vs[loc], &vs[nb]) >= tau {
                            ids[nb] = next_id;
                            queue.push(nb);
                        }
                    }
                }
                next_id += 1;
            }
            ids
        }

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for case in 0..200 {
            // Mix smooth and blocky states so thresholds actually bite.
            let (h, w, d) = (6, 6, 4);
            let blocky = case % 2 == 0;
            let vs: Vec<Vec<f64>> = (0..h * w)
                .map(|loc| {
                    if blocky {
                        let quadrant = (loc / w / 3) * 2 + (loc % w) / 3;
                        let mut v = vec![0.2; d];
                        v[quadrant % d] = 1.0;
                        if rng.gen::<f64>() < 0.2 {
                            v[(quadrant + 1) % d] += rng.gen::<f64>();
                        }
                        v
                    } else {
                        (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
                    }
                })
                .collect();
            for tau in [0.5, 0.9, 0.99] {
                let (lab, _) = find_islands(&grid_refs(&vs), h, w, 0, tau).unwrap();
                let expect = oracle(&vs, h, w, tau);
                // The oracle also assigns ids by raster order of first member.
                assert_eq!(lab.ids, expect, "case {case} tau {tau}");
            }
        }
    }

    #[test]
    fn raising_tau_never_merges_islands() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let (h, w, d) = (5, 5, 3);
            let vs: Vec<Vec<f64>> =
                (0..h * w).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
            let mut last = 0;
            for tau in [0.3, 0.5, 0.7, 0.9, 0.99] {
                let (lab, _) = find_islands(&grid_refs(&vs), h, w, 0, tau).unwrap();
                assert!(lab.n_islands >= last, "tau {tau} decreased island count");
                last = lab.n_islands;
            }
        }
    }

    /// Labeling is invariant under one global rotation of all embeddings.
    #[test]
    fn labeling_invariant_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let d = 4;
        // Random orthogonal matrix via Gram-Schmidt.
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < d {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            for u in &q {
                let proj = crate::tensor::dot(&v, u);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= proj * ui;
                }
            }
            let norm = crate::tensor::dot(&v, &v).sqrt();
            if norm > 1e-6 {
                q.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let rotate = |v: &[f64]| -> Vec<f64> {
            q.iter().map(|row| crate::tensor::dot(row, v)).collect()
        };

        let (h, w) = (4, 4);
        let vs: Vec<Vec<f64>> = (0..h * w)
            .map(|loc| {
                let group = loc % 3;
                let mut v = vec![0.1; d];
                v[group] = 1.0;
                v.iter_mut().for_each(|x| *x += rng.gen::<f64>() * 0.01);
                v
            })
            .collect();
        let rotated: Vec<Vec<f64>> = vs.iter().map(|v| rotate(v)).collect();
        for tau in [0.5, 0.9] {
            let (a, _) = find_islands(&grid_refs(&vs), h, w, 0, tau).unwrap();
            let (b, _) = find_islands(&grid_refs(&rotated), h, w, 0, tau).unwrap();
            assert_eq!(a.ids, b.ids, "rotation changed labeling at tau {tau}");
        }
    }

    // ---- parse tree ----

    #[test]
    fn uniform_levels_make_a_chain() {
        let v = vec![vec![1.0, 1.0]; 9];
        let s = state_from_vectors(3, 3, 3, &[v.clone(), v.clone(), v]);
        let tree = extract_parse_tree(&s, &[0.9, 0.9, 0.9]).unwrap();
        for (level, nodes) in tree.levels.iter().enumerate() {
            assert_eq!(nodes.len(), 1, "level {level}");
        }
        assert_eq!(tree.levels[0][0].parent, Some(0));
        assert_eq!(tree.levels[1][0].parent, Some(0));
        assert_eq!(tree.levels[2][0].parent, None);
    }

    /// Top level one island, level below split into halves: a root with two
    /// children.
    #[test]
    fn root_with_two_children() {
        let (h, w) = (2, 4);
        let left = vec![1.0, 0.0];
        let right = vec![0.0, 1.0];
        let bottom: Vec<Vec<f64>> = (0..h * w)
            .map(|loc| if loc % w < 2 { left.clone() } else { right.clone() })
            .collect();
        let top = vec![vec![1.0, 1.0]; h * w];
        let s = state_from_vectors(2, h, w, &[bottom, top]);
        let tree = extract_parse_tree(&s, &[0.9, 0.9]).unwrap();
        assert_eq!(tree.levels[1].len(), 1);
        assert_eq!(tree.levels[0].len(), 2);
        assert_eq!(tree.levels[0][0].parent, Some(0));
        assert_eq!(tree.levels[0][1].parent, Some(0));
    }

    /// Disconnected same-vector regions become two nodes with one parent,
    /// and are flagged as centroid twins.
    #[test]
    fn disconnected_regions_split_but_flagged() {
        let (h, w) = (1, 5);
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let bottom = vec![a.clone(), a.clone(), b, a.clone(), a];
        let top = vec![vec![1.0, 1.0]; 5];
        let s = state_from_vectors(2, h, w, &[bottom, top]);
        let tree = extract_parse_tree(&s, &[0.9, 0.9]).unwrap();
        assert_eq!(tree.levels[0].len(), 3);
        assert_eq!(tree.levels[0][0].parent, tree.levels[0][2].parent);
        let twins = tree.matching_centroid_pairs(0, 0.9);
        assert_eq!(twins, vec![(0, 2)]);
    }

    #[test]
    fn tree_is_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (h, w, d) = (4, 4, 3);
        let per_level: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| {
                (0..h * w)
                    .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
                    .collect()
            })
            .collect();
        let s = state_from_vectors(3, h, w, &per_level);
        let tree = extract_parse_tree(&s, &[0.8, 0.8, 0.8]).unwrap();
        // Every non-top node has a valid parent; top nodes none.
        for (level, nodes) in tree.levels.iter().enumerate() {
            for node in nodes {
                if level + 1 == tree.levels.len() {
                    assert!(node.parent.is_none());
                } else {
                    let p = node.parent.expect("non-top node without parent");
                    assert!(p < tree.levels[level + 1].len());
                }
            }
        }
        // Export and re-parse.
        let text = tree_to_text(&tree);
        let rows = parse_tree_text(&text).unwrap();
        let expect: usize = tree.levels.iter().map(|n| n.len()).sum();
        assert_eq!(rows.len(), expect);
    }

    // ---- ARI ----

    #[test]
    fn ari_perfect_and_chance() {
        // Equal up to renaming -> 1.
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![5, 5, 3, 3, 9, 9];
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        // All-one-cluster vs multi-cluster truth -> 0 by chance correction.
        let ones = vec![0; 6];
        assert!(adjusted_rand_index(&ones, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ari_rejects_degenerate_input() {
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ari_symmetry_and_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..20 {
            let a: Vec<usize> = (0..40).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<usize> = (0..40).map(|_| rng.gen_range(0..3)).collect();
            let ab = adjusted_rand_index(&a, &b).unwrap();
            let ba = adjusted_rand_index(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            let renamed: Vec<usize> = a.iter().map(|&x| (x + 7) * 3).collect();
            let ren = adjusted_rand_index(&renamed, &b).unwrap();
            assert!((ab - ren).abs() < 1e-12);
        }
    }

    /// Second, independent pair-counting implementation: iterate all pairs
    /// and count agreements directly, then apply the chance correction.
    #[test]
    fn ari_matches_pairwise_oracle() {
        fn oracle(a: &[usize], b: &[usize]) -> f64 {
            let n = a.len();
            let (mut both, mut in_a, mut in_b) = (0.0f64, 0.0f64, 0.0f64);
            let mut total = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    let sa = a[i] == a[j];
                    let sb = b[i] == b[j];
                    if sa && sb {
                        both += 1.0;
                    }
                    if sa {
                        in_a += 1.0;
                    }
                    if sb {
                        in_b += 1.0;
                    }
                    total += 1.0;
                }
            }
            let expected = in_a * in_b / total;
            let max_index = 0.5 * (in_a + in_b);
            (both - expected) / (max_index - expected)
        }

        let mut rng = ChaCha8Rng::seed_from_u64(27);
        // Truth with 10% of entries reassigned, fixed seed.
        let truth: Vec<usize> = (0..100).map(|i| i / 25).collect();
        let mut noisy = truth.clone();
        for x in noisy.iter_mut() {
            if rng.gen::<f64>() < 0.1 {
                *x = rng.gen_range(0..4);
            }
        }
        let got = adjusted_rand_index(&noisy, &truth).unwrap();
        let expect = oracle(&noisy, &truth);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert!(got < 1.0 && got > 0.5);
    }

    // ---- stats ----

    #[test]
    fn stats_for_uniform_and_singleton_states() {
        let v = vec![vec![1.0, 0.5]; 16];
        let s = state_from_vectors(2, 4, 4, &[v.clone(), v]);
        let stats = island_stats(&s, &[0.9, 0.9]).unwrap();
        for st in &stats {
            assert_eq!(st.count, 1);
            assert_eq!(st.mean_size, 16.0);
            assert_eq!(st.size_histogram, vec![(16, 1)]);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let vs: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..8).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let s2 = state_from_vectors(2, 4, 4, &[vs.clone(), vs]);
        let stats2 = island_stats(&s2, &[0.99, 0.99]).unwrap();
        assert_eq!(stats2[0].count, 16);
        assert_eq!(stats2[0].mean_size, 1.0);
    }

    #[test]
    fn labeling_text_layout() {
        let lab = Labeling { grid_h: 2, grid_w: 3, ids: vec![0, 0, 1, 2, 2, 1], n_islands: 3 };
        assert_eq!(labeling_to_text(&lab), "0 0 1\n2 2 1\n");
    }
}
