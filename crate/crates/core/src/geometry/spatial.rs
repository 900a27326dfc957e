//! Quality-aware spatial reconfiguration: before the auxiliary RANSAC the
//! selected matches are re-drawn across a 4x4 image grid so that sparse
//! regions keep representation, with per-bin budgets proportional to the
//! square root of bin occupancy.

use crate::feature_filter::{MatchPool, QueryFeature};

pub const GRID_ROWS: usize = 4;
pub const GRID_COLS: usize = 4;
const BIN_COUNT: usize = GRID_ROWS * GRID_COLS;

/// Occupancy and selection budget of the 4x4 query-image grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinGrid {
    pub counts: [usize; BIN_COUNT],
    pub quotas: [usize; BIN_COUNT],
}

impl BinGrid {
    /// Bin index of a pixel; positions on the far edges clamp inward.
    pub fn bin_of(pixel: [f64; 2], width: u32, height: u32) -> usize {
        let col = ((pixel[0] / width as f64 * GRID_COLS as f64) as usize).min(GRID_COLS - 1);
        let row = ((pixel[1] / height as f64 * GRID_ROWS as f64) as usize).min(GRID_ROWS - 1);
        row * GRID_COLS + col
    }

    /// Apportions `budget` across occupied bins proportionally to
    /// `sqrt(count)`, by largest remainder; empty bins get zero.
    pub fn build(counts: [usize; BIN_COUNT], budget: usize) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&n| (n as f64).sqrt()).collect();
        let total_weight: f64 = weights.iter().sum();
        let mut quotas = [0usize; BIN_COUNT];
        if total_weight <= 0.0 || budget == 0 {
            return Self { counts, quotas };
        }
        let mut remainders: Vec<(f64, usize)> = Vec::new();
        let mut assigned = 0usize;
        for b in 0..BIN_COUNT {
            if counts[b] == 0 {
                continue;
            }
            let share = weights[b] / total_weight * budget as f64;
            quotas[b] = share.floor() as usize;
            assigned += quotas[b];
            remainders.push((share - share.floor(), b));
        }
        // Largest remainder first; ties to the lower bin index.
        remainders.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).expect("finite remainder").then(a.1.cmp(&b.1))
        });
        let mut leftover = budget.saturating_sub(assigned);
        for &(_, b) in &remainders {
            if leftover == 0 {
                break;
            }
            quotas[b] += 1;
            leftover -= 1;
        }
        Self { counts, quotas }
    }
}

/// Selection comparator: higher score first, then (query, point) ids for
/// determinism.
fn by_score_desc(pool: &MatchPool, scores: &[f64], a: u32, b: u32) -> std::cmp::Ordering {
    let (ma, mb) = (&pool.matches[a as usize], &pool.matches[b as usize]);
    scores[b as usize]
        .partial_cmp(&scores[a as usize])
        .expect("finite match score")
        .then(ma.query_id.cmp(&mb.query_id))
        .then(ma.point_id.cmp(&mb.point_id))
}

/// Spatially reconfigured match selection.
///
/// Confident matches fill each bin's quota first (by score), then promoted
/// ones (by promoted score) under a global cap of `beta` times the number
/// of selected confident matches. Unused budget is redistributed in one
/// pass by global score order under the same cap. With fewer than four
/// matches available, everything passes through.
///
/// `features` must be indexed by query id.
pub fn spatial_reconfigure(
    pool: &MatchPool,
    confident: &[u32],
    promoted: &[u32],
    features: &[QueryFeature],
    image_size: (u32, u32),
    budget: usize,
    beta: f64,
) -> Vec<u32> {
    let total = confident.len() + promoted.len();
    if total < 4 {
        let mut all: Vec<u32> = confident.iter().chain(promoted.iter()).copied().collect();
        all.sort_unstable();
        return all;
    }
    let budget = budget.min(total);

    let (width, height) = image_size;
    let bin_of = |idx: u32| {
        let m = &pool.matches[idx as usize];
        BinGrid::bin_of(features[m.query_id as usize].pixel, width, height)
    };

    let mut counts = [0usize; BIN_COUNT];
    for &i in confident.iter().chain(promoted.iter()) {
        counts[bin_of(i)] += 1;
    }
    let grid = BinGrid::build(counts, budget);

    let scores: Vec<f64> = pool
        .matches
        .iter()
        .map(|m| if m.flags.vfc_i { m.promoted_score } else { m.score })
        .collect();

    let mut confident_by_bin: Vec<Vec<u32>> = vec![Vec::new(); BIN_COUNT];
    for &i in confident {
        confident_by_bin[bin_of(i)].push(i);
    }
    for bin in confident_by_bin.iter_mut() {
        bin.sort_by(|&a, &b| by_score_desc(pool, &scores, a, b));
    }

    let mut selected: Vec<u32> = Vec::with_capacity(budget);
    let mut taken = vec![false; pool.matches.len()];
    let mut used = [0usize; BIN_COUNT];

    // Confident matches per bin, best first.
    for (b, bin) in confident_by_bin.iter().enumerate() {
        for &i in bin.iter().take(grid.quotas[b]) {
            selected.push(i);
            taken[i as usize] = true;
            used[b] += 1;
        }
    }
    let mut n_confident = selected.len();
    let mut cap = (beta * n_confident as f64).floor() as usize;
    let mut n_promoted = 0usize;

    // Promoted matches fill remaining per-bin quota, best global score
    // first so the cap binds on the strongest candidates.
    let mut promoted_sorted: Vec<u32> = promoted.to_vec();
    promoted_sorted.sort_by(|&a, &b| by_score_desc(pool, &scores, a, b));
    for &i in &promoted_sorted {
        if n_promoted >= cap {
            break;
        }
        let b = bin_of(i);
        if used[b] < grid.quotas[b] {
            selected.push(i);
            taken[i as usize] = true;
            used[b] += 1;
            n_promoted += 1;
        }
    }

    // One redistribution pass for budget left behind by underfull bins:
    // leftover confident matches by score, then promoted under the cap.
    if selected.len() < budget {
        let mut rest_confident: Vec<u32> =
            confident.iter().copied().filter(|&i| !taken[i as usize]).collect();
        rest_confident.sort_by(|&a, &b| by_score_desc(pool, &scores, a, b));
        for &i in &rest_confident {
            if selected.len() >= budget {
                break;
            }
            selected.push(i);
            taken[i as usize] = true;
            n_confident += 1;
        }
        cap = (beta * n_confident as f64).floor() as usize;
        for &i in &promoted_sorted {
            if selected.len() >= budget || n_promoted >= cap {
                break;
            }
            if !taken[i as usize] {
                selected.push(i);
                taken[i as usize] = true;
                n_promoted += 1;
            }
        }
    }

    selected.sort_unstable();
    selected
}

/// Score-only selection taking the same number of confident and promoted
/// matches as a reconfigured selection would; the comparison mode for runs
/// without spatial reconfiguration.
pub fn select_by_score(
    pool: &MatchPool,
    confident: &[u32],
    promoted: &[u32],
    n_confident: usize,
    n_promoted: usize,
) -> Vec<u32> {
    let scores: Vec<f64> = pool
        .matches
        .iter()
        .map(|m| if m.flags.vfc_i { m.promoted_score } else { m.score })
        .collect();
    let mut confident_sorted = confident.to_vec();
    confident_sorted.sort_by(|&a, &b| by_score_desc(pool, &scores, a, b));
    let mut promoted_sorted = promoted.to_vec();
    promoted_sorted.sort_by(|&a, &b| by_score_desc(pool, &scores, a, b));
    let mut selected: Vec<u32> = confident_sorted
        .into_iter()
        .take(n_confident)
        .chain(promoted_sorted.into_iter().take(n_promoted))
        .collect();
    selected.sort_unstable();
    selected
}
