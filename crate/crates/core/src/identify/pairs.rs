use serde::{Deserialize, Serialize};

use super::samples::Samples;

/// Two samples whose reduced coordinates (nearly) coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub i: usize,
    pub j: usize,
    /// `‖y_i - y_j‖∞`.
    pub y_distance: f64,
    /// `C(x_i) - C(x_j)`.
    pub c_gap: f64,
    pub g_at_yi: Option<f64>,
}

impl MatchedPair {
    pub fn between(samples: &Samples, i: usize, j: usize) -> Self {
        MatchedPair {
            i,
            j,
            y_distance: samples.y_distance(i, j),
            c_gap: samples.c[i] - samples.c[j],
            g_at_yi: samples.g.as_ref().map(|g| g[i]),
        }
    }
}

fn sort_pairs(pairs: &mut [MatchedPair]) {
    pairs.sort_by(|a, b| {
        a.y_distance
            .total_cmp(&b.y_distance)
            .then(b.c_gap.abs().total_cmp(&a.c_gap.abs()))
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    });
}

/// All pairs `i < j` with `‖y_i - y_j‖∞ <= d_tol` and `C(x_i) != C(x_j)`,
/// closest first, larger C gap first among equals.
pub fn find_matched_pairs(samples: &Samples, d_tol: f64) -> Vec<MatchedPair> {
    let m = samples.len();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if samples.c[i] == samples.c[j] {
                continue;
            }
            let dist = samples.y_distance(i, j);
            if dist <= d_tol {
                pairs.push(MatchedPair::between(samples, i, j));
            }
        }
    }
    sort_pairs(&mut pairs);
    pairs
}

/// The `count` closest pairs by `y` regardless of their C gap, for
/// diagnosing an empty pair search.
pub fn nearest_misses(samples: &Samples, count: usize) -> Vec<MatchedPair> {
    let m = samples.len();
    if count == 0 {
        return Vec::new();
    }
    // Bounded selection: the full pair list is quadratic in m.
    let mut best: Vec<MatchedPair> = Vec::with_capacity(count + 1);
    for i in 0..m {
        for j in i + 1..m {
            let dist = samples.y_distance(i, j);
            if best.len() == count && dist > best[count - 1].y_distance {
                continue;
            }
            best.push(MatchedPair::between(samples, i, j));
            sort_pairs(&mut best);
            best.truncate(count);
        }
    }
    best
}
