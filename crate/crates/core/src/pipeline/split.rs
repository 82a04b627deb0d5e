//! Stratified train/validation/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classes smaller than this go whole to the training split.
pub const MIN_SPLITTABLE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

/// Shuffle each class with `seed` and cut it by `ratios`.
///
/// Every (class, split) count is the floor or ceiling of its exact share and
/// the split totals are the largest-remainder rounding of the overall shares
/// (for 100 records: exactly 70/15/15). Such a rounding always exists; it is
/// found as a small max-flow problem.
pub fn split_dataset(labels: &[usize], n_classes: usize, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or_else(|| Error::Data(format!("label {l} with {n_classes} classes")))?
            .push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("class {c} has no records")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
    }
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        ratios,
        seed,
    };
    let mut sizes = Vec::with_capacity(n_classes);
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < MIN_SPLITTABLE {
            log::warn!("class {c} has {} record(s); all go to the training split", idx.len());
            split.train.extend_from_slice(idx);
            sizes.push(0);
        } else {
            sizes.push(idx.len());
        }
    }
    let counts = controlled_rounding(&sizes, ratios);
    for (idx, [tr, va, _]) in by_class.iter().zip(&counts) {
        if idx.len() < MIN_SPLITTABLE {
            continue;
        }
        split.train.extend_from_slice(&idx[..*tr]);
        split.val.extend_from_slice(&idx[*tr..tr + va]);
        split.test.extend_from_slice(&idx[tr + va..]);
    }
    for v in [&mut split.train, &mut split.val, &mut split.test] {
        v.sort_unstable();
    }
    Ok(split)
}

/// Largest-remainder rounding of `total * ratios`, ties to the earlier split.
fn column_targets(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| total as f64 * r);
    let mut out = exact.map(|e| (e + 1e-9).floor() as usize);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - out[b] as f64).total_cmp(&(exact[a] - out[a] as f64)).then(a.cmp(&b)));
    let mut rest = total.saturating_sub(out.iter().sum());
    for j in order.into_iter().cycle() {
        if rest == 0 {
            break;
        }
        out[j] += 1;
        rest -= 1;
    }
    out
}

/// Round the class x split table `sizes[c] * ratios[j]` so that rows sum to
/// `sizes`, columns sum to [`column_targets`], and every cell is the floor or
/// ceiling of its exact value.
fn controlled_rounding(sizes: &[usize], ratios: [f64; 3]) -> Vec<[usize; 3]> {
    const EPS: f64 = 1e-9;
    let exact: Vec<[f64; 3]> = sizes.iter().map(|&n| ratios.map(|r| n as f64 * r)).collect();
    let mut cells: Vec<[usize; 3]> = exact.iter().map(|e| e.map(|v| (v + EPS).floor() as usize)).collect();
    let targets = column_targets(sizes.iter().sum(), ratios);

    // nodes: source, classes, splits, sink
    let nc = sizes.len();
    let (src, sink) = (0, nc + 4);
    let mut cap = vec![vec![0i64; nc + 5]; nc + 5];
    for c in 0..nc {
        cap[src][1 + c] = (sizes[c] - cells[c].iter().sum::<usize>()) as i64;
        for j in 0..3 {
            if exact[c][j] - cells[c][j] as f64 > EPS {
                cap[1 + c][1 + nc + j] = 1;
            }
        }
    }
    for j in 0..3 {
        let used: usize = cells.iter().map(|r| r[j]).sum();
        cap[1 + nc + j][sink] = targets[j] as i64 - used as i64;
    }
    let mut flow = vec![vec![0i64; nc + 5]; nc + 5];
    loop {
        // breadth-first augmenting path
        let mut prev = vec![usize::MAX; nc + 5];
        prev[src] = src;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..nc + 5 {
                if prev[v] == usize::MAX && cap[u][v] - flow[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[sink] == usize::MAX {
            break;
        }
        let mut v = sink;
        while v != src {
            let u = prev[v];
            flow[u][v] += 1;
            flow[v][u] -= 1;
            v = u;
        }
    }
    for (c, row) in cells.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell += flow[1 + c][1 + nc + j].max(0) as usize;
        }
        debug_assert_eq!(row.iter().sum::<usize>(), sizes[c]);
    }
    cells
}
