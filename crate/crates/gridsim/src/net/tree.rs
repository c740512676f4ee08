//! Regression model tree for message-latency prediction.
//!
//! A binary decision tree grown by standard-deviation reduction with a
//! multivariate linear model at each leaf (the M5/Cubist family):
//! internal nodes route on `feature ≤ threshold`, leaves evaluate
//! `intercept + Σ coefᵢ·xᵢ`. Trained offline from a profiling
//! knowledge base of `(features, observed latency)` rows, then queried
//! live by the simulation; training never happens during a run.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Feature order used everywhere: slices, dumps, knowledge-base files.
pub const N_FEATURES: usize = 4;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "used_memory_bytes",
    "cpu_utilization",
    "message_size_bytes",
    "msg_rate_per_s",
];

/// Header of the knowledge-base CSV format.
pub const KB_HEADER: &str =
    "used_memory_bytes,cpu_utilization,message_size_bytes,msg_rate_per_s,latency_us";

/// One training row: feature vector plus observed latency in seconds.
pub type KbRow = ([f64; N_FEATURES], f64);

#[derive(Error, Debug)]
pub enum TreeError {
    #[error("training error: {0}")]
    Train(String),
    #[error("tree dump line {line}: {msg}")]
    Dump { line: usize, msg: String },
    #[error("knowledge base line {line}: {msg}")]
    Kb { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Training hyper-parameters.
#[derive(Clone, Copy, Debug)]
pub struct TrainParams {
    /// Minimum rows on each side of a split.
    pub min_leaf: usize,
    /// Maximum tree depth (root = depth 0).
    pub max_depth: usize,
    /// Stop splitting when the best deviation reduction is below this
    /// fraction of the node's deviation.
    pub min_sdr_fraction: f64,
    /// A leaf keeps its linear model only if its training RMSE is at
    /// most this fraction of the leaf-mean RMSE; otherwise the leaf
    /// falls back to the mean.
    pub prune_factor: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { min_leaf: 15, max_depth: 12, min_sdr_fraction: 0.05, prune_factor: 0.95 }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct LeafModel {
    pub intercept: f64,
    pub coef: [f64; N_FEATURES],
}

impl LeafModel {
    fn eval(&self, x: &[f64; N_FEATURES]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

#[derive(Clone, PartialEq, Debug)]
enum Node {
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
    Leaf { n: usize, model: LeafModel },
}

/// A trained model tree plus the feature ranges seen during training
/// (used to flag extrapolating queries).
#[derive(Clone, PartialEq, Debug)]
pub struct ModelTree {
    root: Node,
    ranges: [(f64, f64); N_FEATURES],
}

/// Prediction plus a flag marking queries outside the training ranges.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Prediction {
    pub latency: f64,
    pub extrapolated: bool,
}

impl ModelTree {
    /// Train on `rows` (at least 2, positive latencies).
    pub fn train(rows: &[KbRow], params: &TrainParams) -> Result<ModelTree, TreeError> {
        if rows.len() < 2 {
            return Err(TreeError::Train(format!(
                "need at least 2 training rows, got {}",
                rows.len()
            )));
        }
        if let Some((_, y)) = rows.iter().find(|(_, y)| !(*y > 0.0)) {
            return Err(TreeError::Train(format!("non-positive latency {y} in training set")));
        }
        if params.min_leaf == 0 || params.max_depth == 0 {
            return Err(TreeError::Train("min_leaf and max_depth must be positive".into()));
        }
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); N_FEATURES];
        for (x, _) in rows {
            for f in 0..N_FEATURES {
                ranges[f].0 = ranges[f].0.min(x[f]);
                ranges[f].1 = ranges[f].1.max(x[f]);
            }
        }
        let mut work: Vec<KbRow> = rows.to_vec();
        let root = build(&mut work, 0, params);
        Ok(ModelTree { root, ranges })
    }

    /// Evaluate the tree, clamping the result to `floor` seconds.
    pub fn predict(&self, x: &[f64; N_FEATURES], floor: f64) -> Prediction {
        let mut node = &self.root;
        loop {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
                Node::Leaf { model, .. } => {
                    let raw = model.eval(x);
                    let extrapolated = (0..N_FEATURES)
                        .any(|f| x[f] < self.ranges[f].0 || x[f] > self.ranges[f].1);
                    return Prediction { latency: raw.max(floor), extrapolated };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        fn count(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    /// Thresholds of every split on `feature`, in pre-order.
    pub fn split_thresholds(&self, feature: usize) -> Vec<f64> {
        fn walk(node: &Node, feature: usize, out: &mut Vec<f64>) {
            if let Node::Split { feature: f, threshold, left, right } = node {
                if *f == feature {
                    out.push(*threshold);
                }
                walk(left, feature, out);
                walk(right, feature, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, feature, &mut out);
        out
    }

    /// Root-mean-square prediction error over `rows` (no floor clamp
    /// interference: uses a zero floor).
    pub fn rmse(&self, rows: &[KbRow]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let se: f64 = rows
            .iter()
            .map(|(x, y)| (self.predict(x, 0.0).latency - y).powi(2))
            .sum();
        (se / rows.len() as f64).sqrt()
    }

    /// Serialize as the versioned textual dump (pre-order, one node
    /// per line). Floating-point values round-trip exactly.
    pub fn dump(&self) -> String {
        let mut out = String::from("modeltree v1\n");
        for f in 0..N_FEATURES {
            let _ = writeln!(
                out,
                "range {} {} {}",
                FEATURE_NAMES[f], self.ranges[f].0, self.ranges[f].1
            );
        }
        fn walk(node: &Node, out: &mut String) {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    let _ = writeln!(out, "split {} {}", FEATURE_NAMES[*feature], threshold);
                    walk(left, out);
                    walk(right, out);
                }
                Node::Leaf { n, model } => {
                    let mut line = format!("leaf {} {}", n, model.intercept);
                    for c in model.coef {
                        let _ = write!(line, " {c}");
                    }
                    let _ = writeln!(out, "{line}");
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Parse a dump produced by [`ModelTree::dump`].
    pub fn parse(text: &str) -> Result<ModelTree, TreeError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: String| TreeError::Dump { line: line + 1, msg };

        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty dump".into()))?;
        if header.trim() != "modeltree v1" {
            return Err(err(ln, format!("unsupported header {header:?}")));
        }
        let mut ranges = [(0.0, 0.0); N_FEATURES];
        for expect in 0..N_FEATURES {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| err(expect + 1, "missing range line".into()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["range", name, lo, hi] if *name == FEATURE_NAMES[expect] => {
                    ranges[expect] = (
                        parse_f64(lo).map_err(|m| err(ln, m))?,
                        parse_f64(hi).map_err(|m| err(ln, m))?,
                    );
                }
                _ => {
                    return Err(err(
                        ln,
                        format!("expected `range {} <lo> <hi>`", FEATURE_NAMES[expect]),
                    ))
                }
            }
        }

        fn read_node<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
        ) -> Result<Node, TreeError> {
            let (ln, line) = lines
                .next()
                .ok_or(TreeError::Dump { line: 0, msg: "truncated tree".into() })?;
            let err = |msg: String| TreeError::Dump { line: ln + 1, msg };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["split", name, threshold] => {
                    let feature = FEATURE_NAMES
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| err(format!("unknown feature {name:?}")))?;
                    let threshold = parse_f64(threshold).map_err(err)?;
                    let left = Box::new(read_node(lines)?);
                    let right = Box::new(read_node(lines)?);
                    Ok(Node::Split { feature, threshold, left, right })
                }
                ["leaf", n, intercept, rest @ ..] if rest.len() == N_FEATURES => {
                    let n: usize = n.parse().map_err(|_| err(format!("bad count {n:?}")))?;
                    let intercept = parse_f64(intercept).map_err(err)?;
                    let mut coef = [0.0; N_FEATURES];
                    for (i, tok) in rest.iter().enumerate() {
                        coef[i] = parse_f64(tok).map_err(err)?;
                    }
                    Ok(Node::Leaf { n, model: LeafModel { intercept, coef } })
                }
                _ => Err(err(format!("unrecognized node line {line:?}"))),
            }
        }

        let root = read_node(&mut lines)?;
        if let Some((ln, line)) = lines.next() {
            return Err(err(ln, format!("trailing content {line:?}")));
        }
        Ok(ModelTree { root, ranges })
    }
}

fn parse_f64(tok: &str) -> Result<f64, String> {
    tok.parse::<f64>().map_err(|_| format!("bad number {tok:?}"))
}

fn mean_and_sd(rows: &[KbRow]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|(_, y)| y).sum::<f64>() / n;
    let var = rows.iter().map(|(_, y)| (y - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

fn build(rows: &mut [KbRow], depth: usize, params: &TrainParams) -> Node {
    let (_, sd) = mean_and_sd(rows);
    let all_equal = rows.iter().all(|(_, y)| *y == rows[0].1);
    let splittable =
        rows.len() >= 2 * params.min_leaf && depth < params.max_depth && !all_equal && sd > 0.0;
    if splittable {
        if let Some((feature, threshold, sdr)) = best_split(rows, params.min_leaf) {
            if sdr >= params.min_sdr_fraction * sd {
                rows.sort_by(|a, b| a.0[feature].total_cmp(&b.0[feature]));
                let cut = rows.partition_point(|(x, _)| x[feature] <= threshold);
                let (left_rows, right_rows) = rows.split_at_mut(cut);
                let left = Box::new(build(left_rows, depth + 1, params));
                let right = Box::new(build(right_rows, depth + 1, params));
                let split = Node::Split { feature, threshold, left, right };
                // Occam collapse: when one model over the whole node is
                // (essentially) as accurate as the grown subtree, the split
                // only adds structure, so drop it. A subtree survives only
                // by beating the flat model noticeably.
                let node_model = fit_leaf(rows, params.prune_factor);
                let node_rmse = model_rmse(&node_model, rows);
                let sub_rmse = (subtree_se(&split, rows) / rows.len() as f64).sqrt();
                if node_rmse <= sub_rmse * 1.05 + 1e-12 {
                    return Node::Leaf { n: rows.len(), model: node_model };
                }
                return split;
            }
        }
    }
    Node::Leaf { n: rows.len(), model: fit_leaf(rows, params.prune_factor) }
}

fn model_rmse(model: &LeafModel, rows: &[KbRow]) -> f64 {
    let se: f64 = rows.iter().map(|(x, y)| (model.eval(x) - y).powi(2)).sum();
    (se / rows.len() as f64).sqrt()
}

/// Squared prediction error of a subtree over `rows`, routing each row
/// through the splits.
fn subtree_se(node: &Node, rows: &[KbRow]) -> f64 {
    rows.iter()
        .map(|(x, y)| {
            let mut n = node;
            loop {
                match n {
                    Node::Split { feature, threshold, left, right } => {
                        n = if x[*feature] <= *threshold { left } else { right };
                    }
                    Node::Leaf { model, .. } => return (model.eval(x) - y).powi(2),
                }
            }
        })
        .sum()
}

/// Best `(feature, threshold, deviation reduction)` over all features
/// and all cuts leaving at least `min_leaf` rows per side.
fn best_split(rows: &[KbRow], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let n = rows.len();
    let (_, sd_parent) = mean_and_sd(rows);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for f in 0..N_FEATURES {
        order.sort_by(|&a, &b| rows[a].0[f].total_cmp(&rows[b].0[f]));
        // Prefix sums of the target in feature order.
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut prefix = Vec::with_capacity(n);
        for &i in &order {
            sum += rows[i].1;
            sumsq += rows[i].1 * rows[i].1;
            prefix.push((sum, sumsq));
        }
        let sd_of = |count: usize, s: f64, sq: f64| -> f64 {
            let c = count as f64;
            (sq / c - (s / c).powi(2)).max(0.0).sqrt()
        };
        for cut in min_leaf..=(n - min_leaf) {
            let lo = rows[order[cut - 1]].0[f];
            let hi = rows[order[cut]].0[f];
            if lo == hi {
                continue; // no threshold separates equal values
            }
            let (ls, lq) = prefix[cut - 1];
            let (ts, tq) = prefix[n - 1];
            let sd_l = sd_of(cut, ls, lq);
            let sd_r = sd_of(n - cut, ts - ls, tq - lq);
            let weighted =
                (cut as f64 * sd_l + (n - cut) as f64 * sd_r) / n as f64;
            let sdr = sd_parent - weighted;
            if best.map_or(true, |(_, _, b)| sdr > b) {
                best = Some((f, (lo + hi) / 2.0, sdr));
            }
        }
    }
    best
}

/// Fit the leaf's linear model: least squares over every feature that
/// actually varies inside the leaf (constant features get coefficient
/// zero), with fallback to the leaf mean when the system is singular
/// or the fit does not beat the mean by `prune_factor`.
fn fit_leaf(rows: &[KbRow], prune_factor: f64) -> LeafModel {
    // An exactly constant target reproduces exactly; summing-then-dividing
    // would introduce rounding.
    let y0 = rows[0].1;
    if rows.iter().all(|(_, y)| *y == y0) {
        return LeafModel { intercept: y0, coef: [0.0; N_FEATURES] };
    }
    let (mean_y, sd_y) = mean_and_sd(rows);
    let mean_model = LeafModel { intercept: mean_y, coef: [0.0; N_FEATURES] };
    if sd_y == 0.0 || rows.len() < 2 {
        return mean_model;
    }
    let mut active = Vec::new();
    for f in 0..N_FEATURES {
        let lo = rows.iter().map(|(x, _)| x[f]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|(x, _)| x[f]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-12 * (1.0 + hi.abs()) {
            active.push(f);
        }
    }
    if active.is_empty() {
        return mean_model;
    }
    let Some(model) = least_squares(rows, &active) else {
        return mean_model;
    };
    let rmse = |m: &LeafModel| -> f64 {
        let se: f64 = rows.iter().map(|(x, y)| (m.eval(x) - y).powi(2)).sum();
        (se / rows.len() as f64).sqrt()
    };
    if rmse(&model) <= prune_factor * sd_y {
        model
    } else {
        mean_model
    }
}

/// Least squares of the target on the active features (plus
/// intercept), via centered normal equations and Gaussian elimination.
/// `None` when the normal system is numerically singular.
fn least_squares(rows: &[KbRow], active: &[usize]) -> Option<LeafModel> {
    let n = rows.len() as f64;
    let d = active.len();
    let mean_x: Vec<f64> = active
        .iter()
        .map(|&f| rows.iter().map(|(x, _)| x[f]).sum::<f64>() / n)
        .collect();
    let mean_y = rows.iter().map(|(_, y)| y).sum::<f64>() / n;

    // Root-mean-square of each centered column. Scaling by it brings all
    // columns to comparable magnitude, which keeps the elimination accurate
    // when raw feature scales differ by many orders (bytes vs. fractions).
    let scale_x: Vec<f64> = active
        .iter()
        .zip(&mean_x)
        .map(|(&f, m)| {
            let var = rows.iter().map(|(x, _)| (x[f] - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();

    // Normal equations on centered, scaled data: G β = b with
    // G[i][j] = Σ zᵢzⱼ and b[i] = Σ zᵢ(y−ȳ), z = (x − x̄)/s.
    let mut g = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (x, y) in rows {
        let z: Vec<f64> = active
            .iter()
            .zip(&mean_x)
            .zip(&scale_x)
            .map(|((&f, m), s)| (x[f] - m) / s)
            .collect();
        for i in 0..d {
            for j in 0..d {
                g[i][j] += z[i] * z[j];
            }
            b[i] += z[i] * (y - mean_y);
        }
    }

    // Gaussian elimination with partial pivoting.
    let scale: f64 = (0..d).map(|i| g[i][i].abs()).fold(0.0, f64::max);
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&a, &b| g[a][col].abs().total_cmp(&g[b][col].abs()))
            .unwrap();
        if g[pivot_row][col].abs() <= 1e-12 * scale.max(1.0) {
            return None;
        }
        g.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..d {
            let factor = g[row][col] / g[col][col];
            for k in col..d {
                g[row][k] -= factor * g[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut beta = vec![0.0; d];
    for row in (0..d).rev() {
        let mut acc = b[row];
        for k in (row + 1)..d {
            acc -= g[row][k] * beta[k];
        }
        beta[row] = acc / g[row][row];
    }

    let mut coef = [0.0; N_FEATURES];
    let mut intercept = mean_y;
    for (i, &f) in active.iter().enumerate() {
        let slope = beta[i] / scale_x[i];
        coef[f] = slope;
        intercept -= slope * mean_x[i];
    }
    let model = LeafModel { intercept, coef };
    model.eval(&[0.0; N_FEATURES]).is_finite().then_some(model)
}

/// Parse knowledge-base text: the documented header, comma-separated
/// rows, `#` comments. Latencies are microseconds in the file and
/// seconds in the returned rows.
pub fn parse_kb(text: &str) -> Result<Vec<KbRow>, TreeError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != KB_HEADER {
                return Err(TreeError::Kb {
                    line: line_no,
                    msg: format!("expected header {KB_HEADER:?}, got {line:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != N_FEATURES + 1 {
            return Err(TreeError::Kb {
                line: line_no,
                msg: format!("expected {} fields, got {}", N_FEATURES + 1, fields.len()),
            });
        }
        let mut x = [0.0; N_FEATURES];
        for (i, tok) in fields[..N_FEATURES].iter().enumerate() {
            x[i] = parse_f64(tok).map_err(|msg| TreeError::Kb { line: line_no, msg })?;
            if !(x[i] >= 0.0) {
                return Err(TreeError::Kb {
                    line: line_no,
                    msg: format!("{} must be non-negative, got {}", FEATURE_NAMES[i], x[i]),
                });
            }
        }
        let latency_us =
            parse_f64(fields[N_FEATURES]).map_err(|msg| TreeError::Kb { line: line_no, msg })?;
        if !(latency_us > 0.0) {
            return Err(TreeError::Kb {
                line: line_no,
                msg: format!("latency_us must be positive, got {latency_us}"),
            });
        }
        rows.push((x, latency_us / 1e6));
    }
    if !header_seen {
        return Err(TreeError::Kb { line: 1, msg: "missing header line".into() });
    }
    Ok(rows)
}

pub fn load_kb(path: &Path) -> Result<Vec<KbRow>, TreeError> {
    parse_kb(&std::fs::read_to_string(path)?)
}

/// Render rows back into knowledge-base text (seconds → microseconds).
pub fn kb_to_string(rows: &[KbRow]) -> String {
    let mut out = String::from(KB_HEADER);
    out.push('\n');
    for (x, y) in rows {
        let _ = writeln!(out, "{},{},{},{},{}", x[0], x[1], x[2], x[3], y * 1e6);
    }
    out
}

/// Deterministic holdout split: every `k`-th row (by a seeded shuffle)
/// goes to the holdout set, the rest train.
pub fn split_holdout(rows: &[KbRow], holdout_fraction: f64, seed: u64) -> (Vec<KbRow>, Vec<KbRow>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n_holdout = (rows.len() as f64 * holdout_fraction).round() as usize;
    let (holdout_idx, train_idx) = order.split_at(n_holdout.min(rows.len()));
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i]).collect();
    (pick(train_idx), pick(holdout_idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rows from a single global linear law over message size, with
    /// the other features wiggling irrelevantly.
    fn linear_rows(n: usize) -> Vec<KbRow> {
        (0..n)
            .map(|i| {
                let size = 100.0 + 17.0 * i as f64;
                let cpu = (i % 10) as f64 / 10.0;
                let x = [1e6 + (i % 7) as f64 * 1e4, cpu, size, 50.0 + (i % 3) as f64];
                (x, 3e-6 * size + 1e-4)
            })
            .collect()
    }

    #[test]
    fn single_linear_law_recovered_by_one_leaf() {
        let rows = linear_rows(200);
        let tree = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        assert_eq!(tree.n_leaves(), 1, "noise-free linear data must not split");
        for (x, y) in &rows {
            let p = tree.predict(x, 0.0).latency;
            assert!((p - y).abs() <= 1e-6 * y.abs().max(1.0), "got {p}, want {y}");
        }
        // Probe off-grid points: the law itself was recovered, not the
        // training set memorized.
        let probe = [1e6, 0.5, 1234.5, 51.0];
        let want = 3e-6 * 1234.5 + 1e-4;
        assert!((tree.predict(&probe, 0.0).latency - want).abs() < 1e-6);
    }

    #[test]
    fn two_regime_data_splits_in_the_gap() {
        // y = 2e-6·size below size 1000, y = 9e-6·size above, with a
        // gap between 950 and 1050 where no training point lies.
        let mut rows = Vec::new();
        for i in 0..120 {
            let size = 100.0 + (i as f64) * 850.0 / 119.0; // 100..950
            rows.push(([0.0, 0.0, size, 0.0], 2e-6 * size));
        }
        for i in 0..120 {
            let size = 1050.0 + (i as f64) * 850.0 / 119.0; // 1050..1900
            rows.push(([0.0, 0.0, size, 0.0], 9e-6 * size));
        }
        let tree = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        let thresholds = tree.split_thresholds(2);
        assert!(
            thresholds.iter().any(|t| (950.0..=1050.0).contains(t)),
            "no split inside the regime gap: {thresholds:?}"
        );
        for (x, y) in &rows {
            let p = tree.predict(x, 0.0).latency;
            assert!((p - y).abs() <= 1e-6 * y.abs().max(1e-9), "got {p}, want {y}");
        }
    }

    #[test]
    fn constant_target_is_a_single_exact_leaf() {
        let rows: Vec<KbRow> = (0..50)
            .map(|i| ([i as f64, 0.0, 2.0 * i as f64, 0.0], 0.004))
            .collect();
        let tree = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        assert_eq!(tree.n_leaves(), 1);
        let p = tree.predict(&[25.0, 0.0, 50.0, 0.0], 0.0);
        assert_eq!(p.latency, 0.004);
    }

    #[test]
    fn floor_clamps_adversarial_extrapolation() {
        // Steep negative slope: extrapolating far right goes negative.
        let rows: Vec<KbRow> = (0..60)
            .map(|i| {
                let size = 100.0 + i as f64;
                ([0.0, 0.0, size, 0.0], (1e-3 - 5e-6 * size).max(1e-9))
            })
            .collect();
        let tree = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        let p = tree.predict(&[0.0, 0.0, 1e6, 0.0], 1e-6);
        assert_eq!(p.latency, 1e-6, "sub-floor prediction must clamp");
        assert!(p.extrapolated, "far outside training ranges");
        // In-range queries are not flagged.
        assert!(!tree.predict(&[0.0, 0.0, 120.0, 0.0], 1e-6).extrapolated);
    }

    #[test]
    fn min_leaf_limits_split_granularity() {
        let rows = linear_rows(40);
        let params = TrainParams { min_leaf: 30, ..Default::default() };
        // 40 rows cannot produce two sides of ≥30 each.
        let tree = ModelTree::train(&rows, &params).unwrap();
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let rows = {
            // Mildly noisy two-regime data, fixed pseudo-noise.
            let mut rows = Vec::new();
            for i in 0..400usize {
                let size = (i % 200) as f64 * 10.0;
                let noise = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
                let base = if size < 1000.0 { 2e-6 * size } else { 8e-6 * size };
                rows.push(([0.0, 0.0, size, 0.0], (base + 1e-5 + 1e-6 * noise).max(1e-9)));
            }
            rows
        };
        let a = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        let b = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn dump_parse_round_trip() {
        let mut rows = linear_rows(100);
        // Force at least one split with a second regime.
        for i in 0..100usize {
            let size = 5000.0 + 11.0 * i as f64;
            rows.push(([0.0, 0.3, size, 10.0], 9e-6 * size + 3e-4));
        }
        let tree = ModelTree::train(&rows, &TrainParams::default()).unwrap();
        let text = tree.dump();
        let reparsed = ModelTree::parse(&text).unwrap();
        assert_eq!(tree, reparsed);
        assert_eq!(text, reparsed.dump());
        for (x, _) in rows.iter().step_by(13) {
            assert_eq!(tree.predict(x, 1e-6), reparsed.predict(x, 1e-6));
        }
    }

    #[test]
    fn parse_rejects_malformed_dumps() {
        assert!(matches!(
            ModelTree::parse("modeltree v2\n"),
            Err(TreeError::Dump { line: 1, .. })
        ));
        let tree = ModelTree::train(&linear_rows(50), &TrainParams::default()).unwrap();
        let mut text = tree.dump();
        text.push_str("leaf 1 0 0 0 0 0\n");
        assert!(matches!(ModelTree::parse(&text), Err(TreeError::Dump { .. })));
    }

    #[test]
    fn train_rejects_degenerate_inputs() {
        assert!(ModelTree::train(&[], &TrainParams::default()).is_err());
        let one = [([0.0; 4], 1e-3)];
        assert!(ModelTree::train(&one, &TrainParams::default()).is_err());
        let bad = [([0.0; 4], 1e-3), ([1.0, 0.0, 0.0, 0.0], -1.0)];
        assert!(ModelTree::train(&bad, &TrainParams::default()).is_err());
    }

    #[test]
    fn kb_parse_round_trip_and_unit_conversion() {
        let text = format!("# profile dump\n{KB_HEADER}\n1000,0.5,256,10,150\n");
        let rows = parse_kb(&text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].0, [1000.0, 0.5, 256.0, 10.0]);
        assert!((rows[0].1 - 150e-6).abs() < 1e-15, "µs → s conversion");
        let rendered = kb_to_string(&rows);
        assert_eq!(parse_kb(&rendered).unwrap(), rows);
    }

    #[test]
    fn kb_errors_carry_line_numbers() {
        let cases = [
            ("bogus header\n1,2,3,4,5\n", 1),
            (&format!("{KB_HEADER}\n1,2,3\n") as &str, 2),
            (&format!("{KB_HEADER}\n1,2,3,4,-5\n"), 2),
            (&format!("{KB_HEADER}\n1,2,x,4,5\n"), 2),
            ("", 1),
        ];
        for (text, want_line) in cases {
            match parse_kb(text) {
                Err(TreeError::Kb { line, .. }) => assert_eq!(line, want_line, "for {text:?}"),
                other => panic!("expected kb error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn holdout_split_partitions_the_rows() {
        let rows = linear_rows(100);
        let (train, holdout) = split_holdout(&rows, 0.2, 9);
        assert_eq!(train.len(), 80);
        assert_eq!(holdout.len(), 20);
        // Determinism: same seed, same split.
        let (train2, _) = split_holdout(&rows, 0.2, 9);
        assert_eq!(train, train2);
    }
}
