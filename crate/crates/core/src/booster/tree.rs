//! Regression trees and leaf-wise growth over binned data.

use super::binning::BinMapper;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Histogram work (rows x features) above which features are binned in parallel.
const PARALLEL_HISTOGRAM_WORK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// A tree stored as a flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, samples: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, samples }],
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Depth of the deepest leaf; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    /// Features used by any split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub fn max_abs_leaf(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value, .. } => Some(value.abs()),
                Node::Split { .. } => None,
            })
            .fold(0.0, f64::max)
    }
}

/// Training matrix in binned, column-major form.
pub(crate) struct BinnedData {
    pub mappers: Vec<BinMapper>,
    pub bins: Vec<Vec<u8>>,
}

impl BinnedData {
    pub fn new(columns: &[Vec<f64>], max_bins: usize) -> Self {
        let mappers: Vec<BinMapper> = columns.iter().map(|c| BinMapper::fit(c, max_bins)).collect();
        let bins = columns
            .iter()
            .zip(&mappers)
            .map(|(c, m)| c.iter().map(|&v| m.bin(v)).collect())
            .collect();
        Self { mappers, bins }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub num_leaves: usize,
    pub max_depth: i32,
    pub min_child_samples: usize,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
}

impl GrowParams {
    fn thresholded(&self, g: f64) -> f64 {
        g.signum() * (g.abs() - self.reg_alpha).max(0.0)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let t = self.thresholded(g);
        t * t / (h + self.reg_lambda)
    }

    pub fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.thresholded(g) / (h + self.reg_lambda)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct OpenLeaf {
    node: usize,
    depth: usize,
    rows: Vec<u32>,
    g: f64,
    h: f64,
    hist: Vec<Bin>,
    best: Option<SplitChoice>,
}

/// Histogram slots for the features a tree may use.
struct Layout {
    features: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(data: &BinnedData, features: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(features.len());
        let mut total = 0;
        for &f in features {
            offsets.push(total);
            total += data.mappers[f].n_bins();
        }
        Self {
            features: features.to_vec(),
            offsets,
            total,
        }
    }

    fn width(&self, k: usize) -> usize {
        let end = self.offsets.get(k + 1).copied().unwrap_or(self.total);
        end - self.offsets[k]
    }
}

fn build_histogram(data: &BinnedData, layout: &Layout, rows: &[u32], grad: &[f64], hess: &[f64]) -> Vec<Bin> {
    let mut hist = vec![Bin::default(); layout.total];
    let fill = |f: usize, slot: &mut [Bin]| {
        let bins = &data.bins[f];
        for &r in rows {
            let r = r as usize;
            let b = &mut slot[bins[r] as usize];
            b.g += grad[r];
            b.h += hess[r];
            b.n += 1;
        }
    };
    let mut slots: Vec<(usize, &mut [Bin])> = Vec::with_capacity(layout.features.len());
    let mut rest = hist.as_mut_slice();
    for (k, &f) in layout.features.iter().enumerate() {
        let (head, tail) = rest.split_at_mut(layout.width(k));
        slots.push((f, head));
        rest = tail;
    }
    if rows.len() * layout.features.len() >= PARALLEL_HISTOGRAM_WORK {
        slots.into_par_iter().for_each(|(f, s)| fill(f, s));
    } else {
        for (f, s) in slots {
            fill(f, s);
        }
    }
    hist
}

fn best_split(
    layout: &Layout,
    hist: &[Bin],
    g: f64,
    h: f64,
    n: usize,
    p: &GrowParams,
) -> Option<SplitChoice> {
    let mcs = p.min_child_samples.max(1);
    if n < 2 * mcs {
        return None;
    }
    let parent = p.score(g, h);
    let mut best: Option<SplitChoice> = None;
    // Features are scanned in ascending index order and bins left to right;
    // a strict comparison keeps the first of equal gains.
    let mut order: Vec<usize> = (0..layout.features.len()).collect();
    order.sort_by_key(|&k| layout.features[k]);
    for k in order {
        let width = layout.width(k);
        if width < 2 {
            continue;
        }
        let slot = &hist[layout.offsets[k]..layout.offsets[k] + width];
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for (b, bin) in slot[..width - 1].iter().enumerate() {
            gl += bin.g;
            hl += bin.h;
            nl += bin.n as usize;
            if nl < mcs {
                continue;
            }
            if n - nl < mcs {
                break;
            }
            let gain = p.score(gl, hl) + p.score(g - gl, h - hl) - parent;
            if gain > best.map_or(0.0, |s| s.gain) {
                best = Some(SplitChoice {
                    feature: layout.features[k],
                    bin: b,
                    gain,
                });
            }
        }
    }
    best
}

fn sums(rows: &[u32], grad: &[f64], hess: &[f64]) -> (f64, f64) {
    rows.iter().fold((0.0, 0.0), |(g, h), &r| {
        (g + grad[r as usize], h + hess[r as usize])
    })
}

/// Grows one tree leaf-wise: repeatedly split the open leaf with the largest
/// positive gain until `num_leaves` is reached or no admissible split remains.
/// `rows` must be sorted ascending.
pub(crate) fn grow_tree(
    data: &BinnedData,
    rows: Vec<u32>,
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
    p: &GrowParams,
) -> Tree {
    let layout = Layout::new(data, features);
    let depth_ok = |d: usize| p.max_depth < 0 || (d as i64) < p.max_depth as i64;
    let (g, h) = sums(&rows, grad, hess);
    let mut nodes = vec![Node::Leaf {
        value: 0.0,
        samples: rows.len(),
    }];
    let mut open: Vec<OpenLeaf> = Vec::new();
    let mut closed: Vec<(usize, f64, f64)> = Vec::new();

    let mut root = OpenLeaf {
        node: 0,
        depth: 0,
        hist: Vec::new(),
        best: None,
        g,
        h,
        rows,
    };
    if p.num_leaves > 1 && depth_ok(0) {
        root.hist = build_histogram(data, &layout, &root.rows, grad, hess);
        root.best = best_split(&layout, &root.hist, g, h, root.rows.len(), p);
    }
    open.push(root);

    let mut leaves = 1;
    while leaves < p.num_leaves {
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(s) = leaf.best {
                if pick.is_none_or(|(_, gain)| s.gain > gain) {
                    pick = Some((i, s.gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let leaf = open.remove(i);
        let split = leaf.best.expect("picked leaf has a split");
        let fbins = &data.bins[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf
            .rows
            .iter()
            .partition(|&&r| (fbins[r as usize] as usize) <= split.bin);

        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: data.mappers[split.feature].threshold(split.bin),
            left: left_id,
            right: right_id,
            samples: leaf.rows.len(),
        };
        nodes.push(Node::Leaf {
            value: 0.0,
            samples: left_rows.len(),
        });
        nodes.push(Node::Leaf {
            value: 0.0,
            samples: right_rows.len(),
        });
        leaves += 1;

        let depth = leaf.depth + 1;
        let splittable = depth_ok(depth) && leaves < p.num_leaves;
        let (lg, lh) = sums(&left_rows, grad, hess);
        let (rg, rh) = sums(&right_rows, grad, hess);
        let mut children = [
            OpenLeaf {
                node: left_id,
                depth,
                rows: left_rows,
                g: lg,
                h: lh,
                hist: Vec::new(),
                best: None,
            },
            OpenLeaf {
                node: right_id,
                depth,
                rows: right_rows,
                g: rg,
                h: rh,
                hist: Vec::new(),
                best: None,
            },
        ];
        if splittable {
            // Histogram the smaller child directly and derive the larger one.
            let small = usize::from(children[1].rows.len() < children[0].rows.len());
            let large = 1 - small;
            let small_hist = build_histogram(data, &layout, &children[small].rows, grad, hess);
            let large_hist = leaf
                .hist
                .iter()
                .zip(&small_hist)
                .map(|(p, s)| Bin {
                    g: p.g - s.g,
                    h: p.h - s.h,
                    n: p.n - s.n,
                })
                .collect();
            children[small].hist = small_hist;
            children[large].hist = large_hist;
            for c in &mut children {
                c.best = best_split(&layout, &c.hist, c.g, c.h, c.rows.len(), p);
            }
        }
        // Keep creation order so that equal gains resolve to the older leaf.
        for c in children {
            if c.best.is_some() {
                open.push(c);
            } else {
                closed.push((c.node, c.g, c.h));
            }
        }
        open.sort_by_key(|l| l.node);
    }

    for leaf in open {
        closed.push((leaf.node, leaf.g, leaf.h));
    }
    for (node, g, h) in closed {
        if let Node::Leaf { value, .. } = &mut nodes[node] {
            *value = p.leaf_value(g, h);
        }
    }
    Tree { nodes }
}
