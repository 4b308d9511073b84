//! Leaf-wise regression tree grown on binned features with second-order gains.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        bin: u8,
        /// Raw-value threshold: `x <= threshold` goes left.
        threshold: f64,
        left: u32,
        right: u32,
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

pub(crate) struct GrowParams {
    pub max_leaves: usize,
    pub min_child_weight: f64,
    pub min_data_in_leaf: usize,
    pub lambda: f64,
}

#[derive(Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

#[derive(Clone, Copy)]
struct SplitInfo {
    feature: usize,
    bin: u8,
    gain: f64,
}

struct Leaf {
    node: usize,
    rows: Vec<u32>,
    g: f64,
    h: f64,
    hist: Vec<Vec<Bin>>,
    best: Option<SplitInfo>,
}

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn build_hist(
    rows: &[u32],
    bins: &[Vec<u8>],
    n_bins: &[usize],
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
) -> Vec<Vec<Bin>> {
    let mut hist: Vec<Vec<Bin>> = n_bins.iter().map(|&n| vec![Bin::default(); n]).collect();
    for &f in features {
        let col = &bins[f];
        let hf = &mut hist[f];
        for &r in rows {
            let r = r as usize;
            let b = &mut hf[col[r] as usize];
            b.g += grad[r];
            b.h += hess[r];
            b.n += 1;
        }
    }
    hist
}

fn best_split(
    hist: &[Vec<Bin>],
    features: &[usize],
    g: f64,
    h: f64,
    n: usize,
    p: &GrowParams,
) -> Option<SplitInfo> {
    let parent = leaf_score(g, h, p.lambda);
    let mut best: Option<SplitInfo> = None;
    for &f in features {
        let hf = &hist[f];
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for (b, bin) in hf.iter().enumerate().take(hf.len().saturating_sub(1)) {
            gl += bin.g;
            hl += bin.h;
            nl += bin.n as usize;
            let nr = n - nl;
            if nl < p.min_data_in_leaf || hl < p.min_child_weight {
                continue;
            }
            if nr < p.min_data_in_leaf {
                break;
            }
            let (gr, hr) = (g - gl, h - hl);
            if hr < p.min_child_weight {
                continue;
            }
            let gain = leaf_score(gl, hl, p.lambda) + leaf_score(gr, hr, p.lambda) - parent;
            if gain > 1e-12 && best.is_none_or(|s| gain > s.gain) {
                best = Some(SplitInfo {
                    feature: f,
                    bin: b as u8,
                    gain,
                });
            }
        }
    }
    best
}

/// Grows one tree; returns the tree (leaf values are raw Newton steps) and the
/// leaf node index reached by every row in `rows`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grow(
    rows: Vec<u32>,
    bins: &[Vec<u8>],
    n_bins: &[usize],
    edges: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
    p: &GrowParams,
) -> (Tree, Vec<(u32, usize)>) {
    let g: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
    let hist = build_hist(&rows, bins, n_bins, grad, hess, features);
    let best = best_split(&hist, features, g, h, rows.len(), p);
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut leaves = vec![Leaf {
        node: 0,
        rows,
        g,
        h,
        hist,
        best,
    }];

    while leaves.len() < p.max_leaves {
        let Some((li, split)) = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|s| (i, s)))
            .fold(None, |acc: Option<(usize, SplitInfo)>, (i, s)| match acc {
                Some((_, b)) if b.gain >= s.gain => acc,
                _ => Some((i, s)),
            })
        else {
            break;
        };
        let leaf = leaves.swap_remove(li);
        let col = &bins[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf
            .rows
            .iter()
            .partition(|&&r| col[r as usize] <= split.bin);
        let gl: f64 = left_rows.iter().map(|&r| grad[r as usize]).sum();
        let hl: f64 = left_rows.iter().map(|&r| hess[r as usize]).sum();
        let (gr, hr) = (leaf.g - gl, leaf.h - hl);

        // histogram of the smaller child; the sibling is parent minus it
        let left_small = left_rows.len() <= right_rows.len();
        let small = build_hist(
            if left_small { &left_rows } else { &right_rows },
            bins,
            n_bins,
            grad,
            hess,
            features,
        );
        let mut large = leaf.hist;
        for &f in features {
            for (lb, sb) in large[f].iter_mut().zip(&small[f]) {
                lb.g -= sb.g;
                lb.h -= sb.h;
                lb.n -= sb.n;
            }
        }
        let (lh, rh) = if left_small {
            (small, large)
        } else {
            (large, small)
        };

        let left_node = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[leaf.node] = Node::Split {
            feature: split.feature as u32,
            bin: split.bin,
            threshold: edges[split.feature][split.bin as usize],
            left: left_node as u32,
            right: left_node as u32 + 1,
            gain: split.gain,
        };
        let lb = best_split(&lh, features, gl, hl, left_rows.len(), p);
        let rb = best_split(&rh, features, gr, hr, right_rows.len(), p);
        leaves.push(Leaf {
            node: left_node,
            rows: left_rows,
            g: gl,
            h: hl,
            hist: lh,
            best: lb,
        });
        leaves.push(Leaf {
            node: left_node + 1,
            rows: right_rows,
            g: gr,
            h: hr,
            hist: rh,
            best: rb,
        });
    }

    let mut membership = Vec::new();
    for leaf in &leaves {
        nodes[leaf.node] = Node::Leaf {
            value: -leaf.g / (leaf.h + p.lambda),
        };
        membership.extend(leaf.rows.iter().map(|&r| (r, leaf.node)));
    }
    (Tree { nodes }, membership)
}
