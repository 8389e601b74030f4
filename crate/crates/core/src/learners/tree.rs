use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// CART regression tree: weighted squared-error splits found by exhaustive
/// search, leaves predict the weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    root: Node,
}

struct Grow<'a> {
    cols: &'a [&'a [f64]],
    y: &'a [f64],
    w: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
}

fn weighted_mean(idx: &[usize], y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = idx.iter().map(|&i| w[i]).sum();
    if sw > 0.0 {
        idx.iter().map(|&i| w[i] * y[i]).sum::<f64>() / sw
    } else {
        0.0
    }
}

impl Grow<'_> {
    fn grow(&self, idx: Vec<usize>, depth: usize) -> Node {
        let leaf = Node::Leaf(weighted_mean(&idx, self.y, self.w));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return leaf;
        }
        let (tw, twy, twyy) = idx.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &i| {
            let (w, y) = (self.w[i], self.y[i]);
            (a + w, b + w * y, c + w * y * y)
        });
        if !(tw > 0.0) {
            return leaf;
        }
        let parent_sse = twyy - twy * twy / tw;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.clone();
        for (f, col) in self.cols.iter().enumerate() {
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let (mut lw, mut lwy, mut lwyy) = (0.0, 0.0, 0.0);
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                lw += self.w[i];
                lwy += self.w[i] * self.y[i];
                lwyy += self.w[i] * self.y[i] * self.y[i];
                let n_left = pos + 1;
                if n_left < self.min_leaf || order.len() - n_left < self.min_leaf {
                    continue;
                }
                let (v, next) = (col[i], col[order[pos + 1]]);
                if v == next {
                    continue;
                }
                let rw = tw - lw;
                if lw <= 0.0 || rw <= 0.0 {
                    continue;
                }
                let rwy = twy - lwy;
                let rwyy = twyy - lwyy;
                let sse = (lwyy - lwy * lwy / lw) + (rwyy - rwy * rwy / rw);
                if best.is_none_or(|(b, _, _)| sse < b) {
                    best = Some((sse, f, 0.5 * (v + next)));
                }
            }
        }
        match best {
            Some((sse, feature, threshold)) if parent_sse - sse > 1e-12 * parent_sse.abs().max(1e-300) => {
                let col = self.cols[feature];
                let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(self.grow(l, depth + 1)),
                    right: Box::new(self.grow(r, depth + 1)),
                }
            }
            _ => leaf,
        }
    }
}

impl Tree {
    pub fn fit(cols: &[&[f64]], y: &[f64], w: &[f64], max_depth: usize, min_leaf: usize) -> Result<Tree> {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
        let g = Grow {
            cols,
            y,
            w,
            max_depth,
            min_leaf: min_leaf.max(1),
        };
        Ok(Tree { root: g.grow(idx, 0) })
    }

    pub fn predict(&self, cols: &[&[f64]], n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut node = &self.root;
                loop {
                    match node {
                        Node::Leaf(v) => return *v,
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => node = if cols[*feature][i] <= *threshold { left } else { right },
                    }
                }
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 1,
                Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_step_function() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 40.0 { 1.0 } else { 5.0 }).collect();
        let t = Tree::fit(&[&x], &y, &[1.0; 100], 3, 10).unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict(&[&[10.0, 80.0]], 2), vec![1.0, 5.0]);
    }

    #[test]
    fn respects_min_leaf() {
        let x: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let t = Tree::fit(&[&x], &y, &[1.0; 15], 5, 10).unwrap();
        assert_eq!(t.n_leaves(), 1);
    }
}
