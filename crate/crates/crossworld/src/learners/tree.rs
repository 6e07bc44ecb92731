//! CART regression tree on a bootstrap sample, splitting by variance
//! reduction. Leaves keep the sampled training row ids so the forest can
//! read off leaf-weighted empirical distributions.

use rand::seq::index::sample as sample_without_replacement;
use rand::Rng;

#[derive(Debug, Clone)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { start: u32, len: u32 },
}

#[derive(Debug, Clone)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
    items: Vec<u32>,
}

pub(crate) struct TreeParams {
    pub min_leaf: usize,
    pub mtry: usize,
    pub max_depth: usize,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a TreeParams,
}

impl Tree {
    /// `sample` holds (possibly repeated) training row ids.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        mut sample: Vec<u32>,
        params: &TreeParams,
        rng: &mut impl Rng,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new(), items: Vec::new() };
        let builder = Builder { x, y, params };
        let n = sample.len();
        builder.build(&mut tree, &mut sample, 0, n, 0, rng);
        tree.items = sample;
        tree
    }

    /// Training row ids (with bootstrap multiplicity) in the leaf that
    /// `row` falls into.
    pub fn leaf_items(&self, row: &[f64]) -> &[u32] {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Split { feature, threshold, left, right } => {
                    idx = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { start, len } => {
                    return &self.items[*start as usize..(*start + *len) as usize];
                }
            }
        }
    }
}

impl Builder<'_> {
    /// Builds the subtree over `sample[start..end]`, returning its node id.
    fn build(
        &self,
        tree: &mut Tree,
        sample: &mut [u32],
        start: usize,
        end: usize,
        depth: usize,
        rng: &mut impl Rng,
    ) -> u32 {
        let len = end - start;
        let node_id = tree.nodes.len() as u32;
        tree.nodes.push(Node::Leaf { start: start as u32, len: len as u32 });

        if len < 2 * self.params.min_leaf || depth >= self.params.max_depth {
            return node_id;
        }
        let Some((feature, threshold, split_at)) =
            self.best_split(&sample[start..end], rng)
        else {
            return node_id;
        };

        // Stable partition keeps item order deterministic.
        let node_items = &sample[start..end];
        let mut reordered = Vec::with_capacity(len);
        reordered.extend(node_items.iter().filter(|&&i| self.x[i as usize][feature] <= threshold));
        reordered.extend(node_items.iter().filter(|&&i| self.x[i as usize][feature] > threshold));
        sample[start..end].copy_from_slice(&reordered);

        let mid = start + split_at;
        let left = self.build(tree, sample, start, mid, depth + 1, rng);
        let right = self.build(tree, sample, mid, end, depth + 1, rng);
        tree.nodes[node_id as usize] = Node::Split {
            feature: feature as u32,
            threshold,
            left,
            right,
        };
        node_id
    }

    /// Best (feature, threshold, left-size) over an mtry subset of
    /// features, maximizing the between-groups sum of squares.
    fn best_split(&self, items: &[u32], rng: &mut impl Rng) -> Option<(usize, f64, usize)> {
        let d = self.x[0].len();
        let mtry = self.params.mtry.min(d);
        let features = sample_without_replacement(rng, d, mtry);
        let len = items.len();
        let min_leaf = self.params.min_leaf;

        let total_sum: f64 = items.iter().map(|&i| self.y[i as usize]).sum();
        let mut best: Option<(usize, f64, usize, f64)> = None;

        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(len);
        for f in features {
            pairs.clear();
            pairs.extend(
                items
                    .iter()
                    .map(|&i| (self.x[i as usize][f], self.y[i as usize])),
            );
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_sum = 0.0;
            for split_at in 1..len {
                left_sum += pairs[split_at - 1].1;
                if split_at < min_leaf || len - split_at < min_leaf {
                    continue;
                }
                let (v_prev, v_next) = (pairs[split_at - 1].0, pairs[split_at].0);
                if v_prev == v_next {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let gain = left_sum * left_sum / split_at as f64
                    + right_sum * right_sum / (len - split_at) as f64;
                if best.as_ref().map_or(true, |b| gain > b.3) {
                    // Midpoint can round up to v_next when the two are
                    // adjacent floats; fall back to v_prev so exactly
                    // `split_at` items go left.
                    let mut threshold = 0.5 * (v_prev + v_next);
                    if threshold >= v_next {
                        threshold = v_prev;
                    }
                    best = Some((f, threshold, split_at, gain));
                }
            }
        }
        best.map(|(f, t, s, _)| (f, t, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_step_function() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] < 0.5 { 0.0 } else { 10.0 }).collect();
        let sample: Vec<u32> = (0..100).collect();
        let params = TreeParams { min_leaf: 5, mtry: 1, max_depth: usize::MAX };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = Tree::fit(&x, &y, sample, &params, &mut rng);

        let leaf_lo = tree.leaf_items(&[0.1]);
        let leaf_hi = tree.leaf_items(&[0.9]);
        assert!(leaf_lo.iter().all(|&i| y[i as usize] == 0.0));
        assert!(leaf_hi.iter().all(|&i| y[i as usize] == 10.0));
    }

    #[test]
    fn respects_min_leaf() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let sample: Vec<u32> = (0..40).collect();
        let params = TreeParams { min_leaf: 7, mtry: 1, max_depth: usize::MAX };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree = Tree::fit(&x, &y, sample, &params, &mut rng);
        for i in 0..40 {
            assert!(tree.leaf_items(&[i as f64]).len() >= 7);
        }
    }
}
