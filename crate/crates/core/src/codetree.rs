//! Per-set binary search trees with Shannon-Fano leaf depths.
//!
//! Leaf depths are `ceil(-log2(p_i / P_S))` (0 for a singleton). The
//! topology is the canonical prefix code for those depths: leaves sorted by
//! (depth, item index) receive consecutive codewords, bit 0 meaning "left".
//! Because Shannon-Fano depths need not saturate Kraft's inequality some
//! internal nodes have a single child; descending through them costs no test.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::partition::SearchSet;

/// Relative guard band for ceilings of `-log2 p`.
const CEIL_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthRule {
    #[default]
    ShannonFano,
    /// Optimal expected depth. Per-item depth bounds are not guaranteed.
    Huffman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Local positions (into `CodeTree::items`) of the leaves below, left to right.
    pub items: Vec<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeTree {
    pub set_id: usize,
    /// Global item indices, aligned with `probs` and `lengths`.
    pub items: Vec<usize>,
    pub probs: Vec<f64>,
    pub lengths: Vec<u32>,
    /// Arena; node 0 is the root.
    pub nodes: Vec<Node>,
}

pub const ROOT: usize = 0;

fn guarded_ceil(x: f64) -> f64 {
    (x - CEIL_GUARD * x.abs().max(1.0)).ceil()
}

pub fn shannon_fano_lengths(probs: &[f64]) -> Result<Vec<u32>> {
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) || probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::DegenerateSet);
    }
    if probs.len() == 1 {
        return Ok(vec![0]);
    }
    let ideal: Vec<f64> = probs.iter().map(|&p| -(p / total).log2()).collect();
    let mut lengths: Vec<u32> = ideal.iter().map(|&x| guarded_ceil(x).max(1.0) as u32).collect();
    // The guard band can round an ideal length down by ~1e-12; if that
    // breaks Kraft, lengthen the items that were rounded down the most.
    while !kraft_holds(&lengths) {
        let (worst, _) = ideal
            .iter()
            .zip(&lengths)
            .enumerate()
            .map(|(i, (&x, &l))| (i, x - l as f64))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        lengths[worst] += 1;
    }
    Ok(lengths)
}

pub fn huffman_lengths(probs: &[f64]) -> Result<Vec<u32>> {
    if probs.is_empty() || probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::DegenerateSet);
    }
    if probs.len() == 1 {
        return Ok(vec![0]);
    }

    #[derive(PartialEq)]
    struct Weight(f64, usize);
    impl Eq for Weight {}
    impl PartialOrd for Weight {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Weight {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }

    // parent links over leaves 0..n and merged nodes n..
    let n = probs.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<Weight>> = probs.iter().enumerate().map(|(i, &p)| Reverse(Weight(p, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse(a) = heap.pop().expect("len > 1");
        let Reverse(b) = heap.pop().expect("len > 1");
        parent[a.1] = next;
        parent[b.1] = next;
        heap.push(Reverse(Weight(a.0 + b.0, next)));
        next += 1;
    }
    Ok((0..n)
        .map(|mut i| {
            let mut depth = 0;
            while parent[i] != usize::MAX {
                i = parent[i];
                depth += 1;
            }
            depth
        })
        .collect())
}

/// Exact check of `sum 2^-l <= 1`.
pub fn kraft_holds(lengths: &[u32]) -> bool {
    let max = lengths.iter().copied().max().unwrap_or(0);
    if max <= 120 {
        let unit = 1u128 << max;
        let mut sum = 0u128;
        for &l in lengths {
            sum += 1u128 << (max - l);
            if sum > unit {
                return false;
            }
        }
        true
    } else {
        kraft_sum(lengths) <= 1.0
    }
}

pub fn kraft_sum(lengths: &[u32]) -> f64 {
    lengths.iter().map(|&l| (-(l as f64)).exp2()).sum()
}

/// `h(S)/P_S + log2 gamma + log2 P_S + 1`, the depth bound for sets
/// satisfying the bounded ratio condition with constant `gamma`.
pub fn depth_bound(set: &SearchSet, gamma: f64) -> Result<f64> {
    if !(set.total_prob > 0.0) {
        return Err(Error::DegenerateSet);
    }
    set.check_ratio(gamma)?;
    let ps = set.total_prob;
    Ok(set.self_information() / ps + gamma.log2() + ps.log2() + 1.0)
}

impl CodeTree {
    pub fn build(set: &SearchSet) -> Result<Self> {
        Self::build_with(set, LengthRule::ShannonFano)
    }

    pub fn build_with(set: &SearchSet, rule: LengthRule) -> Result<Self> {
        if set.is_empty() || !(set.total_prob > 0.0) {
            return Err(Error::DegenerateSet);
        }
        let lengths = match rule {
            LengthRule::ShannonFano => shannon_fano_lengths(&set.probs)?,
            LengthRule::Huffman => huffman_lengths(&set.probs)?,
        };
        Self::from_lengths(set.id, set.items.clone(), set.probs.clone(), lengths)
    }

    /// Canonical topology for the given depths. Fails if Kraft is violated.
    pub fn from_lengths(set_id: usize, items: Vec<usize>, probs: Vec<f64>, lengths: Vec<u32>) -> Result<Self> {
        if items.is_empty() || items.len() != lengths.len() || items.len() != probs.len() {
            return Err(Error::DegenerateSet);
        }
        if !kraft_holds(&lengths) || (items.len() > 1 && lengths.contains(&0)) {
            return Err(Error::param("leaf depths violate Kraft's inequality"));
        }

        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by_key(|&k| (lengths[k], items[k]));

        let mut nodes = vec![Node {
            items: Vec::new(),
            left: None,
            right: None,
        }];
        let mut code: Vec<bool> = Vec::new();
        for (rank, &k) in order.iter().enumerate() {
            let len = lengths[k] as usize;
            if rank > 0 {
                // next codeword: increment, then pad with zeros
                while let Some(bit) = code.pop() {
                    if !bit {
                        code.push(true);
                        break;
                    }
                }
                debug_assert!(!code.is_empty() || len == 0);
            }
            code.resize(len, false);

            let mut at = ROOT;
            nodes[at].items.push(k);
            for &bit in &code {
                let slot = if bit { nodes[at].right } else { nodes[at].left };
                at = match slot {
                    Some(child) => child,
                    None => {
                        nodes.push(Node {
                            items: Vec::new(),
                            left: None,
                            right: None,
                        });
                        let child = nodes.len() - 1;
                        if bit {
                            nodes[at].right = Some(child);
                        } else {
                            nodes[at].left = Some(child);
                        }
                        child
                    }
                };
                nodes[at].items.push(k);
            }
        }

        Ok(CodeTree {
            set_id,
            items,
            probs,
            lengths,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn max_length(&self) -> u32 {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// `sum p_i l_i`.
    pub fn expected_length(&self) -> f64 {
        self.probs.iter().zip(&self.lengths).map(|(&p, &l)| p * l as f64).sum()
    }

    /// Depth of each leaf in the topology, by local position.
    pub fn leaf_depths(&self) -> Vec<u32> {
        let mut depths = vec![u32::MAX; self.items.len()];
        let mut stack = vec![(ROOT, 0u32)];
        while let Some((id, d)) = stack.pop() {
            let node = &self.nodes[id];
            if node.is_leaf() {
                depths[node.items[0]] = d;
            }
            stack.extend(node.left.map(|c| (c, d + 1)));
            stack.extend(node.right.map(|c| (c, d + 1)));
        }
        depths
    }

    /// Indented text rendering, one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "set {}", self.set_id);
        self.dump_node(ROOT, 1, &mut out);
        out
    }

    fn dump_node(&self, id: usize, depth: usize, out: &mut String) {
        let node = &self.nodes[id];
        let pad = "  ".repeat(depth);
        if node.is_leaf() {
            let k = node.items[0];
            let _ = writeln!(
                out,
                "{pad}item {} p={} len={}",
                self.items[k], self.probs[k], self.lengths[k]
            );
            return;
        }
        let globals: Vec<String> = node.items.iter().map(|&k| self.items[k].to_string()).collect();
        let _ = writeln!(out, "{pad}{{{}}}", globals.join(" "));
        for child in [node.left, node.right].into_iter().flatten() {
            self.dump_node(child, depth + 1, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::SearchSet;
    use proptest::prelude::*;

    fn set_of(probs: &[f64]) -> SearchSet {
        let total = probs.iter().sum();
        SearchSet {
            id: 0,
            bin: 1,
            items: (0..probs.len()).collect(),
            probs: probs.to_vec(),
            total_prob: total,
            full: total >= 0.5,
        }
    }

    #[test]
    fn dyadic_lengths() {
        assert_eq!(shannon_fano_lengths(&[0.5, 0.25, 0.25]).unwrap(), vec![1, 2, 2]);
        // scaled copies give the same normalised distribution
        assert_eq!(shannon_fano_lengths(&[0.2, 0.1, 0.1]).unwrap(), vec![1, 2, 2]);
    }

    #[test]
    fn non_dyadic_lengths() {
        assert_eq!(shannon_fano_lengths(&[0.4, 0.35, 0.25]).unwrap(), vec![2, 2, 2]);
    }

    #[test]
    fn singleton_tree() {
        let tree = CodeTree::build(&set_of(&[0.9])).unwrap();
        assert_eq!(tree.lengths, vec![0]);
        assert_eq!(tree.nodes.len(), 1);
        assert!(tree.node(ROOT).is_leaf());
    }

    #[test]
    fn degenerate_set() {
        assert_eq!(shannon_fano_lengths(&[0.0, 0.0]), Err(Error::DegenerateSet));
        let mut s = set_of(&[0.1]);
        s.total_prob = 0.0;
        assert_eq!(CodeTree::build(&s), Err(Error::DegenerateSet));
    }

    #[test]
    fn canonical_topology_with_gap() {
        let tree = CodeTree::build(&set_of(&[0.4, 0.35, 0.25])).unwrap();
        let root = tree.node(ROOT);
        let left = tree.node(root.left.unwrap());
        let right = tree.node(root.right.unwrap());
        assert_eq!(left.items, vec![0, 1]);
        assert_eq!(right.items, vec![2]);
        // codeword 10 used, 11 free: unary node
        assert!(right.left.is_some() && right.right.is_none());
        assert_eq!(tree.leaf_depths(), vec![2, 2, 2]);
    }

    #[test]
    fn depth_bound_identical_probs() {
        let s = set_of(&[0.25, 0.25]);
        let bound = depth_bound(&s, 1.0).unwrap();
        assert!((bound - 2.0).abs() < 1e-12);
        assert_eq!(CodeTree::build(&s).unwrap().lengths, vec![1, 1]);

        let single = set_of(&[0.9]);
        assert!(depth_bound(&single, 1.0).unwrap() >= 0.0);

        assert!(matches!(
            depth_bound(&set_of(&[0.4, 0.1]), 2.0),
            Err(Error::RatioViolated { .. })
        ));
    }

    #[test]
    fn huffman_never_longer_in_expectation() {
        let probs = [0.3, 0.2, 0.2, 0.15, 0.1, 0.05];
        let sf = CodeTree::build_with(&set_of(&probs), LengthRule::ShannonFano).unwrap();
        let hf = CodeTree::build_with(&set_of(&probs), LengthRule::Huffman).unwrap();
        assert!(hf.expected_length() <= sf.expected_length() + 1e-12);
        assert!(kraft_holds(&hf.lengths));
        assert_eq!(hf.leaf_depths(), hf.lengths);
    }

    #[test]
    fn from_lengths_rejects_kraft_violation() {
        assert!(CodeTree::from_lengths(0, vec![0, 1, 2], vec![0.3; 3], vec![1, 1, 1]).is_err());
    }

    #[test]
    fn dump_lists_every_leaf() {
        let tree = CodeTree::build(&set_of(&[0.3, 0.2, 0.1])).unwrap();
        let text = tree.dump();
        for i in 0..3 {
            assert!(text.contains(&format!("item {i} ")));
        }
    }

    fn ratio_bounded_set() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (1usize..40, 1.0f64..6.0, 1e-4f64..1.0).prop_flat_map(|(m, gamma, scale)| {
            let pmax = scale * (1.0 / m as f64).min(0.5);
            let pmin = pmax / gamma;
            (proptest::collection::vec(pmin..=pmax, m), Just(gamma))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn tree_invariants((probs, gamma) in ratio_bounded_set()) {
            let total: f64 = probs.iter().sum();
            prop_assume!(total <= 1.0);
            let s = set_of(&probs);
            let tree = CodeTree::build(&s).unwrap();
            prop_assert!(kraft_holds(&tree.lengths));
            prop_assert_eq!(tree.leaf_depths(), tree.lengths.clone());
            let lmax = depth_bound(&s, gamma).unwrap();
            for (&p, &l) in probs.iter().zip(&tree.lengths) {
                prop_assert!(l as f64 <= lmax + 1e-9);
                prop_assert!(l as f64 <= -p.log2() + total.log2() + 1.0 + 1e-9);
            }
            for node in &tree.nodes {
                let mut union = Vec::new();
                for c in [node.left, node.right].into_iter().flatten() {
                    union.extend(tree.node(c).items.iter().copied());
                }
                if !node.is_leaf() {
                    prop_assert_eq!(&union, &node.items);
                }
            }
        }
    }
}
