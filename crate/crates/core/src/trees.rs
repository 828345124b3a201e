//! Unlabeled rooted trees and their integer invariants.
//!
//! A tree is stored with its children in canonical order so that two
//! structurally equal trees always carry identical encodings. The encoding is
//! the preorder level sequence (depth of every node, root at depth 0) with
//! sibling subtrees visited in descending encoding order.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest order accepted by [`enumerate_trees`].
pub const MAX_ORDER: usize = 12;

#[derive(Clone, Debug)]
pub struct RootedTree {
    children: Vec<RootedTree>,
    order: usize,
    encoding: Vec<u8>,
}

/// Integer invariants of a rooted tree.
///
/// `alpha * sigma * gamma == order!` holds for every tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct TreeInvariants {
    pub order: usize,
    /// Density.
    pub gamma: u64,
    /// Number of distinct monotonically labeled trees with this shape.
    pub alpha: u64,
    /// Size of the automorphism group.
    pub sigma: u64,
}

impl RootedTree {
    /// The single-node tree.
    pub fn leaf() -> Self {
        RootedTree {
            children: Vec::new(),
            order: 1,
            encoding: vec![0],
        }
    }

    /// Joins `children` under a new root, putting them into canonical order.
    pub fn from_children(mut children: Vec<RootedTree>) -> Self {
        children.sort_by(|a, b| b.encoding.cmp(&a.encoding));
        let order = 1 + children.iter().map(|c| c.order).sum::<usize>();
        let mut encoding = Vec::with_capacity(order);
        encoding.push(0);
        for child in &children {
            encoding.extend(child.encoding.iter().map(|d| d + 1));
        }
        RootedTree {
            children,
            order,
            encoding,
        }
    }

    /// Linear tree with `order` nodes.
    pub fn chain(order: usize) -> Self {
        assert!(order >= 1, "a tree has at least one node");
        (1..order).fold(RootedTree::leaf(), |t, _| RootedTree::from_children(vec![t]))
    }

    /// Root with `order - 1` leaf children.
    pub fn bushy(order: usize) -> Self {
        assert!(order >= 1, "a tree has at least one node");
        RootedTree::from_children(vec![RootedTree::leaf(); order - 1])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn children(&self) -> &[RootedTree] {
        &self.children
    }

    /// Canonical level sequence.
    pub fn encoding(&self) -> &[u8] {
        &self.encoding
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn gamma(&self) -> u64 {
        self.children
            .iter()
            .fold(self.order as u64, |acc, c| acc * c.gamma())
    }

    pub fn sigma(&self) -> u64 {
        self.child_multiplicities()
            .into_iter()
            .fold(1u64, |acc, (child, mult)| {
                acc * factorial(mult) * child.sigma().pow(mult as u32)
            })
    }

    /// Counts monotone labelings up to automorphism via the multinomial
    /// recursion `(n-1)! / prod(|t_i|!) * prod(alpha(t_i)) / prod(m_k!)`.
    pub fn alpha(&self) -> u64 {
        let mut value = factorial(self.order - 1);
        for child in &self.children {
            value /= factorial(child.order);
        }
        for (child, mult) in self.child_multiplicities() {
            value = value * child.alpha().pow(mult as u32) / factorial(mult);
        }
        value
    }

    pub fn invariants(&self) -> TreeInvariants {
        TreeInvariants {
            order: self.order,
            gamma: self.gamma(),
            alpha: self.alpha(),
            sigma: self.sigma(),
        }
    }

    /// Groups identical children; relies on the canonical child order.
    fn child_multiplicities(&self) -> Vec<(&RootedTree, usize)> {
        let mut groups: Vec<(&RootedTree, usize)> = Vec::new();
        for child in &self.children {
            match groups.last_mut() {
                Some((prev, n)) if *prev == child => *n += 1,
                _ => groups.push((child, 1)),
            }
        }
        groups
    }
}

impl PartialEq for RootedTree {
    fn eq(&self, other: &Self) -> bool {
        self.encoding == other.encoding
    }
}

impl Eq for RootedTree {}

impl Hash for RootedTree {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.encoding.hash(state);
    }
}

impl PartialOrd for RootedTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RootedTree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.encoding.cmp(&other.encoding)
    }
}

/// Bracket notation: `•` is a leaf, `[t1,t2]` a root with children.
impl fmt::Display for RootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_leaf() {
            return f.write_str("•");
        }
        f.write_str("[")?;
        for (i, child) in self.children.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{child}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for RootedTree {
    type Err = Error;

    /// Parses bracket notation; `*` is accepted as a leaf as well as `•`.
    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let tree = parse_tree(&chars, &mut pos)?;
        if pos != chars.len() {
            return Err(Error::Config(format!("trailing input in tree `{s}`")));
        }
        Ok(tree)
    }
}

fn parse_tree(chars: &[char], pos: &mut usize) -> Result<RootedTree> {
    match chars.get(*pos) {
        Some('•') | Some('*') => {
            *pos += 1;
            Ok(RootedTree::leaf())
        }
        Some('[') => {
            *pos += 1;
            let mut children = vec![parse_tree(chars, pos)?];
            loop {
                match chars.get(*pos) {
                    Some(',') => {
                        *pos += 1;
                        children.push(parse_tree(chars, pos)?);
                    }
                    Some(']') => {
                        *pos += 1;
                        return Ok(RootedTree::from_children(children));
                    }
                    _ => return Err(Error::Config("unterminated tree bracket".into())),
                }
            }
        }
        _ => Err(Error::Config(format!("unexpected tree token at {}", *pos))),
    }
}

pub(crate) fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// All trees of order `1..=max_order`, grouped by order (index `p - 1`) and
/// sorted by ascending encoding within each order.
pub fn enumerate_trees(max_order: usize) -> Result<Vec<Vec<(RootedTree, TreeInvariants)>>> {
    Ok(trees_by_order(max_order)?
        .into_iter()
        .map(|level| {
            level
                .into_iter()
                .map(|t| {
                    let inv = t.invariants();
                    (t, inv)
                })
                .collect()
        })
        .collect())
}

/// Same as [`enumerate_trees`] without the invariants.
pub fn trees_by_order(max_order: usize) -> Result<Vec<Vec<RootedTree>>> {
    if !(1..=MAX_ORDER).contains(&max_order) {
        return Err(Error::Bounds {
            what: "max_order",
            value: max_order,
            min: 1,
            max: MAX_ORDER,
        });
    }
    let mut levels: Vec<Vec<RootedTree>> = vec![vec![RootedTree::leaf()]];
    for n in 2..=max_order {
        // Candidate children: every tree of order < n, indexed globally.
        let pool: Vec<&RootedTree> = levels.iter().flatten().collect();
        let mut out = Vec::new();
        let mut stack = Vec::new();
        collect_child_multisets(&pool, 0, n - 1, &mut stack, &mut out);
        out.sort();
        out.dedup();
        levels.push(out);
    }
    Ok(levels)
}

fn collect_child_multisets(
    pool: &[&RootedTree],
    start: usize,
    remaining: usize,
    stack: &mut Vec<RootedTree>,
    out: &mut Vec<RootedTree>,
) {
    if remaining == 0 {
        out.push(RootedTree::from_children(stack.clone()));
        return;
    }
    for idx in start..pool.len() {
        let child = pool[idx];
        if child.order() > remaining {
            continue;
        }
        stack.push(child.clone());
        collect_child_multisets(pool, idx, remaining - child.order(), stack, out);
        stack.pop();
    }
}

/// Cumulative number of trees of order at most `p`, for `p = 1..=max_order`.
pub fn cumulative_counts(max_order: usize) -> Result<Vec<usize>> {
    let levels = trees_by_order(max_order)?;
    Ok(levels
        .iter()
        .scan(0, |acc, level| {
            *acc += level.len();
            Some(*acc)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_through_order_four() {
        let counts: Vec<usize> = trees_by_order(4).unwrap().iter().map(Vec::len).collect();
        assert_eq!(counts, vec![1, 1, 2, 4]);
    }

    #[test]
    fn order_one_is_the_leaf() {
        let levels = enumerate_trees(1).unwrap();
        assert_eq!(levels.len(), 1);
        assert_eq!(levels[0].len(), 1);
        let (t, inv) = &levels[0][0];
        assert!(t.is_leaf());
        assert_eq!((inv.gamma, inv.alpha, inv.sigma), (1, 1, 1));
    }

    #[test]
    fn rejects_out_of_range_orders() {
        assert!(matches!(enumerate_trees(0), Err(Error::Bounds { .. })));
        assert!(matches!(
            enumerate_trees(MAX_ORDER + 1),
            Err(Error::Bounds { .. })
        ));
    }

    #[test]
    fn density_of_small_trees() {
        assert_eq!(RootedTree::leaf().gamma(), 1);
        assert_eq!(RootedTree::bushy(3).gamma(), 3);
        assert_eq!(RootedTree::chain(3).gamma(), 6);
    }

    #[test]
    fn alpha_of_order_four_shapes() {
        let t: RootedTree = "[[•],•]".parse().unwrap();
        assert_eq!(t.order(), 4);
        assert_eq!(t.alpha(), 3);
        assert_eq!(RootedTree::chain(4).alpha(), 1);
        assert_eq!(RootedTree::bushy(4).alpha(), 1);
        assert_eq!(RootedTree::bushy(4).sigma(), 6);
    }

    #[test]
    fn canonical_form_ignores_child_order() {
        let a: RootedTree = "[•,[•]]".parse().unwrap();
        let b: RootedTree = "[[•],•]".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "[[•],•]");
        assert_eq!(a.encoding(), &[0, 1, 2, 1]);
    }

    #[test]
    fn display_round_trips() {
        for level in trees_by_order(7).unwrap() {
            for t in level {
                let back: RootedTree = t.to_string().parse().unwrap();
                assert_eq!(back, t);
            }
        }
    }

    #[test]
    fn order_is_one_plus_children() {
        for level in trees_by_order(8).unwrap() {
            for t in level {
                let sum: usize = t.children().iter().map(RootedTree::order).sum();
                assert_eq!(t.order(), 1 + sum);
                assert_eq!(t.encoding().len(), t.order());
            }
        }
    }

    #[test]
    fn malformed_notation_is_rejected() {
        assert!("[•,".parse::<RootedTree>().is_err());
        assert!("x".parse::<RootedTree>().is_err());
        assert!("••".parse::<RootedTree>().is_err());
    }
}
