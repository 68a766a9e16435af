use super::{Game, GameError, Owner};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One node of an explicit tree, in the shape stored in game spec files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub owner: Owner,
    #[serde(default)]
    pub children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoffs: Option<(f64, f64)>,
    #[serde(default)]
    pub features: Vec<f64>,
}

/// Arena-backed game tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTree {
    nodes: Vec<NodeSpec>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    feature_dim: usize,
    max_depth: usize,
}

impl GameTree {
    /// Check the tree shape and derive parent links and depths.
    pub fn new(mut nodes: Vec<NodeSpec>) -> Result<Self, GameError> {
        if nodes.is_empty() {
            return Err(GameError::Malformed("no nodes".into()));
        }
        let n = nodes.len();
        let mut parent = vec![None; n];
        for (i, node) in nodes.iter().enumerate() {
            for &c in &node.children {
                if c >= n || c == 0 {
                    return Err(GameError::Malformed(format!("node {i}: bad child {c}")));
                }
                if parent[c].replace(i).is_some() {
                    return Err(GameError::Malformed(format!("node {c} has two parents")));
                }
            }
        }
        if let Some(orphan) = (1..n).find(|&i| parent[i].is_none()) {
            return Err(GameError::Malformed(format!("node {orphan} is unreachable")));
        }
        let mut depth = vec![0; n];
        let mut stack = vec![0usize];
        let mut visited = 0;
        while let Some(i) = stack.pop() {
            visited += 1;
            for &c in &nodes[i].children {
                depth[c] = depth[i] + 1;
                stack.push(c);
            }
        }
        if visited != n {
            return Err(GameError::Malformed("cycle detected".into()));
        }
        let feature_dim = nodes[0].features.len();
        for (i, node) in nodes.iter_mut().enumerate() {
            let k = node.children.len();
            match node.owner {
                Owner::Leaf => {
                    if k != 0 || node.payoffs.is_none() {
                        return Err(GameError::Malformed(format!(
                            "leaf {i} needs payoffs and no children"
                        )));
                    }
                }
                _ if k == 0 => {
                    return Err(GameError::Malformed(format!("internal node {i} has no children")));
                }
                Owner::Chance => {
                    let sum: f64 = node.probs.iter().sum();
                    if node.probs.len() != k
                        || node.probs.iter().any(|&p| !(p > 0.0))
                        || (sum - 1.0).abs() > 1e-9
                    {
                        return Err(GameError::Malformed(format!(
                            "chance node {i}: probabilities {:?}",
                            node.probs
                        )));
                    }
                }
                _ => {}
            }
            if node.labels.is_empty() {
                node.labels = (0..k).map(|j| format!("a{j}")).collect();
            } else if node.labels.len() != k {
                return Err(GameError::Malformed(format!("node {i}: label count")));
            }
            if node.features.len() != feature_dim {
                return Err(GameError::Malformed(format!("node {i}: feature width")));
            }
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0);
        Ok(GameTree {
            nodes,
            parent,
            depth,
            feature_dim,
            max_depth,
        })
    }

    /// Materialize a (possibly lazy) game, keeping its features.
    pub fn expand<G: Game>(g: &G, root: &G::State, budget: usize) -> Result<Self, GameError> {
        let e = super::enumerate(g, root, budget)?;
        Self::from_enumeration(g, &e, root)
    }

    /// Same as [`GameTree::expand`] but also returns the original state of every node.
    pub fn expand_with_states<G: Game>(
        g: &G,
        root: &G::State,
        budget: usize,
    ) -> Result<(Self, Vec<G::State>), GameError> {
        let e = super::enumerate(g, root, budget)?;
        let tree = Self::from_enumeration(g, &e, root)?;
        let mut states = Vec::with_capacity(e.len());
        let mut stack = vec![root.clone()];
        while let Some(s) = stack.pop() {
            let cs = e.children_of(&s);
            for c in cs.iter().rev() {
                stack.push(c.clone());
            }
            states.push(s);
        }
        Ok((tree, states))
    }

    fn from_enumeration<G: Game>(
        g: &G,
        e: &super::Enumeration<G::State>,
        root: &G::State,
    ) -> Result<Self, GameError> {
        // pre-order numbering so the root is node 0
        let mut nodes: Vec<NodeSpec> = Vec::with_capacity(e.len());
        let mut stack: Vec<(G::State, Option<(usize, usize)>)> = vec![(root.clone(), None)];
        while let Some((s, link)) = stack.pop() {
            let id = nodes.len();
            if let Some((p, slot)) = link {
                nodes[p].children[slot] = id;
            }
            let cs = e.children_of(&s);
            let owner = g.owner(&s);
            nodes.push(NodeSpec {
                owner,
                children: vec![0; cs.len()],
                labels: g.action_labels(&s),
                probs: if owner == Owner::Chance {
                    g.chance_probs(&s)
                } else {
                    Vec::new()
                },
                payoffs: (owner == Owner::Leaf).then(|| g.payoffs(&s)),
                features: g.features(&s),
            });
            for (slot, c) in cs.iter().enumerate().rev() {
                stack.push((c.clone(), Some((id, slot))));
            }
        }
        GameTree::new(nodes)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent(&self, s: usize) -> Option<usize> {
        self.parent[s]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.nodes[i].owner == Owner::Leaf)
    }

    /// Index of the child among its siblings.
    pub fn child_slot(&self, s: usize) -> Option<usize> {
        let p = self.parent[s]?;
        self.nodes[p].children.iter().position(|&c| c == s)
    }

    /// Replace features with a one-hot node indicator.
    pub fn with_one_hot_features(mut self) -> Self {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.features = vec![0.0; n];
            node.features[i] = 1.0;
        }
        self.feature_dim = n;
        self
    }
}

impl Game for GameTree {
    type State = usize;

    fn root(&self) -> usize {
        0
    }

    fn owner(&self, s: &usize) -> Owner {
        self.nodes[*s].owner
    }

    fn children(&self, s: &usize) -> Vec<usize> {
        self.nodes[*s].children.clone()
    }

    fn action_labels(&self, s: &usize) -> Vec<String> {
        self.nodes[*s].labels.clone()
    }

    fn chance_probs(&self, s: &usize) -> Vec<f64> {
        self.nodes[*s].probs.clone()
    }

    fn payoffs(&self, s: &usize) -> (f64, f64) {
        self.nodes[*s].payoffs.unwrap_or((0.0, 0.0))
    }

    fn features(&self, s: &usize) -> Vec<f64> {
        self.nodes[*s].features.clone()
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn depth(&self, s: &usize) -> usize {
        self.depth[*s]
    }

    fn max_depth(&self) -> usize {
        self.max_depth
    }
}

/// Tiny builder for hand-written fixtures: nodes are appended in pre-order.
struct Builder {
    nodes: Vec<NodeSpec>,
}

impl Builder {
    fn new() -> Self {
        Builder { nodes: Vec::new() }
    }

    fn internal(&mut self, owner: Owner) -> usize {
        self.nodes.push(NodeSpec {
            owner,
            children: Vec::new(),
            labels: Vec::new(),
            probs: Vec::new(),
            payoffs: None,
            features: Vec::new(),
        });
        self.nodes.len() - 1
    }

    fn leaf(&mut self, parent: usize, label: &str, r1: f64, r2: f64) -> usize {
        let id = self.internal(Owner::Leaf);
        self.nodes[id].payoffs = Some((r1, r2));
        self.link(parent, id, label);
        id
    }

    fn link(&mut self, parent: usize, child: usize, label: &str) {
        self.nodes[parent].children.push(child);
        self.nodes[parent].labels.push(label.to_string());
    }

    fn finish(self) -> GameTree {
        GameTree::new(self.nodes)
            .expect("fixture trees are well formed")
            .with_one_hot_features()
    }
}

/// Follower chooses to stay (leader then picks between (10,-1) and (-1,1))
/// or to exit with payoffs `(k1, k2)`.
pub fn build_fig1(k1: f64, k2: f64) -> GameTree {
    let mut b = Builder::new();
    let s = b.internal(Owner::Follower);
    let sp = b.internal(Owner::Leader);
    b.link(s, sp, "stay");
    b.leaf(sp, "left", 10.0, -1.0);
    b.leaf(sp, "right", -1.0, 1.0);
    b.leaf(s, "exit", k1, k2);
    b.finish()
}

/// Seven-state fixture for unfulfillable and costly promises.
pub fn build_promise_game(k1: f64, k2: f64, eps: f64) -> Result<GameTree, GameError> {
    if !(eps > 0.0) {
        return Err(GameError::BadParameter(format!("eps must be positive, got {eps}")));
    }
    let mut b = Builder::new();
    let s = b.internal(Owner::Follower);
    let sp = b.internal(Owner::Leader);
    b.link(s, sp, "stay");
    b.leaf(sp, "left", 10.0, -1.0);
    let spp = b.internal(Owner::Leader);
    b.link(sp, spp, "right");
    b.leaf(spp, "left", k1, k2);
    b.leaf(spp, "right", -1.0, 1.0 - eps);
    b.leaf(s, "exit", -10.0, 0.0);
    Ok(b.finish())
}

/// Follower picks between two leader subgames with leaves
/// {(10,-1), (-1,1)} and {(0,0), (4,0.5)}.
pub fn build_fig6() -> GameTree {
    let mut b = Builder::new();
    let s = b.internal(Owner::Follower);
    let sp = b.internal(Owner::Leader);
    b.link(s, sp, "left");
    b.leaf(sp, "left", 10.0, -1.0);
    b.leaf(sp, "right", -1.0, 1.0);
    let spp = b.internal(Owner::Leader);
    b.link(s, spp, "right");
    b.leaf(spp, "left", 0.0, 0.0);
    b.leaf(spp, "right", 4.0, 0.5);
    b.finish()
}

/// Random tree with at most `max_states` states, integer-free payoffs in
/// `[-10, 10]` and roughly `chance_frac` of internal nodes owned by chance.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, max_states: usize, chance_frac: f64) -> GameTree {
    let target = rng.random_range(1..=max_states.max(1));
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let k = rng.random_range(2..=3);
        if children.len() + k > target {
            break;
        }
        let pick = rng.random_range(0..frontier.len());
        let parent = frontier.swap_remove(pick);
        for _ in 0..k {
            children.push(Vec::new());
            let id = children.len() - 1;
            children[parent].push(id);
            frontier.push(id);
        }
    }
    let nodes = children
        .into_iter()
        .map(|cs| {
            if cs.is_empty() {
                NodeSpec {
                    owner: Owner::Leaf,
                    children: cs,
                    labels: Vec::new(),
                    probs: Vec::new(),
                    payoffs: Some((rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))),
                    features: Vec::new(),
                }
            } else {
                let owner = if rng.random_bool(chance_frac) {
                    Owner::Chance
                } else if rng.random_bool(0.5) {
                    Owner::Leader
                } else {
                    Owner::Follower
                };
                let probs = if owner == Owner::Chance {
                    let w: Vec<f64> = cs.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
                    let head: f64 = p[..p.len() - 1].iter().sum();
                    *p.last_mut().unwrap() = 1.0 - head;
                    p
                } else {
                    Vec::new()
                };
                NodeSpec {
                    owner,
                    children: cs,
                    labels: Vec::new(),
                    probs,
                    payoffs: None,
                    features: Vec::new(),
                }
            }
        })
        .collect();
    let tree = GameTree::new(nodes).expect("generated trees are well formed");
    let depth_scale = 1.0 / (tree.max_depth() as f64).max(1.0);
    let mut tree = tree;
    for i in 0..tree.nodes.len() {
        let d = tree.depth[i] as f64 * depth_scale;
        let mut f = vec![d, 0.0, 0.0, 0.0];
        match tree.nodes[i].owner {
            Owner::Leader => f[1] = 1.0,
            Owner::Follower => f[2] = 1.0,
            Owner::Chance => f[3] = 1.0,
            Owner::Leaf => {}
        }
        tree.nodes[i].features = f;
    }
    tree.feature_dim = 4;
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{enumerate, validate};
    use rand::SeedableRng;

    #[test]
    fn fig1_shape() {
        let g = build_fig1(0.0, 0.0);
        assert_eq!(g.len(), 5);
        assert_eq!(g.owner(&0), Owner::Follower);
        assert_eq!(g.leaves().count(), 3);
        let exit = g.children(&0)[1];
        assert_eq!(g.payoffs(&exit), (0.0, 0.0));
        assert_eq!(g.action_labels(&0), vec!["stay", "exit"]);
        let h = build_fig1(-2.0, 1.0);
        assert_eq!(h.payoffs(&h.children(&0)[1]), (-2.0, 1.0));
        assert_eq!(build_fig1(-2.0, -1.0).leaves().count(), 3);
    }

    #[test]
    fn promise_and_fig6_shapes() {
        let g = build_promise_game(0.0, 0.0, 0.5).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.leaves().count(), 4);
        assert!(build_promise_game(0.0, 0.0, 0.0).is_err());
        let f = build_fig6();
        assert_eq!(f.leaves().count(), 4);
        assert_eq!(f.owner(&0), Owner::Follower);
    }

    #[test]
    fn new_rejects_malformed_trees() {
        let leaf = |p| NodeSpec {
            owner: Owner::Leaf,
            children: vec![],
            labels: vec![],
            probs: vec![],
            payoffs: p,
            features: vec![],
        };
        assert!(GameTree::new(vec![leaf(None)]).is_err());
        assert!(GameTree::new(vec![leaf(Some((1.0, 2.0))), leaf(Some((0.0, 0.0)))]).is_err());
        let chance = NodeSpec {
            owner: Owner::Chance,
            children: vec![1, 2],
            labels: vec![],
            probs: vec![0.5, 0.4],
            payoffs: None,
            features: vec![],
        };
        let bad = vec![chance, leaf(Some((0.0, 0.0))), leaf(Some((0.0, 0.0)))];
        assert!(GameTree::new(bad).is_err());
    }

    #[test]
    fn random_trees_are_valid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = random_tree(&mut rng, 60, 0.2);
            assert!(t.len() <= 60);
            let e = enumerate(&t, &0, usize::MAX).unwrap();
            assert_eq!(e.len(), t.len());
            validate(&t, &e).unwrap();
        }
    }

    #[test]
    fn expand_round_trips_an_explicit_tree() {
        let g = build_fig6();
        let h = GameTree::expand(&g, &0, 100).unwrap();
        assert_eq!(g, h);
        assert!(matches!(GameTree::expand(&g, &0, 3), Err(GameError::TooLarge(3))));
    }
}
