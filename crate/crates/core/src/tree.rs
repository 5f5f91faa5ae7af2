//! Finite multinomial market models stored as explicit path trees.
//!
//! Nodes are indexed breadth-first: by time, then in parent order, then in
//! child order. Every per-node output in the crate is keyed by this index,
//! so each time slice occupies a contiguous index range.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt;

/// Tolerance on the sum of child probabilities at every node.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Largest number of periods accepted by [`build_binomial`].
pub const MAX_BINOMIAL_PERIODS: usize = 16;
/// Largest leaf count accepted by the i.i.d. and regime-switching builders.
pub const MAX_LEAVES: usize = 1 << 20;
const MAX_VIOLATIONS: usize = 100;

/// Edge from a node to one of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub node: usize,
    /// Conditional probability of moving to `node`.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub time: usize,
    /// Discounted prices of the traded assets.
    pub price: Vec<f64>,
    pub parent: Option<usize>,
    pub children: Vec<Edge>,
    /// Hidden market regime, set by [`build_regime_switching`].
    pub regime: Option<usize>,
}

/// Immutable, validated scenario tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    num_assets: usize,
    horizon: usize,
    nodes: Vec<Node>,
    prob: Vec<f64>,
    slices: Vec<Range<usize>>,
    leaf_pos: Vec<Option<usize>>,
}

/// One row of an increment law: a price move and its conditional probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Increment {
    pub delta: Vec<f64>,
    pub p: f64,
}

impl Increment {
    pub fn new(delta: Vec<f64>, p: f64) -> Self {
        Self { delta, p }
    }
}

/// How an increment is applied to the parent price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `child = parent + Δ`
    #[default]
    Additive,
    /// `child = parent ⊙ (1 + Δ)`
    Multiplicative,
}

impl StepMode {
    fn apply(self, price: &[f64], delta: &[f64]) -> Vec<f64> {
        match self {
            StepMode::Additive => price.iter().zip(delta).map(|(s, d)| s + d).collect(),
            StepMode::Multiplicative => price
                .iter()
                .zip(delta)
                .map(|(s, d)| s * (1.0 + d))
                .collect(),
        }
    }
}

/// A single invariant violation found by [`validate_nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: usize,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl ScenarioTree {
    /// Validates `nodes` and builds the tree.
    pub fn from_nodes(num_assets: usize, horizon: usize, nodes: Vec<Node>) -> Result<Self> {
        let violations = validate_nodes(num_assets, horizon, &nodes);
        if !violations.is_empty() {
            let msg: Vec<String> = violations
                .iter()
                .take(5)
                .map(|v| v.message.clone())
                .collect();
            return Err(Error::InvalidTree(msg.join("; ")));
        }
        Ok(Self::index(num_assets, horizon, nodes))
    }

    fn index(num_assets: usize, horizon: usize, nodes: Vec<Node>) -> Self {
        let mut prob = vec![0.0; nodes.len()];
        prob[0] = 1.0;
        for (n, node) in nodes.iter().enumerate() {
            for e in &node.children {
                prob[e.node] = prob[n] * e.p;
            }
        }
        let mut slices = Vec::with_capacity(horizon + 1);
        let mut start = 0;
        for t in 0..=horizon {
            let mut end = start;
            while end < nodes.len() && nodes[end].time == t {
                end += 1;
            }
            slices.push(start..end);
            start = end;
        }
        let mut leaf_pos = vec![None; nodes.len()];
        for (pos, n) in slices[horizon].clone().enumerate() {
            leaf_pos[n] = Some(pos);
        }
        Self {
            num_assets,
            horizon,
            nodes,
            prob,
            slices,
            leaf_pos,
        }
    }

    pub fn num_assets(&self) -> usize {
        self.num_assets
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> &Node {
        &self.nodes[n]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Unconditional probability of reaching node `n`.
    pub fn prob(&self, n: usize) -> f64 {
        self.prob[n]
    }

    /// Index range of the nodes at time `t`.
    pub fn slice(&self, t: usize) -> Range<usize> {
        self.slices[t].clone()
    }

    /// Leaf node indices in breadth-first order.
    pub fn leaves(&self) -> Range<usize> {
        self.slice(self.horizon)
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    /// Position of node `n` in [`leaves`](Self::leaves), if it is a leaf.
    pub fn leaf_pos(&self, n: usize) -> Option<usize> {
        self.leaf_pos[n]
    }

    pub fn is_leaf(&self, n: usize) -> bool {
        self.leaf_pos[n].is_some()
    }

    /// Nodes that have children, in index order.
    pub fn interior(&self) -> Range<usize> {
        0..self.leaves().start
    }

    /// Price increment `S(child) − S(parent)` along edge `k` of node `n`.
    pub fn increment(&self, n: usize, k: usize) -> Vec<f64> {
        let child = &self.nodes[self.nodes[n].children[k].node];
        child
            .price
            .iter()
            .zip(&self.nodes[n].price)
            .map(|(c, p)| c - p)
            .collect()
    }

    /// All child increments of node `n`.
    pub fn increments(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.nodes[n].children.len())
            .map(|k| self.increment(n, k))
            .collect()
    }

    /// Edge path from the root to `n`, as `(node, child slot)` pairs.
    pub fn path_to(&self, n: usize) -> Vec<(usize, usize)> {
        let mut path = Vec::with_capacity(self.nodes[n].time);
        let mut cur = n;
        while let Some(parent) = self.nodes[cur].parent {
            let slot = self.nodes[parent]
                .children
                .iter()
                .position(|e| e.node == cur)
                .expect("child listed under its parent");
            path.push((parent, slot));
            cur = parent;
        }
        path.reverse();
        path
    }

    /// Leaves of the subtree rooted at `n`, as a contiguous index range.
    pub fn subtree_leaves(&self, n: usize) -> Range<usize> {
        let (mut lo, mut hi) = (n, n);
        while !self.is_leaf(lo) {
            lo = self.nodes[lo].children.first().unwrap().node;
            hi = self.nodes[hi].children.last().unwrap().node;
        }
        lo..hi + 1
    }

    /// Serializes the tree (and optionally a claim) as a JSON document.
    pub fn to_json(&self, claim: Option<&Claim>) -> String {
        let doc = TreeDocument {
            num_assets: self.num_assets,
            horizon: self.horizon,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeDocument {
                    id,
                    time: n.time,
                    price: n.price.clone(),
                    parent: n.parent,
                    children: n
                        .children
                        .iter()
                        .map(|e| EdgeDocument { id: e.node, p: e.p })
                        .collect(),
                    regime: n.regime,
                })
                .collect(),
            claim: claim.map(|c| c.payoff.clone()),
        };
        fmt::to_json_string(&doc).expect("tree document serializes")
    }

    /// Parses and validates a JSON tree document.
    pub fn from_json(s: &str) -> Result<(Self, Option<Claim>)> {
        let doc: TreeDocument = serde_json::from_str(s)?;
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (pos, nd) in doc.nodes.into_iter().enumerate() {
            if nd.id != pos {
                return Err(Error::InvalidTree(format!(
                    "node at position {pos} has id {}",
                    nd.id
                )));
            }
            nodes.push(Node {
                time: nd.time,
                price: nd.price,
                parent: nd.parent,
                children: nd
                    .children
                    .into_iter()
                    .map(|e| Edge { node: e.id, p: e.p })
                    .collect(),
                regime: nd.regime,
            });
        }
        let tree = Self::from_nodes(doc.num_assets, doc.horizon, nodes)?;
        let claim = match doc.claim {
            Some(values) => Some(attach_claim(&tree, &ClaimSpec::PerLeaf { values })?),
            None => None,
        };
        Ok((tree, claim))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDocument {
    num_assets: usize,
    horizon: usize,
    nodes: Vec<NodeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claim: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    id: usize,
    time: usize,
    price: Vec<f64>,
    parent: Option<usize>,
    children: Vec<EdgeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regime: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDocument {
    id: usize,
    p: f64,
}

/// Checks every structural invariant of a tree given as raw parts.
///
/// Returns at most the first 100 violations; an empty list means the nodes
/// form a valid scenario tree.
pub fn validate_nodes(num_assets: usize, horizon: usize, nodes: &[Node]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |node: usize, message: String| {
        if out.len() < MAX_VIOLATIONS {
            out.push(Violation { node, message });
        }
    };
    if num_assets == 0 {
        push(0, "num_assets must be positive".into());
    }
    if horizon == 0 {
        push(0, "horizon must be positive".into());
    }
    if nodes.is_empty() {
        push(0, "tree has no nodes".into());
        return out;
    }
    let roots: Vec<usize> = (0..nodes.len())
        .filter(|&n| nodes[n].parent.is_none())
        .collect();
    if roots != [0] {
        push(
            0,
            format!("expected a single root at node 0, found roots {roots:?}"),
        );
    }
    if nodes[0].time != 0 {
        push(0, "root is not at time 0".into());
    }
    let mut parent_of = vec![None; nodes.len()];
    for (n, node) in nodes.iter().enumerate() {
        if node.price.len() != num_assets {
            push(
                n,
                format!(
                    "price length {} != num_assets at node {n}",
                    node.price.len()
                ),
            );
        }
        if node.price.iter().any(|x| !x.is_finite()) {
            push(n, format!("non-finite price at node {n}"));
        }
        if node.time > horizon {
            push(n, format!("time {} beyond horizon at node {n}", node.time));
        }
        if node.time == horizon && !node.children.is_empty() {
            push(n, format!("terminal node {n} has children"));
        }
        if node.time < horizon && node.children.is_empty() {
            push(n, format!("leaf before horizon at node {n}"));
        }
        let mut sum = 0.0;
        for e in &node.children {
            if !(e.p > 0.0) {
                push(n, format!("nonpositive probability at node {n}"));
            } else if e.p > 1.0 {
                push(n, format!("probability above one at node {n}"));
            }
            sum += e.p;
            let Some(child) = nodes.get(e.node) else {
                push(n, format!("child {} of node {n} does not exist", e.node));
                continue;
            };
            if child.time != node.time + 1 {
                push(n, format!("time skip from node {n} to node {}", e.node));
            }
            if child.parent != Some(n) {
                push(
                    n,
                    format!("child {} of node {n} names a different parent", e.node),
                );
            }
            if let Some(prev) = parent_of[e.node].replace(n) {
                push(
                    e.node,
                    format!("node {} shared by parents {prev} and {n}", e.node),
                );
            }
        }
        if !node.children.is_empty() && (sum - 1.0).abs() > PROB_SUM_TOL {
            push(
                n,
                format!("child probabilities at node {n} sum to {}", fmt::g17(sum)),
            );
        }
    }
    for (n, node) in nodes.iter().enumerate().skip(1) {
        if node.parent.is_some() && parent_of[n].is_none() {
            push(
                n,
                format!("node {n} is not listed as a child of its parent"),
            );
        }
    }
    // Breadth-first order: the child lists, read in node order, enumerate 1..len.
    let mut expected = 1;
    for (n, node) in nodes.iter().enumerate() {
        for e in &node.children {
            if e.node != expected {
                push(
                    n,
                    format!("node {} is out of breadth-first order at node {n}", e.node),
                );
                return out;
            }
            expected += 1;
        }
    }
    if expected != nodes.len() {
        push(expected.min(nodes.len() - 1), "unreachable nodes".into());
    }
    out
}

/// Re-checks a constructed tree. Always empty for trees built through this module.
pub fn validate_tree(tree: &ScenarioTree) -> Vec<Violation> {
    validate_nodes(tree.num_assets, tree.horizon, &tree.nodes)
}

/// Terminal payoff, one value per leaf in leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub payoff: Vec<f64>,
}

impl Claim {
    /// Payoff at leaf node `n`.
    pub fn at(&self, tree: &ScenarioTree, n: usize) -> f64 {
        self.payoff[tree.leaf_pos(n).expect("claim evaluated at a leaf")]
    }

    /// `max(1, max |H|)`, the reference magnitude for error tolerances.
    pub fn scale(&self) -> f64 {
        self.payoff.iter().fold(1.0_f64, |m, h| m.max(h.abs()))
    }

    pub fn constant_value(&self) -> Option<f64> {
        let first = *self.payoff.first()?;
        self.payoff.iter().all(|&h| h == first).then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSpec {
    /// `max(S⁰_T − K, 0)` on asset 0.
    Call {
        strike: f64,
    },
    /// `max(K − S⁰_T, 0)` on asset 0.
    Put {
        strike: f64,
    },
    Constant {
        value: f64,
    },
    PerLeaf {
        values: Vec<f64>,
    },
}

pub fn attach_claim(tree: &ScenarioTree, spec: &ClaimSpec) -> Result<Claim> {
    let terminal = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        tree.leaves().map(|n| f(tree.node(n).price[0])).collect()
    };
    let payoff = match spec {
        ClaimSpec::Call { strike } => terminal(&|s| (s - strike).max(0.0)),
        ClaimSpec::Put { strike } => terminal(&|s| (strike - s).max(0.0)),
        ClaimSpec::Constant { value } => vec![*value; tree.num_leaves()],
        ClaimSpec::PerLeaf { values } => {
            if values.len() != tree.num_leaves() {
                return Err(Error::bad(
                    "claim.values",
                    format!("{} values for {} leaves", values.len(), tree.num_leaves()),
                ));
            }
            values.clone()
        }
    };
    if payoff.iter().any(|h| !h.is_finite()) {
        return Err(Error::bad("claim", "non-finite payoff"));
    }
    Ok(Claim { payoff })
}

fn check_s0(s0: &[f64]) -> Result<()> {
    if s0.is_empty() || s0.iter().any(|x| !x.is_finite()) {
        return Err(Error::bad("s0", "need at least one finite initial price"));
    }
    Ok(())
}

fn check_law(field: &str, law: &[Increment], d: usize) -> Result<()> {
    if law.len() < 2 {
        return Err(Error::bad(field, "need at least two increments"));
    }
    for inc in law {
        if inc.delta.len() != d {
            return Err(Error::bad(
                field,
                format!("increment of length {} for {d} assets", inc.delta.len()),
            ));
        }
        if inc.delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::bad(field, "non-finite increment"));
        }
        if !(inc.p > 0.0 && inc.p < 1.0) {
            return Err(Error::bad(
                field,
                format!("probability {} outside (0,1)", inc.p),
            ));
        }
    }
    let sum: f64 = law.iter().map(|i| i.p).sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::bad(
            field,
            format!("probabilities sum to {}", fmt::g17(sum)),
        ));
    }
    Ok(())
}

fn check_periods(periods: usize, branching: usize) -> Result<()> {
    if periods == 0 {
        return Err(Error::bad("periods", "must be positive"));
    }
    let leaves = (branching as f64).powi(periods as i32);
    if leaves > MAX_LEAVES as f64 {
        return Err(Error::bad(
            "periods",
            format!("{branching}^{periods} leaves exceeds the limit {MAX_LEAVES}"),
        ));
    }
    Ok(())
}

/// Expands a tree level by level. `branch` maps a node to its children as
/// `(price, probability, regime)` triples.
fn expand<F>(s0: &[f64], root_regime: Option<usize>, periods: usize, mut branch: F) -> ScenarioTree
where
    F: FnMut(&Node) -> Vec<(Vec<f64>, f64, Option<usize>)>,
{
    let mut nodes = vec![Node {
        time: 0,
        price: s0.to_vec(),
        parent: None,
        children: Vec::new(),
        regime: root_regime,
    }];
    let mut level = 0..1;
    for t in 0..periods {
        let next_start = nodes.len();
        for n in level.clone() {
            for (price, p, regime) in branch(&nodes[n]) {
                let id = nodes.len();
                nodes.push(Node {
                    time: t + 1,
                    price,
                    parent: Some(n),
                    children: Vec::new(),
                    regime,
                });
                nodes[n].children.push(Edge { node: id, p });
            }
        }
        level = next_start..nodes.len();
    }
    ScenarioTree::index(s0.len(), periods, nodes)
}

/// Non-recombining multiplicative binomial tree; the up move is child 0.
pub fn build_binomial(
    s0: &[f64],
    up: f64,
    down: f64,
    p_up: f64,
    periods: usize,
) -> Result<ScenarioTree> {
    check_s0(s0)?;
    if !(up > 1.0 && up.is_finite()) {
        return Err(Error::bad("up", "must exceed 1"));
    }
    if !(down > 0.0 && down < 1.0) {
        return Err(Error::bad("down", "must lie in (0,1)"));
    }
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(Error::bad("p_up", "must lie in (0,1)"));
    }
    if periods == 0 || periods > MAX_BINOMIAL_PERIODS {
        return Err(Error::bad(
            "periods",
            format!("must lie in 1..={MAX_BINOMIAL_PERIODS}"),
        ));
    }
    Ok(expand(s0, None, periods, |node| {
        let scale = |f: f64| node.price.iter().map(|s| s * f).collect();
        vec![(scale(up), p_up, None), (scale(down), 1.0 - p_up, None)]
    }))
}

/// Tree whose every step draws from the same increment law.
pub fn build_iid_multinomial(
    s0: &[f64],
    increments: &[Increment],
    periods: usize,
    mode: StepMode,
) -> Result<ScenarioTree> {
    check_s0(s0)?;
    check_law("increments", increments, s0.len())?;
    check_periods(periods, increments.len())?;
    Ok(expand(s0, None, periods, |node| {
        increments
            .iter()
            .map(|inc| (mode.apply(&node.price, &inc.delta), inc.p, None))
            .collect()
    }))
}

/// Markov-modulated tree: at a node in regime `r` the next regime `j` is
/// drawn from `transition[r]`, then the increment from `regimes[j]`.
/// Transitions with zero probability produce no children.
pub fn build_regime_switching(
    s0: &[f64],
    regimes: &[Vec<Increment>],
    transition: &[Vec<f64>],
    initial_regime: usize,
    periods: usize,
    mode: StepMode,
) -> Result<ScenarioTree> {
    check_s0(s0)?;
    if regimes.is_empty() {
        return Err(Error::bad("regimes", "need at least one regime"));
    }
    for (j, law) in regimes.iter().enumerate() {
        check_law(&format!("regimes[{j}]"), law, s0.len())?;
    }
    if transition.len() != regimes.len() {
        return Err(Error::bad("transition", "need one row per regime"));
    }
    for (r, row) in transition.iter().enumerate() {
        if row.len() != regimes.len() || row.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::bad(
                format!("transition[{r}]"),
                "entries must lie in [0,1], one per regime",
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::bad(
                format!("transition[{r}]"),
                format!("row sums to {}", fmt::g17(sum)),
            ));
        }
    }
    if initial_regime >= regimes.len() {
        return Err(Error::bad("initial_regime", "index out of range"));
    }
    let branching: usize = regimes.iter().map(Vec::len).sum();
    check_periods(periods, branching)?;
    Ok(expand(s0, Some(initial_regime), periods, |node| {
        let r = node.regime.expect("regime-switching node carries a regime");
        let mut out = Vec::new();
        for (j, law) in regimes.iter().enumerate() {
            let q = transition[r][j];
            if q == 0.0 {
                continue;
            }
            for inc in law {
                out.push((mode.apply(&node.price, &inc.delta), q * inc.p, Some(j)));
            }
        }
        out
    }))
}

/// Parameters for [`build_random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTreeSpec {
    pub periods: usize,
    pub num_assets: usize,
    #[serde(default = "default_min_branching")]
    pub min_branching: usize,
    pub max_branching: usize,
    /// Half-width of the uniform per-node drift added to every increment.
    #[serde(default = "default_drift")]
    pub drift: f64,
    /// When set, assets beyond the first move as fixed multiples of asset 0,
    /// which makes every one-step second-moment matrix singular.
    #[serde(default)]
    pub redundant: bool,
    /// Re-center every step to zero conditional mean.
    #[serde(default)]
    pub martingale: bool,
    pub seed: u64,
}

fn default_min_branching() -> usize {
    2
}

fn default_drift() -> f64 {
    0.3
}

/// Random additive tree with random per-node branching, increments, drifts
/// and probabilities, for property tests and oracle runs.
pub fn build_random(spec: &RandomTreeSpec) -> Result<ScenarioTree> {
    let d = spec.num_assets;
    if d == 0 {
        return Err(Error::bad("num_assets", "must be positive"));
    }
    let free = if spec.redundant { 1 } else { d };
    if spec.min_branching < free + 1 || spec.max_branching < spec.min_branching {
        return Err(Error::bad(
            "min_branching",
            format!("need {} <= min_branching <= max_branching", free + 1),
        ));
    }
    check_periods(spec.periods, spec.max_branching)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let multiples: Vec<f64> = (0..d)
        .map(|i| if i == 0 { 1.0 } else { rng.gen_range(0.5..2.0) })
        .collect();
    let s0: Vec<f64> = (0..d).map(|_| rng.gen_range(5.0..15.0)).collect();
    Ok(expand(&s0, None, spec.periods, |node| {
        let b = rng.gen_range(spec.min_branching..=spec.max_branching);
        let drift: Vec<f64> = (0..free)
            .map(|_| rng.gen_range(-spec.drift..=spec.drift))
            .collect();
        let mut weights: Vec<f64> = (0..b).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let head: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - head;
        let mut base: Vec<Vec<f64>> = (0..b)
            .map(|_| {
                (0..free)
                    .map(|i| rng.gen_range(-1.0..1.0) + drift[i])
                    .collect()
            })
            .collect();
        if spec.martingale {
            for i in 0..free {
                let mean: f64 = base.iter().zip(&weights).map(|(x, p)| p * x[i]).sum();
                base.iter_mut().for_each(|x| x[i] -= mean);
            }
        }
        base.into_iter()
            .zip(weights.iter())
            .map(|(x, &p)| {
                let delta: Vec<f64> = if spec.redundant {
                    multiples.iter().map(|m| m * x[0]).collect()
                } else {
                    x
                };
                let price = node.price.iter().zip(&delta).map(|(s, x)| s + x).collect();
                (price, p, None)
            })
            .collect()
    }))
}
