use std::collections::{BTreeSet, VecDeque};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::field::{FieldElement, PrimeField};

use super::matrix::{LeafPosition, MatrixRow, PolicyMatrix};
use super::parse::Formula;
use super::PolicyError;

/// How many times a polynomial is redrawn when one of its evaluations is 0.
const RESAMPLE_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leaf {
    pub label: String,
    /// Share received from the parent gate; `None` in a skeleton.
    #[serde(skip)]
    pub share: Option<FieldElement>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub t: usize,
    pub children: Vec<Node>,
    /// The gate's secret, `f(0)`; `None` in a skeleton.
    #[serde(skip)]
    pub secret: Option<FieldElement>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf(Leaf),
    Gate(Gate),
}

impl Gate {
    pub fn n(&self) -> usize {
        self.children.len()
    }

    fn of(t: usize, children: Vec<Node>) -> Gate {
        Gate {
            t,
            children,
            secret: None,
        }
    }
}

impl Node {
    fn leaf(label: &str) -> Node {
        Node::Leaf(Leaf {
            label: label.to_string(),
            share: None,
        })
    }
}

/// A (t,n) threshold tree at most two gate levels deep.
///
/// The root is always a gate; its children are leaves or gates whose
/// children are all leaves. This is the shape the share matrix can encode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdTree {
    pub root: Gate,
}

impl ThresholdTree {
    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Leaf labels in matrix order: root children left to right, descending into child gates.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for child in &self.root.children {
            match child {
                Node::Leaf(l) => out.push(l.label.as_str()),
                Node::Gate(g) => out.extend(g.children.iter().map(|c| match c {
                    Node::Leaf(l) => l.label.as_str(),
                    Node::Gate(_) => unreachable!("trees are at most two gate levels deep"),
                })),
            }
        }
        out
    }

    /// Copy with every secret and share removed.
    pub fn skeleton(&self) -> ThresholdTree {
        fn strip(node: &Node) -> Node {
            match node {
                Node::Leaf(l) => Node::leaf(&l.label),
                Node::Gate(g) => Node::Gate(Gate::of(g.t, g.children.iter().map(strip).collect())),
            }
        }
        ThresholdTree {
            root: Gate::of(self.root.t, self.root.children.iter().map(strip).collect()),
        }
    }

    /// Threshold evaluation: a gate holds when at least `t` children hold.
    pub fn satisfies_with(&self, has: &impl Fn(&str) -> bool) -> bool {
        fn gate(g: &Gate, has: &impl Fn(&str) -> bool) -> bool {
            let held = g
                .children
                .iter()
                .filter(|c| match c {
                    Node::Leaf(l) => has(&l.label),
                    Node::Gate(inner) => gate(inner, has),
                })
                .count();
            held >= g.t
        }
        gate(&self.root, has)
    }

    pub fn satisfies(&self, attrs: &BTreeSet<String>) -> bool {
        self.satisfies_with(&|label| attrs.contains(label))
    }
}

/// Compiles a formula into a threshold tree.
///
/// A top-level AND of k clauses becomes a (k,k) root, a top-level OR a (1,k)
/// root, and a lone attribute a (1,1) root. Clauses become (n,n) or (1,n)
/// gates over their attributes. Formulas that still nest deeper after
/// flattening are rejected.
pub fn build_tree(formula: &Formula) -> Result<ThresholdTree, PolicyError> {
    let gate_over_leaves = |f: &Formula| -> Result<Node, PolicyError> {
        let (is_and, children) = match f {
            Formula::Leaf(label) => return Ok(Node::leaf(label)),
            Formula::And(cs) => (true, cs),
            Formula::Or(cs) => (false, cs),
        };
        let leaves = children
            .iter()
            .map(|c| match c {
                Formula::Leaf(label) => Ok(Node::leaf(label)),
                _ => Err(PolicyError::TooDeep),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let t = if is_and { leaves.len() } else { 1 };
        Ok(Node::Gate(Gate::of(t, leaves)))
    };

    let root = match formula.flattened() {
        Formula::Leaf(label) => Gate::of(1, vec![Node::leaf(&label)]),
        Formula::And(cs) if cs.is_empty() => return Err(PolicyError::EmptyGate),
        Formula::Or(cs) if cs.is_empty() => return Err(PolicyError::EmptyGate),
        Formula::And(cs) => {
            let children = cs.iter().map(gate_over_leaves).collect::<Result<Vec<_>, _>>()?;
            Gate::of(children.len(), children)
        }
        Formula::Or(cs) => {
            let children = cs.iter().map(gate_over_leaves).collect::<Result<Vec<_>, _>>()?;
            Gate::of(1, children)
        }
    };
    if root.children.iter().any(|c| matches!(c, Node::Gate(g) if g.children.is_empty())) {
        return Err(PolicyError::EmptyGate);
    }
    Ok(ThresholdTree { root })
}

/// Supplies the root secret and polynomial coefficients during share assignment.
pub trait ShareSource {
    /// A nonzero root secret.
    fn root_secret(&mut self, field: PrimeField) -> FieldElement;
    fn coefficient(&mut self, field: PrimeField) -> FieldElement;
}

impl<R: RngCore> ShareSource for R {
    fn root_secret(&mut self, field: PrimeField) -> FieldElement {
        field.random_nonzero(self)
    }

    fn coefficient(&mut self, field: PrimeField) -> FieldElement {
        field.random(self)
    }
}

/// Replays a fixed secret and coefficient list; coefficients run out as zeros.
#[derive(Clone, Debug)]
pub struct FixedShares {
    secret: u64,
    coefficients: VecDeque<u64>,
}

impl FixedShares {
    /// `coefficients` are consumed low degree first, gate by gate in matrix row order.
    pub fn new(secret: u64, coefficients: impl IntoIterator<Item = u64>) -> Self {
        Self {
            secret,
            coefficients: coefficients.into_iter().collect(),
        }
    }
}

impl ShareSource for FixedShares {
    fn root_secret(&mut self, field: PrimeField) -> FieldElement {
        field.element(self.secret)
    }

    fn coefficient(&mut self, field: PrimeField) -> FieldElement {
        field.element(self.coefficients.pop_front().unwrap_or(0))
    }
}

/// Draws `f(x) = secret + a_1 x + ... + a_{t-1} x^{t-1}` and returns `f(1..=n)`.
///
/// All returned shares are nonzero; 0 is reserved for matrix padding.
fn share_out<S: ShareSource + ?Sized>(
    secret: FieldElement,
    t: usize,
    n: usize,
    source: &mut S,
) -> Result<Vec<FieldElement>, PolicyError> {
    let field = secret.field();
    for _ in 0..RESAMPLE_LIMIT {
        let coefficients: Vec<FieldElement> = std::iter::once(secret)
            .chain((1..t).map(|_| source.coefficient(field)))
            .collect();
        let shares: Vec<FieldElement> = (1..=n as u64)
            .map(|x| evaluate(&coefficients, field.element(x)))
            .collect();
        if shares.iter().all(|s| !s.is_zero()) {
            return Ok(shares);
        }
    }
    Err(PolicyError::ShareSampling)
}

/// Horner evaluation of a polynomial given low degree first.
pub(crate) fn evaluate(coefficients: &[FieldElement], x: FieldElement) -> FieldElement {
    coefficients
        .iter()
        .rev()
        .fold(x.field().zero(), |acc, &c| acc * x + c)
}

/// Assigns shares top-down and emits the share matrix.
///
/// Returns the tree with secrets filled in, the matrix, and the root secret.
pub fn assign_shares<S: ShareSource + ?Sized>(
    tree: &ThresholdTree,
    source: &mut S,
    field: PrimeField,
) -> Result<(ThresholdTree, PolicyMatrix, FieldElement), PolicyError> {
    let root_secret = source.root_secret(field);
    if root_secret.is_zero() {
        return Err(PolicyError::ShareSampling);
    }
    let mut tree = tree.skeleton();
    let root = &mut tree.root;
    if root.t == 0 || root.t > root.n() {
        return Err(PolicyError::InvalidThreshold { t: root.t, n: root.n() });
    }
    root.secret = Some(root_secret);
    let root_shares = share_out(root_secret, root.t, root.n(), source)?;

    let mut rows = vec![MatrixRow {
        t: root.t,
        n: root.n(),
        shares: root_shares.clone(),
    }];
    let mut leaves = Vec::new();
    for (col, (child, share)) in root.children.iter_mut().zip(&root_shares).enumerate() {
        match child {
            Node::Leaf(leaf) => {
                leaf.share = Some(*share);
                leaves.push(LeafPosition {
                    row: 0,
                    col,
                    attribute: leaf.label.clone(),
                });
            }
            Node::Gate(gate) => {
                if gate.t == 0 || gate.t > gate.n() {
                    return Err(PolicyError::InvalidThreshold { t: gate.t, n: gate.n() });
                }
                gate.secret = Some(*share);
                let shares = share_out(*share, gate.t, gate.n(), source)?;
                let row = rows.len();
                for (gcol, (grandchild, s)) in gate.children.iter_mut().zip(&shares).enumerate() {
                    let Node::Leaf(leaf) = grandchild else {
                        return Err(PolicyError::TooDeep);
                    };
                    leaf.share = Some(*s);
                    leaves.push(LeafPosition {
                        row,
                        col: gcol,
                        attribute: leaf.label.clone(),
                    });
                }
                rows.push(MatrixRow {
                    t: gate.t,
                    n: gate.n(),
                    shares,
                });
            }
        }
    }
    let matrix = PolicyMatrix::from_parts(field.modulus(), rows, leaves)?;
    Ok((tree, matrix, root_secret))
}
