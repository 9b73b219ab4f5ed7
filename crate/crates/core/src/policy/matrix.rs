use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::{FieldElement, PrimeField};

use super::tree::{Node, ThresholdTree};
use super::{reconstruct_secret, PolicyError};

/// One gate's row: `(t, n, f(1), ..., f(n), 0, ...)`, zero-padded to the matrix width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixRow {
    pub t: usize,
    pub n: usize,
    pub shares: Vec<FieldElement>,
}

/// Leaf at `(row, col)`; its share is `rows[row].shares[col]`, with x-coordinate `col + 1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LeafPosition {
    pub row: usize,
    pub col: usize,
    pub attribute: String,
}

/// A root child as seen from the matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RootChild {
    /// A leaf directly under the root; indexes into [`PolicyMatrix::leaves`].
    Leaf { col: usize, leaf: usize },
    /// A gate stored in `row`; `leaves` index into [`PolicyMatrix::leaves`] in column order.
    Gate { col: usize, row: usize, t: usize, leaves: Vec<usize> },
}

/// Share-generating matrix of a two-level threshold tree.
///
/// Row 0 is the root gate; rows `1..` are the root's child gates in
/// left-to-right order. Every non-padding position is either a leaf or, in
/// row 0 only, the parent of a child row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct PolicyMatrix {
    modulus: u64,
    rows: Vec<MatrixRow>,
    leaves: Vec<LeafPosition>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    modulus: u64,
    rows: Vec<Vec<u64>>,
    leaves: Vec<LeafPosition>,
}

impl From<PolicyMatrix> for MatrixJson {
    fn from(m: PolicyMatrix) -> Self {
        MatrixJson {
            modulus: m.modulus,
            rows: m
                .rows
                .iter()
                .map(|r| {
                    [r.t as u64, r.n as u64]
                        .into_iter()
                        .chain(r.shares.iter().map(FieldElement::value))
                        .collect()
                })
                .collect(),
            leaves: m.leaves,
        }
    }
}

impl TryFrom<MatrixJson> for PolicyMatrix {
    type Error = PolicyError;

    fn try_from(j: MatrixJson) -> Result<Self, PolicyError> {
        let field = PrimeField::new(j.modulus).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        let rows = j
            .rows
            .into_iter()
            .map(|r| {
                if r.len() < 2 {
                    return Err(PolicyError::Malformed("row shorter than (t, n)".into()));
                }
                let shares = r[2..]
                    .iter()
                    .map(|&v| field.checked_element(v))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| PolicyError::Malformed(e.to_string()))?;
                Ok(MatrixRow {
                    t: r[0] as usize,
                    n: r[1] as usize,
                    shares,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let width = rows.first().map_or(0, |r| r.shares.len());
        if rows.iter().any(|r| r.shares.len() != width) {
            return Err(PolicyError::Malformed("rows have different widths".into()));
        }
        PolicyMatrix::from_parts(j.modulus, rows, j.leaves)
    }
}

impl PolicyMatrix {
    /// Pads rows to a common width, sorts leaves and checks structure.
    pub fn from_parts(
        modulus: u64,
        mut rows: Vec<MatrixRow>,
        mut leaves: Vec<LeafPosition>,
    ) -> Result<Self, PolicyError> {
        let field = PrimeField::new(modulus).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        let width = rows.iter().map(|r| r.n.max(r.shares.len())).max().unwrap_or(0);
        for row in &mut rows {
            row.shares.resize(width, field.zero());
        }
        leaves.sort();
        let matrix = PolicyMatrix {
            modulus,
            rows,
            leaves,
        };
        matrix.validate()?;
        Ok(matrix)
    }

    fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Malformed(m.to_string()));
        let Some(root) = self.rows.first() else {
            return bad("matrix has no rows");
        };
        for row in &self.rows {
            if row.t == 0 || row.t > row.n {
                return Err(PolicyError::InvalidThreshold { t: row.t, n: row.n });
            }
            if row.shares.iter().any(|s| s.modulus() != self.modulus) {
                return bad("share from a different field");
            }
            if row.shares[row.n..].iter().any(|s| !s.is_zero()) {
                return bad("padding is not zero");
            }
        }
        let mut positions = BTreeSet::new();
        for leaf in &self.leaves {
            let Some(row) = self.rows.get(leaf.row) else {
                return bad("leaf refers to a missing row");
            };
            if leaf.col >= row.n || !positions.insert((leaf.row, leaf.col)) {
                return bad("leaf position out of range or repeated");
            }
        }
        for (r, row) in self.rows.iter().enumerate().skip(1) {
            if (0..row.n).any(|c| !positions.contains(&(r, c))) {
                return bad("child rows must consist of leaves");
            }
        }
        let gate_cols = (0..root.n).filter(|c| !positions.contains(&(0, *c))).count();
        if gate_cols != self.rows.len() - 1 {
            return bad("root columns do not match the child rows");
        }
        Ok(())
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.modulus).expect("modulus validated on construction")
    }

    pub fn rows(&self) -> &[MatrixRow] {
        &self.rows
    }

    pub fn leaves(&self) -> &[LeafPosition] {
        &self.leaves
    }

    pub fn width(&self) -> usize {
        self.rows[0].shares.len()
    }

    pub fn share(&self, leaf: &LeafPosition) -> FieldElement {
        self.rows[leaf.row].shares[leaf.col]
    }

    /// Root column whose share seeds child row `row`.
    pub fn root_col_of_row(&self, row: usize) -> Option<usize> {
        self.structure().into_iter().find_map(|c| match c {
            RootChild::Gate { col, row: r, .. } if r == row => Some(col),
            _ => None,
        })
    }

    /// Root children in column order.
    pub fn structure(&self) -> Vec<RootChild> {
        let mut next_row = 1;
        (0..self.rows[0].n)
            .map(|col| {
                if let Some(leaf) = self.leaves.iter().position(|l| l.row == 0 && l.col == col) {
                    RootChild::Leaf { col, leaf }
                } else {
                    let row = next_row;
                    next_row += 1;
                    RootChild::Gate {
                        col,
                        row,
                        t: self.rows[row].t,
                        leaves: (0..self.leaves.len()).filter(|&i| self.leaves[i].row == row).collect(),
                    }
                }
            })
            .collect()
    }

    /// Gate-by-gate bottom-up combination.
    ///
    /// `leaf_value` yields a value for each usable leaf; `interpolate` turns
    /// `(x, value)` pairs of one gate into the gate's value. Only the first
    /// `t` usable children of every gate are passed on. Returns `None` when
    /// the root does not collect `t` values.
    pub fn combine<T: Clone>(
        &self,
        mut leaf_value: impl FnMut(usize, &LeafPosition) -> Option<T>,
        mut interpolate: impl FnMut(&[(u64, T)], usize) -> Option<T>,
    ) -> Option<T> {
        let root_t = self.rows[0].t;
        let mut root_values = Vec::with_capacity(root_t);
        for child in self.structure() {
            if root_values.len() == root_t {
                break;
            }
            let value = match child {
                RootChild::Leaf { leaf, col } => leaf_value(leaf, &self.leaves[leaf]).map(|v| (col, v)),
                RootChild::Gate { col, t, leaves, .. } => {
                    let mut got = Vec::with_capacity(t);
                    for i in leaves {
                        if got.len() == t {
                            break;
                        }
                        let pos = &self.leaves[i];
                        if let Some(v) = leaf_value(i, pos) {
                            got.push((pos.col as u64 + 1, v));
                        }
                    }
                    if got.len() == t {
                        interpolate(&got, t).map(|v| (col, v))
                    } else {
                        None
                    }
                }
            };
            if let Some((col, v)) = value {
                root_values.push((col as u64 + 1, v));
            }
        }
        if root_values.len() < root_t {
            return None;
        }
        interpolate(&root_values, root_t)
    }

    /// Recovers the root secret from the stored shares of the leaves `matched` accepts.
    pub fn recover_secret(&self, matched: impl Fn(&LeafPosition) -> bool) -> Option<FieldElement> {
        self.combine(
            |_, pos| matched(pos).then(|| self.share(pos)),
            |shares, t| reconstruct_secret(shares, t).ok(),
        )
    }

    /// Whether every leaf carries a nonzero share.
    pub fn has_shares(&self) -> bool {
        self.leaves.iter().all(|l| !self.share(l).is_zero())
    }

    /// Access structure only: every share replaced by 0.
    pub fn shape(&self) -> PolicyMatrix {
        let zero = self.field().zero();
        PolicyMatrix {
            modulus: self.modulus,
            rows: self
                .rows
                .iter()
                .map(|r| MatrixRow {
                    t: r.t,
                    n: r.n,
                    shares: vec![zero; r.shares.len()],
                })
                .collect(),
            leaves: self.leaves.clone(),
        }
    }

    /// Same matrix with every attribute label mapped through `f`.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> PolicyMatrix {
        PolicyMatrix {
            modulus: self.modulus,
            rows: self.rows.clone(),
            leaves: self
                .leaves
                .iter()
                .map(|l| LeafPosition {
                    row: l.row,
                    col: l.col,
                    attribute: f(&l.attribute),
                })
                .collect(),
        }
    }

    /// Canonical hashing input.
    ///
    /// Each integer is written as a one-byte length followed by its minimal
    /// big-endian bytes (zero has length 0). Layout: row count, then per row
    /// its field count followed by `t`, `n` and the padded shares, then `secret`.
    pub fn canonical_bytes(&self, secret: FieldElement) -> Vec<u8> {
        fn put(out: &mut Vec<u8>, v: u64) {
            let bytes = v.to_be_bytes();
            let skip = bytes.iter().take_while(|b| **b == 0).count();
            out.push((8 - skip) as u8);
            out.extend_from_slice(&bytes[skip..]);
        }
        let mut out = Vec::new();
        put(&mut out, self.rows.len() as u64);
        for row in &self.rows {
            put(&mut out, 2 + row.shares.len() as u64);
            put(&mut out, row.t as u64);
            put(&mut out, row.n as u64);
            for s in &row.shares {
                put(&mut out, s.value());
            }
        }
        put(&mut out, secret.value());
        out
    }

    pub fn policy_id(&self, secret: FieldElement) -> PolicyId {
        PolicyId(Sha256::digest(self.canonical_bytes(secret)).into())
    }
}

/// SHA-256 over the canonical matrix bytes and root secret.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PolicyId(pub [u8; 32]);

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PolicyId({self})")
    }
}

impl FromStr for PolicyId {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::hexutil::decode_array(s)
            .map(PolicyId)
            .map_err(PolicyError::Malformed)
    }
}

impl From<PolicyId> for String {
    fn from(id: PolicyId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for PolicyId {
    type Error = PolicyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A stored policy: id, share matrix and secret-free tree shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy_id: PolicyId,
    pub matrix: PolicyMatrix,
    pub skeleton: ThresholdTree,
}

impl PolicyRecord {
    /// Same record with every attribute label mapped through `f`.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> PolicyRecord {
        fn node(n: &Node, f: &impl Fn(&str) -> String) -> Node {
            match n {
                Node::Leaf(l) => Node::Leaf(super::tree::Leaf {
                    label: f(&l.label),
                    share: None,
                }),
                Node::Gate(g) => Node::Gate(super::tree::Gate {
                    t: g.t,
                    children: g.children.iter().map(|c| node(c, f)).collect(),
                    secret: None,
                }),
            }
        }
        let sk = &self.skeleton.root;
        PolicyRecord {
            policy_id: self.policy_id,
            matrix: self.matrix.relabel(&f),
            skeleton: ThresholdTree {
                root: super::tree::Gate {
                    t: sk.t,
                    children: sk.children.iter().map(|c| node(c, &f)).collect(),
                    secret: None,
                },
            },
        }
    }
}

/// Whether [`PolicyRegistry::store`] added a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreOutcome {
    Inserted,
    Duplicate,
}

/// `P_HashID`: policy records keyed by id, with set semantics.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRegistry {
    records: BTreeMap<PolicyId, PolicyRecord>,
}

impl PolicyRegistry {
    /// Hashes `(matrix, secret)` and inserts the record unless the id is present.
    ///
    /// The secret is not retained.
    pub fn store(
        &mut self,
        matrix: PolicyMatrix,
        secret: FieldElement,
        skeleton: ThresholdTree,
    ) -> (PolicyId, StoreOutcome) {
        let policy_id = matrix.policy_id(secret);
        if self.records.contains_key(&policy_id) {
            return (policy_id, StoreOutcome::Duplicate);
        }
        self.records.insert(
            policy_id,
            PolicyRecord {
                policy_id,
                matrix,
                skeleton: skeleton.skeleton(),
            },
        );
        (policy_id, StoreOutcome::Inserted)
    }

    /// Inserts an already-hashed record, as when replaying stored records.
    pub fn insert(&mut self, record: PolicyRecord) -> StoreOutcome {
        if self.records.contains_key(&record.policy_id) {
            return StoreOutcome::Duplicate;
        }
        self.records.insert(record.policy_id, record);
        StoreOutcome::Inserted
    }

    pub fn get(&self, id: &PolicyId) -> Option<&PolicyRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PolicyRecord> {
        self.records.values()
    }
}
