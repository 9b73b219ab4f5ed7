use std::collections::BTreeMap;
use std::io::Write;

use k256::ecdsa::VerifyingKey;
use rand::RngCore;

use super::tx::parse_verifying_key;
use super::{genesis, leading_zero_bits, Block, ChainError, Digest32, MineOutcome, Strategy, Transaction};

/// Sender id to verification key, learned from `verification_key` payload fields.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyDirectory {
    keys: BTreeMap<Digest32, VerifyingKey>,
}

impl KeyDirectory {
    pub fn get(&self, id: &Digest32) -> Option<&VerifyingKey> {
        self.keys.get(id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Verifies `tx`, first learning the key it announces. A sender keeps its first key.
    pub fn admit(&mut self, tx: &Transaction) -> Result<(), String> {
        let announced = tx.announced_key().map(parse_verifying_key).transpose()?;
        let key = match (self.keys.get(&tx.sender), announced) {
            (Some(known), Some(new)) if *known != new => {
                return Err("sender announces a key different from its registered one".into())
            }
            (Some(known), _) => *known,
            (None, Some(new)) => new,
            (None, None) => return Err("sender has no registered verification key".into()),
        };
        if !tx.verify(&key) {
            return Err("signature does not verify".into());
        }
        self.keys.insert(tx.sender, key);
        Ok(())
    }
}

/// Checks `block` as the successor of `prev` at `height`, admitting its transactions into `keys`.
fn check_block(
    prev: &Block,
    block: &Block,
    height: usize,
    min_bits: u32,
    keys: &mut KeyDirectory,
) -> Result<(), ChainError> {
    if block.prev_hash != prev.block_hash {
        return Err(ChainError::BrokenLink { height });
    }
    if block.created_at < prev.created_at {
        return Err(ChainError::Timestamp { height });
    }
    if Block::digest_transactions(&block.transactions) != block.data_digest {
        return Err(ChainError::DataDigest { height });
    }
    if block.recompute_hash() != block.block_hash {
        return Err(ChainError::BlockHash { height });
    }
    if block.n_bits < min_bits {
        return Err(ChainError::TooEasy { height, n_bits: block.n_bits, minimum: min_bits });
    }
    if leading_zero_bits(&block.block_hash) < block.n_bits {
        return Err(ChainError::Difficulty { height, n_bits: block.n_bits });
    }
    let mut staged = keys.clone();
    for (index, tx) in block.transactions.iter().enumerate() {
        staged
            .admit(tx)
            .map_err(|reason| ChainError::Transaction { height, index, reason })?;
    }
    *keys = staged;
    Ok(())
}

/// Walks genesis to head, re-verifying every link, digest, hash, difficulty and signature.
pub fn validate_blocks(blocks: &[Block], min_bits: u32) -> Result<KeyDirectory, ChainError> {
    let first = blocks.first().ok_or(ChainError::Genesis)?;
    if *first != genesis() {
        return Err(ChainError::Genesis);
    }
    let mut keys = KeyDirectory::default();
    for (height, pair) in blocks.windows(2).enumerate() {
        check_block(&pair[0], &pair[1], height + 1, min_bits, &mut keys)?;
    }
    Ok(keys)
}

/// Append-only chain. All mutation goes through `append`.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Block>,
    difficulty: u32,
    keys: KeyDirectory,
}

impl Chain {
    /// Genesis-only chain whose later blocks need at least `difficulty` zero bits.
    pub fn new(difficulty: u32) -> Self {
        Self {
            blocks: vec![genesis()],
            difficulty,
            keys: KeyDirectory::default(),
        }
    }

    pub fn from_blocks(blocks: Vec<Block>, difficulty: u32) -> Result<Self, ChainError> {
        let keys = validate_blocks(&blocks, difficulty)?;
        Ok(Self { blocks, difficulty, keys })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    /// Index of the head; 0 for a genesis-only chain.
    pub fn height(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn difficulty(&self) -> u32 {
        self.difficulty
    }

    pub fn keys(&self) -> &KeyDirectory {
        &self.keys
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks.iter().flat_map(|b| b.transactions.iter())
    }

    pub fn append(&mut self, block: Block) -> Result<(), ChainError> {
        let head = self.blocks.last().expect("chain always holds genesis");
        check_block(head, &block, self.blocks.len(), self.difficulty, &mut self.keys)?;
        self.blocks.push(block);
        Ok(())
    }

    /// Template over the current head at the chain's difficulty.
    pub fn template(&self, transactions: Vec<Transaction>, creator: Digest32, tick: u64) -> Block {
        let tick = tick.max(self.head().created_at);
        Block::template(transactions, self.head().block_hash, creator, tick, self.difficulty)
    }

    /// Mines `transactions` into a block and appends it.
    pub fn mine_block<R: RngCore>(
        &mut self,
        transactions: Vec<Transaction>,
        creator: Digest32,
        tick: u64,
        strategy: Strategy,
        rng: &mut R,
    ) -> Result<MineOutcome, ChainError> {
        let mut block = self.template(transactions, creator, tick);
        let outcome = block.seal(strategy, rng, None)?;
        self.append(block)?;
        Ok(outcome)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        validate_blocks(&self.blocks, self.difficulty).map(|_| ())
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.blocks)
    }
}

pub fn to_jsonl(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&serde_json::to_string(b).expect("blocks always serialize"));
        out.push('\n');
    }
    out
}

/// One compact JSON block per line, fields in declaration order.
pub fn write_jsonl<W: Write>(blocks: &[Block], mut w: W) -> Result<(), ChainError> {
    w.write_all(to_jsonl(blocks).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| ChainError::Io(e.to_string()))
}

/// Parses a JSON-lines chain file. Lines must be in the exact form `write_jsonl` emits,
/// so text that parses to the same block but differs in bytes is rejected.
pub fn read_jsonl(data: &[u8]) -> Result<Vec<Block>, ChainError> {
    let body = data.strip_suffix(b"\n").unwrap_or(data);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, raw)| {
            let line = i + 1;
            let err = |message: String| ChainError::Parse { line, message };
            let text = std::str::from_utf8(raw).map_err(|e| err(e.to_string()))?;
            let block: Block = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
            if serde_json::to_string(&block).expect("blocks always serialize") != text {
                return Err(err("non-canonical encoding".into()));
            }
            Ok(block)
        })
        .collect()
}
