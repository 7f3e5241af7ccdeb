//! Append-only hash-linked store of historical experience records.
//!
//! The side chain is shared by all main chains: whenever a round of block
//! creation finishes, the trust values of the miners involved are packaged
//! into one side-chain block. Trusted miners are in charge of the store,
//! so appends carry the miner id and are checked against the authorized
//! set. Latest-trust lookups and windowed history queries feed the DBP
//! feature extraction.
//!
//! # On-disk format
//!
//! Blocks persist as length-prefixed binary records in append order.
//! All integers are little-endian; floats are IEEE-754 binary64 bit
//! patterns written little-endian.
//!
//! ```text
//! file      := magic blocks*
//! magic     := "PODTSC01" (8 bytes)
//! blocks    := len:u32 body:[u8; len]
//! body      := index:u64 miner:u32 origin:u32 prev_hash:[u8;32]
//!              n_records:u32 record* hash:[u8;32]
//! record    := user:u32 chain:u32 lt:f64 gt:f64 t:u64 f:u64
//!              chain_len:u64 active_users:u64 feedback:f64
//! ```
//!
//! `hash` is the SHA-256 digest of everything in `body` before it. The
//! genesis block links to an all-zero digest. `tests/fixtures/` pins the
//! exact bytes, hex-encoded.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::{ChainId, UserId};

const MAGIC: &[u8; 8] = b"PODTSC01";
pub const GENESIS_PREV_HASH: [u8; 32] = [0u8; 32];
/// Default per-block capacity for the serialized body (1 MB).
pub const DEFAULT_BLOCK_CAPACITY: usize = 1 << 20;

const RECORD_BYTES: usize = 4 + 4 + 8 + 8 + 8 + 8 + 8 + 8 + 8;

#[derive(Debug, Error)]
pub enum SideChainError {
    #[error("miner {0} is not an authorized side-chain writer")]
    Unauthorized(UserId),
    #[error("serialized block ({got} bytes) exceeds the block capacity ({cap} bytes)")]
    CapacityExceeded { got: usize, cap: usize },
    #[error("corrupt side-chain file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One historical experience tuple: the per-round snapshot of a miner's
/// trust standing plus the chain context and block feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub user_id: UserId,
    pub chain_id: ChainId,
    /// Local trust of the user on the chain at record time.
    pub lt_ij: f64,
    /// Global trust of the user at record time.
    pub gt_i: f64,
    /// Cumulative true blocks created by the user, network-wide.
    pub t_i: u64,
    /// Cumulative false blocks created by the user, network-wide.
    pub f_i: u64,
    /// Length of the chain in blocks.
    #[serde(rename = "L_j")]
    pub chain_len: u64,
    /// Number of active users on the chain.
    #[serde(rename = "N_j")]
    pub active_users: u64,
    /// Feedback to the block the user just created, in [0, 1].
    #[serde(rename = "F_k")]
    pub feedback: f64,
}

impl ExperienceRecord {
    fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.user_id.to_le_bytes());
        out.extend_from_slice(&self.chain_id.to_le_bytes());
        out.extend_from_slice(&self.lt_ij.to_le_bytes());
        out.extend_from_slice(&self.gt_i.to_le_bytes());
        out.extend_from_slice(&self.t_i.to_le_bytes());
        out.extend_from_slice(&self.f_i.to_le_bytes());
        out.extend_from_slice(&self.chain_len.to_le_bytes());
        out.extend_from_slice(&self.active_users.to_le_bytes());
        out.extend_from_slice(&self.feedback.to_le_bytes());
    }

    fn read_bytes(buf: &[u8]) -> Result<Self, SideChainError> {
        if buf.len() < RECORD_BYTES {
            return Err(SideChainError::Corrupt("truncated record".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        Ok(Self {
            user_id: u32_at(0),
            chain_id: u32_at(4),
            lt_ij: f64_at(8),
            gt_i: f64_at(16),
            t_i: u64_at(24),
            f_i: u64_at(32),
            chain_len: u64_at(40),
            active_users: u64_at(48),
            feedback: f64_at(56),
        })
    }
}

/// Header of a side-chain block: who appended it and from which chain's
/// round the records originate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub miner_id: UserId,
    pub origin_chain_id: ChainId,
    pub prev_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideChainBlock {
    pub index: u64,
    pub header: BlockHeader,
    pub body: Vec<ExperienceRecord>,
    pub hash: [u8; 32],
}

impl SideChainBlock {
    /// Canonical byte encoding of everything the hash covers.
    fn preimage(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(56 + self.body.len() * RECORD_BYTES);
        out.extend_from_slice(&self.index.to_le_bytes());
        out.extend_from_slice(&self.header.miner_id.to_le_bytes());
        out.extend_from_slice(&self.header.origin_chain_id.to_le_bytes());
        out.extend_from_slice(&self.header.prev_hash);
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        for r in &self.body {
            r.write_bytes(&mut out);
        }
        out
    }

    pub fn compute_hash(&self) -> [u8; 32] {
        Sha256::digest(self.preimage()).into()
    }

    fn to_disk_bytes(&self) -> Vec<u8> {
        let mut out = self.preimage();
        out.extend_from_slice(&self.hash);
        out
    }

    fn from_disk_bytes(buf: &[u8]) -> Result<Self, SideChainError> {
        if buf.len() < 56 + 32 {
            return Err(SideChainError::Corrupt("truncated block".into()));
        }
        let index = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let miner_id = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        let origin_chain_id = u32::from_le_bytes(buf[12..16].try_into().unwrap());
        let prev_hash: [u8; 32] = buf[16..48].try_into().unwrap();
        let n_records = u32::from_le_bytes(buf[48..52].try_into().unwrap()) as usize;
        let expect = 52 + n_records * RECORD_BYTES + 32;
        if buf.len() != expect {
            return Err(SideChainError::Corrupt(format!(
                "block length {} does not match {} declared records",
                buf.len(),
                n_records
            )));
        }
        let mut body = Vec::with_capacity(n_records);
        for i in 0..n_records {
            body.push(ExperienceRecord::read_bytes(&buf[52 + i * RECORD_BYTES..])?);
        }
        let hash: [u8; 32] = buf[buf.len() - 32..].try_into().unwrap();
        Ok(Self {
            index,
            header: BlockHeader {
                miner_id,
                origin_chain_id,
                prev_hash,
            },
            body,
            hash,
        })
    }
}

/// Locations of one user's records: `(block index, record index)` pairs in
/// append order, grouped per chain. Derived state, rebuildable by a scan.
#[derive(Debug, Default, Clone)]
struct UserIndex {
    last_block: usize,
    per_chain: BTreeMap<ChainId, Vec<(usize, usize)>>,
}

/// The append-only side chain plus its in-memory lookup index.
#[derive(Debug, Clone)]
pub struct SideChain {
    n_chains: u32,
    theta: f64,
    capacity: usize,
    blocks: Vec<SideChainBlock>,
    authorized: BTreeSet<UserId>,
    index: BTreeMap<UserId, UserIndex>,
}

/// Latest known trust standing of a user, with newcomer fallbacks at θ.
#[derive(Debug, Clone, PartialEq)]
pub struct LatestTrust {
    /// Most recent local trust per chain, θ where the user has no record.
    pub local: Vec<f64>,
    /// Most recent global trust, θ when the user has no records at all.
    pub global: f64,
}

impl SideChain {
    pub fn new(n_chains: u32, theta: f64) -> Self {
        Self::with_capacity(n_chains, theta, DEFAULT_BLOCK_CAPACITY)
    }

    pub fn with_capacity(n_chains: u32, theta: f64, capacity: usize) -> Self {
        Self {
            n_chains,
            theta,
            capacity,
            blocks: Vec::new(),
            authorized: BTreeSet::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[SideChainBlock] {
        &self.blocks
    }

    pub fn last_hash(&self) -> [u8; 32] {
        self.blocks.last().map_or(GENESIS_PREV_HASH, |b| b.hash)
    }

    /// Replace the set of miners allowed to append blocks.
    pub fn set_authorized<I: IntoIterator<Item = UserId>>(&mut self, miners: I) {
        self.authorized = miners.into_iter().collect();
    }

    /// Grant one additional miner append rights.
    pub fn authorize(&mut self, miner: UserId) {
        self.authorized.insert(miner);
    }

    /// Append one block of experience records on behalf of `miner_id`.
    ///
    /// The miner must be in the authorized set; the serialized block must
    /// fit the configured capacity. An empty record list is a valid block.
    pub fn append_block(
        &mut self,
        records: Vec<ExperienceRecord>,
        miner_id: UserId,
        origin_chain_id: ChainId,
    ) -> Result<&SideChainBlock, SideChainError> {
        if !self.authorized.contains(&miner_id) {
            return Err(SideChainError::Unauthorized(miner_id));
        }
        let mut block = SideChainBlock {
            index: self.blocks.len() as u64,
            header: BlockHeader {
                miner_id,
                origin_chain_id,
                prev_hash: self.last_hash(),
            },
            body: records,
            hash: [0u8; 32],
        };
        let size = 52 + block.body.len() * RECORD_BYTES + 32;
        if size > self.capacity {
            return Err(SideChainError::CapacityExceeded {
                got: size,
                cap: self.capacity,
            });
        }
        block.hash = block.compute_hash();
        let block_idx = self.blocks.len();
        for (rec_idx, r) in block.body.iter().enumerate() {
            let e = self.index.entry(r.user_id).or_default();
            e.last_block = block_idx;
            e.per_chain
                .entry(r.chain_id)
                .or_default()
                .push((block_idx, rec_idx));
        }
        self.blocks.push(block);
        Ok(self.blocks.last().unwrap())
    }

    /// Most recent trust values of `user`, per chain and global.
    ///
    /// Per-chain entries fall back to θ where the user has no record on
    /// that chain; a user with no records at all gets θ everywhere.
    pub fn latest_trust(&self, user: UserId) -> LatestTrust {
        let mut out = LatestTrust {
            local: vec![self.theta; self.n_chains as usize],
            global: self.theta,
        };
        if let Some(ui) = self.index.get(&user) {
            for (&chain, locs) in &ui.per_chain {
                if let Some(&(b, r)) = locs.last() {
                    if (chain as usize) < out.local.len() {
                        out.local[chain as usize] = self.blocks[b].body[r].lt_ij;
                    }
                }
            }
            // global trust comes from the user's newest record anywhere
            let newest = ui
                .per_chain
                .values()
                .filter_map(|locs| locs.last())
                .max_by_key(|&&(b, r)| (b, r));
            if let Some(&(b, r)) = newest {
                out.global = self.blocks[b].body[r].gt_i;
            }
        }
        out
    }

    /// The most recent record of `user` on `chain`, if any.
    pub fn latest_record(&self, user: UserId, chain: ChainId) -> Option<&ExperienceRecord> {
        let ui = self.index.get(&user)?;
        let &(b, r) = ui.per_chain.get(&chain)?.last()?;
        Some(&self.blocks[b].body[r])
    }

    /// Up to `window` most recent records for `(user, chain)`, oldest
    /// first. Returns an empty list when there is no history.
    pub fn query_history(
        &self,
        user: UserId,
        chain: ChainId,
        window: usize,
    ) -> Vec<ExperienceRecord> {
        let Some(ui) = self.index.get(&user) else {
            return Vec::new();
        };
        let Some(locs) = ui.per_chain.get(&chain) else {
            return Vec::new();
        };
        let start = locs.len().saturating_sub(window);
        locs[start..]
            .iter()
            .map(|&(b, r)| self.blocks[b].body[r])
            .collect()
    }

    /// True iff every stored hash recomputes from its block's contents and
    /// every prev_hash link matches the preceding block.
    pub fn verify_chain(&self) -> bool {
        let mut prev = GENESIS_PREV_HASH;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.index != i as u64
                || b.header.prev_hash != prev
                || b.compute_hash() != b.hash
            {
                return false;
            }
            prev = b.hash;
        }
        true
    }

    /// Rebuild the lookup index from the raw block sequence.
    fn rebuild_index(&mut self) {
        self.index.clear();
        for (block_idx, b) in self.blocks.iter().enumerate() {
            for (rec_idx, r) in b.body.iter().enumerate() {
                let e = self.index.entry(r.user_id).or_default();
                e.last_block = block_idx;
                e.per_chain
                    .entry(r.chain_id)
                    .or_default()
                    .push((block_idx, rec_idx));
            }
        }
    }

    /// Persist all blocks to `path` in the length-prefixed binary layout.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), SideChainError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        for b in &self.blocks {
            let bytes = b.to_disk_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(&bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a side chain previously written by [`SideChain::save`].
    ///
    /// The authorized set is not persisted; it starts empty.
    pub fn load<P: AsRef<Path>>(
        path: P,
        n_chains: u32,
        theta: f64,
    ) -> Result<Self, SideChainError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SideChainError::Corrupt("bad magic".into()));
        }
        let mut chain = Self::new(n_chains, theta);
        loop {
            let mut len_buf = [0u8; 4];
            match r.read_exact(&mut len_buf) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let len = u32::from_le_bytes(len_buf) as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            chain.blocks.push(SideChainBlock::from_disk_bytes(&buf)?);
        }
        chain.rebuild_index();
        Ok(chain)
    }

    /// Export every record as JSON lines, one record per line, in append
    /// order, using the historical-experience field names.
    pub fn export_jsonl<W: Write>(&self, mut w: W) -> Result<(), SideChainError> {
        for b in &self.blocks {
            for r in &b.body {
                let line = serde_json::to_string(r)
                    .map_err(|e| SideChainError::Corrupt(e.to_string()))?;
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}
