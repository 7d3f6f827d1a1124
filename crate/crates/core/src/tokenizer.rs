//! Graph tokenization.
//!
//! A LAP token matrix has one row per node followed by one row per edge.
//! Every row is `[feature | P[a] | P[b] | type one-hot | endpoint ids]`:
//!
//! ```text
//! node n:      [op_n / 15, P[n], P[n], 0, 1, -1, -1]
//! edge (u, v): [1.0,       P[u], P[v], 1, 0,  u,  v]
//! ```
//!
//! so the width is `d_f + 2 d_p + 4` with `d_f = 1`. The node-only encoding
//! keeps the same width but drops edge rows and positional columns.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ComputationalGraph, NUM_PRIMITIVES};
use crate::spectral::{graph_features, SpectralConfig, SpectralError, SpectralFeatures};

/// Width of the feature block. Only scalar features are supported.
pub const FEATURE_WIDTH: usize = 1;
pub const IDENTIFIER_WIDTH: usize = 4;

pub const TOKEN_FILE_MAGIC: &[u8; 4] = b"TART";
pub const TOKEN_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("features describe {features} nodes but the graph has {graph}")]
    FeatureGraphMismatch { features: usize, graph: usize },
    #[error("features have d_p = {features}, tokenizer expects {expected}")]
    WidthConfigMismatch { features: usize, expected: usize },
    #[error("matrix {index} has {rows} rows, more than R_max = {r_max}")]
    RowOverflow { index: usize, rows: usize, r_max: usize },
    #[error("matrix {index} has width {found}, expected {expected}")]
    WidthMismatch { index: usize, found: usize, expected: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("token file: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt token file: {0}")]
    CorruptFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    Node(usize),
    Edge(usize, usize),
    Pad,
}

impl RowKind {
    pub fn tag(&self) -> u8 {
        match self {
            RowKind::Node(_) => 0,
            RowKind::Edge(..) => 1,
            RowKind::Pad => 2,
        }
    }
}

/// Which encoding feeds the encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenMode {
    /// Node and edge tokens with Laplacian positional features.
    #[default]
    Lap,
    /// Node tokens carrying only the operator code.
    NodeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub d_p: usize,
    /// Use the raw primitive code instead of `code / 15` as node feature.
    pub raw_codes: bool,
    /// Edge endpoint ids are divided by this value (1.0 keeps raw indices).
    pub id_divisor: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { d_p: 3, raw_codes: false, id_divisor: 1.0 }
    }
}

impl TokenizerConfig {
    pub fn width(&self) -> usize {
        token_width(self.d_p)
    }

    fn node_feature(&self, code: u32) -> f64 {
        if self.raw_codes {
            code as f64
        } else {
            code as f64 / NUM_PRIMITIVES as f64
        }
    }
}

/// `d_f + 2 d_p + 4`.
pub fn token_width(d_p: usize) -> usize {
    FEATURE_WIDTH + 2 * d_p + IDENTIFIER_WIDTH
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub row_kinds: Vec<RowKind>,
    pub d_p: usize,
}

impl TokenMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Element count `R * C`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn push_identifier(row: &mut Vec<f64>, kind: RowKind, divisor: f64) {
    match kind {
        RowKind::Node(_) => row.extend_from_slice(&[0.0, 1.0, -1.0, -1.0]),
        RowKind::Edge(u, v) => row.extend_from_slice(&[1.0, 0.0, u as f64 / divisor, v as f64 / divisor]),
        RowKind::Pad => row.extend_from_slice(&[0.0; IDENTIFIER_WIDTH]),
    }
}

/// LAP token matrix of `g` given its positional features.
pub fn tokenize_lap(
    g: &ComputationalGraph,
    feats: &SpectralFeatures,
    cfg: &TokenizerConfig,
) -> Result<TokenMatrix, TokenizerError> {
    if feats.num_nodes() != g.num_nodes() {
        return Err(TokenizerError::FeatureGraphMismatch { features: feats.num_nodes(), graph: g.num_nodes() });
    }
    if feats.d_p != cfg.d_p {
        return Err(TokenizerError::WidthConfigMismatch { features: feats.d_p, expected: cfg.d_p });
    }
    let cols = cfg.width();
    let edges = g.sorted_edges();
    let rows = g.num_nodes() + edges.len();
    let mut data = Vec::with_capacity(rows * cols);
    let mut row_kinds = Vec::with_capacity(rows);

    for (n, &code) in g.node_ops().iter().enumerate() {
        data.push(cfg.node_feature(code));
        data.extend_from_slice(feats.node(n));
        data.extend_from_slice(feats.node(n));
        push_identifier(&mut data, RowKind::Node(n), cfg.id_divisor);
        row_kinds.push(RowKind::Node(n));
    }
    for &(u, v) in &edges {
        data.push(1.0);
        data.extend_from_slice(feats.node(u));
        data.extend_from_slice(feats.node(v));
        push_identifier(&mut data, RowKind::Edge(u, v), cfg.id_divisor);
        row_kinds.push(RowKind::Edge(u, v));
    }
    debug_assert_eq!(data.len(), rows * cols);
    Ok(TokenMatrix { rows, cols, data, row_kinds, d_p: cfg.d_p })
}

/// Node-only tokens: `[op feature, 0 ... 0, 0, 1, -1, -1]` per node, with
/// no edge rows. Connectivity never reaches the output.
pub fn tokenize_node_only(g: &ComputationalGraph, cfg: &TokenizerConfig) -> TokenMatrix {
    let cols = cfg.width();
    let rows = g.num_nodes();
    let mut data = Vec::with_capacity(rows * cols);
    for &code in g.node_ops() {
        data.push(cfg.node_feature(code));
        data.extend(std::iter::repeat_n(0.0, 2 * cfg.d_p));
        push_identifier(&mut data, RowKind::Node(0), cfg.id_divisor);
    }
    TokenMatrix { rows, cols, data, row_kinds: (0..rows).map(RowKind::Node).collect(), d_p: cfg.d_p }
}

/// Tokenizes one graph in the requested mode.
pub fn tokenize(
    g: &ComputationalGraph,
    mode: TokenMode,
    spectral: &SpectralConfig,
    cfg: &TokenizerConfig,
) -> Result<TokenMatrix, TokenizerError> {
    match mode {
        TokenMode::Lap => {
            let feats = graph_features(g, &SpectralConfig { d_p: cfg.d_p, ..*spectral })?;
            tokenize_lap(g, &feats, cfg)
        }
        TokenMode::NodeOnly => Ok(tokenize_node_only(g, cfg)),
    }
}

/// Tokenizes every graph in parallel. Output order matches input order.
pub fn tokenize_all(
    graphs: &[&ComputationalGraph],
    mode: TokenMode,
    spectral: &SpectralConfig,
    cfg: &TokenizerConfig,
) -> Result<Vec<TokenMatrix>, TokenizerError> {
    graphs.par_iter().map(|g| tokenize(g, mode, spectral, cfg)).collect()
}

/// Recovers row kinds from the identifier columns alone. Node indices are
/// positional: the k-th node row is node k.
pub fn decode_row_kinds(m: &TokenMatrix, id_divisor: f64) -> Vec<RowKind> {
    let mut next_node = 0;
    (0..m.rows)
        .map(|i| {
            let id = &m.row(i)[m.cols - IDENTIFIER_WIDTH..];
            match (id[0], id[1]) {
                (0.0, 1.0) => {
                    next_node += 1;
                    RowKind::Node(next_node - 1)
                }
                (1.0, 0.0) => RowKind::Edge(
                    (id[2] * id_divisor).round() as usize,
                    (id[3] * id_divisor).round() as usize,
                ),
                _ => RowKind::Pad,
            }
        })
        .collect()
}

/// One-hot input size of the raw representation: an `N x 15` feature
/// matrix plus an `N x N` adjacency matrix.
pub fn one_hot_size(num_nodes: usize) -> usize {
    num_nodes * NUM_PRIMITIVES as usize + num_nodes * num_nodes
}

/// Zero-padded batch of token matrices: `tokens` is `B x r_max x cols`
/// row-major, `mask[b * r_max + r]` is true for real rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub batch: usize,
    pub r_max: usize,
    pub cols: usize,
    pub tokens: Vec<f64>,
    pub mask: Vec<bool>,
}

impl PaddedBatch {
    pub fn token(&self, b: usize, r: usize) -> &[f64] {
        let start = (b * self.r_max + r) * self.cols;
        &self.tokens[start..start + self.cols]
    }

    pub fn sample_mask(&self, b: usize) -> &[bool] {
        &self.mask[b * self.r_max..(b + 1) * self.r_max]
    }

    pub fn real_rows(&self, b: usize) -> usize {
        self.sample_mask(b).iter().filter(|&&m| m).count()
    }
}

/// Pads `tokens` to `r_max` rows each. An empty input yields an empty batch
/// of width zero.
pub fn pad_batch(tokens: &[&TokenMatrix], r_max: usize) -> Result<PaddedBatch, TokenizerError> {
    let cols = tokens.first().map_or(0, |t| t.cols);
    let mut out = PaddedBatch {
        batch: tokens.len(),
        r_max,
        cols,
        tokens: vec![0.0; tokens.len() * r_max * cols],
        mask: vec![false; tokens.len() * r_max],
    };
    for (index, t) in tokens.iter().enumerate() {
        if t.cols != cols {
            return Err(TokenizerError::WidthMismatch { index, found: t.cols, expected: cols });
        }
        if t.rows > r_max {
            return Err(TokenizerError::RowOverflow { index, rows: t.rows, r_max });
        }
        let start = index * r_max * cols;
        out.tokens[start..start + t.data.len()].copy_from_slice(&t.data);
        out.mask[index * r_max..index * r_max + t.rows].fill(true);
    }
    Ok(out)
}

/// Pads to the longest matrix in `tokens`.
pub fn pad_to_longest(tokens: &[&TokenMatrix]) -> Result<PaddedBatch, TokenizerError> {
    let r_max = tokens.iter().map(|t| t.rows).max().unwrap_or(0);
    pad_batch(tokens, r_max)
}

/// Writes the binary token dump:
///
/// ```text
/// "TART" | u32 version | u32 count |
///   per record: u32 id_len | id bytes | u32 R | u32 C | R*C f64 | R tag bytes
/// ```
///
/// All integers and floats are little-endian. Tags: 0 node, 1 edge, 2 pad.
pub fn write_token_file(path: impl AsRef<Path>, records: &[(String, TokenMatrix)]) -> Result<(), TokenizerError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(TOKEN_FILE_MAGIC)?;
    out.write_all(&TOKEN_FILE_VERSION.to_le_bytes())?;
    out.write_all(&u32_len(records.len())?.to_le_bytes())?;
    for (id, m) in records {
        out.write_all(&u32_len(id.len())?.to_le_bytes())?;
        out.write_all(id.as_bytes())?;
        out.write_all(&u32_len(m.rows)?.to_le_bytes())?;
        out.write_all(&u32_len(m.cols)?.to_le_bytes())?;
        for v in &m.data {
            out.write_all(&v.to_le_bytes())?;
        }
        let tags: Vec<u8> = m.row_kinds.iter().map(RowKind::tag).collect();
        out.write_all(&tags)?;
    }
    out.flush()?;
    Ok(())
}

fn u32_len(n: usize) -> Result<u32, TokenizerError> {
    u32::try_from(n).map_err(|_| TokenizerError::CorruptFile(format!("length {n} exceeds u32")))
}

/// A record read back from a token dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub tags: Vec<u8>,
}

pub fn read_token_file(path: impl AsRef<Path>) -> Result<Vec<TokenRecord>, TokenizerError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = ByteCursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != TOKEN_FILE_MAGIC {
        return Err(TokenizerError::CorruptFile("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != TOKEN_FILE_VERSION {
        return Err(TokenizerError::CorruptFile(format!("unsupported version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = cur.u32()? as usize;
        let id = String::from_utf8(cur.take(id_len)?.to_vec())
            .map_err(|_| TokenizerError::CorruptFile("id is not UTF-8".into()))?;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| TokenizerError::CorruptFile("size overflow".into()))?;
        let mut data = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            data.push(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
        }
        let tags = cur.take(rows)?.to_vec();
        records.push(TokenRecord { id, rows, cols, data, tags });
    }
    if cur.pos != bytes.len() {
        return Err(TokenizerError::CorruptFile("trailing bytes".into()));
    }
    Ok(records)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TokenizerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TokenizerError::CorruptFile("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, TokenizerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
