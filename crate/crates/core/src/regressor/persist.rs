//! Text model format.
//!
//! ```text
//! ladderforge-extra-trees v1
//! checksum sha256:<hex of every byte after this line>
//! config {"n_trees":100,...}
//! layout {"approach":8,"columns":[...]}
//! seed 42
//! trees 100
//! tree 0 37
//! S 3 0.4172
//! L 0.91
//! ...
//! ```
//!
//! Trees are written in pre-order; `S <feature> <threshold>` is followed by
//! its left subtree, then its right subtree. Floats use Rust's shortest
//! round-trip formatting, so save/load preserves every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ExtraTreesConfig, ExtraTreesModel, FeatureLayout, Node, Tree};
use crate::error::{Error, Result};
use crate::util::write_atomic;

const MAGIC: &str = "ladderforge-extra-trees";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn to_text(model: &ExtraTreesModel) -> Result<String> {
    let mut body = String::new();
    writeln!(body, "config {}", serde_json::to_string(&model.config)?).unwrap();
    writeln!(body, "layout {}", serde_json::to_string(&model.layout)?).unwrap();
    writeln!(body, "seed {}", model.seed).unwrap();
    writeln!(body, "trees {}", model.trees.len()).unwrap();
    for (t, tree) in model.trees.iter().enumerate() {
        writeln!(body, "tree {t} {}", tree.nodes.len()).unwrap();
        for node in &tree.nodes {
            match *node {
                Node::Split {
                    feature, threshold, ..
                } => writeln!(body, "S {feature} {threshold:?}").unwrap(),
                Node::Leaf { value } => writeln!(body, "L {value:?}").unwrap(),
            }
        }
    }
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    Ok(format!("{MAGIC} v{MODEL_FORMAT_VERSION}\nchecksum sha256:{digest}\n{body}"))
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptModel(msg.into())
}

pub fn from_text(text: &str) -> Result<ExtraTreesModel> {
    let (first, rest) = text.split_once('\n').ok_or_else(|| corrupt("missing header"))?;
    let version = first
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().strip_prefix('v'))
        .ok_or_else(|| corrupt(format!("not a model file (header {first:?})")))?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let (sum_line, body) = rest.split_once('\n').ok_or_else(|| corrupt("missing checksum"))?;
    let want = sum_line
        .strip_prefix("checksum sha256:")
        .ok_or_else(|| corrupt("missing checksum"))?;
    if hex::encode(Sha256::digest(body.as_bytes())) != want {
        return Err(corrupt("checksum mismatch (truncated or edited file)"));
    }

    let mut lines = body.lines();
    fn next_field(lines: &mut std::str::Lines<'_>, name: &str) -> Result<String> {
        let line = lines.next().ok_or_else(|| corrupt(format!("missing {name}")))?;
        line.strip_prefix(name)
            .and_then(|s| s.strip_prefix(' '))
            .map(String::from)
            .ok_or_else(|| corrupt(format!("expected {name}, got {line:?}")))
    }
    let config: ExtraTreesConfig =
        serde_json::from_str(&next_field(&mut lines, "config")?).map_err(|e| corrupt(e.to_string()))?;
    let layout: FeatureLayout =
        serde_json::from_str(&next_field(&mut lines, "layout")?).map_err(|e| corrupt(e.to_string()))?;
    let seed: u64 = next_field(&mut lines, "seed")?.parse().map_err(|_| corrupt("bad seed"))?;
    let n_trees: usize = next_field(&mut lines, "trees")?.parse().map_err(|_| corrupt("bad tree count"))?;

    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let head = next_field(&mut lines, "tree")?;
        let mut parts = head.split(' ');
        let idx: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| corrupt("bad tree line"))?;
        let n_nodes: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| corrupt("bad tree line"))?;
        if idx != t {
            return Err(corrupt(format!("tree {idx} out of order")));
        }
        let mut raw = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next().ok_or_else(|| corrupt("truncated tree"))?;
            raw.push(parse_node(line, layout.len())?);
        }
        trees.push(link(raw)?);
    }
    if lines.next().is_some() {
        return Err(corrupt("trailing data"));
    }
    Ok(ExtraTreesModel {
        config,
        layout,
        seed,
        trees,
    })
}

enum RawNode {
    Split(usize, f64),
    Leaf(f64),
}

fn parse_node(line: &str, n_features: usize) -> Result<RawNode> {
    let mut p = line.split(' ');
    let bad = || corrupt(format!("bad node {line:?}"));
    match p.next() {
        Some("S") => {
            let f: usize = p.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let t: f64 = p.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if f >= n_features {
                return Err(bad());
            }
            Ok(RawNode::Split(f, t))
        }
        Some("L") => Ok(RawNode::Leaf(p.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?)),
        _ => Err(bad()),
    }
}

/// Rebuilds child links from pre-order.
fn link(raw: Vec<RawNode>) -> Result<Tree> {
    fn walk(raw: &[RawNode], pos: &mut usize, nodes: &mut Vec<Node>) -> Result<()> {
        let here = *pos;
        let node = raw.get(here).ok_or_else(|| corrupt("incomplete tree"))?;
        *pos += 1;
        match *node {
            RawNode::Leaf(value) => nodes.push(Node::Leaf { value }),
            RawNode::Split(feature, threshold) => {
                nodes.push(Node::Leaf { value: f64::NAN });
                let left = *pos;
                walk(raw, pos, nodes)?;
                let right = *pos;
                walk(raw, pos, nodes)?;
                nodes[here] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        Ok(())
    }
    let mut nodes = Vec::with_capacity(raw.len());
    let mut pos = 0;
    walk(&raw, &mut pos, &mut nodes)?;
    if pos != raw.len() {
        return Err(corrupt("extra nodes after tree"));
    }
    Ok(Tree { nodes })
}

pub fn save_model(model: &ExtraTreesModel, path: &Path) -> Result<()> {
    write_atomic(path, to_text(model)?.as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ExtraTreesModel> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| corrupt("not UTF-8"))?;
    from_text(&text)
}
