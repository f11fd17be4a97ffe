//! Encoder-decoder search-space templates.
//!
//! A template is a DAG of convolution nodes. Every node is one MRF variable
//! whose labels pick a kernel size and a width ratio:
//!
//! | op     | kernels | width ratios                     | labels |
//! |--------|---------|----------------------------------|--------|
//! | Normal | 3, 5    | 0.5, 0.75, 1.0, 1.25, 1.5        | 10     |
//! | Down   | 3       | same                             | 5      |
//! | Up     | 2       | same                             | 5      |
//!
//! Normal labels list all kernel-3 widths first, then kernel-5. The UNet
//! backbone has two Normal convs per level on each side, a stride-2 Down
//! conv between encoder levels and a stride-2 transposed Up conv between
//! decoder levels. The first decoder conv of each level concatenates the Up
//! output with the encoder skip.
//!
//! UNet+ and UNet++ add the nested decoder blocks `X(i, j)`; UNet+ feeds each
//! block from its left neighbour on the same level, UNet++ from every block to
//! its left.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, FactorGraph, LabelSet};

/// Width ratios in quarters: 0.5, 0.75, 1.0, 1.25, 1.5.
pub const WIDTH_QUARTERS: [u32; 5] = [2, 3, 4, 5, 6];
pub const NORMAL_KERNELS: [usize; 2] = [3, 5];
pub const DOWN_KERNEL: usize = 3;
pub const UP_KERNEL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpType {
    Normal,
    Down,
    Up,
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Normal => "normal",
            Self::Down => "down",
            Self::Up => "up",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Unet,
    #[serde(rename = "unet+")]
    UnetPlus,
    #[serde(rename = "unet++")]
    UnetPlusPlus,
    Custom,
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unet" => Ok(Self::Unet),
            "unet+" | "unetplus" => Ok(Self::UnetPlus),
            "unet++" | "unetplusplus" => Ok(Self::UnetPlusPlus),
            other => Err(Error::InvalidConfig(format!("unknown backbone `{other}`"))),
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Unet => "unet",
            Self::UnetPlus => "unet+",
            Self::UnetPlusPlus => "unet++",
            Self::Custom => "custom",
        })
    }
}

/// One label: a kernel size and a width ratio in quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerChoice {
    pub kernel: usize,
    pub width_quarters: u32,
}

impl LayerChoice {
    pub fn width_ratio(&self) -> f64 {
        self.width_quarters as f64 / 4.0
    }

    /// `round(base * ratio)`, halves rounded up, at least 1.
    pub fn channels(&self, base: usize) -> usize {
        ((base * self.width_quarters as usize + 2) / 4).max(1)
    }

    pub fn name(&self) -> String {
        format!("k{}_w{}", self.kernel, self.width_ratio())
    }
}

pub fn choices_for(op: OpType) -> Vec<LayerChoice> {
    let kernels: &[usize] = match op {
        OpType::Normal => &NORMAL_KERNELS,
        OpType::Down => &[DOWN_KERNEL],
        OpType::Up => &[UP_KERNEL],
    };
    kernels
        .iter()
        .flat_map(|&kernel| {
            WIDTH_QUARTERS.iter().map(move |&width_quarters| LayerChoice {
                kernel,
                width_quarters,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub op: OpType,
    /// 1-based resolution level; level `l` runs at `resolution / 2^(l-1)`.
    pub level: usize,
    /// Output channels at width ratio 1.0.
    pub base_channels: usize,
    pub out_spatial: (usize, usize),
}

impl Node {
    /// Number of positions the kernel is applied at. A transposed conv
    /// applies it once per input pixel.
    pub fn mac_area(&self) -> u64 {
        let (h, w) = self.out_spatial;
        match self.op {
            OpType::Up => ((h / 2) * (w / 2)) as u64,
            _ => (h * w) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    backbone: Backbone,
    depth: usize,
    in_channels: usize,
    nodes: Vec<Node>,
    /// Data-flow edges `(pred, succ)` with `pred < succ`.
    edges: Vec<(usize, usize)>,
    choices: Vec<Vec<LayerChoice>>,
    #[serde(skip)]
    preds: Vec<Vec<usize>>,
}

impl Template {
    /// Generic constructor. Nodes must be in topological order.
    pub fn new(
        nodes: Vec<Node>,
        edges: Vec<(usize, usize)>,
        choices: Vec<Vec<LayerChoice>>,
        in_channels: usize,
    ) -> Result<Self> {
        Self::assemble(Backbone::Custom, 0, nodes, edges, choices, in_channels)
    }

    fn assemble(
        backbone: Backbone,
        depth: usize,
        nodes: Vec<Node>,
        edges: Vec<(usize, usize)>,
        choices: Vec<Vec<LayerChoice>>,
        in_channels: usize,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidConfig("template has no nodes".into()));
        }
        if choices.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} choice lists for {n} nodes",
                choices.len()
            )));
        }
        if let Some(v) = choices.iter().position(Vec::is_empty) {
            return Err(Error::EmptyLabelSet { var: v });
        }
        let mut preds = vec![Vec::new(); n];
        let mut uf = crate::util::UnionFind::new(n);
        for &(p, s) in &edges {
            if s >= n {
                return Err(Error::VariableOutOfRange { var: s, n });
            }
            if p >= s {
                return Err(Error::InvalidConfig(format!(
                    "edge ({p}, {s}) is not in topological order"
                )));
            }
            if preds[s].contains(&p) {
                return Err(Error::DuplicateEdge(p, s));
            }
            preds[s].push(p);
            uf.union(p, s);
        }
        let root = uf.find(0);
        if (1..n).any(|v| uf.find(v) != root) {
            return Err(Error::InvalidConfig("template graph is not connected".into()));
        }
        Ok(Self {
            backbone,
            depth,
            in_channels,
            nodes,
            edges,
            choices,
            preds,
        })
    }

    /// Rebuilds derived data after deserialization.
    pub fn revalidate(self) -> Result<Self> {
        Self::assemble(
            self.backbone,
            self.depth,
            self.nodes,
            self.edges,
            self.choices,
            self.in_channels,
        )
    }

    pub fn backbone(&self) -> Backbone {
        self.backbone
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn predecessors(&self, node: usize) -> &[usize] {
        &self.preds[node]
    }

    pub fn choices(&self, node: usize) -> &[LayerChoice] {
        &self.choices[node]
    }

    pub fn count_ops(&self, op: OpType) -> usize {
        self.nodes.iter().filter(|n| n.op == op).count()
    }

    pub fn label_sets(&self) -> Vec<LabelSet> {
        self.choices
            .iter()
            .map(|c| LabelSet::new(c.iter().map(LayerChoice::name)).expect("non-empty"))
            .collect()
    }

    /// Product of label-set sizes.
    pub fn space_size(&self) -> BigUint {
        self.choices
            .iter()
            .fold(BigUint::from(1u32), |acc, c| acc * BigUint::from(c.len()))
    }

    /// One variable per node, one edge per data-flow edge, all factors zero.
    pub fn to_factor_graph_skeleton(&self) -> FactorGraph {
        FactorGraph::skeleton(self.label_sets(), self.edges.clone())
            .expect("template edges are valid MRF edges")
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.num_nodes() {
            return Err(Error::InvalidAssignment(format!(
                "length {} for a template with {} nodes",
                assignment.len(),
                self.num_nodes()
            )));
        }
        for (v, (&l, c)) in assignment.iter().zip(&self.choices).enumerate() {
            if l >= c.len() {
                return Err(Error::InvalidAssignment(format!(
                    "label {l} at node {v} with {} labels",
                    c.len()
                )));
            }
        }
        Ok(())
    }

    /// Fails when a node lacks the channel or spatial data MAC counting needs.
    pub fn check_channel_metadata(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::InvalidConfig("template has no input channel count".into()));
        }
        for node in &self.nodes {
            if node.base_channels == 0 || node.mac_area() == 0 {
                return Err(Error::InvalidConfig(format!(
                    "node `{}` has no channel or spatial metadata",
                    node.name
                )));
            }
        }
        Ok(())
    }

    pub fn decode(&self, assignment: &[usize]) -> Result<NetConfig> {
        self.check_assignment(assignment)?;
        let out: Vec<usize> = assignment
            .iter()
            .enumerate()
            .map(|(v, &l)| self.choices[v][l].channels(self.nodes[v].base_channels))
            .collect();
        let mut layers = Vec::with_capacity(self.num_nodes());
        let mut total = 0u64;
        for (v, node) in self.nodes.iter().enumerate() {
            let choice = self.choices[v][assignment[v]];
            let in_channels = if self.preds[v].is_empty() {
                self.in_channels
            } else {
                self.preds[v].iter().map(|&p| out[p]).sum()
            };
            let k = choice.kernel as u64;
            let macs = k * k * in_channels as u64 * out[v] as u64 * node.mac_area();
            total += macs;
            layers.push(LayerConfig {
                name: node.name.clone(),
                op: node.op,
                kernel: choice.kernel,
                width_ratio: choice.width_ratio(),
                in_channels,
                out_channels: out[v],
                out_spatial: node.out_spatial,
                macs,
            });
        }
        Ok(NetConfig {
            layers,
            total_macs: total,
        })
    }

    /// Inverse of [`decode`](Self::decode) on the per-layer choices.
    pub fn encode(&self, config: &NetConfig) -> Result<Assignment> {
        if config.layers.len() != self.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers for {} nodes",
                config.layers.len(),
                self.num_nodes()
            )));
        }
        config
            .layers
            .iter()
            .enumerate()
            .map(|(v, layer)| {
                let q = (layer.width_ratio * 4.0).round() as u32;
                self.choices[v]
                    .iter()
                    .position(|c| c.kernel == layer.kernel && c.width_quarters == q)
                    .ok_or_else(|| {
                        Error::InvalidAssignment(format!("layer `{}` choice not in space", layer.name))
                    })
            })
            .collect::<Result<Vec<_>>>()
            .map(Assignment::new)
    }

    /// Assignment picking kernel 3 and width 1.0 everywhere.
    pub fn identity_assignment(&self) -> Assignment {
        Assignment::new(
            self.choices
                .iter()
                .map(|c| {
                    c.iter()
                        .position(|x| x.width_quarters == 4 && x.kernel <= 3)
                        .unwrap_or(0)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub name: String,
    pub op: OpType,
    pub kernel: usize,
    pub width_ratio: f64,
    pub in_channels: usize,
    pub out_channels: usize,
    pub out_spatial: (usize, usize),
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub layers: Vec<LayerConfig>,
    /// Multiply-accumulate count of the whole network.
    pub total_macs: u64,
}

impl fmt::Display for NetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.layers {
            writeln!(
                f,
                "{:<16} {:<6} k{} x{:<4} {:>5} -> {:<5} {}x{}  {} MACs",
                l.name,
                l.op,
                l.kernel,
                l.width_ratio,
                l.in_channels,
                l.out_channels,
                l.out_spatial.0,
                l.out_spatial.1,
                l.macs
            )?;
        }
        write!(f, "total {} MACs", self.total_macs)
    }
}

/// Size parameters shared by the built-in backbones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub backbone: Backbone,
    pub depth: usize,
    pub base_width: usize,
    pub resolution: usize,
    pub in_channels: usize,
}

impl TemplateSpec {
    pub fn new(backbone: Backbone, depth: usize) -> Self {
        Self {
            backbone,
            depth,
            base_width: 64,
            resolution: 256,
            in_channels: 3,
        }
    }

    pub fn build(&self) -> Result<Template> {
        build_nested(self)
    }
}

pub fn build_unet_template(depth: usize, base_width: usize) -> Result<Template> {
    TemplateSpec {
        base_width,
        ..TemplateSpec::new(Backbone::Unet, depth)
    }
    .build()
}

pub fn build_unet_plus_template(depth: usize) -> Result<Template> {
    TemplateSpec::new(Backbone::UnetPlus, depth).build()
}

pub fn build_unet_plusplus_template(depth: usize) -> Result<Template> {
    TemplateSpec::new(Backbone::UnetPlusPlus, depth).build()
}

struct Builder {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
    choices: Vec<Vec<LayerChoice>>,
    base: usize,
    resolution: usize,
}

impl Builder {
    fn add(&mut self, name: String, op: OpType, level: usize, preds: &[usize]) -> usize {
        let side = self.resolution >> (level - 1);
        // a Down conv keeps the channel count of the level it reads from
        let channel_level = if op == OpType::Down { level - 1 } else { level };
        let id = self.nodes.len();
        self.nodes.push(Node {
            name,
            op,
            level,
            base_channels: self.base << (channel_level - 1),
            out_spatial: (side, side),
        });
        self.choices.push(choices_for(op));
        for &p in preds {
            self.edges.push((p, id));
        }
        id
    }
}

fn build_nested(spec: &TemplateSpec) -> Result<Template> {
    let d = spec.depth;
    if d < 2 {
        return Err(Error::InvalidConfig(format!("depth must be at least 2, got {d}")));
    }
    if d > 16 {
        return Err(Error::InvalidConfig(format!("depth {d} is too large")));
    }
    if spec.base_width == 0 || spec.in_channels == 0 {
        return Err(Error::InvalidConfig("widths must be positive".into()));
    }
    if spec.resolution == 0 || !spec.resolution.is_multiple_of(1 << (d - 1)) {
        return Err(Error::InvalidConfig(format!(
            "resolution {} is not divisible by 2^{}",
            spec.resolution,
            d - 1
        )));
    }
    let mut b = Builder {
        nodes: Vec::new(),
        edges: Vec::new(),
        choices: Vec::new(),
        base: spec.base_width,
        resolution: spec.resolution,
    };
    let plain = spec.backbone == Backbone::Unet;

    // out[i][j] is the last conv of block X(i, j); i is 0-based level
    let mut out: Vec<Vec<Option<usize>>> = vec![vec![None; d]; d];
    let mut prev: Option<usize> = None;
    for (i, row) in out.iter_mut().enumerate() {
        let l = i + 1;
        if i > 0 {
            let p = prev.expect("previous level");
            prev = Some(b.add(format!("down{}", l - 1), OpType::Down, l, &[p]));
        }
        let c1 = b.add(format!("enc{l}.conv1"), OpType::Normal, l, prev.as_slice());
        let c2 = b.add(format!("enc{l}.conv2"), OpType::Normal, l, &[c1]);
        row[0] = Some(c2);
        prev = Some(c2);
    }

    for j in 1..d {
        for i in (0..d - j).rev() {
            if plain && i + j != d - 1 {
                continue;
            }
            let l = i + 1;
            let tag = if plain { format!("{l}") } else { format!("{l}_{j}") };
            let below = out[i + 1][j - 1].expect("block below exists");
            let up = b.add(format!("up{tag}"), OpType::Up, l, &[below]);
            let skips: Vec<usize> = match spec.backbone {
                Backbone::UnetPlusPlus => (0..j).filter_map(|k| out[i][k]).collect(),
                Backbone::UnetPlus => vec![out[i][j - 1].expect("left block exists")],
                _ => vec![out[i][0].expect("encoder block exists")],
            };
            let mut preds = skips;
            preds.push(up);
            preds.sort_unstable();
            let c1 = b.add(format!("dec{tag}.conv1"), OpType::Normal, l, &preds);
            let c2 = b.add(format!("dec{tag}.conv2"), OpType::Normal, l, &[c1]);
            out[i][j] = Some(c2);
        }
    }

    Template::assemble(spec.backbone, d, b.nodes, b.edges, b.choices, spec.in_channels)
}
