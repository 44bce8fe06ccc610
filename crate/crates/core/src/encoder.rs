//! Social graph network: node and edge embeddings followed by K social blocks
//! of attention-weighted, gated message passing with residual node updates.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::graph::{pair_features, CoordMode, SceneFrame, SocialGraph};
use crate::nn::{Bound, Linear, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub blocks: usize,
    pub coord_mode: CoordMode,
    pub gate_enabled: bool,
    /// Multiply each message by its edge feature once more before aggregation.
    pub edge_product: bool,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            blocks: 2,
            coord_mode: CoordMode::Polar,
            gate_enabled: true,
            edge_product: false,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SocialBlockParams {
    /// d → 1 attention logit
    pub attn: Linear,
    /// d → d, sigmoid applied after
    pub gate: Linear,
    /// d → d, no activation
    pub update: Linear,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub node: Linear,
    pub pair: Linear,
    pub edge: Linear,
    pub blocks: Vec<SocialBlockParams>,
}

/// Output of [`EncoderParams::encode`] for one frame.
#[derive(Debug, Clone)]
pub struct EncodedScene {
    /// n×d node embeddings `e_j`.
    pub embeddings: Var,
    /// n×d node features after the last block.
    pub features: Var,
    /// `(src, dst)` per row of `edge_features`.
    pub edges: Vec<(usize, usize)>,
    /// E×d, `None` when the graph has no edges.
    pub edge_features: Option<Var>,
    /// E×1 attention per block, `None` when the graph has no edges.
    pub attention: Vec<Option<Var>>,
}

impl EncodedScene {
    /// `(block, src, dst, alpha)` for every edge and block.
    pub fn attention_values(&self, tape: &Tape) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for (k, alpha) in self.attention.iter().enumerate() {
            if let Some(alpha) = alpha {
                let vals = tape.value(*alpha).data();
                for (&(i, j), &a) in self.edges.iter().zip(vals) {
                    out.push((k, i, j, a));
                }
            }
        }
        out
    }
}

impl EncoderParams {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut impl Rng) -> Self {
        assert!(config.blocks >= 1, "encoder needs at least one social block");
        let d = config.embed_dim;
        let node = Linear::new(store, "enc.node", 4, d, rng);
        let pair = Linear::new(store, "enc.pair", 4, d, rng);
        let edge = Linear::new(store, "enc.edge", 3 * d, d, rng);
        let blocks = (0..config.blocks)
            .map(|k| SocialBlockParams {
                attn: Linear::new(store, &format!("enc.block{k}.attn"), d, 1, rng),
                gate: Linear::new(store, &format!("enc.block{k}.gate"), d, d, rng),
                update: Linear::new(store, &format!("enc.block{k}.update"), d, d, rng),
            })
            .collect();
        Self {
            config,
            node,
            pair,
            edge,
            blocks,
        }
    }

    /// `e_j = ReLU(f_n([p_j, v_j]))`.
    pub fn embed_nodes(&self, tape: &mut Tape, p: &Bound, frame: &SceneFrame) -> Result<Var> {
        let rows: Vec<Vec<f64>> = frame
            .agents
            .iter()
            .map(|a| vec![a.position[0], a.position[1], a.velocity[0], a.velocity[1]])
            .collect();
        let x = tape.constant(Tensor::from_rows(&rows)?);
        let h = self.node.forward(tape, p, x)?;
        Ok(tape.relu(h))
    }

    /// `x_ij = ReLU(f_e([e_i, e_j, ReLU(f_p(rel_ij))]))` for every listed edge.
    pub fn embed_edges(
        &self,
        tape: &mut Tape,
        p: &Bound,
        frame: &SceneFrame,
        edges: &[(usize, usize)],
        embeddings: Var,
    ) -> Result<Option<Var>> {
        if edges.is_empty() {
            return Ok(None);
        }
        let rel: Vec<Vec<f64>> = edges
            .iter()
            .map(|&(i, j)| {
                pair_features(&frame.agents[i], &frame.agents[j], self.config.coord_mode).to_vec()
            })
            .collect();
        let rel = tape.constant(Tensor::from_rows(&rel)?);
        let fp = self.pair.forward(tape, p, rel)?;
        let fp = tape.relu(fp);
        let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let ei = tape.gather_rows(embeddings, &src)?;
        let ej = tape.gather_rows(embeddings, &dst)?;
        let cat = tape.concat(&[ei, ej, fp], 1)?;
        let fe = self.edge.forward(tape, p, cat)?;
        Ok(Some(tape.relu(fe)))
    }

    /// Attention over incoming edges of each destination node: softmax of
    /// `LeakyReLU(W^α x_ij)` among edges sharing the same `dst`.
    pub fn attention(
        &self,
        tape: &mut Tape,
        p: &Bound,
        block: usize,
        edge_features: Var,
        dst: &[usize],
    ) -> Result<Var> {
        let logit = self.blocks[block].attn.forward(tape, p, edge_features)?;
        let logit = tape.leaky_relu(logit, self.config.leaky_slope);
        let segment: Vec<Option<usize>> = dst.iter().map(|&j| Some(j)).collect();
        tape.segment_softmax(logit, &segment)
    }

    /// `g_ij = sigmoid(f_g(x_ij))`.
    pub fn social_gate(
        &self,
        tape: &mut Tape,
        p: &Bound,
        block: usize,
        edge_features: Var,
    ) -> Result<Var> {
        let g = self.blocks[block].gate.forward(tape, p, edge_features)?;
        Ok(tape.sigmoid(g))
    }

    /// One social block. Returns the updated node features and the attention.
    pub fn social_block(
        &self,
        tape: &mut Tape,
        p: &Bound,
        block: usize,
        nodes: Var,
        edge_features: Option<Var>,
        edges: &[(usize, usize)],
    ) -> Result<(Var, Option<Var>)> {
        let n = tape.shape(nodes)[0];
        let d = self.config.embed_dim;
        let (aggregate, alpha) = match edge_features {
            None => (tape.constant(Tensor::zeros(&[n, d])), None),
            Some(xe) => {
                let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
                let alpha = self.attention(tape, p, block, xe, &dst)?;
                let gated = if self.config.gate_enabled {
                    let g = self.social_gate(tape, p, block, xe)?;
                    tape.mul(xe, g)?
                } else {
                    xe
                };
                let mut msg = tape.mul_col(gated, alpha)?;
                if self.config.edge_product {
                    msg = tape.mul(msg, xe)?;
                }
                (tape.segment_sum(msg, &dst, n)?, Some(alpha))
            }
        };
        let delta = self.blocks[block].update.forward(tape, p, aggregate)?;
        Ok((tape.add(nodes, delta)?, alpha))
    }

    /// Embeddings followed by every social block. Edge features stay fixed
    /// across blocks; each block recomputes attention and gates from them.
    pub fn encode(
        &self,
        tape: &mut Tape,
        p: &Bound,
        frame: &SceneFrame,
        graph: &SocialGraph,
    ) -> Result<EncodedScene> {
        let edges = graph.edges();
        let embeddings = self.embed_nodes(tape, p, frame)?;
        let edge_features = self.embed_edges(tape, p, frame, &edges, embeddings)?;
        let mut features = embeddings;
        let mut attention = Vec::with_capacity(self.blocks.len());
        for k in 0..self.blocks.len() {
            let (x, alpha) = self.social_block(tape, p, k, features, edge_features, &edges)?;
            features = x;
            attention.push(alpha);
        }
        Ok(EncodedScene {
            embeddings,
            features,
            edges,
            edge_features,
            attention,
        })
    }
}
