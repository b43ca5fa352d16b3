//! Synchronous message-passing execution of the distributed SCP/ADMM loop.
//!
//! Robots exchange messages only through a [`MessageBus`]. Every exchange is
//! followed by a logical barrier: a robot proceeds only once it holds exactly
//! one message from each neighbor, tagged with the current round. Nodes may
//! compute concurrently between barriers; reductions always run in ascending
//! neighbor order, so the result does not depend on the thread count.

use rayon::prelude::*;

use crate::blockvec::{BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::solver::{NeighborPose, SolverConfig, SolverNode};
use crate::topology::SwarmGraph;

/// Which exchange of the round a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PoseShare,
    PrimalX,
    PrimalW,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::PoseShare => "pose-share",
            Phase::PrimalX => "primal-x",
            Phase::PrimalW => "primal-w",
        }
    }
}

/// `(outer, inner, phase)` counters stamped on every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundTag {
    pub outer: u64,
    pub inner: u32,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `(p̂[i], x̄[i])`.
    PoseShare { p_hat: Vec<f64>, x_bar: Vec<f64> },
    /// `(x̂*[i], μᵢ⁽ʲ⁾)` for receiver `j`.
    PrimalX { x_hat: Vec<f64>, mu: Vec<f64> },
    /// `ŵⱼ⁽ⁱ⁾*` for receiver `j`.
    PrimalW { w: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage {
    pub sender: usize,
    pub round: RoundTag,
    pub payload: Payload,
}

/// Per-receiver inboxes with one slot per neighbor (ascending neighbor id).
#[derive(Debug)]
pub struct MessageBus {
    senders: Vec<Vec<usize>>,
    inboxes: Vec<Vec<Option<RoundMessage>>>,
    posted: u64,
}

impl MessageBus {
    pub fn new(graph: &SwarmGraph) -> Self {
        let senders: Vec<Vec<usize>> = (0..graph.num_vertices())
            .map(|i| graph.neighbors(i).expect("vertex in range"))
            .collect();
        let inboxes = senders.iter().map(|s| vec![None; s.len()]).collect();
        Self {
            senders,
            inboxes,
            posted: 0,
        }
    }

    /// Total messages posted since construction.
    pub fn posted(&self) -> u64 {
        self.posted
    }

    pub fn post(&mut self, receiver: usize, msg: RoundMessage) -> Result<()> {
        let senders = self.senders.get(receiver).ok_or(Error::Index {
            what: "receiver",
            index: receiver,
            len: self.senders.len(),
        })?;
        let slot = senders.binary_search(&msg.sender).map_err(|_| {
            Error::StaleData(format!(
                "robot {} is not a neighbor of robot {receiver}",
                msg.sender
            ))
        })?;
        let cell = &mut self.inboxes[receiver][slot];
        if cell.is_some() {
            return Err(Error::Invariant(format!(
                "duplicate {} message from {} to {receiver}",
                msg.round.phase.name(),
                msg.sender
            )));
        }
        *cell = Some(msg);
        self.posted += 1;
        Ok(())
    }

    /// Removes and returns every inbox, leaving empty slots behind.
    fn take_inboxes(&mut self) -> Vec<Vec<Option<RoundMessage>>> {
        self.inboxes
            .iter_mut()
            .map(|inbox| inbox.iter_mut().map(Option::take).collect())
            .collect()
    }

    /// Barrier check: exactly one message per neighbor, all tagged `round`.
    pub fn drain(&mut self, receiver: usize, round: RoundTag) -> Result<Vec<RoundMessage>> {
        let inbox: Vec<_> = self.inboxes[receiver].iter_mut().map(Option::take).collect();
        check_inbox(receiver, &self.senders[receiver], inbox, round)
    }
}

fn check_inbox(
    receiver: usize,
    senders: &[usize],
    inbox: Vec<Option<RoundMessage>>,
    round: RoundTag,
) -> Result<Vec<RoundMessage>> {
    inbox
        .into_iter()
        .zip(senders)
        .map(|(msg, &sender)| match msg {
            None => Err(Error::MissingMessage {
                sender,
                receiver,
                outer: round.outer,
                inner: round.inner,
                phase: round.phase.name(),
            }),
            Some(m) if m.round != round => Err(Error::StaleData(format!(
                "robot {receiver} got a message from {sender} tagged {:?}, expected {:?}",
                m.round, round
            ))),
            Some(m) => Ok(m),
        })
        .collect()
}

/// Snapshot of the swarm after one outer round.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRoundResult {
    /// Accumulated errors x̄ after the round.
    pub x_bar: BlockVec,
    /// Robots whose multipliers were reset this round.
    pub resets: Vec<usize>,
    /// Largest block multiplier norm at the end of the inner loop.
    pub max_dual_norm: f64,
}

/// All robots' solver nodes plus the bus that connects them.
#[derive(Debug)]
pub struct SwarmRuntime {
    graph: SwarmGraph,
    layout: BlockLayout,
    pos_dim: usize,
    nodes: Vec<SolverNode>,
    bus: MessageBus,
    outer: u64,
    inner: u32,
    parallel: bool,
}

fn neighbor_spec(graph: &SwarmGraph, layout: &BlockLayout, i: usize) -> Vec<(usize, usize, usize)> {
    graph
        .links(i)
        .expect("vertex in range")
        .iter()
        .map(|l| (l.neighbor, l.edge, layout.block_dim(l.neighbor)))
        .collect()
}

impl SwarmRuntime {
    pub fn new(graph: SwarmGraph, layout: BlockLayout, pos_dim: usize) -> Result<Self> {
        if layout.num_blocks() != graph.num_vertices() {
            return Err(Error::Shape(format!(
                "layout has {} blocks, graph has {} robots",
                layout.num_blocks(),
                graph.num_vertices()
            )));
        }
        let nodes = (0..graph.num_vertices())
            .map(|i| {
                SolverNode::new(i, layout.block_dim(i), pos_dim, &neighbor_spec(&graph, &layout, i))
            })
            .collect::<Result<Vec<_>>>()?;
        let bus = MessageBus::new(&graph);
        Ok(Self {
            graph,
            layout,
            pos_dim,
            nodes,
            bus,
            outer: 0,
            inner: 0,
            parallel: false,
        })
    }

    /// Lets nodes compute concurrently between barriers (on the current rayon pool).
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn graph(&self) -> &SwarmGraph {
        &self.graph
    }

    pub fn nodes(&self) -> &[SolverNode] {
        &self.nodes
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn pos_dim(&self) -> usize {
        self.pos_dim
    }

    pub fn messages_posted(&self) -> u64 {
        self.bus.posted()
    }

    pub fn outer_rounds(&self) -> u64 {
        self.outer
    }

    /// Switches to a new communication graph. State tied to edges that
    /// persist is kept; new edges start from zero multipliers.
    pub fn set_graph(&mut self, graph: SwarmGraph) -> Result<()> {
        if graph == self.graph {
            return Ok(());
        }
        if graph.num_vertices() != self.graph.num_vertices() {
            return Err(Error::Shape("topology change cannot add or remove robots".into()));
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.set_neighbors(&neighbor_spec(&graph, &self.layout, i))?;
        }
        self.bus = MessageBus::new(&graph);
        self.graph = graph;
        Ok(())
    }

    /// Zeroes every node's accumulated error and multipliers.
    pub fn clear(&mut self) {
        self.nodes.iter_mut().for_each(SolverNode::clear);
    }

    fn run_nodes<T, F>(&mut self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut SolverNode) -> Result<T> + Sync + Send,
    {
        if self.parallel {
            self.nodes.par_iter_mut().map(f).collect()
        } else {
            self.nodes.iter_mut().map(f).collect()
        }
    }

    fn deliver<F>(&mut self, round: RoundTag, f: F) -> Result<()>
    where
        F: Fn(&mut SolverNode, Vec<RoundMessage>) -> Result<()> + Sync + Send,
    {
        let inboxes = self.bus.take_inboxes();
        let senders = &self.bus.senders;
        let work = |(node, inbox): (&mut SolverNode, Vec<Option<RoundMessage>>)| {
            let id = node.id();
            let msgs = check_inbox(id, &senders[id], inbox, round)?;
            f(node, msgs)
        };
        if self.parallel {
            self.nodes
                .par_iter_mut()
                .zip(inboxes.into_par_iter())
                .map(work)
                .collect()
        } else {
            self.nodes.iter_mut().zip(inboxes).map(work).collect()
        }
    }

    fn post_all(&mut self, outgoing: Vec<Vec<(usize, RoundMessage)>>) -> Result<()> {
        for batch in outgoing {
            for (receiver, msg) in batch {
                self.bus.post(receiver, msg)?;
            }
        }
        Ok(())
    }

    /// One SCP outer round: pose/x̄ exchange, local linearization, `n_admm`
    /// inner rounds, then accumulation and multiplier resets.
    pub fn outer_round(&mut self, p_hat: &BlockVec, y_hat: &BlockVec, cfg: &SolverConfig) -> Result<OuterRoundResult> {
        if p_hat.layout() != &self.layout {
            return Err(Error::Shape("p̂ does not match the robot layout".into()));
        }
        if y_hat.as_slice().len() != self.graph.num_edges() {
            return Err(Error::Shape(format!(
                "{} ranges supplied for {} edges",
                y_hat.as_slice().len(),
                self.graph.num_edges()
            )));
        }
        self.outer += 1;
        self.inner = 0;
        let tag = RoundTag {
            outer: self.outer,
            inner: 0,
            phase: Phase::PoseShare,
        };

        let outgoing = self.run_nodes(|node| {
            node.begin_outer();
            let id = node.id();
            let p = p_hat.block(id).to_vec();
            let xb = node.x_bar().to_vec();
            Ok(node
                .neighbor_ids()
                .map(|j| {
                    (
                        j,
                        RoundMessage {
                            sender: id,
                            round: tag,
                            payload: Payload::PoseShare {
                                p_hat: p.clone(),
                                x_bar: xb.clone(),
                            },
                        },
                    )
                })
                .collect())
        })?;
        self.post_all(outgoing)?;

        let graph = &self.graph;
        let ranges = y_hat.as_slice();
        let inboxes = self.bus.take_inboxes();
        let senders = &self.bus.senders;
        let linearize = |(node, inbox): (&mut SolverNode, Vec<Option<RoundMessage>>)| -> Result<()> {
            let id = node.id();
            let msgs = check_inbox(id, &senders[id], inbox, tag)?;
            let links = graph.links(id)?;
            let mut poses = Vec::with_capacity(msgs.len());
            for (m, link) in msgs.iter().zip(links) {
                match &m.payload {
                    Payload::PoseShare { p_hat, x_bar } => poses.push(NeighborPose {
                        p_hat,
                        x_bar,
                        y_hat: ranges[link.edge],
                    }),
                    other => {
                        return Err(Error::StaleData(format!(
                            "robot {id} expected a pose message, got {other:?}"
                        )))
                    }
                }
            }
            node.linearize(p_hat.block(id), &poses)
        };
        if self.parallel {
            self.nodes
                .par_iter_mut()
                .zip(inboxes.into_par_iter())
                .map(linearize)
                .collect::<Result<()>>()?;
        } else {
            self.nodes
                .iter_mut()
                .zip(inboxes)
                .map(linearize)
                .collect::<Result<()>>()?;
        }

        for _ in 0..cfg.n_admm {
            self.inner_round(cfg)?;
        }
        let max_dual_norm = self
            .nodes
            .iter()
            .map(SolverNode::max_dual_norm)
            .fold(0.0, f64::max);

        let resets = self.run_nodes(|node| Ok(node.accumulate_and_reset(cfg)))?;
        Ok(OuterRoundResult {
            x_bar: self.x_bar(),
            resets: resets
                .iter()
                .enumerate()
                .filter(|(_, &r)| r)
                .map(|(i, _)| i)
                .collect(),
            max_dual_norm,
        })
    }

    /// One ADMM iteration on every robot: x-update, exchange, w-update,
    /// exchange, dual update.
    pub fn inner_round(&mut self, cfg: &SolverConfig) -> Result<()> {
        self.inner += 1;
        let outer = self.outer;
        let inner = self.inner;
        let x_tag = RoundTag {
            outer,
            inner,
            phase: Phase::PrimalX,
        };
        let w_tag = RoundTag {
            outer,
            inner,
            phase: Phase::PrimalW,
        };

        let outgoing = self.run_nodes(|node| {
            node.x_update(cfg)?;
            let id = node.id();
            Ok(node
                .primal_x_messages()
                .map(|(j, x_hat, mu)| {
                    (
                        j,
                        RoundMessage {
                            sender: id,
                            round: x_tag,
                            payload: Payload::PrimalX { x_hat, mu },
                        },
                    )
                })
                .collect())
        })?;
        self.post_all(outgoing)?;
        self.deliver(x_tag, |node, msgs| {
            for m in msgs {
                match m.payload {
                    Payload::PrimalX { x_hat, mu } => node.receive_primal_x(m.sender, &x_hat, &mu)?,
                    other => {
                        return Err(Error::StaleData(format!("expected a primal-x message, got {other:?}")))
                    }
                }
            }
            Ok(())
        })?;

        let outgoing = self.run_nodes(|node| {
            node.w_update(cfg)?;
            let id = node.id();
            Ok(node
                .primal_w_messages()
                .map(|(j, w)| {
                    (
                        j,
                        RoundMessage {
                            sender: id,
                            round: w_tag,
                            payload: Payload::PrimalW { w },
                        },
                    )
                })
                .collect())
        })?;
        self.post_all(outgoing)?;
        self.deliver(w_tag, |node, msgs| {
            for m in msgs {
                match m.payload {
                    Payload::PrimalW { w } => node.receive_primal_w(m.sender, &w)?,
                    other => {
                        return Err(Error::StaleData(format!("expected a primal-w message, got {other:?}")))
                    }
                }
            }
            Ok(())
        })?;

        self.run_nodes(|node| node.dual_update(cfg).map(|_| ()))?;
        Ok(())
    }

    /// Accumulated errors x̄ of all robots.
    pub fn x_bar(&self) -> BlockVec {
        let mut out = BlockVec::zeros(self.layout.clone());
        for node in &self.nodes {
            out.block_mut(node.id()).copy_from_slice(node.x_bar());
        }
        out
    }

    /// Reconstructed errors x̂ + x̄ of all robots.
    pub fn reconstruction(&self) -> BlockVec {
        let mut out = BlockVec::zeros(self.layout.clone());
        for node in &self.nodes {
            out.block_mut(node.id()).copy_from_slice(&node.reconstruction());
        }
        out
    }
}
