use std::collections::BTreeMap;

use thiserror::Error;

use super::{ms_to_us, Micros};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Client,
    Switch,
    Store,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("delta ratio {0} outside [0, 1]")]
    DeltaOutOfRange(f64),
    #[error("rtt {0} ms must be positive and finite")]
    BadRtt(f64),
    #[error("topology needs at least one client")]
    NoClients,
}

/// Where the switch sits between client (0) and store (1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DeltaRatio(f64);

impl DeltaRatio {
    pub fn new(delta: f64) -> Result<Self, TopologyError> {
        if (0.0..=1.0).contains(&delta) {
            Ok(DeltaRatio(delta))
        } else {
            Err(TopologyError::DeltaOutOfRange(delta))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// (client-to-switch, switch-to-store) one-way delays in ms for `rtt_ms`.
    pub fn split(self, rtt_ms: f64) -> (f64, f64) {
        let one_way = rtt_ms / 2.0;
        (self.0 * one_way, (1.0 - self.0) * one_way)
    }
}

/// Nodes, directed one-way link delays and each node's next hop towards the store.
#[derive(Debug, Clone)]
pub struct Topology {
    kinds: Vec<NodeKind>,
    links: BTreeMap<(NodeId, NodeId), Micros>,
    upstream: Vec<Option<NodeId>>,
    /// Edge switch index for each client, in client order.
    client_groups: Vec<usize>,
}

impl Topology {
    pub fn store(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, node: NodeId) -> NodeKind {
        self.kinds[node]
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.kinds.iter().enumerate().filter(move |(_, k)| **k == kind).map(|(i, _)| i)
    }

    pub fn clients(&self) -> Vec<NodeId> {
        self.nodes_of(NodeKind::Client).collect()
    }

    pub fn switches(&self) -> Vec<NodeId> {
        self.nodes_of(NodeKind::Switch).collect()
    }

    pub fn upstream(&self, node: NodeId) -> Option<NodeId> {
        self.upstream[node]
    }

    /// Group (edge switch ordinal) of the i-th client.
    /// A switch with at least one client directly attached.
    pub fn is_edge(&self, node: NodeId) -> bool {
        self.clients().into_iter().any(|c| self.upstream(c) == Some(node))
    }

    pub fn client_group(&self, client_index: usize) -> usize {
        self.client_groups[client_index]
    }

    pub fn delay(&self, from: NodeId, to: NodeId) -> Option<Micros> {
        self.links.get(&(from, to)).copied()
    }

    /// Nodes a request from `client` visits, ending at the store.
    pub fn path_to_store(&self, client: NodeId) -> Vec<NodeId> {
        let mut path = vec![client];
        let mut at = client;
        while let Some(next) = self.upstream[at] {
            path.push(next);
            at = next;
        }
        path
    }

    /// One-way delay along [`path_to_store`](Self::path_to_store).
    pub fn one_way_to_store(&self, client: NodeId) -> Micros {
        self.path_to_store(client)
            .windows(2)
            .map(|w| self.delay(w[0], w[1]).expect("path follows links"))
            .sum()
    }

    fn add(&mut self, kind: NodeKind, upstream: Option<NodeId>) -> NodeId {
        self.kinds.push(kind);
        self.upstream.push(upstream);
        self.kinds.len() - 1
    }

    fn link(&mut self, a: NodeId, b: NodeId, delay: Micros) {
        self.links.insert((a, b), delay);
        self.links.insert((b, a), delay);
    }

    fn empty() -> Self {
        let mut t = Topology {
            kinds: Vec::new(),
            links: BTreeMap::new(),
            upstream: Vec::new(),
            client_groups: Vec::new(),
        };
        t.add(NodeKind::Store, None);
        t
    }

    /// Clients -> one switch -> store, with the switch at `delta` of the way.
    pub fn single_switch(rtt_ms: f64, delta: f64, clients: usize) -> Result<Self, TopologyError> {
        check_rtt(rtt_ms)?;
        if clients == 0 {
            return Err(TopologyError::NoClients);
        }
        let (d_cs, d_ss) = DeltaRatio::new(delta)?.split(rtt_ms);
        let mut t = Topology::empty();
        let switch = t.add(NodeKind::Switch, Some(0));
        t.link(switch, 0, ms_to_us(d_ss));
        for _ in 0..clients {
            let c = t.add(NodeKind::Client, Some(switch));
            t.link(c, switch, ms_to_us(d_cs));
            t.client_groups.push(0);
        }
        Ok(t)
    }

    /// Two edge switches of `per_group` clients each, both behind a middle
    /// switch that sits at the store with no added delay.
    ///
    /// Node order: store, middle switch, edge switch 0, edge switch 1, then
    /// group 0's clients followed by group 1's.
    pub fn locality(rtt_ms: f64, delta: f64, per_group: usize) -> Result<Self, TopologyError> {
        check_rtt(rtt_ms)?;
        if per_group == 0 {
            return Err(TopologyError::NoClients);
        }
        let (d_cs, d_ss) = DeltaRatio::new(delta)?.split(rtt_ms);
        let mut t = Topology::empty();
        let middle = t.add(NodeKind::Switch, Some(0));
        t.link(middle, 0, 0);
        let edges = [t.add(NodeKind::Switch, Some(middle)), t.add(NodeKind::Switch, Some(middle))];
        for &e in &edges {
            t.link(e, middle, ms_to_us(d_ss));
        }
        for (group, &edge) in edges.iter().enumerate() {
            for _ in 0..per_group {
                let c = t.add(NodeKind::Client, Some(edge));
                t.link(c, edge, ms_to_us(d_cs));
                t.client_groups.push(group);
            }
        }
        Ok(t)
    }
}

fn check_rtt(rtt_ms: f64) -> Result<(), TopologyError> {
    if rtt_ms.is_finite() && rtt_ms > 0.0 {
        Ok(())
    } else {
        Err(TopologyError::BadRtt(rtt_ms))
    }
}
