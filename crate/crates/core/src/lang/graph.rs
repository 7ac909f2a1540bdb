//! Dependency (data-flow) graphs and variable-name canonicalisation.

use std::collections::VecDeque;

use petgraph::graph::{DiGraph, NodeIndex};

use super::ast::{Command, Program, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DepNode {
    Var(Var),
    /// The k-th observe command (0-based, command order).
    Obs(usize),
}

/// Edge `u -> w` iff `u` is read by the command defining `w` (or by the
/// observe command `w`).
#[derive(Clone, Debug)]
pub struct DependencyGraph {
    pub graph: DiGraph<DepNode, ()>,
    var_nodes: Vec<Option<NodeIndex>>,
    obs_nodes: Vec<NodeIndex>,
}

impl DependencyGraph {
    pub fn node_of(&self, v: Var) -> Option<NodeIndex> {
        self.var_nodes.get(v.0).copied().flatten()
    }

    pub fn obs_node(&self, k: usize) -> NodeIndex {
        self.obs_nodes[k]
    }

    pub fn has_edge(&self, from: DepNode, to: DepNode) -> bool {
        let idx = |n: DepNode| match n {
            DepNode::Var(v) => self.node_of(v),
            DepNode::Obs(k) => self.obs_nodes.get(k).copied(),
        };
        match (idx(from), idx(to)) {
            (Some(a), Some(b)) => self.graph.contains_edge(a, b),
            _ => false,
        }
    }

    pub fn is_acyclic(&self) -> bool {
        !petgraph::algo::is_cyclic_directed(&self.graph)
    }
}

/// Build the dependency graph. Nodes are added in command order, so node
/// order is a topological order for a well-typed program.
pub fn dependency_graph(prog: &Program) -> DependencyGraph {
    let mut graph = DiGraph::new();
    let mut var_nodes = vec![None; prog.var_count()];
    let mut obs_nodes = Vec::new();
    let mut node = |graph: &mut DiGraph<DepNode, ()>, v: Var| -> NodeIndex {
        *var_nodes[v.0].get_or_insert_with(|| graph.add_node(DepNode::Var(v)))
    };
    for cmd in prog.commands() {
        let sink = match cmd.target() {
            Some(t) => node(&mut graph, t),
            None => {
                let n = graph.add_node(DepNode::Obs(obs_nodes.len()));
                obs_nodes.push(n);
                n
            }
        };
        let mut seen = Vec::new();
        for u in cmd.operands() {
            if seen.contains(&u) {
                continue;
            }
            seen.push(u);
            let src = node(&mut graph, u);
            graph.add_edge(src, sink, ());
        }
    }
    DependencyGraph {
        graph,
        var_nodes,
        obs_nodes,
    }
}

/// Canonical slot order: breadth-first over the dependency graph, seeded
/// with all source nodes. Ties (sources, and the children of one node)
/// are broken by the index of the defining command.
pub fn canonical_order(prog: &Program) -> Vec<Var> {
    let m = prog.var_count();
    let mut def_cmd = vec![usize::MAX; m];
    let mut children: Vec<Vec<Var>> = vec![Vec::new(); m];
    let mut has_parent = vec![false; m];
    for (i, cmd) in prog.commands().iter().enumerate() {
        if let Some(t) = cmd.target() {
            def_cmd[t.0] = i;
            for u in cmd.operands() {
                if !children[u.0].contains(&t) {
                    children[u.0].push(t);
                }
                has_parent[t.0] = true;
            }
        }
    }
    for c in children.iter_mut() {
        c.sort_by_key(|v| def_cmd[v.0]);
    }
    let mut sources: Vec<Var> = (0..m).map(Var).filter(|v| !has_parent[v.0]).collect();
    sources.sort_by_key(|v| (def_cmd[v.0], v.0));

    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut queue: VecDeque<Var> = VecDeque::new();
    for s in sources {
        visited[s.0] = true;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in &children[v.0] {
            if !visited[c.0] {
                visited[c.0] = true;
                queue.push_back(c);
            }
        }
    }
    order
}

/// Rename variables to `z0, z1, ..` (latents) and `v0, v1, ..` (everything
/// else) in canonical order; slot indices follow the same order.
pub fn canonicalise(prog: &Program) -> Program {
    let order = canonical_order(prog);
    let mut perm = vec![0; prog.var_count()];
    for (new, old) in order.iter().enumerate() {
        perm[old.0] = new;
    }
    let renamed = prog.permute_vars(&perm);
    let is_latent = |v: Var| {
        renamed
            .commands()
            .iter()
            .any(|c| matches!(c, Command::Sample { target, .. } if *target == v))
    };
    let (mut nz, mut nv) = (0, 0);
    let names = (0..renamed.var_count())
        .map(|i| {
            if is_latent(Var(i)) {
                nz += 1;
                format!("z{}", nz - 1)
            } else {
                nv += 1;
                format!("v{}", nv - 1)
            }
        })
        .collect();
    renamed.with_names(names)
}

/// One-hot encoding of `v` in a space of `m` variables.
pub fn one_hot(v: Var, m: usize) -> Result<Vec<f64>, OneHotError> {
    if v.0 >= m {
        return Err(OneHotError { index: v.0, m });
    }
    let mut out = vec![0.0; m];
    out[v.0] = 1.0;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("variable index {index} out of range for one-hot width {m}")]
pub struct OneHotError {
    pub index: usize,
    pub m: usize,
}
