//! Directed acyclic graphs: ingestion, validation, and deterministic
//! topological ordering.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated DAG over named nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl DagSpec {
    /// Build and validate from declared nodes and (parent, child) edges.
    /// Rejects unknown names, self-loops, duplicate edges, and cycles.
    pub fn new(nodes: Vec<String>, edges: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.clone()) {
                return Err(Error::Usage(format!("duplicate node '{n}'")));
            }
        }
        let mut edge_set = HashSet::new();
        for (p, c) in &edges {
            if !seen.contains(p) {
                return Err(Error::Usage(format!("edge references unknown node '{p}'")));
            }
            if !seen.contains(c) {
                return Err(Error::Usage(format!("edge references unknown node '{c}'")));
            }
            if p == c {
                return Err(Error::Usage(format!("self-loop on '{p}'")));
            }
            if !edge_set.insert((p.clone(), c.clone())) {
                return Err(Error::Usage(format!("duplicate edge {p} -> {c}")));
            }
        }
        let dag = DagSpec { nodes, edges };
        dag.topo_sort()?; // cycle check
        Ok(dag)
    }

    /// Parse the JSON form {"nodes": [...], "edges": [["p","c"], ...]}.
    pub fn from_json_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            nodes: Vec<String>,
            edges: Vec<(String, String)>,
        }
        let raw: Raw = serde_json::from_str(s)?;
        DagSpec::new(raw.nodes, raw.edges)
    }

    pub fn from_json_path<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Parents of a node in declaration order.
    pub fn parents(&self, node: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter(|(_, c)| c == node)
            .map(|(p, _)| p.as_str())
            .collect();
        let pos: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        out.sort_by_key(|p| pos[p]);
        out
    }

    /// Kahn's algorithm; among simultaneously ready nodes the one declared
    /// earliest is emitted first, making the order deterministic.
    pub fn topo_sort(&self) -> Result<Vec<String>> {
        let idx: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut indeg = vec![0usize; self.nodes.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (p, c) in &self.edges {
            indeg[idx[c.as_str()]] += 1;
            children[idx[p.as_str()]].push(idx[c.as_str()]);
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while !ready.is_empty() {
            ready.sort_unstable();
            let next = ready.remove(0);
            order.push(self.nodes[next].clone());
            for &c in &children[next] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() != self.nodes.len() {
            // Name one edge on a cycle: any edge whose endpoints both
            // remain unordered.
            let placed: HashSet<&str> = order.iter().map(|s| s.as_str()).collect();
            let (p, c) = self
                .edges
                .iter()
                .find(|(p, c)| !placed.contains(p.as_str()) && !placed.contains(c.as_str()))
                .expect("a cycle must contain an edge among unplaced nodes");
            return Err(Error::Cycle {
                parent: p.clone(),
                child: c.clone(),
            });
        }
        Ok(order)
    }
}
