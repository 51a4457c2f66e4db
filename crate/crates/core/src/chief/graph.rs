use std::collections::{BTreeSet, HashMap};

use super::model::{ChiefGraph, Edge};
use super::ChiefError;

/// Index-based adjacency view used by the traversal routines.
pub struct Adjacency<'g> {
    graph: &'g ChiefGraph,
    index: HashMap<&'g str, usize>,
    /// Outgoing edge indices per node, in document order.
    out: Vec<Vec<usize>>,
}

impl<'g> Adjacency<'g> {
    pub fn new(graph: &'g ChiefGraph) -> Self {
        let index: HashMap<&str, usize> = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut out = vec![Vec::new(); graph.nodes.len()];
        for (e, edge) in graph.edges.iter().enumerate() {
            if let (Some(&s), true) = (index.get(edge.source.as_str()), index.contains_key(edge.target.as_str())) {
                out[s].push(e);
            }
        }
        Self { graph, index, out }
    }

    fn idx(&self, id: &str) -> Result<usize, ChiefError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| ChiefError::UnknownNode(id.to_string()))
    }

    /// Nodes reachable from `from` over one or more edges.
    pub fn reachable(&self, from: &str) -> Result<BTreeSet<String>, ChiefError> {
        let start = self.idx(from)?;
        let mut seen = vec![false; self.graph.nodes.len()];
        let mut stack: Vec<usize> = self.successors(start).collect();
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.successors(n).filter(|&m| !seen[m]));
        }
        Ok(seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| self.graph.nodes[i].id.clone())
            .collect())
    }

    fn successors(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[n]
            .iter()
            .map(move |&e| self.index[self.graph.edges[e].target.as_str()])
    }

    /// First path from `from` to `to` found by depth-first search that visits
    /// outgoing edges in document order. `Some(vec![])` when `from == to`.
    pub fn dfs_path(&self, from: &str, to: &str) -> Result<Option<Vec<&'g Edge>>, ChiefError> {
        let start = self.idx(from)?;
        let goal = self.idx(to)?;
        if start == goal {
            return Ok(Some(Vec::new()));
        }
        let mut visited = vec![false; self.graph.nodes.len()];
        let mut path = Vec::new();
        if self.dfs(start, goal, &mut visited, &mut path) {
            Ok(Some(path.into_iter().map(|e| &self.graph.edges[e]).collect()))
        } else {
            Ok(None)
        }
    }

    fn dfs(&self, node: usize, goal: usize, visited: &mut [bool], path: &mut Vec<usize>) -> bool {
        visited[node] = true;
        for &e in &self.out[node] {
            let next = self.index[self.graph.edges[e].target.as_str()];
            if visited[next] {
                continue;
            }
            path.push(e);
            if next == goal || self.dfs(next, goal, visited, path) {
                return true;
            }
            path.pop();
        }
        false
    }

    /// Nodes reachable from the start node, including the start itself.
    pub fn reachable_from_start(&self) -> BTreeSet<String> {
        let Some(start) = self.graph.start() else {
            return BTreeSet::new();
        };
        match self.reachable(start) {
            Ok(mut set) => {
                set.insert(start.to_string());
                set
            }
            Err(_) => BTreeSet::new(),
        }
    }
}

/// Set of nodes reachable from `from` via at least one edge. `from` itself is
/// included only when it lies on a cycle.
pub fn reachable_nodes(graph: &ChiefGraph, from: &str) -> Result<BTreeSet<String>, ChiefError> {
    Adjacency::new(graph).reachable(from)
}

/// First depth-first path between two nodes, as the list of traversed edges.
pub fn dfs_path<'g>(
    graph: &'g ChiefGraph,
    from: &str,
    to: &str,
) -> Result<Option<Vec<&'g Edge>>, ChiefError> {
    Adjacency::new(graph).dfs_path(from, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chief::model::*;

    fn chain(ids: &[&str], edges: &[(&str, &str)]) -> ChiefGraph {
        let mut g = ChiefGraph::empty();
        g.nodes = ids
            .iter()
            .map(|id| {
                Node::new(
                    *id,
                    NodeKind::Inform(InformNode {
                        template: "x".into(),
                        confirm_question: None,
                    }),
                )
            })
            .collect();
        g.edges = edges.iter().map(|(s, t)| Edge::new(*s, *t)).collect();
        g
    }

    #[test]
    fn sink_reaches_nothing() {
        let g = chain(&["a", "b"], &[("a", "b")]);
        assert!(reachable_nodes(&g, "b").unwrap().is_empty());
        assert_eq!(reachable_nodes(&g, "a").unwrap(), BTreeSet::from(["b".to_string()]));
    }

    #[test]
    fn self_loop_includes_itself() {
        let g = chain(&["n5", "n6"], &[("n5", "n5"), ("n5", "n6")]);
        let r = reachable_nodes(&g, "n5").unwrap();
        assert_eq!(r, BTreeSet::from(["n5".to_string(), "n6".to_string()]));
    }

    #[test]
    fn unknown_node_is_an_error() {
        let g = chain(&["a"], &[]);
        assert!(matches!(reachable_nodes(&g, "zz"), Err(ChiefError::UnknownNode(_))));
    }

    #[test]
    fn dfs_takes_first_edge_in_document_order() {
        let g = chain(&["s", "x", "y", "t"], &[("s", "x"), ("s", "y"), ("x", "t"), ("y", "t")]);
        let p = dfs_path(&g, "s", "t").unwrap().unwrap();
        let hops: Vec<_> = p.iter().map(|e| (e.source.as_str(), e.target.as_str())).collect();
        assert_eq!(hops, vec![("s", "x"), ("x", "t")]);
        assert_eq!(dfs_path(&g, "s", "s").unwrap(), Some(vec![]));
        assert_eq!(dfs_path(&g, "t", "s").unwrap(), None);
    }

    #[test]
    fn dfs_backtracks_out_of_dead_ends() {
        let g = chain(&["s", "dead", "t"], &[("s", "dead"), ("s", "t")]);
        let p = dfs_path(&g, "s", "t").unwrap().unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].target, "t");
    }
}
