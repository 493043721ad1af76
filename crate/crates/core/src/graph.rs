//! Smocked graph extraction.
//!
//! Each stitching line fuses into one underlay node; unstitched vertices stay
//! as pleat nodes. Node ids put the underlay nodes first, so underlay node `k`
//! is stitching line `k`, followed by the pleat nodes in pattern-vertex order.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{component_count, dist2, SmockingPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexClass {
    Underlay,
    Pleat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Degenerated,
    Underlay,
    Pleat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NodeSource {
    /// Fused stitching line.
    Underlay { line: usize },
    /// Unstitched pattern vertex.
    Pleat { vertex: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmockedEdge {
    pub a: usize,
    pub b: usize,
    pub class: EdgeClass,
    /// Upper bound on the embedded length.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmockedGraph {
    pub nodes: Vec<NodeSource>,
    pub edges: Vec<SmockedEdge>,
    /// Node of every pattern vertex.
    pub vertex_node: Vec<usize>,
    pub num_underlay: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SmockedGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_pleat(&self) -> usize {
        self.nodes.len() - self.num_underlay
    }

    pub fn is_underlay(&self, node: usize) -> bool {
        node < self.num_underlay
    }

    pub fn underlay_edges(&self) -> impl Iterator<Item = &SmockedEdge> {
        self.edges.iter().filter(|e| e.class == EdgeClass::Underlay)
    }

    pub fn pleat_edges(&self) -> impl Iterator<Item = &SmockedEdge> {
        self.edges.iter().filter(|e| e.class == EdgeClass::Pleat)
    }

    /// Pattern vertex behind a pleat node.
    pub fn pleat_vertex(&self, node: usize) -> Option<usize> {
        match self.nodes.get(node)? {
            NodeSource::Pleat { vertex } => Some(*vertex),
            NodeSource::Underlay { .. } => None,
        }
    }

    /// Connected components of the underlay graph over all underlay nodes.
    pub fn underlay_components(&self) -> usize {
        let edges: Vec<[usize; 2]> = self.underlay_edges().map(|e| [e.a, e.b]).collect();
        component_count(self.num_underlay, &edges)
    }
}

/// Underlay/pleat class of every vertex and every edge of `p`.
pub fn classify(p: &SmockingPattern) -> (Vec<VertexClass>, Vec<EdgeClass>) {
    let owner = p.line_of_vertex();
    let vertex = owner
        .iter()
        .map(|o| if o.is_some() { VertexClass::Underlay } else { VertexClass::Pleat })
        .collect();
    let edge = p
        .edges
        .iter()
        .map(|&[a, b]| match (owner[a], owner[b]) {
            (Some(x), Some(y)) if x == y => EdgeClass::Degenerated,
            (Some(_), Some(_)) => EdgeClass::Underlay,
            _ => EdgeClass::Pleat,
        })
        .collect();
    (vertex, edge)
}

/// Fuses stitching lines, drops degenerated edges and merges duplicates.
pub fn extract(p: &SmockingPattern) -> Result<SmockedGraph> {
    p.validate()?;
    let owner = p.line_of_vertex();
    let num_underlay = p.lines.len();
    let mut nodes: Vec<NodeSource> = (0..num_underlay).map(|line| NodeSource::Underlay { line }).collect();
    let mut vertex_node = vec![0; p.vertices.len()];
    for (v, o) in owner.iter().enumerate() {
        vertex_node[v] = match o {
            Some(line) => *line,
            None => {
                nodes.push(NodeSource::Pleat { vertex: v });
                nodes.len() - 1
            }
        };
    }
    let mut graph = SmockedGraph {
        nodes,
        edges: Vec::new(),
        vertex_node,
        num_underlay,
        warnings: Vec::new(),
    };

    // Keyed by node pair; a merged duplicate keeps the smallest bound.
    let mut merged: BTreeMap<(usize, usize), SmockedEdge> = BTreeMap::new();
    for &[u, v] in &p.edges {
        let (a, b) = (graph.vertex_node[u], graph.vertex_node[v]);
        if a == b {
            continue;
        }
        let (a, b) = (a.min(b), a.max(b));
        let class = if a < num_underlay && b < num_underlay {
            EdgeClass::Underlay
        } else {
            EdgeClass::Pleat
        };
        let bound = distance_bound(p, &graph, a, b);
        merged
            .entry((a, b))
            .and_modify(|e| e.bound = e.bound.min(bound))
            .or_insert(SmockedEdge { a, b, class, bound });
    }
    graph.edges = merged.into_values().collect();

    if let Some(e) = graph.edges.iter().find(|e| !(e.bound > 0.0)) {
        return Err(Error::InvalidPattern(format!(
            "nodes {} and {} have a zero distance bound",
            e.a, e.b
        )));
    }
    // A lone stitching line has no underlay edges but is still embeddable
    // when pleat edges hold the fabric around it.
    let lone_line = num_underlay == 1 && !graph.edges.is_empty();
    if graph.underlay_edges().next().is_none() && !lone_line {
        return Err(Error::EmptyUnderlay);
    }
    if graph.num_pleat() == 0 {
        let msg = "pattern has no pleat nodes; insert additional pleat nodes for a more regular result".to_string();
        log::warn!("{msg}");
        graph.warnings.push(msg);
    }
    Ok(graph)
}

/// Largest distance two smocked-graph nodes may have once embedded: the
/// shortest flat-fabric distance between their source vertices.
pub fn distance_bound(p: &SmockingPattern, g: &SmockedGraph, a: usize, b: usize) -> f64 {
    let points = |n: usize| -> Vec<usize> {
        match g.nodes[n] {
            NodeSource::Underlay { line } => p.lines[line].vertex_ids.clone(),
            NodeSource::Pleat { vertex } => vec![vertex],
        }
    };
    let (pa, pb) = (points(a), points(b));
    let mut best = f64::INFINITY;
    for &u in &pa {
        for &v in &pb {
            best = best.min(dist2(p.vertices[u], p.vertices[v]));
        }
    }
    best
}

/// Dense symmetric matrix of bounds for every node pair, zero diagonal.
pub fn all_pair_bounds(p: &SmockingPattern, g: &SmockedGraph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let d = distance_bound(p, g, a, b);
            m[(a, b)] = d;
            m[(b, a)] = d;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pattern::{build_grid, GridSpec, StitchingLine};

    #[test]
    fn vertex_and_edge_classes_follow_definitions() {
        let p = fixtures::p1();
        let (vc, ec) = classify(&p);
        let owner = p.line_of_vertex();
        for (v, c) in vc.iter().enumerate() {
            assert_eq!(*c == VertexClass::Underlay, owner[v].is_some());
        }
        let l0 = &p.lines[0].vertex_ids;
        let idx = p.edges.iter().position(|e| *e == [l0[0].min(l0[1]), l0[0].max(l0[1])]).unwrap();
        assert_eq!(ec[idx], EdgeClass::Degenerated);
    }

    #[test]
    fn two_adjacent_lines_give_two_underlay_nodes() {
        let mut p = build_grid(&GridSpec::square(2, 1, 1.0)).unwrap();
        p.lines = vec![StitchingLine::new(vec![0, 4]), StitchingLine::new(vec![1, 5])];
        let g = extract(&p).unwrap();
        assert_eq!(g.num_underlay, 2);
        assert_eq!(g.underlay_edges().count(), 1);
        assert!(g.edges.iter().all(|e| e.class != EdgeClass::Degenerated));
    }

    #[test]
    fn duplicate_edges_collapse() {
        // Both vertices of line 0 neighbour pleat vertex 1.
        let mut p = build_grid(&GridSpec::square(2, 1, 1.0)).unwrap();
        p.lines = vec![StitchingLine::new(vec![0, 3]), StitchingLine::new(vec![2, 4])];
        let g = extract(&p).unwrap();
        let pleat_top = g.vertex_node[1];
        let to_line0: Vec<_> = g.edges.iter().filter(|e| e.a == 0 && e.b == pleat_top).collect();
        assert_eq!(to_line0.len(), 1);
        assert_eq!(to_line0[0].bound, 1.0);
        let mut keys: Vec<_> = g.edges.iter().map(|e| (e.a, e.b)).collect();
        keys.dedup();
        assert_eq!(keys.len(), g.edges.len());
    }

    #[test]
    fn only_degenerated_edges_is_an_error() {
        let mut p = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        p.lines = vec![StitchingLine::new(vec![0, 1, 2, 3])];
        assert!(matches!(extract(&p), Err(Error::EmptyUnderlay)));
    }

    #[test]
    fn single_line_with_pleats_is_accepted() {
        let g = extract(&fixtures::single_line()).unwrap();
        assert_eq!(g.num_underlay, 1);
        assert_eq!(g.underlay_edges().count(), 0);
        assert_eq!(g.num_pleat(), 7);
    }

    #[test]
    fn taxonomy_fixture_bounds() {
        let p1 = fixtures::p1();
        let g1 = extract(&p1).unwrap();
        let m = all_pair_bounds(&p1, &g1);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 2)], 1.0);
        assert_eq!(m[(0, 2)], 2f64.sqrt());

        let p2 = fixtures::p2();
        let g2 = extract(&p2).unwrap();
        let m = all_pair_bounds(&p2, &g2);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 2)], 1.0);
        assert_eq!(m[(0, 2)], 5f64.sqrt());
    }

    #[test]
    fn pleat_pair_bound_is_euclidean() {
        let p = SmockingPattern::explicit(
            vec![[0.0, 0.0], [3.0, 4.0], [1.0, 0.0], [1.0, 1.0], [2.0, 0.0], [2.0, 1.0]],
            vec![[0, 1], [0, 2], [1, 3], [2, 3], [2, 4], [3, 5], [4, 5]],
            vec![StitchingLine::new(vec![2, 3]), StitchingLine::new(vec![4, 5])],
        )
        .unwrap();
        let g = extract(&p).unwrap();
        let (a, b) = (g.vertex_node[0], g.vertex_node[1]);
        assert_eq!(distance_bound(&p, &g, a, b), 5.0);
        assert_eq!(distance_bound(&p, &g, b, a), 5.0);
    }

    #[test]
    fn empty_pleat_set_warns() {
        let mut dense = build_grid(&GridSpec::square(3, 1, 1.0)).unwrap();
        dense.lines = vec![
            StitchingLine::new(vec![0, 1]),
            StitchingLine::new(vec![2, 3]),
            StitchingLine::new(vec![4, 5]),
            StitchingLine::new(vec![6, 7]),
        ];
        let g = extract(&dense).unwrap();
        assert_eq!(g.num_pleat(), 0);
        assert_eq!(g.warnings.len(), 1);
    }
}
