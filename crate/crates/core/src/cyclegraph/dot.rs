use std::fmt::Write;

use super::graph::{ArchGraph, NodeKind};

/// Graphviz description of the graph. Nodes appear in id order, edges in
/// consumer order, so equal graphs give byte-identical text.
pub fn emit_dot(graph: &ArchGraph) -> String {
    let spec = graph.spec();
    let mut s = String::new();
    let _ = writeln!(s, "digraph {}_d{} {{", spec.family, spec.depth);
    let _ = writeln!(s, "  rankdir=TB;");
    let _ = writeln!(s, "  node [shape=box, fontname=\"Helvetica\"];");
    for n in graph.nodes() {
        let shape = match n.kind {
            NodeKind::ConvBlock => "box",
            NodeKind::Down => "invtrapezium",
            NodeKind::Up => "trapezium",
            NodeKind::Concat => "ellipse",
            NodeKind::Head => "doubleoctagon",
        };
        let _ = writeln!(
            s,
            "  n{} [label=\"{} L{} {}->{}\", shape={}];",
            n.id, n.kind, n.level, n.c_in, n.c_out, shape
        );
    }
    for n in graph.nodes() {
        for &p in &n.inputs {
            let skip = n.kind == NodeKind::Concat && p + 1 != n.id;
            if skip {
                let _ = writeln!(s, "  n{p} -> n{} [style=dashed];", n.id);
            } else {
                let _ = writeln!(s, "  n{p} -> n{};", n.id);
            }
        }
    }
    s.push_str("}\n");
    s
}
