use std::collections::HashMap;
use std::path::PathBuf;

use mgnets::cyclegraph::{
    build_graph, count_parameters, count_parameters_with, emit_dot, schedule, published_spec,
    ArchGraph, ArchSpec, ChannelPolicy, CountConvention, Family, NodeKind, PUBLISHED_COUNTS,
};
use mgnets::mgsolve::{level_trace, CycleKind};
use proptest::prelude::*;

fn all_graphs() -> impl Iterator<Item = ArchGraph> {
    Family::ALL.into_iter().flat_map(|f| {
        (2..=6).map(move |d| build_graph(&ArchSpec::new(f, d)).unwrap())
    })
}

/// Number of skip inputs (Concat inputs other than the Up output).
fn skip_edges(g: &ArchGraph) -> usize {
    g.nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Concat)
        .map(|n| n.inputs.len() - 1)
        .sum()
}

/// True if the visit containing `id` was entered through an Up.
fn entered_from_above(g: &ArchGraph, mut id: usize) -> bool {
    loop {
        let n = g.node(id);
        match n.kind {
            NodeKind::ConvBlock if n.inputs.is_empty() => return false,
            NodeKind::ConvBlock => id = n.inputs[0],
            NodeKind::Concat | NodeKind::Up => return true,
            NodeKind::Down => return false,
            NodeKind::Head => unreachable!(),
        }
    }
}

#[test]
fn schedules_agree_with_solver_traces() {
    for depth in 2..=6 {
        let v = schedule(Family::Unet, depth).unwrap();
        assert_eq!(v.levels(), level_trace(CycleKind::V, depth).unwrap().as_slice());
        let w = schedule(Family::Wnet, depth).unwrap();
        assert_eq!(w.levels(), level_trace(CycleKind::W, depth).unwrap().as_slice());
        let f = schedule(Family::Fmgnet, depth).unwrap();
        let trace = level_trace(CycleKind::Fmg, depth).unwrap();
        let first_fine = trace.iter().position(|&l| l == 0).unwrap();
        assert_eq!(f.without_stem(), &trace[..=first_fine], "depth {depth}");
        assert_eq!(&f.levels()[..depth - 1], (0..depth - 1).collect::<Vec<_>>().as_slice());
    }
}

#[test]
fn schedule_levels_are_contiguous() {
    for f in Family::ALL {
        for depth in 2..=6 {
            let s = schedule(f, depth).unwrap();
            let l = s.levels();
            assert_eq!((l[0], *l.last().unwrap()), (0, 0));
            assert!(l.windows(2).all(|w| w[0].abs_diff(w[1]) == 1));
            assert!(l.iter().all(|&x| x < depth));
            assert_eq!(s.moves().len(), l.len() - 1);
        }
    }
}

#[test]
fn graphs_are_valid_dags_with_one_head() {
    for g in all_graphs() {
        g.validate().unwrap();
        assert_eq!(g.nodes().iter().filter(|n| n.kind == NodeKind::Head).count(), 1);
        assert_eq!(g.head().unwrap().id, g.len() - 1);
        for (p, c) in g.edges() {
            assert!(p < c);
        }
    }
}

#[test]
fn channels_are_conserved() {
    for g in all_graphs() {
        for n in g.nodes() {
            let incoming: usize = n.inputs.iter().map(|&p| g.node(p).c_out).sum();
            if n.inputs.is_empty() {
                assert_eq!(n.c_in, g.spec().in_channels);
            } else {
                assert_eq!(n.c_in, incoming);
            }
            if n.kind == NodeKind::Concat {
                assert_eq!(n.c_out, incoming);
            }
        }
    }
}

#[test]
fn skip_fan_out_rules() {
    for g in all_graphs() {
        for down in g.nodes().iter().filter(|n| n.kind == NodeKind::Down) {
            let src = down.inputs[0];
            let level = g.node(src).level;
            let out_degree = g.consumers(src).len();
            if entered_from_above(&g, src) {
                assert_eq!(out_degree, 2, "{:?} peak {src}", g.spec().family);
            } else {
                let later_ups = g
                    .nodes()
                    .iter()
                    .filter(|n| n.kind == NodeKind::Up && n.level == level && n.id > src)
                    .count();
                assert_eq!(out_degree, 1 + later_ups, "{:?} source {src}", g.spec().family);
            }
        }
    }
}

#[test]
fn unet_depth_three_has_two_skips() {
    let g = build_graph(&ArchSpec::new(Family::Unet, 3)).unwrap();
    assert_eq!(skip_edges(&g), 2);
}

#[test]
fn fmgnet_depth_three_wiring() {
    let g = build_graph(&ArchSpec::new(Family::Fmgnet, 3)).unwrap();
    let peaks: Vec<usize> = g
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Down && entered_from_above(&g, n.inputs[0]))
        .map(|n| n.inputs[0])
        .collect();
    assert!(!peaks.is_empty());
    for p in peaks {
        let skips = g
            .consumers(p)
            .into_iter()
            .filter(|&c| g.node(c).kind == NodeKind::Concat)
            .count();
        assert_eq!(skips, 1);
    }
    for stem_level in [0, 1] {
        let src = g
            .nodes()
            .iter()
            .find(|n| n.kind == NodeKind::ConvBlock && n.level == stem_level)
            .unwrap()
            .id;
        let ups = g
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::Up && n.level == stem_level)
            .count();
        let concats = g
            .consumers(src)
            .into_iter()
            .filter(|&c| g.node(c).kind == NodeKind::Concat)
            .count();
        assert_eq!(concats, ups);
    }
}

#[test]
fn wnet_depth_two_is_unet_depth_two_under_one_policy() {
    let u = build_graph(&ArchSpec::new(Family::Unet, 2).with_policy(ChannelPolicy::Pocket)).unwrap();
    let w = build_graph(&ArchSpec::new(Family::Wnet, 2)).unwrap();
    assert_eq!(u.nodes(), w.nodes());
    assert_eq!(count_parameters(&u), count_parameters(&w));
}

#[test]
fn node_count_grows_with_depth() {
    for f in Family::ALL {
        let sizes: Vec<usize> = (2..=6)
            .map(|d| build_graph(&ArchSpec::new(f, d)).unwrap().len())
            .collect();
        assert!(sizes.windows(2).all(|w| w[1] > w[0]), "{f}: {sizes:?}");
    }
}

/// Closed-form count straight from a level list, without building a graph.
fn oracle_count(spec: &ArchSpec, levels: &[usize], bn: u64) -> u64 {
    let d = spec.spatial_dims as u32;
    let k = 3u64.pow(d);
    let up_k = 2u64.pow(d);
    let width = |l: usize| -> u64 {
        match spec.channel_policy {
            ChannelPolicy::Doubling => (spec.base_features as u64) << l,
            ChannelPolicy::Pocket => spec.base_features as u64,
        }
    };
    let block = |ci: u64, co: u64| k * ci * co + co + bn * co + k * co * co + co + bn * co;
    let mut total = 0;
    let mut prev = spec.in_channels as u64;
    let mut encoder: HashMap<usize, u64> = HashMap::new();
    let mut peak: HashMap<usize, u64> = HashMap::new();
    for (i, &l) in levels.iter().enumerate() {
        let from_above = i > 0 && levels[i - 1] == l + 1;
        let to_below = i + 1 < levels.len() && levels[i + 1] == l + 1;
        let mut cin = prev;
        if from_above {
            total += up_k * prev * width(l) + width(l);
            cin = width(l) + encoder.get(&l).copied().unwrap_or(0) + peak.remove(&l).unwrap_or(0);
        }
        total += block(cin, width(l));
        prev = width(l);
        if from_above && to_below {
            total += block(prev, prev);
        }
        if to_below {
            if from_above {
                peak.insert(l, prev);
            } else {
                *encoder.entry(l).or_default() += prev;
            }
        }
    }
    total + prev * spec.out_channels as u64 + spec.out_channels as u64
}

#[test]
fn counts_match_closed_form_oracle() {
    for f in Family::ALL {
        for d in 2..=6 {
            for dims in [2, 3] {
                let spec = ArchSpec::new(f, d).with_dims(dims).with_base(8);
                let g = build_graph(&spec).unwrap();
                let levels = schedule(f, d).unwrap().levels().to_vec();
                assert_eq!(count_parameters(&g), oracle_count(&spec, &levels, 2));
                assert_eq!(
                    count_parameters_with(&g, CountConvention::Published),
                    oracle_count(&spec, &levels, 4)
                );
            }
        }
    }
}

#[test]
fn published_counts() {
    for (family, depth, target) in PUBLISHED_COUNTS {
        let g = build_graph(&published_spec(family, depth)).unwrap();
        let got = count_parameters_with(&g, CountConvention::Published);
        let rel = (got as f64 - target as f64).abs() / target as f64;
        if family == Family::Wnet && depth > 3 {
            assert!(rel <= 0.02, "{family} {depth}: {got} vs {target}");
        } else {
            assert_eq!(got, target, "{family} {depth}");
        }
    }
}

#[test]
fn pocket_families_are_smaller_than_unet() {
    for d in 3..=6 {
        let u = count_parameters(&build_graph(&ArchSpec::new(Family::Unet, d)).unwrap());
        for f in [Family::Fmgnet, Family::Wnet] {
            let c = count_parameters(&build_graph(&ArchSpec::new(f, d)).unwrap());
            assert!(c < u, "{f} depth {d}");
        }
    }
}

proptest! {
    #[test]
    fn counts_increase_with_base_and_depth(
        fam in 0usize..3, depth in 2usize..6, base in 1usize..48, dims in 2usize..=3,
    ) {
        let f = Family::ALL[fam];
        let spec = ArchSpec::new(f, depth).with_dims(dims).with_base(base);
        let c = count_parameters(&build_graph(&spec).unwrap());
        let wider = count_parameters(&build_graph(&spec.with_base(base + 1)).unwrap());
        let deeper = count_parameters(&build_graph(&ArchSpec { depth: depth + 1, ..spec }).unwrap());
        prop_assert!(wider > c);
        prop_assert!(deeper > c);
    }
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn dot_output_matches_golden_files() {
    let bless = std::env::var_os("MGNETS_BLESS").is_some();
    for (f, d) in [
        (Family::Unet, 2),
        (Family::Unet, 3),
        (Family::Fmgnet, 3),
        (Family::Wnet, 3),
    ] {
        let text = emit_dot(&build_graph(&ArchSpec::new(f, d)).unwrap());
        let path = golden_dir().join(format!("{f}_d{d}.dot"));
        if bless {
            std::fs::write(&path, &text).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, expected, "{}", path.display());
    }
}

#[test]
fn dot_output_is_deterministic() {
    for g in all_graphs() {
        let again = build_graph(g.spec()).unwrap();
        let text = emit_dot(&g);
        assert_eq!(text, emit_dot(&again));
        assert_eq!(text.matches("label=\"Head").count(), 1);
    }
}
