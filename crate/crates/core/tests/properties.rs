//! Property tests for the spec'd invariants: graph operations against naive
//! oracles, cosine and scoring algebra, knn prefix behavior, capped-recall
//! oracle agreement, and fallback-decomposition guarantees.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dctr_core::embed::{cosine_similarity, deterministic_embed, EmbeddingVector};
use dctr_core::index::{knn, DenseIndex, IndexEntry};
use dctr_core::retrieval::{score_group, RetrievalConfig, TableGroup};
use dctr_core::schema::{
    build_schema_graph, connected_components, fk_expand, gold_connectivity, DatabaseId,
    DatabaseSchema, ForeignKeyEdge, SchemaGraph, TableDef, TableId,
};
use dctr_core::{capped_recall, fallback_decompose, final_select};

fn tid(i: usize) -> TableId {
    TableId::new("db", format!("t{i:03}"))
}

fn make_graph(n: usize, edges: &[(usize, usize)]) -> SchemaGraph {
    let schema = DatabaseSchema {
        id: DatabaseId::new("db"),
        tables: (0..n)
            .map(|i| TableDef {
                id: tid(i),
                name: format!("t{i:03}"),
                columns: vec![],
            })
            .collect(),
        fks: edges
            .iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| ForeignKeyEdge::new(tid(*a), tid(*b)))
            .collect(),
    };
    build_schema_graph(&schema).unwrap()
}

/// Union-find oracle for connected components of the induced subgraph.
fn union_find_components(
    nodes: &BTreeSet<TableId>,
    edges: &[(usize, usize)],
) -> Vec<BTreeSet<TableId>> {
    let members: Vec<&TableId> = nodes.iter().collect();
    let index_of: BTreeMap<&TableId, usize> =
        members.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (a, b) in edges {
        let (ta, tb) = (tid(*a), tid(*b));
        if let (Some(&ia), Some(&ib)) = (index_of.get(&ta), index_of.get(&tb)) {
            let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let mut by_root: BTreeMap<usize, BTreeSet<TableId>> = BTreeMap::new();
    for (i, member) in members.iter().enumerate() {
        let root = find(&mut parent, i);
        by_root.entry(root).or_default().insert((*member).clone());
    }
    by_root.into_values().collect()
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        let edges = proptest::collection::vec((0..n, 0..n), 0..(n * 2));
        let membership = proptest::collection::vec(any::<bool>(), n);
        (Just(n), edges, membership)
    })
}

proptest! {
    #[test]
    fn components_partition_and_match_union_find((n, edges, membership) in graph_strategy()) {
        let graph = make_graph(n, &edges);
        let nodes: BTreeSet<TableId> = membership
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| tid(i))
            .collect();
        let components = connected_components(&graph, &nodes).unwrap();

        // Partition: disjoint, union equals the node set.
        let mut seen = BTreeSet::new();
        for component in &components {
            for member in component {
                prop_assert!(seen.insert(member.clone()), "components overlap");
            }
        }
        prop_assert_eq!(&seen, &nodes);

        // Ordered by (size desc, smallest member asc).
        for pair in components.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            prop_assert!(
                a.len() > b.len() || (a.len() == b.len() && a.iter().next() <= b.iter().next())
            );
        }

        // Same partition as the union-find oracle on the induced subgraph.
        let mut ours: Vec<BTreeSet<TableId>> = components;
        let mut oracle = union_find_components(&nodes, &edges);
        ours.sort();
        oracle.sort();
        prop_assert_eq!(ours, oracle);
    }

    #[test]
    fn expand_is_monotone_and_two_hops_compose((n, edges, membership) in graph_strategy()) {
        let graph = make_graph(n, &edges);
        let group: BTreeSet<TableId> = membership
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| tid(i))
            .collect();
        prop_assume!(!group.is_empty());

        let expanded = fk_expand(&group, &graph).unwrap();
        prop_assert!(expanded.is_superset(&group));

        // Monotone: a smaller seed expands into a subset.
        let smaller: BTreeSet<TableId> = group.iter().take(group.len() / 2).cloned().collect();
        if !smaller.is_empty() {
            let smaller_expanded = fk_expand(&smaller, &graph).unwrap();
            prop_assert!(expanded.is_superset(&smaller_expanded));
        }

        // Expanding twice equals the two-hop neighborhood closure.
        let twice = fk_expand(&expanded, &graph).unwrap();
        let mut two_hop = group.clone();
        for node in &group {
            for n1 in graph.neighbors(node).unwrap() {
                two_hop.insert(n1.clone());
                for n2 in graph.neighbors(n1).unwrap() {
                    two_hop.insert(n2.clone());
                }
            }
        }
        prop_assert_eq!(twice, two_hop);

        // Idempotent exactly on adjacency-closed groups.
        let closed = fk_expand(&expanded, &graph).unwrap() == expanded;
        let grows = fk_expand(&expanded, &graph).unwrap().len() > expanded.len();
        prop_assert!(closed != grows);
    }

    #[test]
    fn gold_connectivity_matches_neighbor_union((n, edges, membership) in graph_strategy()) {
        let graph = make_graph(n, &edges);
        let gold: BTreeSet<TableId> = membership
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| tid(i))
            .collect();
        prop_assume!(!gold.is_empty());
        let expected = fk_expand(&gold, &graph).unwrap().len() - gold.len();
        prop_assert_eq!(gold_connectivity(&gold, &graph).unwrap(), expected);
    }

    #[test]
    fn graph_edge_count_equals_distinct_pairs(
        n in 2usize..40,
        raw_edges in proptest::collection::vec((0usize..40, 0usize..40), 0..120)
    ) {
        let edges: Vec<(usize, usize)> = raw_edges
            .into_iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|(a, b)| a != b)
            .collect();
        let graph = make_graph(n, &edges);
        let distinct: BTreeSet<(usize, usize)> = edges
            .iter()
            .map(|(a, b)| (*a.min(b), *a.max(b)))
            .collect();
        prop_assert_eq!(graph.edge_count(), distinct.len());
    }

    #[test]
    fn cosine_symmetry_and_scale_invariance(
        a in proptest::collection::vec(-10.0f64..10.0, 8),
        b in proptest::collection::vec(-10.0f64..10.0, 8),
        scale in 0.001f64..1000.0,
    ) {
        let va = EmbeddingVector::new(a);
        let vb = EmbeddingVector::new(b);
        prop_assume!(va.l2_norm() > 1e-6 && vb.l2_norm() > 1e-6);
        let ab = cosine_similarity(&va, &vb).unwrap();
        let ba = cosine_similarity(&vb, &va).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        let scaled = EmbeddingVector::new(va.values.iter().map(|v| v * scale).collect::<Vec<_>>());
        let scaled_sim = cosine_similarity(&scaled, &vb).unwrap();
        prop_assert!((scaled_sim - ab).abs() < 1e-9);
    }

    #[test]
    fn deterministic_embedder_is_pure(text in "[a-z ]{1,24}", dim in 8usize..64, seed in 0u64..32) {
        prop_assume!(!text.trim().is_empty());
        let a = deterministic_embed(&text, dim, seed);
        let b = deterministic_embed(&text, dim, seed);
        prop_assert_eq!(&a.values, &b.values);
        prop_assert_eq!(a.dim(), dim);
        prop_assert!((a.l2_norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn knn_prefix_property(
        seeds in proptest::collection::vec(any::<u64>(), 2..40),
        b1 in 1usize..20,
        extra in 0usize..20,
        qseed in any::<u64>(),
    ) {
        let dim = 16;
        let entries: Vec<IndexEntry<TableId>> = seeds
            .iter()
            .enumerate()
            .map(|(i, s)| IndexEntry {
                key: tid(i),
                surface: format!("t{i:03}"),
                vector: deterministic_embed(&format!("entry {s}"), dim, 0),
            })
            .collect();
        let index = DenseIndex::from_parts(dim, entries);
        let query = deterministic_embed(&format!("query {qseed}"), dim, 0);
        let small = knn(&index, &query, b1, None).unwrap();
        let large = knn(&index, &query, b1 + extra, None).unwrap();
        prop_assert!(small.len() <= large.len());
        for (a, b) in small.iter().zip(&large) {
            prop_assert_eq!(&a.element, &b.element);
        }
    }

    #[test]
    fn capped_recall_matches_set_oracle(
        ranked in proptest::collection::vec(0usize..40, 0..40),
        gold_raw in proptest::collection::vec(0usize..40, 1..12),
        k in 1usize..40,
    ) {
        let retrieved: Vec<TableId> = ranked.iter().map(|i| tid(*i)).collect();
        let gold: BTreeSet<TableId> = gold_raw.iter().map(|i| tid(*i)).collect();
        let got = capped_recall(&retrieved, &gold, k).unwrap();
        // Oracle: plain set arithmetic.
        let top: BTreeSet<TableId> = retrieved.iter().take(k).cloned().collect();
        let expected = top.intersection(&gold).count() as f64 / k.min(gold.len()) as f64;
        prop_assert_eq!(got, expected);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn score_group_permutation_invariant_and_monotone_in_vote_k(
        sims in proptest::collection::vec(
            proptest::collection::vec(0.0f64..1.0, 1..6), 1..6),
        vote_k in 1usize..5,
        perm_seed in any::<u64>(),
    ) {
        // sims[j][t]: similarity of table t to component j (tables shared
        // across components).
        let n_tables = sims.iter().map(|row| row.len()).min().unwrap();
        let dim = 8 + sims.len() * n_tables;
        // Build one basis axis per (component) and table vectors whose dot
        // with component j is sims[j][t].
        let mut component_vecs = Vec::new();
        for j in 0..sims.len() {
            let mut v = vec![0.0; dim];
            v[j] = 1.0;
            component_vecs.push(EmbeddingVector::new(v));
        }
        let mut table_vectors: BTreeMap<TableId, Vec<EmbeddingVector>> = BTreeMap::new();
        for t in 0..n_tables {
            let mut v = vec![0.0; dim];
            let mut sq = 0.0;
            for j in 0..sims.len() {
                v[j] = sims[j][t];
                sq += sims[j][t] * sims[j][t];
            }
            // Pad to unit norm on a private axis.
            v[sims.len() + t] = (1.0 - sq.min(1.0)).max(0.0).sqrt().max(1e-6);
            table_vectors.insert(tid(t), vec![EmbeddingVector::new(v)]);
        }
        let group = TableGroup {
            database: DatabaseId::new("db"),
            tables: (0..n_tables).map(tid).collect(),
            seed_tables: (0..n_tables).map(tid).collect(),
            score: 0.0,
            per_table_coverage: BTreeMap::new(),
        };
        let scored = score_group(&group, &component_vecs, &table_vectors, vote_k, false).unwrap();

        // Permutation of the component list leaves the score unchanged.
        let mut permuted = component_vecs.clone();
        let shift = (perm_seed as usize) % permuted.len().max(1);
        permuted.rotate_left(shift);
        let scored_perm =
            score_group(&group, &permuted, &table_vectors, vote_k, false).unwrap();
        prop_assert!((scored.score - scored_perm.score).abs() < 1e-9);

        // Monotone in vote_k for nonnegative similarities.
        let next = score_group(&group, &component_vecs, &table_vectors, vote_k + 1, false).unwrap();
        prop_assert!(next.score >= scored.score - 1e-12);
    }

    #[test]
    fn final_select_respects_caps(
        group_sizes in proptest::collection::vec(1usize..6, 1..6),
        vote_k in 1usize..4,
        n_groups in 1usize..4,
        k in 1usize..12,
    ) {
        let mut groups = Vec::new();
        let mut next_table = 0usize;
        for (gi, size) in group_sizes.iter().enumerate() {
            let tables: BTreeSet<TableId> = (0..*size).map(|_| { next_table += 1; tid(next_table) }).collect();
            groups.push(TableGroup {
                database: DatabaseId::new("db"),
                seed_tables: tables.clone(),
                per_table_coverage: tables.iter().map(|t| (t.clone(), 1.0)).collect(),
                tables,
                score: gi as f64,
            });
        }
        let config = RetrievalConfig { vote_k, n_groups, k, ..RetrievalConfig::default() };
        let ranked = final_select(&groups, &config);
        prop_assert!(ranked.len() <= n_groups * vote_k);
        prop_assert!(ranked.len() <= k);
        let union: BTreeSet<TableId> = groups.iter().flat_map(|g| g.tables.clone()).collect();
        prop_assert!(ranked.iter().all(|r| union.contains(&r.table)));
    }

    #[test]
    fn fallback_names_are_substrings(query in "[ -~]{1,60}") {
        prop_assume!(!query.trim().is_empty());
        for component in fallback_decompose(&query) {
            prop_assert!(
                query.contains(&component.name),
                "{:?} not in {query:?}", component.name
            );
            prop_assert!(!component.name.trim().is_empty());
        }
    }

    #[test]
    fn fallback_is_pure(query in "[a-zA-Z0-9 ,.?']{1,60}") {
        prop_assume!(!query.trim().is_empty());
        prop_assert_eq!(fallback_decompose(&query), fallback_decompose(&query));
    }
}
