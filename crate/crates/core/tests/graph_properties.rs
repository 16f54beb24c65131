use arcrec::graphs::{
    build_reference_network, decompose_arn, AttributeKind, Catalog, EdgeWeighting, GraphConfig, RawProduct,
    ReferenceNetworks, TimeWindow, TransactionLog,
};
use proptest::prelude::*;

type Rows = Vec<(String, String, i64)>;

fn market() -> impl Strategy<Value = (Catalog, Rows)> {
    (2usize..15, 1usize..4, 1usize..8).prop_flat_map(|(n, k, consumers)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..3, k), n),
            prop::collection::vec((0..consumers, 0..n, 0i64..20), 1..40),
        )
            .prop_map(move |(values, purchases)| {
                let rows = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| RawProduct {
                        id: format!("p{i:02}"),
                        price: 1.0 + i as f64,
                        values: v.iter().map(|x| format!("t{x}")).collect(),
                    })
                    .collect();
                let names = (0..k).map(|a| format!("a{a}")).collect();
                let catalog = Catalog::new(names, vec![AttributeKind::Categorical; k], rows).unwrap();
                let log = purchases
                    .into_iter()
                    .map(|(u, i, t)| (format!("c{u}"), format!("p{i:02}"), t))
                    .collect();
                (catalog, log)
            })
    })
}

fn log_of(rows: &Rows, catalog: &Catalog) -> TransactionLog {
    TransactionLog::from_rows(rows, catalog).unwrap()
}

proptest! {
    #[test]
    fn networks_are_symmetric_without_self_loops((catalog, rows) in market(), frequency in any::<bool>()) {
        let weighting = if frequency { EdgeWeighting::Frequency } else { EdgeWeighting::Binary };
        let raw = build_reference_network(&log_of(&rows, &catalog), catalog.len(), None, weighting).unwrap();
        for i in 0..raw.num_nodes() {
            prop_assert!(!raw.has_edge(i, i));
            for &(j, w) in raw.neighbors(i) {
                prop_assert!(raw.neighbors(j).iter().any(|&(b, v)| b == i && v == w));
                prop_assert!(w >= 1.0);
            }
        }
    }

    #[test]
    fn layers_keep_exactly_the_raw_edges_with_equal_levels((catalog, rows) in market()) {
        let log = log_of(&rows, &catalog);
        let nets = ReferenceNetworks::build(&log, &catalog, &GraphConfig::default()).unwrap();
        prop_assert_eq!(nets.layers.len(), catalog.num_attributes());
        for (k, layer) in nets.layers.iter().enumerate() {
            for (i, j, w) in nets.raw.edges() {
                let same = catalog.product(i).levels[k] == catalog.product(j).levels[k];
                prop_assert_eq!(layer.has_edge(i, j), same);
                if same {
                    prop_assert!(layer.neighbors(i).iter().any(|&(b, v)| b == j && v == w));
                }
            }
            prop_assert!(layer.edges().all(|(i, j, _)| nets.raw.has_edge(i, j)));
            prop_assert_eq!(layer, &decompose_arn(&nets.raw, &catalog, k).unwrap());
        }
    }

    #[test]
    fn row_order_of_the_log_does_not_matter((catalog, rows) in market(), seed in any::<u64>()) {
        let mut shuffled = rows.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let config = GraphConfig { weighting: EdgeWeighting::Frequency, ..GraphConfig::default() };
        let a = ReferenceNetworks::build(&log_of(&rows, &catalog), &catalog, &config).unwrap();
        let b = ReferenceNetworks::build(&log_of(&shuffled, &catalog), &catalog, &config).unwrap();
        prop_assert_eq!(a.raw, b.raw);
        prop_assert_eq!(a.layers, b.layers);
    }

    #[test]
    fn narrower_windows_give_subgraphs((catalog, rows) in market(), start in 0i64..10, len in 1i64..10) {
        let log = log_of(&rows, &catalog);
        let full = build_reference_network(&log, catalog.len(), None, EdgeWeighting::Binary).unwrap();
        let window = TimeWindow { start, end: start + len };
        if let Ok(part) = build_reference_network(&log, catalog.len(), Some(window), EdgeWeighting::Binary) {
            prop_assert!(part.edges().all(|(i, j, _)| full.has_edge(i, j)));
        }
    }

    #[test]
    fn binary_edges_are_exactly_the_co_purchases((catalog, rows) in market()) {
        let log = log_of(&rows, &catalog);
        let raw = build_reference_network(&log, catalog.len(), None, EdgeWeighting::Binary).unwrap();
        let baskets = log.sequences();
        for i in 0..catalog.len() {
            for j in (i + 1)..catalog.len() {
                let together = baskets.iter().any(|b| b.contains(&i) && b.contains(&j));
                prop_assert_eq!(raw.has_edge(i, j), together);
            }
        }
    }
}
