use std::collections::HashMap;

use proptest::prelude::*;
use treecrawl_core::fetch::normalize_url;
use treecrawl_core::reward::{keyword_count, keyword_vector, PageText};
use treecrawl_core::text::StopWords;
use treecrawl_core::{cosine, expand_keywords, threshold_b, CrawlGraph, EmbeddingTable, KeywordSet};

fn unit_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

/// Three unit vectors with pairwise cosines 0.9, 0.6 and 0.3.
fn triangle_table() -> EmbeddingTable {
    let y = (0.3 - 0.9 * 0.6) / (1.0f64 - 0.81).sqrt();
    let z = (1.0 - 0.36 - y * y).sqrt();
    EmbeddingTable::from_entries(
        3,
        [
            ("alpha", vec![1.0, 0.0, 0.0]),
            ("beta", vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0]),
            ("gamma", vec![0.6, y, z]),
        ],
    )
    .unwrap()
}

#[test]
fn threshold_is_the_mean_pairwise_cosine() {
    let ks = KeywordSet::new(["alpha", "beta", "gamma"]).unwrap();
    let b = threshold_b(&ks, &triangle_table()).unwrap();
    assert!((b - 0.6).abs() < 1e-12, "{b}");
}

/// Small vocabulary: two seed keywords and six candidates.
fn vocab_table(vectors: &[Vec<f64>]) -> EmbeddingTable {
    let names = ["k0", "k1", "w0", "w1", "w2", "w3", "w4", "w5"];
    EmbeddingTable::from_entries(vectors[0].len(), names.iter().zip(vectors.iter().cloned())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cosine_is_symmetric_and_self_similar(u in unit_vec(6), v in unit_vec(6)) {
        let uv = cosine(&u, &v).unwrap();
        let vu = cosine(&v, &u).unwrap();
        prop_assert!((uv - vu).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&uv));
        prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expansion_respects_its_definition_and_ignores_corpus_order(
        vectors in prop::collection::vec(unit_vec(4), 8),
        doc in prop::collection::vec(0usize..10, 1..30),
        rotate in 0usize..30,
    ) {
        let names = ["k0", "k1", "w0", "w1", "w2", "w3", "w4", "w5", "unknown", "k0"];
        let table = vocab_table(&vectors);
        let ks = KeywordSet::new(["k0", "k1"]).unwrap();
        let corpus: Vec<Vec<String>> = vec![doc.iter().map(|&i| names[i].to_string()).collect()];
        let expansion = expand_keywords(&ks, &corpus, &table, &StopWords::empty()).unwrap();

        // Independent recomputation of the threshold and every admitted score.
        let b = cosine(&vectors[0], &vectors[1]).unwrap();
        prop_assert!((expansion.threshold - b).abs() < 1e-12);
        for k in expansion.keywords.discovered() {
            prop_assert!(!ks.initial().contains(k));
            let i = names.iter().position(|n| n == k).unwrap();
            let mean = (cosine(&vectors[i], &vectors[0]).unwrap() + cosine(&vectors[i], &vectors[1]).unwrap()) / 2.0;
            prop_assert!(mean >= b - 1e-12);
        }
        for i in 2..8 {
            if !doc.contains(&i) {
                prop_assert!(!expansion.keywords.discovered().contains(names[i]));
            }
        }

        // Reordering and duplicating documents changes nothing.
        let mut shuffled = corpus[0].clone();
        let r = rotate % shuffled.len();
        shuffled.rotate_left(r);
        let split = shuffled.len() / 2;
        let rearranged = vec![
            shuffled[split..].to_vec(),
            shuffled[..split].to_vec(),
            corpus[0].clone(),
        ];
        let again = expand_keywords(&ks, &rearranged, &table, &StopWords::empty()).unwrap();
        prop_assert_eq!(&again.keywords, &expansion.keywords);
    }

    #[test]
    fn keyword_vector_is_bounded_and_counts_with_multiplicity(
        body in prop::collection::vec(0usize..6, 0..50),
        url_kw in any::<bool>(),
        mu in 0.5f64..20.0,
    ) {
        let words = ["seal", "walrus", "fish", "boat", "sea", "sand"];
        let ks = KeywordSet::new(["seal", "walrus"]).unwrap();
        let tokens: Vec<String> = body.iter().map(|&i| words[i].to_string()).collect();
        let naive = body.iter().filter(|&&i| i < 2).count();
        prop_assert_eq!(keyword_count(&tokens, &ks), naive);

        let url = if url_kw { "http://x.test/walrus-facts" } else { "http://x.test/page" };
        let page = PageText::new(url, Vec::new(), tokens, 500);
        let kv = keyword_vector(&page, &ks, mu).unwrap();
        prop_assert!((0.0..=1.0).contains(&kv.kv1));
        prop_assert!((0.0..=1.0).contains(&kv.kv2));
        prop_assert_eq!(kv.kv3, if url_kw { 1.0 } else { 0.0 });
        prop_assert!((kv.kv1 - (naive as f64 / mu).min(1.0)).abs() < 1e-12);
        if !body.is_empty() {
            prop_assert!((kv.kv2 - naive as f64 / body.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn path_features_match_a_walk_from_scratch(
        parents in prop::collection::vec(any::<prop::sample::Index>(), 9),
        rewards in prop::collection::vec(0u8..2, 10),
        domains in prop::collection::vec(0usize..3, 10),
    ) {
        let url = |i: usize| format!("http://d{}.test/p{i}", domains[i]);
        let mut parent = [None; 10];
        let mut g = CrawlGraph::new();
        g.register_fetch(None, &url(0), rewards[0]).unwrap();
        for i in 1..10 {
            let p = parents[i - 1].index(i);
            parent[i] = Some(p);
            g.register_fetch(Some(&url(p)), &url(i), rewards[i]).unwrap();
        }

        for i in 0..10 {
            // Walk from node i up to the root.
            let mut chain = vec![i];
            while let Some(p) = parent[*chain.last().unwrap()] {
                chain.push(p);
            }
            let relevant_on_path = chain.iter().filter(|&&n| rewards[n] == 1).count();
            let hops = chain.iter().position(|&n| rewards[n] == 1);
            let expected = [
                f64::from(rewards[i]),
                hops.map_or(0.0, |d| 1.0 / (1.0 + d as f64)),
                relevant_on_path as f64 / chain.len() as f64,
            ];
            prop_assert_eq!(g.state_features(&url(i)).unwrap(), expected);
            let listed: Vec<String> = chain.iter().rev().map(|&n| url(n)).collect();
            prop_assert_eq!(g.path(&url(i)).unwrap(), listed);
        }

        let mut per_domain: HashMap<usize, (u32, u32)> = HashMap::new();
        for i in 0..10 {
            let e = per_domain.entry(domains[i]).or_default();
            e.0 += 1;
            e.1 += u32::from(rewards[i]);
        }
        for d in 0..3 {
            let expected = match per_domain.get(&d) {
                Some(&(f, r)) => [f64::from(r) / f64::from(f), 1.0],
                None => [0.0, 0.5],
            };
            prop_assert_eq!(g.hub_features(&format!("http://d{d}.test/new")).unwrap(), expected);
        }
    }

    #[test]
    fn url_normalization_is_idempotent(
        host in "[a-zA-Z]{1,8}\\.(com|TEST|org)",
        port in prop::option::of(prop::sample::select(vec![80u16, 443, 8080])),
        https in any::<bool>(),
        segments in prop::collection::vec("([a-zA-Z0-9_~.-]|%[0-9a-fA-F]{2}){0,6}", 0..4),
        trailing in any::<bool>(),
        query in prop::option::of("[a-z0-9=&]{0,8}"),
        fragment in prop::option::of("[a-z]{0,5}"),
    ) {
        let scheme = if https { "HTTPS" } else { "http" };
        let mut raw = format!("{scheme}://{host}");
        if let Some(p) = port {
            raw.push_str(&format!(":{p}"));
        }
        raw.push('/');
        raw.push_str(&segments.join("/"));
        if trailing {
            raw.push('/');
        }
        if let Some(q) = &query {
            raw.push('?');
            raw.push_str(q);
        }
        if let Some(f) = &fragment {
            raw.push('#');
            raw.push_str(f);
        }
        let once = normalize_url(&raw).unwrap();
        prop_assert_eq!(normalize_url(&once).unwrap(), once.clone());
        prop_assert!(!once.contains('#'));
        prop_assert!(once.starts_with("http"));
    }
}

#[test]
fn domain_with_no_relevant_fetches_has_zero_ratio() {
    let mut g = CrawlGraph::new();
    g.register_seed("http://seed.test/").unwrap();
    for i in 0..5 {
        g.register_fetch(Some("http://seed.test/"), &format!("http://cold.test/{i}"), 0)
            .unwrap();
    }
    assert_eq!(g.hub_features("http://cold.test/next").unwrap(), [0.0, 1.0]);
}
