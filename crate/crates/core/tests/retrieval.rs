mod common;

use std::collections::HashSet;

use common::*;
use groundrag::embed::{EmbeddingVector, HashEmbedder};
use groundrag::index::{build_index, top_k};
use groundrag::rerank::{dual_stage_retrieve, single_stage_retrieve};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn top_k_matches_full_sort_oracle() {
    for trial in 0..100u64 {
        let mut rng = rng(trial);
        let n = rng.random_range(1..=64);
        let index = random_index(&mut rng, n, 16);
        let query = random_vector(&mut rng, 16);
        let expected = oracle_ranking(&index, &query);
        for k in [1, 3, 10, n + 5] {
            let got: Vec<String> = top_k(&index, &EmbeddingVector::new(query.clone()).unwrap(), k)
                .unwrap()
                .into_iter()
                .map(|c| c.chunk_id)
                .collect();
            assert_eq!(got, expected[..k.min(n)], "trial {trial}, k {k}");
        }
    }
}

#[test]
fn rebuild_is_byte_identical() {
    let chunks: Vec<_> = (0..20)
        .map(|i| {
            chunk(
                &format!("d{i}#0"),
                &format!("policy text number {i} about topic {}", i % 3),
            )
        })
        .collect();
    let a = build_index(&chunks, &HashEmbedder::new(32, 5))
        .unwrap()
        .index
        .to_bytes();
    let b = build_index(&chunks, &HashEmbedder::new(32, 5))
        .unwrap()
        .index
        .to_bytes();
    assert_eq!(a, b);
}

#[test]
fn persisted_index_answers_identically() {
    let mut rng = rng(99);
    let index = random_index(&mut rng, 50, 16);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.bin");
    groundrag::index::save_index(&index, &path).unwrap();
    let loaded = groundrag::index::load_index(&path).unwrap();
    for _ in 0..100 {
        let q = EmbeddingVector::new(random_vector(&mut rng, 16)).unwrap();
        assert_eq!(top_k(&index, &q, 10).unwrap(), top_k(&loaded, &q, 10).unwrap());
    }
}

#[test]
fn planted_gold_is_recovered_only_by_reranking() {
    let s = planted_gold(12, 7);
    let index = s.index();
    let basic = single_stage_retrieve(&index, &s.embedder, QUERY, 3).unwrap();
    let advanced = dual_stage_retrieve(&index, &s.embedder, &s.cross, QUERY, 10, 3).unwrap();

    let bi_rank = basic.candidates.iter().position(|c| c.chunk_id == s.gold_id);
    assert_eq!(bi_rank, None);
    assert_eq!(advanced.candidates[6].chunk_id, s.gold_id, "gold is 7th by bi-encoder");
    assert_eq!(advanced.context[0], s.gold_id);
    assert!(!basic.context.contains(&s.gold_id));
    assert_eq!(advanced.context.len(), 3);
}

#[test]
fn defaults_over_retrieve_ten_keep_three() {
    assert_eq!(groundrag::rerank::DEFAULT_K_RETRIEVE, 10);
    assert_eq!(groundrag::rerank::DEFAULT_K_CONTEXT, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn top_k_is_prefix_of_top_k_plus_one(seed in any::<u64>(), n in 1usize..40, k in 1usize..45) {
        let mut rng = rng(seed);
        let index = random_index(&mut rng, n, 6);
        let q = EmbeddingVector::new(random_vector(&mut rng, 6)).unwrap();
        let small = top_k(&index, &q, k).unwrap();
        let large = top_k(&index, &q, k + 1).unwrap();
        prop_assert_eq!(&small[..], &large[..small.len()]);
        prop_assert!(small.windows(2).all(|w| w[0].bi_score >= w[1].bi_score));
        prop_assert!(small.iter().all(|c| c.bi_score.abs() <= 1.0));
    }

    #[test]
    fn two_stage_structural_laws(seed in any::<u64>(), n in 1usize..30, k_retrieve in 1usize..15, k_context_raw in 1usize..15) {
        let k_context = k_context_raw.min(k_retrieve);
        let (index, embedder, cross, q) = scenario(seed, n);
        let result = dual_stage_retrieve(&index, &embedder, &cross, QUERY, k_retrieve, k_context).unwrap();

        let candidate_ids: HashSet<&String> = result.candidates.iter().map(|c| &c.chunk_id).collect();
        prop_assert!(result.context.iter().all(|id| candidate_ids.contains(id)));
        prop_assert_eq!(cross.pairs(), k_retrieve.min(n));
        prop_assert!(result.context.len() <= k_context);
        let seen = cross.seen.lock().unwrap().clone();
        let candidate_texts: HashSet<String> = result
            .candidates
            .iter()
            .map(|c| index.entries()[c.position].text.clone())
            .collect();
        prop_assert!(seen.iter().all(|t| candidate_texts.contains(t)));

        let identity = IdentityCross(&index, q.clone());
        let degenerate = dual_stage_retrieve(&index, &embedder, &identity, QUERY, k_retrieve, k_context).unwrap();
        let basic = single_stage_retrieve(&index, &embedder, QUERY, k_context).unwrap();
        prop_assert_eq!(degenerate.context, basic.context);

        let again = dual_stage_retrieve(&index, &embedder, &cross, QUERY, k_retrieve, k_context).unwrap();
        prop_assert_eq!(&again.candidates, &result.candidates);
        prop_assert_eq!(&again.context, &result.context);
    }
}
