use echoloop::causal::{adjusted_score, assign_weights, least_similar_items, Allocation, CounterfactualBundle, CounterfactualConfig};
use echoloop::cf::{EmbeddingModel, HistoryEntry, InteractionHistory, ItemId, Scorer, UserId};
use echoloop::data::{binarize, ingest_reader, phase_split, write_tsv, Rating, RatingRecord, Schema};
use echoloop::eval::{content_diversity, corrected_rank, ranking_metrics};
use proptest::prelude::*;

fn points(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n)
}

fn table(rows: impl Into<prop::collection::SizeRange>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), rows)
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

proptest! {
    #[test]
    fn diversity_invariant_under_permutation(pts in points(2..12, 3), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = content_diversity(&refs(&pts)).unwrap();
        let b = content_diversity(&refs(&shuffled)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn diversity_invariant_under_translation(pts in points(2..12, 3), shift in prop::collection::vec(-50.0f64..50.0, 3)) {
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(x, s)| x + s).collect()).collect();
        let a = content_diversity(&refs(&pts)).unwrap();
        let b = content_diversity(&refs(&moved)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn weights_sum_to_one(n in 1usize..40, t in 0.0f64..1.0) {
        let lo = 1.0 / (n as f64 + 1.0);
        let alpha = lo + (1.0 - lo) * (0.01 + 0.98 * t);
        let w = assign_weights(n, alpha).unwrap();
        prop_assert!((w.alpha + n as f64 * w.beta - 1.0).abs() < 1e-12);
        prop_assert!(w.alpha > w.beta && w.beta > 0.0);
    }

    #[test]
    fn least_similar_head_is_argmin(items in table(2..40, 4), pick in any::<prop::sample::Index>()) {
        let model = EmbeddingModel::from_tables(vec![vec![0.0; 4]], items.clone()).unwrap();
        let v_star = ItemId(pick.index(items.len()) as u32);
        let candidates: Vec<ItemId> = model.items().filter(|&v| v != v_star).collect();
        let head = least_similar_items(&model, v_star, 1, &candidates).unwrap()[0];
        let best = candidates.iter().map(|&v| model.similarity(v, v_star).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(model.similarity(head, v_star).unwrap(), best);
    }

    #[test]
    fn similarity_is_symmetric(items in table(2..20, 5), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let model = EmbeddingModel::from_tables(vec![vec![0.0; 5]], items.clone()).unwrap();
        let (a, b) = (ItemId(a.index(items.len()) as u32), ItemId(b.index(items.len()) as u32));
        prop_assert_eq!(model.similarity(a, b).unwrap(), model.similarity(b, a).unwrap());
    }

    #[test]
    fn adjusted_score_is_within_component_range(
        items in table(12, 3),
        user in prop::collection::vec(-2.0f64..2.0, 3),
        n in 1usize..6,
        t in 0.05f64..0.95,
        swap_only in any::<bool>(),
    ) {
        let model = EmbeddingModel::from_tables(vec![user], items).unwrap();
        let factual = InteractionHistory::from_entries(
            5,
            [(0, true), (3, false), (5, true)].into_iter().map(|(v, l)| HistoryEntry::new(ItemId(v), l, v as i64)),
        ).unwrap();
        let lo = 1.0 / (n as f64 + 1.0);
        let cfg = CounterfactualConfig {
            n,
            alpha: lo + (1.0 - lo) * t,
            allocation: if swap_only { Allocation::SwapOnly } else { Allocation::FlipAndSwap },
        };
        let bundle = CounterfactualBundle::build(&model, &factual, &cfg).unwrap();
        for item in model.items() {
            let s = adjusted_score(&model, UserId(0), item, &bundle).unwrap().value();
            let mut parts = vec![model.score(UserId(0), item, &bundle.factual).unwrap().value()];
            for h in &bundle.counterfactuals {
                parts.push(model.score(UserId(0), item, h).unwrap().value());
            }
            let lo = parts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = parts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo && s <= hi, "{s} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn phase_split_partitions(ts in prop::collection::vec(0i64..1000, 0..200), b1 in 1i64..500, gap in 1i64..500) {
        let records: Vec<RatingRecord> = ts.iter().enumerate().map(|(i, &t)| RatingRecord {
            user: UserId(i as u32 % 7),
            item: ItemId(i as u32),
            rating: Rating::Binary(i % 2 == 0),
            timestamp: t,
        }).collect();
        let b2 = b1 + gap;
        let split = phase_split(&records, [b1, b2]).unwrap();
        let total: usize = split.phases.iter().map(Vec::len).sum();
        prop_assert_eq!(total, records.len());
        prop_assert!(split.phases[0].iter().all(|r| r.timestamp < b1));
        prop_assert!(split.phases[1].iter().all(|r| r.timestamp >= b1 && r.timestamp < b2));
        prop_assert!(split.phases[2].iter().all(|r| r.timestamp >= b2));
    }

    #[test]
    fn tsv_round_trip(rows in prop::collection::vec((0u32..50, 0u32..80, any::<bool>(), -1_000_000i64..2_000_000_000), 0..60)) {
        let records: Vec<RatingRecord> = rows.iter().map(|&(u, v, l, t)| RatingRecord {
            user: UserId(u), item: ItemId(v), rating: Rating::Binary(l), timestamp: t,
        }).collect();
        let mut buf = Vec::new();
        write_tsv(&records, &mut buf).unwrap();
        let back = ingest_reader(buf.as_slice(), &Schema::canonical(), 0.0).unwrap();
        prop_assert_eq!(back.records, records);
    }

    #[test]
    fn binarize_is_idempotent(ratings in prop::collection::vec(1u8..=5, 1..40)) {
        let records: Vec<RatingRecord> = ratings.iter().enumerate().map(|(i, &r)| RatingRecord {
            user: UserId(0), item: ItemId(i as u32), rating: Rating::Scaled(r as f64), timestamp: i as i64,
        }).collect();
        let once = binarize(&records, 4.0, 3.0).unwrap();
        prop_assert_eq!(binarize(&once, 4.0, 3.0).unwrap(), once.clone());
        for (r, b) in records.iter().zip(&once) {
            let Rating::Scaled(x) = r.rating else { unreachable!() };
            prop_assert_eq!(b.liked(), x >= 4.0);
        }
    }

    #[test]
    fn ndcg_never_exceeds_hit(rank in 1usize..=101, k in 1usize..=20) {
        let m = ranking_metrics(rank, k, 100, 3000).unwrap();
        prop_assert!(m.ndcg <= m.hit);
        prop_assert!(m.u_ndcg <= m.u_hit);
        prop_assert!((0.0..=1.0).contains(&m.ndcg));
    }

    #[test]
    fn corrected_rank_is_monotone(rank in 1usize..100, n_neg in 1usize..200, extra in 0usize..5000) {
        let catalog = n_neg + 1 + extra;
        prop_assert!(corrected_rank(rank + 1, n_neg, catalog) >= corrected_rank(rank, n_neg, catalog));
    }
}
