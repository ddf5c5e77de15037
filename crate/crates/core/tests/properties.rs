use std::collections::HashMap;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use storytrack::baselines::{loss_and_gradient, seeded_kmeans, SparseRow};
use storytrack::corpus::{Document, Source};
use storytrack::entitylink::{AnnotatedDocument, EntityAnnotation};
use storytrack::eval::{entropy_bits, score_labels};
use storytrack::storygraph::{document_pairs, window_length, EntityGraph, GraphConfig};

fn annotated(len: usize, ents: &[(u8, usize)]) -> AnnotatedDocument {
    let doc = Document::new(
        "p",
        Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap(),
        Source::Article,
        "a".repeat(len),
    );
    let anns = ents
        .iter()
        .map(|&(e, p)| EntityAnnotation {
            entity_id: format!("E{e}"),
            position: p % len,
            confidence: 1.0,
        })
        .collect();
    AnnotatedDocument::new(doc, anns)
}

fn doc_strategy() -> impl Strategy<Value = AnnotatedDocument> {
    (1usize..2000, prop::collection::vec((0u8..12, 0usize..2000), 0..12)).prop_map(|(len, ents)| annotated(len, &ents))
}

proptest! {
    #[test]
    fn window_shrinks_monotonically(m in 1usize..10_000, a in 0usize..10_000, b in 0usize..10_000) {
        let (p, q) = (a.min(b) % (m + 1), a.max(b) % (m + 1));
        let (p, q) = (p.min(q), p.max(q));
        let (wp, wq) = (window_length(p, m).unwrap(), window_length(q, m).unwrap());
        prop_assert!(wp >= wq);
        prop_assert!((100.0..=500.0).contains(&wq));
    }

    #[test]
    fn add_then_remove_is_identity(base in prop::collection::vec(doc_strategy(), 0..6), doc in doc_strategy()) {
        let mut g = EntityGraph::default();
        for d in &base {
            g.add_document(d);
        }
        let before = g.clone();
        g.add_document(&doc);
        g.remove_document(&doc).unwrap();
        prop_assert_eq!(g, before);
    }

    // the same gap counts at least as often early in a document as late
    #[test]
    fn early_positions_dominate(len in 1000usize..3000, gap in 1usize..500, late in 0usize..500) {
        let late = (len - gap - 1).min(late + len / 2);
        let early = annotated(len, &[(0, 0), (1, gap)]);
        let tail = annotated(len, &[(0, late), (1, late + gap)]);
        let cfg = GraphConfig::default();
        prop_assert!(document_pairs(&early, &cfg).len() >= document_pairs(&tail, &cfg).len());
    }

    #[test]
    fn pagerank_is_a_distribution(edges in prop::collection::vec((0u8..8, 0u8..8, 1u32..9), 1..20)) {
        let mut g = EntityGraph::default();
        for (u, v, c) in edges {
            g.add_edge(&format!("n{u}"), &format!("n{v}"), c);
        }
        let w = g.personalized_pagerank().clone();
        if !w.is_empty() {
            prop_assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.values().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn f1_is_harmonic_mean(labels in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (p, a): (Vec<bool>, Vec<bool>) = labels.into_iter().unzip();
        let r = score_labels(&p, &a);
        let c = r.counts;
        let expect = if c.tp == 0 { 0.0 } else { 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64 };
        prop_assert!((r.f1 - expect).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded(counts in prop::collection::vec(0u32..50, 1..40)) {
        let support = counts.iter().filter(|&&c| c > 0).count();
        let h = entropy_bits(counts);
        prop_assert!(h >= 0.0);
        if support > 0 {
            prop_assert!(h <= (support as f64).log2() + 1e-12);
        }
    }
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let dim = 12;
    for _ in 0..3 {
        let rows: Vec<SparseRow> = (0..20)
            .map(|_| {
                let mut row = SparseRow::new();
                for j in 0..dim {
                    if rng.gen_bool(0.4) {
                        row.push((j, rng.gen_range(0.0..1.0)));
                    }
                }
                row
            })
            .collect();
        let y: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = rng.gen_range(-0.5..0.5);
        let lambda = 1e-2;
        let (_, grad, _) = loss_and_gradient(&w, bias, &rows, &y, lambda);
        for _ in 0..5 {
            let j = rng.gen_range(0..dim);
            let h = 1e-6;
            let mut plus = w.clone();
            plus[j] += h;
            let mut minus = w.clone();
            minus[j] -= h;
            let numeric = (loss_and_gradient(&plus, bias, &rows, &y, lambda).0
                - loss_and_gradient(&minus, bias, &rows, &y, lambda).0)
                / (2.0 * h);
            let rel = (numeric - grad[j]).abs() / numeric.abs().max(grad[j].abs()).max(1e-8);
            assert!(rel < 1e-5, "coord {j}: numeric {numeric} analytic {}", grad[j]);
        }
    }
}

#[test]
fn kmeans_objective_never_increases() {
    let words = [
        "storm", "flood", "rain", "budget", "tax", "vote", "match", "goal", "coach", "price",
    ];
    let t0 = Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap();
    let docs: Vec<Document> = (0..120)
        .map(|i| {
            let text: Vec<&str> = (0..6).map(|k| words[(i * 7 + k * (i % 5 + 1)) % words.len()]).collect();
            Document::new(format!("d{i:03}"), t0, Source::Tweet, text.join(" "))
        })
        .collect();
    let m = seeded_kmeans(&docs[10..], &docs[..2], &docs[2..10], 4, 3).unwrap();
    let h = &m.objective_history;
    assert!(!h.is_empty());
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "objective rose: {h:?}");
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for &a in &m.assignments {
        *sizes.entry(a).or_default() += 1;
    }
    assert!(sizes.keys().all(|&c| c < m.centroids.len()));
}
