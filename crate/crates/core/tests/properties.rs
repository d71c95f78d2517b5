use std::collections::HashSet;

use proptest::prelude::*;

use textdp::classifiers::micro_f1;
use textdp::corpus::{majority_guess, split_indices, Corpus, Document, SplitSpec};
use textdp::embeddings::{build_neighbor_index, embed_tokens, knn_rank_of};
use textdp::mechanisms::{privatize_corpus, MechanismConfig, Resources, WordMldp};
use textdp::metrics::{nn_indistinguishability, relative_gain};
use textdp::stats::{dunn_posthoc, equal_width_bins, kruskal_wallis, ols_fit, Adjustment, DesignMatrix};
use textdp::EmbeddingTable;

fn table(vectors: &[Vec<f64>]) -> EmbeddingTable {
    EmbeddingTable::from_rows(vectors.iter().enumerate().map(|(i, v)| (format!("w{i}"), v.clone()))).unwrap()
}

fn vectors(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, dim), n)
}

fn ascending_fractions() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..=20, 1..5).prop_map(|s| s.into_iter().map(|k| k as f64 / 20.0).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_are_deterministic_and_disjoint(
        n in 20usize..300,
        fractions in ascending_fractions(),
        seed in any::<u64>(),
        reps in 1usize..4,
    ) {
        let spec = SplitSpec { fractions: fractions.clone(), train_ratio: 0.9, seed, repetitions: reps };
        let a = split_indices(n, &spec);
        prop_assume!(a.is_ok());
        let a = a.unwrap();
        prop_assert_eq!(&a, &split_indices(n, &spec).unwrap());
        prop_assert_eq!(a.len(), fractions.len() * reps);
        for s in &a {
            let train: HashSet<usize> = s.train.iter().copied().collect();
            let val: HashSet<usize> = s.val.iter().copied().collect();
            prop_assert_eq!(train.len(), s.train.len());
            prop_assert!(train.is_disjoint(&val));
            prop_assert!(s.train.iter().chain(&s.val).all(|&i| i < n));
            let size = (fractions[s.fraction_index] * n as f64).round() as usize;
            prop_assert_eq!(s.train.len() + s.val.len(), size);
            // repetitions only reorder the training part
            let first = a.iter().find(|o| o.fraction_index == s.fraction_index && o.repetition == 1).unwrap();
            let mut x = s.train.clone();
            let mut y = first.train.clone();
            x.sort_unstable();
            y.sort_unstable();
            prop_assert_eq!(x, y);
            prop_assert_eq!(&s.val, &first.val);
        }
    }

    #[test]
    fn majority_guess_beats_uniform(labels in prop::collection::vec(0usize..5, 1..100)) {
        let docs = labels.iter().enumerate().map(|(i, l)| Document::new(format!("d{i}"), "", format!("l{l}"))).collect();
        let c = Corpus::from_documents("c", docs).unwrap();
        let mg = majority_guess(&c).unwrap();
        prop_assert!(mg >= 100.0 / c.utility_labels().len() as f64 - 1e-9);
        prop_assert!(mg <= 100.0);
    }

    #[test]
    fn neighbor_lists_ascend_from_the_word_itself(vs in vectors(2..40, 3), k in 1usize..10) {
        let t = table(&vs);
        let k = k.min(t.len());
        let idx = build_neighbor_index(&t, k).unwrap();
        for w in 0..t.len() {
            let list = idx.neighbors(w);
            prop_assert_eq!(list.len(), k);
            prop_assert_eq!(list[0].index, w);
            prop_assert!(list.windows(2).all(|p| p[0].distance <= p[1].distance));
        }
    }

    #[test]
    fn knn_rank_ignores_pool_order(
        vs in vectors(1..30, 2),
        q in prop::collection::vec(-5.0..5.0f64, 2),
        pick in any::<prop::sample::Index>(),
        perm_seed in any::<u64>(),
    ) {
        let pool: Vec<(String, Vec<f64>)> = vs.iter().enumerate().map(|(i, v)| (format!("{i:03}"), v.clone())).collect();
        let target = pool[pick.index(pool.len())].0.clone();
        let mut shuffled = pool.clone();
        let mut s = perm_seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(knn_rank_of(&q, &target, &pool, 100).unwrap(), knn_rank_of(&q, &target, &shuffled, 100).unwrap());
    }

    #[test]
    fn embedding_ignores_token_order(vs in vectors(1..20, 4), toks in prop::collection::vec(0usize..25, 0..30)) {
        let t = table(&vs);
        let words: Vec<String> = toks.iter().map(|i| format!("w{i}")).collect();
        let mut rev = words.clone();
        rev.reverse();
        let mut sorted = words.clone();
        sorted.sort();
        let a = embed_tokens(&words, &t);
        prop_assert_eq!(&a, &embed_tokens(&rev, &t));
        prop_assert_eq!(&a, &embed_tokens(&sorted, &t));
    }

    #[test]
    fn relative_gain_is_monotone(
        u_r in 0.0..100.0f64, du in 0.0..10.0f64,
        u_o in 50.0..100.0f64,
        p_r in 0.0..100.0f64, dp in 0.0..10.0f64,
        p_o in 1.0..100.0f64,
        mg in 0.0..49.0f64,
    ) {
        let g = relative_gain(u_r, u_o, p_r, p_o, Some(mg)).unwrap();
        prop_assert!(relative_gain(u_r + du, u_o, p_r, p_o, Some(mg)).unwrap() >= g);
        prop_assert!(relative_gain(u_r, u_o, p_r + dp, p_o, Some(mg)).unwrap() <= g);
        prop_assert_eq!(
            relative_gain(u_r, u_o, p_r, p_o, Some(0.0)).unwrap(),
            relative_gain(u_r, u_o, p_r, p_o, None).unwrap()
        );
    }

    #[test]
    fn nn_ignores_document_order(vs in vectors(2..30, 3), noise in vectors(30..31, 3), rot in 0usize..30) {
        let orig: Vec<(String, Vec<f64>)> = vs.iter().enumerate().map(|(i, v)| (format!("d{i}"), v.clone())).collect();
        let private: Vec<(String, Vec<f64>)> = orig
            .iter()
            .zip(&noise)
            .map(|((id, v), n)| (id.clone(), v.iter().zip(n).map(|(a, b)| a + 0.3 * b).collect()))
            .collect();
        let base = nn_indistinguishability(&private, &orig, 1000).unwrap();
        let mut p2 = private.clone();
        let mut o2 = orig.clone();
        let shift = rot % p2.len();
        p2.rotate_left(shift);
        o2.reverse();
        let moved = nn_indistinguishability(&p2, &o2, 1000).unwrap();
        prop_assert_eq!(base.mean, moved.mean);
        prop_assert_eq!(base.median, moved.median);
    }

    #[test]
    fn nn_rank_grows_along_a_ray(vs in vectors(2..30, 3), dir in prop::collection::vec(-1.0..1.0f64, 3)) {
        let orig: Vec<(String, Vec<f64>)> = vs.iter().enumerate().map(|(i, v)| (format!("d{i}"), v.clone())).collect();
        let mut last = 0;
        for step in 0..8 {
            let t = step as f64 * 0.75;
            let q: Vec<f64> = orig[0].1.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let rank = knn_rank_of(&q, "d0", &orig, 1000).unwrap().score(1000);
            prop_assert!(rank >= last);
            last = rank;
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal_and_rescale_affinely(
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 8..40),
        noise in prop::collection::vec(-1.0..1.0f64, 40),
        a in 0.5..4.0f64,
        b in -5.0..5.0f64,
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r[0], r[1]]).collect();
        let y: Vec<f64> = rows.iter().zip(&noise).map(|(r, e)| 1.0 + 2.0 * r[0] - r[1] + e).collect();
        let names = vec!["c".to_string(), "x1".into(), "x2".into()];
        let fit = ols_fit(&DesignMatrix::new(x.clone(), y.clone(), names.clone()));
        prop_assume!(fit.is_ok());
        let fit = fit.unwrap();
        let beta: Vec<f64> = fit.coefficients.iter().map(|c| c.coef).collect();
        for j in 0..3 {
            let dot: f64 = x.iter().zip(&y).map(|(r, v)| {
                let resid = v - r.iter().zip(&beta).map(|(p, q)| p * q).sum::<f64>();
                r[j] * resid
            }).sum();
            prop_assert!(dot.abs() < 1e-8 * (1.0 + y.len() as f64), "column {} dot {}", j, dot);
        }
        let y2: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let fit2 = ols_fit(&DesignMatrix::new(x, y2, names)).unwrap();
        let tol = |v: f64| 1e-8 * (1.0 + v.abs());
        prop_assert!((fit2.coefficients[0].coef - (a * beta[0] + b)).abs() < tol(a * beta[0] + b));
        for j in 1..3 {
            prop_assert!((fit2.coefficients[j].coef - a * beta[j]).abs() < tol(a * beta[j]));
            prop_assert!((fit2.coefficients[j].t - fit.coefficients[j].t).abs() < tol(fit.coefficients[j].t));
        }
        prop_assert!((fit2.r_squared - fit.r_squared).abs() < 1e-9);
    }

    #[test]
    fn rank_tests_ignore_monotone_transforms(
        groups in prop::collection::vec(prop::collection::vec(-10i32..10, 1..8), 2..5),
    ) {
        let g: Vec<Vec<f64>> = groups.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
        let t: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x * x * x + 5.0 * x).collect()).collect();
        match (kruskal_wallis(&g), kruskal_wallis(&t)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.h, b.h);
                prop_assert_eq!(a.p, b.p);
                let d = dunn_posthoc(&g, Adjustment::Bonferroni).unwrap();
                for i in 0..g.len() {
                    prop_assert_eq!(d.p[i][i], 1.0);
                    for j in 0..g.len() {
                        prop_assert_eq!(d.p[i][j], d.p[j][i]);
                        prop_assert_eq!(d.z[i][j], -d.z[j][i]);
                        prop_assert!((0.0..=1.0).contains(&d.p[i][j]));
                    }
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn every_value_lands_in_one_bin(values in prop::collection::vec(-100.0..100.0f64, 2..60), n in 1usize..10) {
        let b = equal_width_bins(&values, n);
        prop_assume!(b.is_ok());
        let b = b.unwrap();
        prop_assert!(b.edges.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(b.labels.len(), values.len());
        for (v, &l) in values.iter().zip(&b.labels) {
            prop_assert!((1..=n).contains(&l));
            prop_assert!(*v <= b.edges[l] && (*v > b.edges[l - 1] || (l == 1 && *v == b.edges[0])));
        }
    }

    #[test]
    fn micro_f1_equals_accuracy(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..80)) {
        let (pred, gold): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let acc = 100.0 * pred.iter().zip(&gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64;
        prop_assert!((micro_f1(&pred, &gold).unwrap() - acc).abs() < 1e-9);
    }

    #[test]
    fn privatization_preserves_ids_and_labels(
        texts in prop::collection::vec(prop::collection::vec(0usize..12, 0..10), 1..20),
        eps in 0.1..5.0f64,
        seed in any::<u64>(),
    ) {
        let t = table(&(0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect::<Vec<_>>());
        let idx = build_neighbor_index(&t, 4).unwrap();
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, ws)| {
                let text: Vec<String> = ws.iter().map(|w| format!("w{w}")).collect();
                Document::new(format!("d{i}"), text.join(" "), if i % 2 == 0 { "a" } else { "b" }).with_privacy_label("p")
            })
            .collect();
        let c = Corpus::from_documents("c", docs).unwrap();
        let cfg = MechanismConfig::WordMldp(WordMldp { epsilon_word: eps, list_size: 4 });
        let res = Resources { index: Some(&idx), ..Default::default() };
        let p = privatize_corpus(&c, &cfg, &res, seed).unwrap();
        prop_assert_eq!(p.len(), c.len());
        for (a, b) in c.documents().iter().zip(p.documents()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(&a.utility_label, &b.utility_label);
            prop_assert_eq!(&a.privacy_label, &b.privacy_label);
            prop_assert_eq!(a.tokens().len(), b.tokens().len());
        }
        prop_assert_eq!(p.utility_labels(), c.utility_labels());
    }
}
