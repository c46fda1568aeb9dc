use std::collections::BTreeSet;

use cascade_core::eval::*;
use cascade_core::tier1::{Candidate, CandidateFeatures, Label};
use cascade_core::volume::{GroundTruthLesion, Volume};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rc(volume: usize, score: f64, lesion: Option<usize>) -> RankedCandidate {
    RankedCandidate {
        volume,
        score,
        label: if lesion.is_some() { Label::TrueLesion } else { Label::FalsePositive },
        lesion,
    }
}

/// Operating point at one threshold, counted directly.
fn froc_at(cands: &[RankedCandidate], t: f64, lesions: usize, volumes: usize) -> FrocPoint {
    let above: Vec<&RankedCandidate> = cands.iter().filter(|c| c.score >= t).collect();
    let found: BTreeSet<(usize, usize)> = above.iter().filter_map(|c| c.lesion.map(|k| (c.volume, k))).collect();
    let fp = above.iter().filter(|c| c.lesion.is_none()).count();
    FrocPoint {
        threshold: t,
        sensitivity: found.len() as f64 / lesions as f64,
        fp_per_volume: fp as f64 / volumes as f64,
    }
}

fn brute_froc(cands: &[RankedCandidate], lesions: usize, volumes: usize) -> Vec<FrocPoint> {
    let mut ts: Vec<f64> = cands.iter().map(|c| c.score).collect();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    std::iter::once(f64::INFINITY)
        .chain(ts)
        .map(|t| froc_at(cands, t, lesions, volumes))
        .collect()
}

fn brute_auc(scored: &[(f64, bool)]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for &(sp, _) in scored.iter().filter(|s| s.1) {
        for &(sn, _) in scored.iter().filter(|s| !s.1) {
            pairs += 1;
            twice += if sp > sn {
                2
            } else if sp == sn {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn froc_instance() -> impl Strategy<Value = (Vec<RankedCandidate>, usize, usize)> {
    (1usize..4, 0usize..3).prop_flat_map(|(volumes, extra)| {
        let cand = (0..volumes, 0u8..6, prop::option::of(0usize..3)).prop_map(|(v, s, l)| rc(v, f64::from(s) / 5.0, l));
        (prop::collection::vec(cand, 0..=10), Just(volumes), Just(extra))
    })
    .prop_map(|(cands, volumes, extra)| {
        let distinct: BTreeSet<(usize, usize)> = cands.iter().filter_map(|c| c.lesion.map(|k| (c.volume, k))).collect();
        (cands, distinct.len() + extra + 1, volumes + 1)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn froc_equals_enumeration((cands, lesions, volumes) in froc_instance()) {
        prop_assert_eq!(compute_froc(&cands, lesions, volumes).unwrap(), brute_froc(&cands, lesions, volumes));
    }

    #[test]
    fn froc_is_monotone((cands, lesions, volumes) in froc_instance()) {
        let pts = compute_froc(&cands, lesions, volumes).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].threshold < w[0].threshold);
            prop_assert!(w[1].sensitivity >= w[0].sensitivity);
            prop_assert!(w[1].fp_per_volume >= w[0].fp_per_volume);
        }
    }

    #[test]
    fn auc_equals_pairwise_count(scores in prop::collection::vec((0u8..8, any::<bool>()), 2..=100)) {
        let scored: Vec<(f64, bool)> = scores.iter().map(|&(s, l)| (f64::from(s) / 7.0, l)).collect();
        prop_assume!(scored.iter().any(|s| s.1) && scored.iter().any(|s| !s.1));
        prop_assert_eq!(compute_roc_auc(&scored).unwrap(), brute_auc(&scored));
    }

    #[test]
    fn ranking_metrics_invariant_under_monotone_transform(
        scores in prop::collection::vec((0.0f64..1.0, prop::option::of(0usize..2)), 2..40),
    ) {
        let cands: Vec<RankedCandidate> = scores.iter().map(|&(s, l)| rc(0, s, l)).collect();
        prop_assume!(cands.iter().any(|c| c.lesion.is_some()) && cands.iter().any(|c| c.lesion.is_none()));
        let warped: Vec<RankedCandidate> = cands.iter().map(|c| RankedCandidate { score: c.score.powi(3) * 5.0 - 2.0, ..*c }).collect();
        let strip = |p: Vec<FrocPoint>| p.into_iter().map(|p| (p.sensitivity, p.fp_per_volume)).collect::<Vec<_>>();
        prop_assert_eq!(strip(compute_froc(&cands, 2, 1).unwrap()), strip(compute_froc(&warped, 2, 1).unwrap()));
        let pairs = |c: &[RankedCandidate]| c.iter().map(|c| (c.score, c.lesion.is_some())).collect::<Vec<_>>();
        prop_assert_eq!(compute_roc_auc(&pairs(&cands)).unwrap(), compute_roc_auc(&pairs(&warped)).unwrap());
    }

    #[test]
    fn aggregate_is_permutation_invariant(mut probs in prop::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
        let a = aggregate_views(&probs).unwrap();
        probs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = aggregate_views(&probs).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn folds_partition_patients(n in 1usize..60, k in 1usize..8, seed in any::<u64>()) {
        let ids: Vec<usize> = (0..n).map(|i| i * 3 + 1).collect();
        match split_folds(&ids, k, seed) {
            Err(_) => prop_assert!(n < k),
            Ok(split) => {
                prop_assert_eq!(split.k(), k);
                let mut all: Vec<usize> = split.folds.concat();
                all.sort_unstable();
                prop_assert_eq!(&all, &ids);
                let sizes: Vec<usize> = split.folds.iter().map(Vec::len).collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
                prop_assert_eq!(split_folds(&ids, k, seed).unwrap(), split.clone());
                for i in 0..k {
                    let train = split.train(i);
                    prop_assert!(train.iter().all(|p| !split.test(i).contains(p)));
                    prop_assert_eq!(train.len() + split.test(i).len(), n);
                }
            }
        }
    }

    #[test]
    fn balancing_equalizes_by_oversampling_minority(labels in prop::collection::vec(any::<bool>(), 2..300), seed in any::<u64>()) {
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let idx = balance_indices(&labels, seed).unwrap();
        let bal: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        let bpos = bal.iter().filter(|&&l| l).count();
        prop_assert_eq!(2 * bpos, bal.len());
        prop_assert_eq!(&idx[..labels.len()], &(0..labels.len()).collect::<Vec<_>>()[..]);
        let minority = pos * 2 < labels.len();
        prop_assert!(idx[labels.len()..].iter().all(|&i| labels[i] == minority));
    }
}

#[test]
fn aggregate_matches_exact_rational_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    const SCALE: f64 = (1u64 << 53) as f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..2000);
        // multiples of 2^-53 so the exact sum fits an integer
        let ks: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=1u64 << 53)).collect();
        let probs: Vec<f64> = ks.iter().map(|&k| k as f64 / SCALE).collect();
        let exact = ks.iter().map(|&k| k as u128).sum::<u128>() as f64 / SCALE / n as f64;
        assert!((aggregate_views(&probs).unwrap() - exact).abs() <= 1e-12);
    }
}

#[test]
fn auc_of_random_labels_is_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut scores: Vec<f64> = (0..20_000).map(|i| i as f64).collect();
    scores.shuffle(&mut rng);
    let scored: Vec<(f64, bool)> = scores.into_iter().map(|s| (s, rng.gen::<bool>())).collect();
    assert!((compute_roc_auc(&scored).unwrap() - 0.5).abs() < 0.05);
}

#[test]
fn perfectly_separated_scores_give_unit_auc() {
    let scored: Vec<(f64, bool)> = (0..50).map(|i| (i as f64, i >= 20)).collect();
    assert_eq!(compute_roc_auc(&scored).unwrap(), 1.0);
}

#[test]
fn all_true_candidates_never_add_false_positives() {
    let cands: Vec<RankedCandidate> = (0..6).map(|i| rc(i % 2, i as f64 / 10.0, Some(i % 3))).collect();
    assert!(compute_froc(&cands, 6, 2).unwrap().iter().all(|p| p.fp_per_volume == 0.0));
}

fn volume_and_lesion() -> (Volume, GroundTruthLesion) {
    let v = Volume::constant([20, 20, 4], [1.0, 1.0, 5.0], [0.0; 3], 0.0).unwrap();
    let voxels: Vec<usize> = (0..v.len()).filter(|&i| {
        let [x, y, z] = v.coords(i);
        (8..12).contains(&x) && (8..12).contains(&y) && z == 1
    }).collect();
    let lesion = GroundTruthLesion {
        center: [9.5, 9.5, 5.0],
        radius: [2.0, 2.0, 2.5],
        volume_mm3: voxels.len() as f64 * 5.0,
        voxels,
    };
    (v, lesion)
}

fn candidate(id: usize, centroid: [f64; 3]) -> Candidate {
    Candidate {
        id,
        centroid,
        tier1_score: 0.0,
        features: CandidateFeatures::default(),
        label: Label::Unknown,
        lesion: None,
        voxels: Vec::new(),
    }
}

#[test]
fn matching_rules() {
    let (v, lesion) = volume_and_lesion();
    let mut cands = vec![candidate(0, [9.0, 10.0, 5.0]), candidate(1, [10.6, 8.4, 4.0]), candidate(2, [2.0, 2.0, 15.0])];
    match_candidates(&mut cands, std::slice::from_ref(&lesion), &v, &MatchRule::default()).unwrap();
    assert_eq!(cands.iter().map(|c| c.label).collect::<Vec<_>>(), [Label::TrueLesion, Label::TrueLesion, Label::FalsePositive]);
    assert_eq!(cands[0].lesion, Some(0));
    // both hits land on the same lesion, which counts once
    let ranked: Vec<RankedCandidate> = cands.iter().enumerate().map(|(i, c)| RankedCandidate {
        volume: 0,
        score: 1.0 - i as f64 / 10.0,
        label: c.label,
        lesion: c.lesion,
    }).collect();
    let pts = compute_froc(&ranked, 1, 1).unwrap();
    assert_eq!(pts[2].sensitivity, 1.0);
    assert_eq!(pts.last().unwrap().fp_per_volume, 1.0);

    let rule = MatchRule { mode: MatchMode::CentroidDistance, distance_mm: 5.0 };
    let mut far = vec![candidate(0, [9.5, 29.5, 5.0]), candidate(1, [12.0, 11.0, 7.0])];
    match_candidates(&mut far, &[lesion], &v, &rule).unwrap();
    assert_eq!(far[0].label, Label::FalsePositive);
    assert_eq!(far[1].label, Label::TrueLesion);
}
