//! Area under the ROC curve via the Mann-Whitney rank-sum identity.

/// AUC of `scores` against `labels`, counting tied positive/negative pairs as
/// one half. `None` when either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // every positive/negative pair, ties scored one half
    fn brute_force(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let mut wins = 0.0;
        let mut pairs = 0usize;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1;
                    wins += match scores[i].total_cmp(&scores[j]) {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        (pairs > 0).then(|| wins / pairs as f64)
    }

    #[test]
    fn worked_example() {
        let scores = [0.9, 0.2, 0.1, 0.8];
        let labels = [true, true, false, false];
        assert_eq!(brute_force(&scores, &labels), Some(0.75));
        assert_eq!(auc(&scores, &labels), Some(0.75));
    }

    #[test]
    fn perfect_and_degenerate() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), None);
    }

    proptest! {
        #[test]
        fn matches_pairwise_definition(
            data in prop::collection::vec(((0u8..6), any::<bool>()), 2..60),
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            let (a, b) = (auc(&scores, &labels), brute_force(&scores, &labels));
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }

        #[test]
        fn invariant_under_monotone_transform(
            data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60),
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert_eq!(auc(&scores, &labels), auc(&transformed, &labels));
        }
    }
}
