use ndarray::{Array2, ArrayView3, Axis};

use crate::error::{Error, Result};

/// Indices ordered by score, best first; ties keep index order.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Action sequence of the highest-scoring trajectory (lowest index on ties).
pub fn select_greedy(actions: ArrayView3<f64>, scores: &[f64]) -> Result<Array2<f64>> {
    if scores.is_empty() || actions.len_of(Axis(0)) != scores.len() {
        return Err(Error::State("no scored trajectories to select from".into()));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(actions.index_axis(Axis(0), best).to_owned())
}

/// Elementwise mean of the `elites` best action sequences.
pub fn select_soft_greedy(actions: ArrayView3<f64>, scores: &[f64], elites: usize) -> Result<Array2<f64>> {
    if scores.is_empty() || actions.len_of(Axis(0)) != scores.len() {
        return Err(Error::State("no scored trajectories to select from".into()));
    }
    if elites == 0 || elites > scores.len() {
        return Err(Error::Config(format!(
            "cannot average the best {elites} of {} sequences",
            scores.len()
        )));
    }
    let order = rank(scores);
    let mut sum = actions.index_axis(Axis(0), order[0]).to_owned();
    for &i in &order[1..elites] {
        sum += &actions.index_axis(Axis(0), i);
    }
    Ok(sum / elites as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use proptest::prelude::*;

    #[test]
    fn greedy_picks_highest_score() {
        let a = Array3::from_shape_fn((3, 1, 1), |(n, _, _)| n as f64);
        assert_eq!(select_greedy(a.view(), &[3.0, 7.0, 5.0]).unwrap(), array![[1.0]]);
    }

    #[test]
    fn single_candidate_is_returned() {
        let a = Array3::from_elem((1, 2, 1), 0.25);
        assert_eq!(select_greedy(a.view(), &[-4.0]).unwrap(), array![[0.25], [0.25]]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = Array3::from_shape_fn((3, 1, 1), |(n, _, _)| n as f64);
        assert_eq!(select_greedy(a.view(), &[1.0, 2.0, 2.0]).unwrap(), array![[1.0]]);
        assert_eq!(select_soft_greedy(a.view(), &[1.0, 2.0, 2.0], 1).unwrap(), array![[1.0]]);
        assert_eq!(rank(&[1.0, 2.0, 2.0]), vec![1, 2, 0]);
    }

    #[test]
    fn averages_top_sequences() {
        let a = Array3::from_shape_vec((2, 1, 2), vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(select_soft_greedy(a.view(), &[0.0, 1.0], 2).unwrap(), array![[2.0, 2.0]]);
    }

    #[test]
    fn elite_count_is_checked() {
        let a = Array3::zeros((2, 1, 1));
        assert!(matches!(select_soft_greedy(a.view(), &[0.0, 1.0], 0), Err(Error::Config(_))));
        assert!(matches!(select_soft_greedy(a.view(), &[0.0, 1.0], 3), Err(Error::Config(_))));
        assert!(matches!(select_greedy(Array3::zeros((0, 1, 1)).view(), &[]), Err(Error::State(_))));
    }

    proptest! {
        #[test]
        fn one_elite_is_greedy(scores in prop::collection::vec(-100.0f64..100.0, 1..30), seed in 0u64..1000) {
            let n = scores.len();
            let a = Array3::from_shape_fn((n, 3, 2), |(i, h, d)| ((i * 31 + h * 7 + d) as f64 * 0.37 + seed as f64).sin());
            prop_assert_eq!(select_greedy(a.view(), &scores).unwrap(), select_soft_greedy(a.view(), &scores, 1).unwrap());
        }

        #[test]
        fn order_of_candidates_is_irrelevant(
            (scores, perm) in prop::collection::hash_set(-1000i64..1000, 2..25)
                .prop_map(|s| s.into_iter().map(|v| v as f64).collect::<Vec<_>>())
                .prop_flat_map(|s| { let n = s.len(); (Just(s), Just((0..n).collect::<Vec<_>>()).prop_shuffle()) }),
            e in 1usize..25,
        ) {
            let n = scores.len();
            let e = e.min(n);
            let a = Array3::from_shape_fn((n, 2, 2), |(i, h, d)| ((i * 13 + h * 5 + d) as f64).cos());
            let mut b = Array3::zeros((n, 2, 2));
            let mut permuted = vec![0.0; n];
            for (dst, &src) in perm.iter().enumerate() {
                b.index_axis_mut(Axis(0), dst).assign(&a.index_axis(Axis(0), src));
                permuted[dst] = scores[src];
            }
            prop_assert_eq!(
                select_soft_greedy(a.view(), &scores, e).unwrap(),
                select_soft_greedy(b.view(), &permuted, e).unwrap()
            );
        }

        #[test]
        fn reward_shift_keeps_ranking(scores in prop::collection::vec(-100.0f64..100.0, 1..30), c in -50.0f64..50.0) {
            // Per-step shift c over H = 4 steps with gamma = 0.9 moves every score equally.
            let shift: f64 = (0..4).map(|h| c * 0.9f64.powi(h)).sum();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let distinct = {
                let mut s = scores.clone();
                s.sort_by(f64::total_cmp);
                s.windows(2).all(|w| (w[1] - w[0]).abs() > 1e-6)
            };
            prop_assume!(distinct);
            prop_assert_eq!(rank(&scores), rank(&shifted));
        }
    }
}
