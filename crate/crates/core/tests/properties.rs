use gvar::cli::{format_series, parse_series, ParamsFile};
use gvar::metrics::score_support;
use gvar::model::CoordMaps;
use gvar::resampling::{all_resamples, plan_blocks};
use gvar::selection::{aggregate_supports, frequency_filter};
use gvar::{CountSeries, GvarParams, LagCoord, SupportSet};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

const DIM: usize = 4;
const ORDER: usize = 2;

fn support() -> impl Strategy<Value = SupportSet> {
    prop::collection::btree_set((0..ORDER, 0..DIM, 0..DIM), 0..12).prop_map(|s| {
        SupportSet::from_coords(DIM, ORDER, s.into_iter().map(|(d, m, j)| LagCoord::new(d, m, j))).unwrap()
    })
}

fn params() -> impl Strategy<Value = GvarParams> {
    (
        prop::collection::vec(-2.0f64..2.0, DIM),
        prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], ORDER * DIM * DIM),
    )
        .prop_map(|(nu, a)| {
            let mats = a.chunks(DIM * DIM).map(|c| Array2::from_shape_vec((DIM, DIM), c.to_vec()).unwrap()).collect();
            GvarParams::new(Array1::from_vec(nu), mats).unwrap()
        })
}

proptest! {
    #[test]
    fn coordinate_maps_are_inverse(dim in 1usize..6, order in 1usize..4, n_rows in 1usize..40) {
        let maps = CoordMaps::new(dim, order, n_rows).unwrap();
        for l in 1..=maps.beta_len() {
            let (p, m) = maps.beta_block(l).unwrap();
            prop_assert!((1..=maps.n_coef()).contains(&p) && (1..=dim).contains(&m));
            prop_assert_eq!(maps.beta_flat(p, m).unwrap(), l);
        }
        for k in 1..=maps.obs_len() {
            let (n, m) = maps.obs_block(k).unwrap();
            prop_assert_eq!(maps.obs_flat(n, m).unwrap(), k);
        }
        prop_assert!(maps.beta_block(0).is_err() && maps.beta_block(maps.beta_len() + 1).is_err());
    }

    #[test]
    fn blocks_partition_the_series(len in 8usize..200, n_blocks in 2usize..8, order in 1usize..3) {
        prop_assume!(len >= n_blocks * (order + 2));
        let series = CountSeries::univariate(&(0..len as u64).collect::<Vec<_>>());
        let plan = plan_blocks(len, n_blocks, order).unwrap();
        let sizes: Vec<usize> = plan.bounds().iter().map(|b| b.len()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), len);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        for (j, r) in all_resamples(&series, &plan).unwrap().iter().enumerate() {
            let held = &plan.bounds()[j];
            let mut seen: Vec<usize> = r.train_times.clone();
            seen.extend(held.clone());
            seen.sort();
            prop_assert_eq!(seen, (0..len).collect::<Vec<_>>());
            for (i, &t) in r.train_times.iter().enumerate() {
                prop_assert_eq!(r.train.get(i, 0), t as u64);
            }
            prop_assert_eq!(r.test.len(), held.len());
            let train = r.train_design().unwrap();
            let test = r.test_design().unwrap();
            prop_assert_eq!(train.n_rows() + test.n_rows() + order * (j == 0) as usize, len - order);
        }
    }

    #[test]
    fn selection_scores_are_consistent(truth in params(), est in support()) {
        let estimate = truth.restrict_to(&est);
        let r = score_support(&truth, &est, &estimate).unwrap();
        let true_support = truth.support();
        let ambient = (ORDER * DIM * DIM) as f64;
        prop_assert!((r.sel_error * ambient - (r.fp + r.fn_) as f64).abs() < 1e-9);
        prop_assert_eq!(r.fp + est.intersection(&true_support).len(), est.len());
        prop_assert_eq!(r.fn_ + est.intersection(&true_support).len(), true_support.len());
        prop_assert!((0.0..=1.0).contains(&r.fp_rate) && (0.0..=1.0).contains(&r.fn_rate));
        let own = score_support(&truth, &true_support, &truth).unwrap();
        prop_assert_eq!((own.fp, own.fn_, own.sel_error, own.mse), (0, 0, 0.0, 0.0));
    }

    #[test]
    fn aggregation_bounds(sets in prop::collection::vec(support(), 1..10)) {
        let union = sets.iter().skip(1).fold(sets[0].clone(), |a, s| a.union(s));
        let inter = sets.iter().skip(1).fold(sets[0].clone(), |a, s| a.intersection(s));
        prop_assert_eq!(aggregate_supports(&sets, 1.0).unwrap(), inter.clone());
        prop_assert!(aggregate_supports(&sets, 1e-6).unwrap() == union);
        prop_assert!(frequency_filter(&sets, 0.0).unwrap() == union);
        prop_assert!(frequency_filter(&sets, 1.0).unwrap().is_empty());
        let half = frequency_filter(&sets, 0.5).unwrap();
        prop_assert!(inter.is_subset(&half) && half.is_subset(&union));
    }

    #[test]
    fn beta_and_file_round_trips(p in params()) {
        prop_assert_eq!(GvarParams::from_beta(&p.to_beta(), DIM, ORDER).unwrap(), p.clone());
        let text = serde_json::to_string(&ParamsFile::new(&p, Some(1), None)).unwrap();
        let back: ParamsFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.params().unwrap(), p);
    }

    #[test]
    fn series_csv_round_trips(rows in prop::collection::vec(prop::collection::vec(0u64..10_000, 3), 1..30)) {
        let series = CountSeries::from_rows(&rows).unwrap();
        prop_assert_eq!(parse_series(&format_series(&series), "mem").unwrap(), series);
    }
}
