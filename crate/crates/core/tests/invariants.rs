use approx::assert_relative_eq;
use proptest::prelude::*;

use sweetspot::acquisition::ei_from_moments;
use sweetspot::evo::{refine, BoxRegion};
use sweetspot::stats::{median, quantile, wilcoxon_signed_rank, SeedStream};
use sweetspot::sweetspot::offset_pool;
use sweetspot::{Bounds, Dataset, GpModel, KernelParams, SweetSpot, SweetSpotShape};

fn unit_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_in_the_sweet_spot(
        centre in unit_point(3),
        p in prop::collection::vec(-2.0..3.0f64, 3),
        r in 0.01..0.8f64,
    ) {
        let ss = SweetSpot::new(centre, SweetSpotShape::new(r).unwrap(), Bounds::cube(0.0, 1.0, 3)).unwrap();
        let mut q = p;
        ss.project(&mut q);
        prop_assert!(ss.contains(&q));
    }

    #[test]
    fn quality_sites_lie_in_the_sweet_spot(centre in unit_point(2), r in 0.01..0.6f64, seed in 0u64..1000) {
        let ss = SweetSpot::new(centre, SweetSpotShape::new(r).unwrap(), Bounds::cube(0.0, 1.0, 2)).unwrap();
        let pool = offset_pool(2, 16, &mut SeedStream::new(seed).rng());
        for s in ss.sites_from_offsets(&pool, 16) {
            prop_assert!(ss.contains(&s));
        }
    }

    #[test]
    fn expected_improvement_bounds(mu in -5.0..5.0f64, sigma in 0.0..4.0f64, f_star in -5.0..5.0f64) {
        let ei = ei_from_moments(mu, sigma, f_star);
        prop_assert!(ei >= (f_star - mu).max(0.0) - 1e-12);
        // never more than the improvement plus one standard deviation
        prop_assert!(ei <= (f_star - mu).max(0.0) + sigma + 1e-12);
    }

    #[test]
    fn variance_never_grows_with_more_data(
        points in prop::collection::vec(unit_point(2), 2..10),
        extra in unit_point(2),
        query in unit_point(2),
    ) {
        let bounds = Bounds::cube(0.0, 1.0, 2);
        let params = KernelParams::isotropic(0.4, 1.0, 1e-6);
        let values: Vec<f64> = points.iter().map(|p| p[0] - p[1]).collect();
        let small = GpModel::from_params(Dataset::new(points.clone(), values.clone(), bounds.clone()).unwrap(), params.clone()).unwrap();
        let mut more = points;
        more.push(extra);
        let mut more_values = values;
        more_values.push(0.5);
        let big = GpModel::from_params(Dataset::new(more, more_values, bounds).unwrap(), params).unwrap();
        prop_assert!(big.predict(&query).1 <= small.predict(&query).1 + 1e-9);
    }

    #[test]
    fn quantiles_are_ordered_and_bounded(values in prop::collection::vec(-100.0..100.0f64, 1..40)) {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (q1, q2, q3) = (quantile(&values, 0.25), median(&values), quantile(&values, 0.75));
        prop_assert!(lo <= q1 && q1 <= q2 && q2 <= q3 && q3 <= hi);
    }

    #[test]
    fn wilcoxon_is_symmetric(pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..30)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = wilcoxon_signed_rank(&x, &y);
        let b = wilcoxon_signed_rank(&y, &x);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
        assert_relative_eq!(a.p_value, b.p_value, epsilon = 1e-12);
    }

    #[test]
    fn refine_never_loses_ground(start in unit_point(2), cx in 0.0..1.0f64, cy in 0.0..1.0f64) {
        let bounds = Bounds::cube(0.0, 1.0, 2);
        let f = |x: &[f64]| -((x[0] - cx).powi(2) + 3.0 * (x[1] - cy).powi(2));
        let v0 = f(&start);
        let (x, v) = refine(f, &BoxRegion(&bounds), start, v0, 0.1, 1e-6);
        prop_assert!(v >= v0);
        prop_assert!(bounds.contains(&x));
        assert_relative_eq!(v, f(&x));
    }
}
