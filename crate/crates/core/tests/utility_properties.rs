use acedesign::models::{Logistic, PoissonToy};
use acedesign::sampling::lhs_random_design;
use acedesign::utilities::{pseudo_bayes_a, pseudo_bayes_d};
use acedesign::{CoordinateDomain, Design, RngStream, UtilitySampleBatch};
use proptest::prelude::*;

fn grand_mean_and_se(means: &[f64]) -> (f64, f64) {
    let k = means.len() as f64;
    let m = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

#[test]
fn poisson_information_utilities_are_unbiased() {
    // beta ~ N(0.5, 1): E[2 log|x| + beta x] and E[-exp(-beta x) / x^2] in closed form.
    let model = PoissonToy::default();
    let x = 0.7_f64;
    let exact_d = 2.0 * x.ln() + 0.5 * x;
    let exact_a = -(-0.5 * x + 0.5 * x * x).exp() / (x * x);
    let d = Design::new(1, 1, vec![x]).unwrap();
    let mut rng = RngStream::new(61, 0);
    let ds: Vec<f64> = (0..200).map(|_| pseudo_bayes_d(&model, &d, 500, &mut rng).unwrap().mean).collect();
    let as_: Vec<f64> = (0..200).map(|_| pseudo_bayes_a(&model, &d, 500, &mut rng).unwrap().mean).collect();
    let (md, sd) = grand_mean_and_se(&ds);
    let (ma, sa) = grand_mean_and_se(&as_);
    assert!((md - exact_d).abs() <= 3.0 * sd, "D {md} vs {exact_d} (se {sd})");
    assert!((ma - exact_a).abs() <= 3.0 * sa, "A {ma} vs {exact_a} (se {sa})");
}

#[test]
fn logistic_information_utilities_match_large_reference() {
    let model = Logistic::default();
    let mut rng = RngStream::new(62, 0);
    let domains = vec![CoordinateDomain::interval(-1.0, 1.0).unwrap(); 4];
    let d = lhs_random_design(10, 4, &domains, &mut rng).unwrap();
    let reference_d = pseudo_bayes_d(&model, &d, 1_000_000, &mut rng).unwrap().mean;
    let reference_a = pseudo_bayes_a(&model, &d, 1_000_000, &mut rng).unwrap().mean;
    let ds: Vec<f64> = (0..200).map(|_| pseudo_bayes_d(&model, &d, 500, &mut rng).unwrap().mean).collect();
    let as_: Vec<f64> = (0..200).map(|_| pseudo_bayes_a(&model, &d, 500, &mut rng).unwrap().mean).collect();
    let (md, sd) = grand_mean_and_se(&ds);
    let (ma, sa) = grand_mean_and_se(&as_);
    assert!((md - reference_d).abs() <= 3.0 * sd, "D {md} vs {reference_d} (se {sd})");
    assert!((ma - reference_a).abs() <= 3.0 * sa, "A {ma} vs {reference_a} (se {sa})");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuting_outer_values_keeps_the_mean(values in proptest::collection::vec(-50.0f64..50.0, 2..200), seed in 0u64..1000) {
        let batch = UtilitySampleBatch::from_values(values.clone());
        let mut shuffled = values;
        let mut rng = RngStream::new(seed, 0);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let again = UtilitySampleBatch::from_values(shuffled);
        prop_assert!((batch.mean - again.mean).abs() <= 1e-12 * (1.0 + batch.mean.abs()));
        prop_assert!((batch.variance() - again.variance()).abs() <= 1e-9 * (1.0 + batch.variance()));
    }

    #[test]
    fn run_order_does_not_change_information(seed in 0u64..1000, n in 5usize..12) {
        let model = Logistic::default();
        let mut rng = RngStream::new(seed, 1);
        let domains = vec![CoordinateDomain::interval(-1.0, 1.0).unwrap(); 4];
        let d = lhs_random_design(n, 4, &domains, &mut rng).unwrap();
        let mut rows = d.rows();
        rows.reverse();
        rows.rotate_left(n / 2);
        let permuted = Design::from_rows(&rows).unwrap();
        let a: UtilitySampleBatch<f64> = pseudo_bayes_d(&model, &d, 50, &mut RngStream::new(seed, 2)).unwrap();
        let b = pseudo_bayes_d(&model, &permuted, 50, &mut RngStream::new(seed, 2)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}
