mod common;

use common::{build, dense_run};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qas_core::datasets::{load_iris, Split, DEFAULT_SPLIT_SEED};
use qas_core::quantum::{cross_entropy, loss_and_gradient, run_circuit, LabeledSample, Statevector};

fn raw_gates() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
    prop::collection::vec(any::<(u8, u8, u8)>(), 1..16)
}

fn unit_state(raw: &[(f64, f64)]) -> Vec<C64> {
    let v: Vec<C64> = raw.iter().map(|&(re, im)| C64::new(re, im)).collect();
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn circuits_preserve_norm_and_match_dense_products(
        q in 2usize..=4,
        d in 1usize..=5,
        raw in raw_gates(),
        thetas in prop::collection::vec(-10.0f64..10.0, 16),
        amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
    ) {
        let seq = build(q, d, &raw);
        let params = &thetas[..seq.num_params()];
        let input = unit_state(&amps[..1 << q]);
        prop_assume!(input.iter().all(|a| a.is_finite()));
        let out = run_circuit(&seq, params, &Statevector::from_amplitudes(input.clone()).unwrap()).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-10);
        let want = dense_run(&seq, params, &input);
        for (a, b) in out.amplitudes().iter().zip(&want) {
            prop_assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(
        q in 2usize..=3,
        d in 1usize..=4,
        raw in raw_gates(),
        thetas in prop::collection::vec(-3.0f64..3.0, 16),
        rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 8), 0usize..8), 1..6),
        classes in 2usize..=8,
    ) {
        let seq = build(q, d, &raw);
        prop_assume!(seq.num_params() > 0);
        let dim = 1 << q;
        let classes = classes.min(dim);
        let feats: Vec<Vec<f64>> = rows
            .iter()
            .map(|(r, _)| {
                let n = r[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
                r[..dim].iter().map(|x| x / n).collect()
            })
            .collect();
        prop_assume!(feats.iter().flatten().all(|x| x.is_finite()));
        let batch: Vec<LabeledSample> = feats
            .iter()
            .zip(&rows)
            .map(|(f, (_, l))| LabeledSample { amplitudes: f, label: l % classes })
            .collect();
        let params = thetas[..seq.num_params()].to_vec();
        let (loss, grad) = loss_and_gradient(&seq, &params, &batch, classes).unwrap();
        prop_assert!((loss - cross_entropy(&seq, &params, &batch, classes).unwrap()).abs() < 1e-12);
        // the clamp makes the loss non-smooth near zero probability
        prop_assume!(loss < 20.0);
        let h = 1e-5;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let up = cross_entropy(&seq, &p, &batch, classes).unwrap();
            p[k] -= 2.0 * h;
            let down = cross_entropy(&seq, &p, &batch, classes).unwrap();
            let fd = (up - down) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {k}: fd {fd} adjoint {}", grad[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn small_gradient_steps_lower_the_training_loss(
        raw in raw_gates(),
        thetas in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let data = load_iris(Some((0, 1)), DEFAULT_SPLIT_SEED).unwrap();
        let train = data.samples(Split::Train);
        let seq = build(2, 4, &raw);
        prop_assume!(seq.num_params() > 0);
        let mut params = thetas[..seq.num_params()].to_vec();
        let (mut loss, mut grad) = loss_and_gradient(&seq, &params, &train, 2).unwrap();
        for _ in 0..20 {
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-9 {
                break;
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= 0.01 * g;
            }
            let (next, next_grad) = loss_and_gradient(&seq, &params, &train, 2).unwrap();
            prop_assert!(next <= loss + 1e-12, "{next} > {loss}");
            loss = next;
            grad = next_grad;
        }
    }
}
