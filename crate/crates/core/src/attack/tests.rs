use super::*;
use crate::data::{synthetic_blobs, Dataset, Split};
use crate::nn::{Architecture, FeatureShape, LayerSpec, Parameters, TrainConfig};

fn toy() -> (Network, Dataset) {
    let train = synthetic_blobs(3, 60, 8, 0.15, 11, Split::Train).unwrap();
    let test = synthetic_blobs(3, 40, 8, 0.15, 12, Split::Test).unwrap();
    let net = Architecture::Dense { hidden: vec![16] }.build(train.feature_shape(), 3, 5).unwrap();
    let cfg = TrainConfig { epochs: 40, batch_size: 16, learning_rate: 0.02, ..TrainConfig::default() };
    let net = crate::nn::train(net, train.images(), &train.one_hot(), &cfg).unwrap();
    (net, test)
}

fn linear(weight: Vec<f64>, bias: Vec<f64>, inputs: usize) -> Network {
    let outputs = bias.len();
    Network::from_parameters(
        FeatureShape::Flat(inputs),
        &[LayerSpec::Dense { inputs, outputs }],
        vec![Parameters { weight, bias }],
    )
    .unwrap()
}

fn sample(values: &[f64]) -> Tensor {
    Tensor::new(vec![1, values.len()], values.to_vec()).unwrap()
}

fn spec(kind: AttackKind, eps: f64, step: f64, iterations: usize) -> AttackSpec {
    AttackSpec { epsilon: eps, epsilon_step: step, iterations, ..AttackSpec::fashion_mnist(kind) }
}

fn ce(net: &Network, x: &Tensor, y: usize) -> f64 {
    let p = net.probabilities(x).unwrap();
    -p.row(0)[y].ln()
}

#[test]
fn fgm_on_linear_model_moves_every_pixel_by_epsilon() {
    // Weight rows are inputs; column 0 and 1 differ everywhere.
    let net = linear(vec![1.0, -1.0, -2.0, 0.5, 0.3, 0.2, 0.0, 0.0], vec![0.0, 0.0], 4);
    let x = sample(&[0.5, 0.4, 0.6, 0.5]);
    let o = fgm(&net, &x, 0, &spec(AttackKind::Fgm, 0.1, 0.0, 1)).unwrap();
    let d: Vec<f64> = o.adversarial.data().iter().zip(x.data()).map(|(a, b)| a - b).collect();
    assert!((d[0].abs() - 0.1).abs() < 1e-15 && (d[1].abs() - 0.1).abs() < 1e-15 && (d[2].abs() - 0.1).abs() < 1e-15);
    // Zero weight difference: zero gradient, pixel untouched.
    assert_eq!(d[3], 0.0);
    let zero = fgm(&net, &x, 0, &spec(AttackKind::Fgm, 0.0, 0.0, 1)).unwrap();
    assert_eq!(zero.adversarial, x);
    assert_eq!(zero.l2, 0.0);
}

#[test]
fn fgm_equals_one_bim_step_bitwise() {
    let (net, test) = toy();
    for i in 0..test.len() {
        let x = test.images().select_rows(&[i]).unwrap();
        let y = test.labels()[i];
        let f = fgm(&net, &x, y, &spec(AttackKind::Fgm, 0.2, 0.01, 1)).unwrap();
        let b = bim(&net, &x, y, &spec(AttackKind::Bim, 0.2, 0.2, 1)).unwrap();
        assert!(f.adversarial.data().iter().zip(b.adversarial.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn iterative_attacks_respect_budget_and_range() {
    let (net, test) = toy();
    for kind in AttackKind::ALL {
        let s = spec(kind, 0.1, 0.02, 15);
        for i in (0..test.len()).step_by(7) {
            let x = test.images().select_rows(&[i]).unwrap();
            let o = attack(&net, &x, test.labels()[i], &s, i as u64).unwrap();
            assert!(o.adversarial.data().iter().all(|p| (0.0..=1.0).contains(p)), "{kind}");
            if matches!(kind, AttackKind::Fgm | AttackKind::Bim | AttackKind::Pgd) {
                assert!(o.adversarial.max_abs_diff(&x) <= 0.1 + 1e-9, "{kind}");
            }
        }
    }
}

#[test]
fn l2_variant_stays_in_ball() {
    let (net, test) = toy();
    let s = AttackSpec { norm: Norm::L2, ..spec(AttackKind::Pgd, 0.5, 0.1, 20) };
    for i in 0..20 {
        let x = test.images().select_rows(&[i]).unwrap();
        let o = pgd(&net, &x, test.labels()[i], &s, 3).unwrap();
        assert!(o.l2 <= 0.5 + 1e-9);
    }
}

#[test]
fn bim_loss_is_nondecreasing_on_linear_model() {
    let net = linear(vec![0.7, -0.2, 0.1, -1.1, 0.4, 0.9, -0.3, 0.2, 0.0, 0.5, -0.6, 0.8], vec![0.1, 0.0, -0.1], 4);
    let x = sample(&[0.3, 0.8, 0.1, 0.6]);
    let mut last = ce(&net, &x, 0);
    for n in 1..30 {
        let o = bim(&net, &x, 0, &spec(AttackKind::Bim, 0.3, 0.02, n)).unwrap();
        let loss = ce(&net, &o.adversarial, 0);
        assert!(loss >= last - 1e-12, "iteration {n}: {loss} < {last}");
        last = loss;
    }
}

#[test]
fn pgd_is_seeded_and_dominates_fgm() {
    let (net, test) = toy();
    let x = test.images().select_rows(&[3]).unwrap();
    let s = spec(AttackKind::Pgd, 0.15, 0.02, 20);
    assert_eq!(pgd(&net, &x, test.labels()[3], &s, 9).unwrap(), pgd(&net, &x, test.labels()[3], &s, 9).unwrap());
    assert_ne!(pgd(&net, &x, test.labels()[3], &s, 9).unwrap(), pgd(&net, &x, test.labels()[3], &s, 10).unwrap());
    let ids: Vec<usize> = (0..test.len()).collect();
    let p = run_campaign(&net, test.images(), test.labels(), &ids, &s, 1).unwrap();
    let f = run_campaign(&net, test.images(), test.labels(), &ids, &spec(AttackKind::Fgm, 0.15, 0.0, 1), 1).unwrap();
    let fooled = |r: &[SampleResult]| r.iter().filter(|s| s.adv_pred != s.true_class).count();
    assert!(ids.len() >= 100);
    assert!(fooled(&p) >= fooled(&f), "pgd {} < fgm {}", fooled(&p), fooled(&f));
}

#[test]
fn deepfool_two_class_linear_closed_form() {
    let w0 = [0.2, -0.4, 0.1];
    let w1 = [-0.3, 0.5, 0.2];
    let weight = w0.iter().zip(&w1).flat_map(|(a, b)| [*a, *b]).collect();
    let net = linear(weight, vec![0.2, 0.0], 3);
    let x = sample(&[0.6, 0.4, 0.5]);
    let o = deepfool(&net, &x, 0, &AttackSpec::fashion_mnist(AttackKind::DeepFool)).unwrap();
    let w: Vec<f64> = w1.iter().zip(&w0).map(|(a, b)| a - b).collect();
    let f: f64 = x.data().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 0.2;
    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(f < 0.0);
    assert!(o.success);
    assert_eq!(o.adv_pred, 1);
    assert!((o.l2 - 1.02 * f.abs() / wn).abs() < 1e-12, "{} vs {}", o.l2, 1.02 * f.abs() / wn);
}

#[test]
fn misclassified_inputs_are_returned_unchanged() {
    let net = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
    let x = sample(&[0.9, 0.1]);
    for kind in [AttackKind::DeepFool, AttackKind::NewtonFool] {
        let o = attack(&net, &x, 1, &AttackSpec::fashion_mnist(kind), 0).unwrap();
        assert!(o.success);
        assert_eq!(o.l2, 0.0);
        assert_eq!(o.adversarial, x);
    }
}

#[test]
fn deepfool_is_usually_smaller_than_pgd() {
    let (net, test) = toy();
    let pgd_spec = spec(AttackKind::Pgd, 0.3, 0.02, 40);
    let df_spec = AttackSpec::fashion_mnist(AttackKind::DeepFool);
    let (mut both, mut smaller) = (0, 0);
    for i in 0..test.len() {
        let x = test.images().select_rows(&[i]).unwrap();
        let y = test.labels()[i];
        let p = pgd(&net, &x, y, &pgd_spec, i as u64).unwrap();
        let d = deepfool(&net, &x, y, &df_spec).unwrap();
        if p.success && d.success && p.clean_pred == y {
            both += 1;
            smaller += usize::from(d.l2 <= p.l2);
        }
    }
    assert!(both >= 20, "{both}");
    assert!(smaller as f64 >= 0.8 * both as f64, "{smaller}/{both}");
}

#[test]
fn newtonfool_lowers_true_class_probability() {
    let (net, test) = toy();
    let x = test.images().select_rows(&[0]).unwrap();
    let frozen = AttackSpec { eta: 0.0, ..AttackSpec::fashion_mnist(AttackKind::NewtonFool) };
    assert_eq!(newtonfool(&net, &x, test.labels()[0], &frozen).unwrap().adversarial, x);

    let s = AttackSpec::fashion_mnist(AttackKind::NewtonFool);
    let (mut wins, mut total) = (0, 0);
    for i in 0..test.len() {
        let x = test.images().select_rows(&[i]).unwrap();
        let o = newtonfool(&net, &x, test.labels()[i], &s).unwrap();
        if o.success && o.clean_pred == test.labels()[i] {
            total += 1;
            wins += usize::from(o.confidence_delta > 0.0);
        }
    }
    assert!(total > 0);
    assert!(wins as f64 >= 0.95 * total as f64, "{wins}/{total}");
}

#[test]
fn measurements() {
    assert_eq!(mean_l2(&[3.0, 4.0], &[0, 0], 1).unwrap(), vec![3.5]);
    assert_eq!(adversarial_accuracy(&[1, 1, 1, 0], &[0, 0, 0, 0]).unwrap(), 0.75);
    assert_eq!(adversarial_accuracy(&[0, 1], &[0, 1]).unwrap(), 0.0);
    assert_eq!(adversarial_accuracy(&[1, 0], &[0, 1]).unwrap(), 1.0);
    let clean = Tensor::from_rows(&[[0.9, 0.1]]).unwrap();
    let adv = Tensor::from_rows(&[[0.3, 0.7]]).unwrap();
    assert!((confidence_score(&clean, &adv, &[0], 1).unwrap()[0] - 0.6).abs() < 1e-15);
    let probs = Tensor::from_rows(&[[0.2, 0.8], [0.6, 0.4], [0.5, 0.5]]).unwrap();
    assert_eq!(confidence_score(&probs, &probs, &[1, 0, 1], 2).unwrap(), vec![0.0, 0.0]);
    assert!(matches!(mean_l2(&[1.0], &[0], 2), Err(Error::EmptyClass(1))));
}

#[test]
fn mean_l2_matches_stored_tensors() {
    let (net, test) = toy();
    let s = spec(AttackKind::Bim, 0.1, 0.01, 10);
    let mut l2 = Vec::new();
    let mut brute = [0.0; 3];
    let mut count = [0.0; 3];
    for i in 0..test.len() {
        let x = test.images().select_rows(&[i]).unwrap();
        let o = bim(&net, &x, test.labels()[i], &s).unwrap();
        l2.push(o.l2);
        let mut sq = 0.0;
        for j in 0..x.len() {
            let d = x.data()[j] - o.adversarial.data()[j];
            sq += d * d;
        }
        brute[test.labels()[i]] += sq.sqrt();
        count[test.labels()[i]] += 1.0;
    }
    let per = mean_l2(&l2, test.labels(), 3).unwrap();
    for c in 0..3 {
        assert!((per[c] - brute[c] / count[c]).abs() < 1e-12);
    }
}

#[test]
fn defended_wrapper_passes_gradients_straight_through() {
    let (net, test) = toy();
    let x = test.images().select_rows(&[1]).unwrap();
    let plain = Defended::new(&net, None);
    assert_eq!(plain.logits(&x).unwrap(), net.logits(&x).unwrap());
    let fs = DefenceSpec::FeatureSqueeze { bits: 3 };
    let squeezed = fs.transform_inputs(&x).unwrap();
    let seed = |z: &Tensor| vec![1.0; z.len()];
    let (_, g_def) = Defended::new(&net, Some(fs)).logits_and_grad(&x, &mut { seed }).unwrap();
    let (_, g_raw) = net.logits_and_grad(&squeezed, &mut { seed }).unwrap();
    assert_eq!(g_def, g_raw);

    let te_net = Architecture::Linear.build(FeatureShape::Image { height: 1, width: 8, channels: 4 }, 3, 1).unwrap();
    let te = Defended::new(&te_net, Some(DefenceSpec::Thermometer { levels: 4 }));
    let (_, g) = te.logits_and_grad(&x, &mut { seed }).unwrap();
    assert_eq!(g.shape(), x.shape());
    // Sum over the four level weights feeding each pixel.
    let w = &te_net.parameters().find(|p| !p.weight.is_empty()).unwrap().weight;
    for (j, gj) in g.data().iter().enumerate() {
        let expect: f64 = (0..4).flat_map(|l| w[(j * 4 + l) * 3..(j * 4 + l + 1) * 3].to_vec()).sum();
        assert!((gj - expect).abs() < 1e-12);
    }
    // Attacks stay in range through the encoding.
    let o = fgm(&te, &x, 0, &AttackSpec::fashion_mnist(AttackKind::Fgm)).unwrap();
    assert!(o.adversarial.data().iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn presets_and_validation() {
    for kind in AttackKind::ALL {
        AttackSpec::fashion_mnist(kind).validate().unwrap();
        AttackSpec::cifar(kind).validate().unwrap();
        assert_eq!(kind.id().parse::<AttackKind>().unwrap(), kind);
    }
    assert_eq!(AttackSpec::cifar(AttackKind::Pgd).unit_epsilon(), 8.0 / 255.0);
    assert_eq!(AttackSpec::fashion_mnist(AttackKind::Bim).iterations, 80);
    assert!(AttackSpec { epsilon: -1.0, ..AttackSpec::fashion_mnist(AttackKind::Fgm) }.validate().is_err());
    assert!(AttackSpec { iterations: 0, ..AttackSpec::fashion_mnist(AttackKind::DeepFool) }.validate().is_err());
    assert!("cw".parse::<AttackKind>().is_err());
}

#[test]
fn rejects_out_of_range_inputs() {
    let net = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
    assert!(fgm(&net, &sample(&[1.5, 0.0]), 0, &AttackSpec::fashion_mnist(AttackKind::Fgm)).is_err());
    assert!(fgm(&net, &sample(&[0.5, 0.0]), 2, &AttackSpec::fashion_mnist(AttackKind::Fgm)).is_err());
}
