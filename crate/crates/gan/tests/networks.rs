use psim_autonet::{grad_check, grad_check_at, Tensor};
use psim_core::SimRng;
use psim_gan::net::{ConvLayer, Generator};
use psim_gan::spec::{DiscriminatorSpec, GeneratorSpec};
use psim_gan::{build_networks, gan_losses, Discriminator, GanSpec, Mode};

const H: f64 = 1e-6;

fn zero_all(params: Vec<&mut Tensor>) {
    for p in params {
        p.data_mut().fill(0.0);
    }
}

#[test]
fn zero_generator_outputs_zero() {
    for side in [32, 64, 128] {
        let spec = GanSpec::toy(Mode::Phase, side);
        let (mut g, _) = build_networks(&spec, 0);
        zero_all(g.params_mut());
        let mut rng = SimRng::new(1, 1);
        let x = Tensor::randn(&[1, 1, side, side], 0.5, &mut rng);
        let y = g.predict(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, side, side]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn generator_preserves_shape() {
    for side in [32, 64, 128] {
        let spec = GanSpec::toy(Mode::Frames, side);
        let (g, _) = build_networks(&spec, 3);
        let x = Tensor::randn(&[1, 1, side, side], 0.5, &mut SimRng::new(2, 2));
        let y = g.predict(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn zero_discriminator_is_undecided() {
    let spec = GanSpec::toy(Mode::Phase, 64);
    let (_, mut d) = build_networks(&spec, 0);
    zero_all(d.params_mut());
    let mut rng = SimRng::new(3, 3);
    let a = Tensor::randn(&[1, 1, 64, 64], 1.0, &mut rng);
    let b = Tensor::randn(&[1, 1, 64, 64], 1.0, &mut rng);
    let logits = d.logits(&a, &b).unwrap();
    assert_eq!(logits.shape(), &[1, 1, 8, 8]);
    assert!(logits.data().iter().all(|&z| psim_autonet::sigmoid(z) == 0.5));
}

fn naive_conv(x: &[Vec<Vec<f64>>], w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<Vec<Vec<f64>>> {
    let s = w.shape();
    let (out_c, in_c, k) = (s[0], s[1], s[2]);
    let (h, wd) = (x[0].len(), x[0][0].len());
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut y = vec![vec![vec![0.0; ow]; oh]; out_c];
    for o in 0..out_c {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b.data()[o];
                for c in 0..in_c {
                    for u in 0..k {
                        for v in 0..k {
                            let r = (i * stride + u) as isize - pad as isize;
                            let q = (j * stride + v) as isize - pad as isize;
                            if r >= 0 && q >= 0 && (r as usize) < h && (q as usize) < wd {
                                acc += w.data()[((o * in_c + c) * k + u) * k + v] * x[c][r as usize][q as usize];
                            }
                        }
                    }
                }
                y[o][i][j] = acc;
            }
        }
    }
    y
}

fn naive_norm(x: &mut [Vec<Vec<f64>>], gamma: &Tensor, beta: &Tensor, eps: f64) {
    for (c, plane) in x.iter_mut().enumerate() {
        let n = (plane.len() * plane[0].len()) as f64;
        let mean = plane.iter().flatten().sum::<f64>() / n;
        let var = plane.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for v in plane.iter_mut().flatten() {
            *v = gamma.data()[c] * (*v - mean) / (var + eps).sqrt() + beta.data()[c];
        }
    }
}

fn to_planes(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let s = t.shape();
    (0..s[1])
        .map(|c| {
            (0..s[2])
                .map(|i| (0..s[3]).map(|j| t.data()[(c * s[2] + i) * s[3] + j]).collect())
                .collect()
        })
        .collect()
}

#[test]
fn discriminator_matches_naive_layers() {
    let spec = DiscriminatorSpec { layers: 3, base: 4 };
    let mut d = Discriminator::new(&spec, 1);
    let mut rng = SimRng::new(4, 4);
    for p in d.params_mut() {
        *p = Tensor::randn(p.shape(), 0.3, &mut rng);
    }
    let a = Tensor::randn(&[1, 1, 32, 32], 1.0, &mut rng);
    let b = Tensor::randn(&[1, 1, 32, 32], 1.0, &mut rng);
    let got = d.logits(&a, &b).unwrap();

    let mut h: Vec<_> = to_planes(&a).into_iter().chain(to_planes(&b)).collect();
    for blk in d.blocks.iter().chain(std::iter::once(&d.head)) {
        let ConvLayer::Conv(c) = &blk.conv else { unreachable!() };
        h = naive_conv(&h, &c.weight, &c.bias, c.stride, c.padding);
        if let Some(n) = &blk.norm {
            naive_norm(&mut h, &n.gamma, &n.beta, n.eps);
        }
        if blk.act.is_some() {
            for v in h.iter_mut().flatten().flatten() {
                if *v < 0.0 {
                    *v *= 0.2;
                }
            }
        }
    }
    let want: Vec<f64> = h.into_iter().flatten().flatten().collect();
    assert_eq!(got.shape(), &[1, 1, 4, 4]);
    for (g, w) in got.data().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}

/// Best single gain for `tanh(a x) ~ x` on [-0.5, 0.5]; found by a dense scan.
const IDENTITY_GAIN: f64 = 1.06918;

/// Depth-1 generator whose only live path is the input skip into the final
/// conv's centre tap, so the output is `tanh(gain * x)`.
fn near_identity(gain: f64) -> Generator {
    let spec = GeneratorSpec {
        depth: 1,
        base: 2,
        skip: true,
    };
    let mut g = Generator::new(&spec, 1);
    zero_all(g.params_mut());
    // channel `base` of the final conv input is the network input
    let ConvLayer::Conv(c) = &mut g.out.conv else {
        unreachable!()
    };
    c.weight.data_mut()[2 * 9 + 4] = gain;
    g
}

fn max_identity_error(g: &Generator, bound: f64) -> f64 {
    let n = 32;
    let x = Tensor::from_vec(
        &[1, 1, n, n],
        (0..n * n)
            .map(|i| bound * (2.0 * i as f64 / (n * n - 1) as f64 - 1.0))
            .collect(),
    )
    .unwrap();
    let y = g.predict(&x).unwrap();
    y.data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn depth_one_near_identity() {
    // A single linear path into tanh cannot beat ~0.0111 on [-0.5, 0.5].
    let err = max_identity_error(&near_identity(IDENTITY_GAIN), 0.5);
    assert!(err < 0.0112, "max error on [-0.5, 0.5]: {err}");
    let err = max_identity_error(&near_identity(1.0), 0.3);
    assert!(err < 0.01, "max error on [-0.3, 0.3]: {err}");
}

fn random_params(params: Vec<&mut Tensor>, rng: &mut SimRng) {
    for p in params {
        let shape = p.shape().to_vec();
        *p = Tensor::randn(&shape, 0.4, rng);
        if shape.len() == 1 {
            // keep norm scales away from zero
            p.data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
    }
}

fn generator_check(g: &Generator, x: &Tensor, r: &Tensor, picks: Option<&[(usize, usize)]>) -> f64 {
    let cache = g.forward(x).unwrap();
    let (_, grads) = g.backward(&cache, r).unwrap();
    let params: Vec<Tensor> = g.params().into_iter().cloned().collect();
    let loss = |p: &[Tensor]| {
        let mut gg = g.clone();
        for (slot, v) in gg.params_mut().into_iter().zip(p) {
            *slot = v.clone();
        }
        gg.predict(x).unwrap().dot(r).unwrap()
    };
    match picks {
        Some(p) => grad_check_at(&params, &grads, loss, H, p).max_rel_error,
        None => grad_check(&params, &grads, loss, H).max_rel_error,
    }
}

#[test]
fn small_generator_gradients() {
    for seed in 1..=5 {
        let mut rng = SimRng::new(seed, 20);
        for skip in [true, false] {
            let spec = GeneratorSpec {
                depth: 2,
                base: 2,
                skip,
            };
            let mut g = Generator::new(&spec, 1);
            random_params(g.params_mut(), &mut rng);
            let x = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
            let r = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
            let err = generator_check(&g, &x, &r, None);
            assert!(err < 1e-4, "seed {seed} skip {skip}: {err}");
        }
    }
}

#[test]
fn small_generator_input_gradient() {
    let mut rng = SimRng::new(9, 21);
    let spec = GeneratorSpec {
        depth: 2,
        base: 2,
        skip: true,
    };
    let mut g = Generator::new(&spec, 1);
    random_params(g.params_mut(), &mut rng);
    let x = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
    let r = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
    let (dx, _) = g.backward(&g.forward(&x).unwrap(), &r).unwrap();
    let rep = grad_check(&[x], &[dx], |p| g.predict(&p[0]).unwrap().dot(&r).unwrap(), H);
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

fn discriminator_check(d: &Discriminator, a: &Tensor, b: &Tensor, r: &Tensor) -> f64 {
    let cache = d.forward(a, b).unwrap();
    let (d_cand, grads) = d.backward(&cache, r).unwrap();
    let mut params: Vec<Tensor> = d.params().into_iter().cloned().collect();
    params.push(b.clone());
    let mut analytic = grads;
    analytic.push(d_cand);
    grad_check(
        &params,
        &analytic,
        |p| {
            let mut dd = d.clone();
            let n = p.len() - 1;
            for (slot, v) in dd.params_mut().into_iter().zip(&p[..n]) {
                *slot = v.clone();
            }
            dd.logits(a, &p[n]).unwrap().dot(r).unwrap()
        },
        H,
    )
    .max_rel_error
}

#[test]
fn small_discriminator_gradients() {
    for seed in 1..=5 {
        let mut rng = SimRng::new(seed, 22);
        let mut d = Discriminator::new(&DiscriminatorSpec { layers: 3, base: 2 }, 1);
        random_params(d.params_mut(), &mut rng);
        let a = Tensor::randn(&[1, 1, 16, 16], 1.0, &mut rng);
        let b = Tensor::randn(&[1, 1, 16, 16], 1.0, &mut rng);
        let r = Tensor::randn(&[1, 1, 2, 2], 1.0, &mut rng);
        let err = discriminator_check(&d, &a, &b, &r);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

/// Spot check of the full toy networks at 64x64: three entries per parameter tensor.
#[test]
fn toy_network_gradients_sampled() {
    let spec = GanSpec::toy(Mode::Phase, 64);
    let (g, d) = build_networks(&spec, 11);
    let mut rng = SimRng::new(11, 23);
    let x = Tensor::randn(&[1, 1, 64, 64], 0.5, &mut rng);
    let r = Tensor::randn(&[1, 1, 64, 64], 1.0, &mut rng);
    let picks: Vec<(usize, usize)> = g
        .params()
        .iter()
        .enumerate()
        .flat_map(|(t, p)| {
            let n = p.len();
            [0, n / 2, n - 1].map(|i| (t, i))
        })
        .collect();
    let err = generator_check(&g, &x, &r, Some(&picks));
    assert!(err < 1e-4, "generator: {err}");

    let b = Tensor::randn(&[1, 1, 64, 64], 0.5, &mut rng);
    let rl = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
    let cache = d.forward(&x, &b).unwrap();
    let (_, grads) = d.backward(&cache, &rl).unwrap();
    let params: Vec<Tensor> = d.params().into_iter().cloned().collect();
    let picks: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(t, p)| [0, p.len() / 2, p.len() - 1].map(|i| (t, i)))
        .collect();
    let rep = grad_check_at(
        &params,
        &grads,
        |p| {
            let mut dd = d.clone();
            for (slot, v) in dd.params_mut().into_iter().zip(p) {
                *slot = v.clone();
            }
            dd.logits(&x, &b).unwrap().dot(&rl).unwrap()
        },
        H,
        &picks,
    );
    assert!(rep.max_rel_error < 1e-4, "discriminator: {rep:?}");
}

fn bce_oracle(z: f64, y: f64) -> f64 {
    // -[y ln s + (1-y) ln(1-s)] with ln s = -lse(0, -z), ln(1-s) = -lse(0, z)
    let lse = |a: f64, b: f64| {
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    };
    y * lse(0.0, -z) + (1.0 - y) * lse(0.0, z)
}

#[test]
fn losses_match_scalar_oracle() {
    let mut rng = SimRng::new(5, 5);
    for _ in 0..20 {
        let real = Tensor::randn(&[1, 1, 8, 8], 3.0, &mut rng);
        let fake = Tensor::randn(&[1, 1, 8, 8], 3.0, &mut rng);
        let out = Tensor::randn(&[1, 1, 16, 16], 0.5, &mut rng);
        let target = Tensor::randn(&[1, 1, 16, 16], 0.5, &mut rng);
        let l = gan_losses(&real, &fake, &out, &target, 100.0).unwrap();
        let mean = |t: &Tensor, y: f64| t.data().iter().map(|&z| bce_oracle(z, y)).sum::<f64>() / 64.0;
        let d = 0.5 * (mean(&real, 1.0) + mean(&fake, 0.0));
        let l1 = out
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 256.0;
        assert!((l.d - d).abs() < 1e-12);
        assert!((l.g_adv - mean(&fake, 1.0)).abs() < 1e-12);
        assert!((l.g - (mean(&fake, 1.0) + 100.0 * l1)).abs() < 1e-12);
    }
}
