use psim_autonet::{checkpoint, AdamState, Tensor};
use psim_core::rng::{derive_seed, STREAM_SCHEDULE};
use psim_core::{Image, SimRng};
use serde::{Deserialize, Serialize};

use crate::data::{augment, NormRecord, PairedSample};
use crate::error::{Error, Result};
use crate::loss::{bce_mean, l1_mean};
use crate::net::{build_networks, Discriminator, Generator};
use crate::spec::{GanSpec, TrainConfig};

/// Losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub d: f64,
    pub g_adv: f64,
    /// Unweighted mean absolute error of the generator output.
    pub g_l1: f64,
    /// Mean `sigmoid(fake_logits)` seen by the discriminator step.
    pub fake_prob: f64,
}

#[derive(Debug, Clone)]
pub struct GanState {
    pub spec: GanSpec,
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub step: u64,
    pub seed: u64,
    pub history: Vec<LossRecord>,
    pub norms: NormRecord,
}

/// Stacks single-channel images into a `(n, 1, h, w)` tensor.
pub fn images_to_tensor<'a>(images: impl IntoIterator<Item = &'a Image<f64>>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut dims = None;
    let mut n = 0;
    for img in images {
        match dims {
            None => dims = Some(img.dims()),
            Some(d) if d != img.dims() => {
                return Err(psim_core::Error::DimensionMismatch {
                    expected: d,
                    got: img.dims(),
                }
                .into())
            }
            _ => {}
        }
        data.extend_from_slice(img.data());
        n += 1;
    }
    let (w, h) = dims.ok_or(Error::Empty("batch"))?;
    Ok(Tensor::from_vec(&[n, 1, h, w], data)?)
}

pub fn tensor_to_images(t: &Tensor) -> Result<Vec<Image<f64>>> {
    let (n, c, h, w) = t.dims4()?;
    let plane = c * h * w;
    (0..n)
        .map(|i| Ok(Image::new(w, h, t.data()[i * plane..i * plane + h * w].to_vec())?))
        .collect()
}

impl GanState {
    pub fn new(spec: GanSpec, config: TrainConfig, seed: u64, norms: NormRecord) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let (generator, discriminator) = build_networks(&spec, seed);
        let adam_g = AdamState::new(config.generator_adam, &generator.params());
        let adam_d = AdamState::new(config.discriminator_adam, &discriminator.params());
        Ok(Self {
            spec,
            config,
            generator,
            discriminator,
            adam_g,
            adam_d,
            step: 0,
            seed,
            history: Vec::new(),
            norms,
        })
    }

    /// Pair indices and augmentations for the current step. Each epoch is a
    /// fresh permutation seeded by `(seed, epoch)`, so the schedule depends
    /// only on the step counter and survives checkpoint/resume.
    pub fn schedule(&self, n: usize) -> Vec<(usize, Option<crate::data::AugmentOp>)> {
        let b = self.config.batch_size;
        let first = self.step as usize * b;
        let mut out = Vec::with_capacity(b);
        let mut cached: Option<(usize, Vec<usize>, Vec<u64>)> = None;
        for pos in first..first + b {
            let epoch = pos / n;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut rng = SimRng::new(derive_seed(self.seed, epoch as u64), STREAM_SCHEDULE);
                let mut perm: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut perm);
                let draws = (0..n).map(|_| rng.next_u64()).collect();
                cached = Some((epoch, perm, draws));
            }
            let (_, perm, draws) = cached.as_ref().expect("filled above");
            let slot = pos % n;
            let aug = (!self.config.augment.is_empty())
                .then(|| self.config.augment[(draws[slot] % self.config.augment.len() as u64) as usize]);
            out.push((perm[slot], aug));
        }
        out
    }

    /// One discriminator update (generator frozen), then one generator update
    /// against the updated discriminator.
    pub fn train_step(&mut self, batch: &[PairedSample]) -> Result<LossRecord> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let x = images_to_tensor(batch.iter().map(|p| &p.input))?;
        let t = images_to_tensor(batch.iter().map(|p| &p.target))?;
        let step = self.step;
        let finite = |v: f64, what| {
            if v.is_finite() {
                Ok(v)
            } else {
                log::error!("step {step}: {what} = {v}");
                Err(Error::NonFinite { step, what })
            }
        };

        let g_cache = self.generator.forward(&x)?;
        let fake = g_cache.output();

        let real_c = self.discriminator.forward(&x, &t)?;
        let fake_c = self.discriminator.forward(&x, fake)?;
        let (l_real, d_real) = bce_mean(real_c.logits(), 1.0);
        let (l_fake, d_fake) = bce_mean(fake_c.logits(), 0.0);
        let l_d = finite(0.5 * (l_real + l_fake), "discriminator loss")?;
        let fake_prob = fake_c
            .logits()
            .data()
            .iter()
            .map(|&z| psim_autonet::sigmoid(z))
            .sum::<f64>()
            / fake_c.logits().len() as f64;
        let (_, mut gd) = self.discriminator.backward(&real_c, &d_real.map(|v| 0.5 * v))?;
        let (_, gd_fake) = self.discriminator.backward(&fake_c, &d_fake.map(|v| 0.5 * v))?;
        for (a, b) in gd.iter_mut().zip(&gd_fake) {
            a.add_assign(b)?;
        }
        self.adam_d.step(&mut self.discriminator.params_mut(), &gd)?;

        let adv_c = self.discriminator.forward(&x, fake)?;
        let (g_adv, d_adv) = bce_mean(adv_c.logits(), 1.0);
        let (g_l1, d_l1) = l1_mean(fake, &t)?;
        let g_adv = finite(g_adv, "generator adversarial loss")?;
        let g_l1 = finite(g_l1, "generator l1 loss")?;
        let (mut d_out, _) = self.discriminator.backward(&adv_c, &d_adv)?;
        let lambda = self.spec.lambda_l1;
        d_out.add_assign(&d_l1.map(|v| lambda * v))?;
        let (_, gg) = self.generator.backward(&g_cache, &d_out)?;
        self.adam_g.step(&mut self.generator.params_mut(), &gg)?;

        let rec = LossRecord {
            d: l_d,
            g_adv,
            g_l1,
            fake_prob,
        };
        self.history.push(rec);
        self.step += 1;
        Ok(rec)
    }

    /// Runs `steps` scheduled steps over `pairs`.
    pub fn train(&mut self, pairs: &[PairedSample], steps: u64) -> Result<()> {
        if pairs.is_empty() {
            return Err(Error::Empty("training set"));
        }
        for _ in 0..steps {
            let batch: Vec<PairedSample> = self
                .schedule(pairs.len())
                .into_iter()
                .map(|(i, op)| match op {
                    Some(op) => augment(&pairs[i], op),
                    None => pairs[i].clone(),
                })
                .collect();
            let rec = self.train_step(&batch)?;
            if self.step.is_multiple_of(100) {
                log::info!(
                    "step {}: L_D {:.4} L_G_adv {:.4} L1 {:.5}",
                    self.step,
                    rec.d,
                    rec.g_adv,
                    rec.g_l1
                );
            }
        }
        Ok(())
    }

    /// Generator output for one normalized image.
    pub fn generate(&self, input: &Image<f64>) -> Result<Image<f64>> {
        let y = self.generator.predict(&images_to_tensor([input])?)?;
        Ok(tensor_to_images(&y)?.remove(0))
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,l_d,l_g_adv,l_g_l1\n");
        for (i, r) in self.history.iter().enumerate() {
            s.push_str(&format!("{},{},{},{}\n", i + 1, r.d, r.g_adv, r.g_l1));
        }
        s
    }

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (n, t) in self.generator.param_names().into_iter().zip(self.generator.params()) {
            out.push((format!("g.{n}"), t));
        }
        for (n, t) in self
            .discriminator
            .param_names()
            .into_iter()
            .zip(self.discriminator.params())
        {
            out.push((format!("d.{n}"), t));
        }
        for (tag, a) in [("adam_g", &self.adam_g), ("adam_d", &self.adam_d)] {
            for (i, t) in a.m.iter().enumerate() {
                out.push((format!("{tag}.m{i}"), t));
            }
            for (i, t) in a.v.iter().enumerate() {
                out.push((format!("{tag}.v{i}"), t));
            }
        }
        out
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let meta = serde_json::json!({
            "spec": self.spec,
            "config": self.config,
            "seed": self.seed,
            "step": self.step,
            "adam_steps": [self.adam_g.t, self.adam_d.t],
            "norms": self.norms,
            "history": self.history,
            "layers": {
                "generator": self.generator.layer_kinds(),
                "discriminator": self.discriminator.layer_kinds(),
            },
        });
        checkpoint::encode(meta, &self.named_tensors())
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let ck = checkpoint::decode(bytes)?;
        #[derive(Deserialize)]
        struct Meta {
            spec: GanSpec,
            config: TrainConfig,
            seed: u64,
            step: u64,
            adam_steps: [u64; 2],
            norms: NormRecord,
            history: Vec<LossRecord>,
        }
        let meta: Meta =
            serde_json::from_value(ck.meta).map_err(|e| Error::Checkpoint(format!("header metadata: {e}")))?;
        if meta.history.len() as u64 != meta.step {
            return Err(Error::Checkpoint(format!(
                "step {} but {} history rows",
                meta.step,
                meta.history.len()
            )));
        }
        let mut state = GanState::new(meta.spec, meta.config, meta.seed, meta.norms)?;
        state.step = meta.step;
        state.history = meta.history;
        state.adam_g.t = meta.adam_steps[0];
        state.adam_d.t = meta.adam_steps[1];
        let expected: Vec<(String, Vec<usize>)> = state
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != ck.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors, model has {}",
                ck.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), (got, t)) in expected.iter().zip(&ck.tensors) {
            if name != got || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "expected {name} {shape:?}, found {got} {:?}",
                    t.shape()
                )));
            }
        }
        let mut values = ck.tensors.into_iter().map(|(_, t)| t);
        let slots = state
            .generator
            .params_mut()
            .into_iter()
            .chain(state.discriminator.params_mut())
            .chain(state.adam_g.m.iter_mut())
            .chain(state.adam_g.v.iter_mut())
            .chain(state.adam_d.m.iter_mut())
            .chain(state.adam_d.v.iter_mut());
        for slot in slots {
            *slot = values.next().expect("count checked above");
        }
        Ok(state)
    }
}
