//! Central finite-difference checks of the hand-written backward passes.
#![allow(dead_code)]

use e2icm_core::model::{DiscriminatorNetwork, GeneratorNetwork, Module, NetworkSpec, Tensor};
use e2icm_core::train::{discriminator_gradients, generator_gradients};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const LAMBDA: f64 = 100.0;
const DROPOUT_SEED: u64 = 77;

#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Sample {
    pub fn rel_error(&self) -> f64 {
        let m = self.analytic.abs().max(self.numeric.abs());
        if m == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / m
        }
    }
}

pub struct Fixture {
    pub spec: NetworkSpec,
    pub face: Tensor,
    pub real: Tensor,
    pub fake: Tensor,
}

/// Batch of 2 random 16×16 inputs for the reduced network.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand4 = |c| Array4::from_shape_simple_fn((2, c, 16, 16), || rng.random_range(-1.0..1.0));
    Fixture {
        spec: NetworkSpec::tiny(),
        face: rand4(3),
        real: rand4(1),
        fake: rand4(1),
    }
}

fn with_param<M: Module>(m: &mut M, name: &str, f: impl FnOnce(&mut f64)) {
    let mut f = Some(f);
    m.visit_mut(&mut |n, p| {
        if n == name {
            (f.take().unwrap())(&mut p.value.as_slice_mut().expect("standard layout")[index_hint()]);
        }
    });
}

thread_local! {
    static INDEX: std::cell::Cell<usize> = const { std::cell::Cell::new(0) };
}

fn index_hint() -> usize {
    INDEX.with(|c| c.get())
}

fn perturb<M: Module>(m: &mut M, name: &str, index: usize, delta: f64) {
    INDEX.with(|c| c.set(index));
    with_param(m, name, |v| *v += delta);
}

/// Two random indices per trainable tensor, drawn from entries with a
/// nonzero analytic gradient when there are any (taps that only ever see
/// padding have a structurally zero gradient).
fn pick<M: Module>(m: &M, seed: u64) -> Vec<(String, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    m.visit(&mut |n, p| {
        if !p.trainable {
            return;
        }
        let g = p.grad.as_slice().expect("standard layout");
        let live: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        let pool: Vec<usize> = if live.is_empty() { (0..g.len()).collect() } else { live };
        for k in rand::seq::index::sample(&mut rng, pool.len(), pool.len().min(2)) {
            out.push((n.to_string(), pool[k], g[pool[k]]));
        }
    });
    out
}

fn gen_loss(g: &mut GeneratorNetwork, d: &mut DiscriminatorNetwork, fx: &Fixture) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let fake = g.forward(&fx.face, Some(&mut rng)).unwrap();
    let logits = d.forward(&fx.face, &fake).unwrap();
    e2icm_core::model::generator_loss(&logits, &fake, &fx.real, LAMBDA)
        .unwrap()
        .breakdown
        .total
}

fn disc_loss(d: &mut DiscriminatorNetwork, fx: &Fixture) -> f64 {
    let lr = d.forward(&fx.face, &fx.real).unwrap();
    let lf = d.forward(&fx.face, &fx.fake).unwrap();
    e2icm_core::model::discriminator_loss(&lr, &lf).unwrap().loss
}

/// Generator parameters under λ·L1 + adversarial loss through a fixed
/// discriminator, with a fixed dropout mask.
pub fn check_generator(seed: u64) -> Vec<Sample> {
    let fx = fixture(seed);
    let mut g = GeneratorNetwork::build(&fx.spec, seed + 1).unwrap();
    let mut d = DiscriminatorNetwork::build(&fx.spec, seed + 2).unwrap();
    g.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let fake = g.forward(&fx.face, Some(&mut rng)).unwrap();
    generator_gradients(&mut g, &mut d, &fx.face, &fake, &fx.real, LAMBDA).unwrap();
    pick(&g, seed + 3)
        .into_iter()
        .map(|(name, index, analytic)| {
            perturb(&mut g, &name, index, STEP);
            let up = gen_loss(&mut g, &mut d, &fx);
            perturb(&mut g, &name, index, -2.0 * STEP);
            let down = gen_loss(&mut g, &mut d, &fx);
            perturb(&mut g, &name, index, STEP);
            Sample {
                name,
                index,
                analytic,
                numeric: (up - down) / (2.0 * STEP),
            }
        })
        .collect()
}

/// Discriminator parameters under 0.5·[BCE(real, 1) + BCE(fake, 0)].
pub fn check_discriminator(seed: u64) -> Vec<Sample> {
    let fx = fixture(seed);
    let mut d = DiscriminatorNetwork::build(&fx.spec, seed + 2).unwrap();
    d.zero_grad();
    discriminator_gradients(&mut d, &fx.face, &fx.real, &fx.fake).unwrap();
    pick(&d, seed + 4)
        .into_iter()
        .map(|(name, index, analytic)| {
            perturb(&mut d, &name, index, STEP);
            let up = disc_loss(&mut d, &fx);
            perturb(&mut d, &name, index, -2.0 * STEP);
            let down = disc_loss(&mut d, &fx);
            perturb(&mut d, &name, index, STEP);
            Sample {
                name,
                index,
                analytic,
                numeric: (up - down) / (2.0 * STEP),
            }
        })
        .collect()
}
