//! Synthetic irregular time series for two-sample and independence studies.
//!
//! Every observation is a point `(t, x_1, ..., x_k)` with time first.
//!
//! Two-sample design: set `i` draws a noise level `sigma_i` from a
//! one-parameter inverse gamma law and observes
//! `x = eta sin(2 pi t) + eps`, `eps ~ N(0, sigma_i + sigma)` (the second
//! argument is a variance) at `t ~ U[0, 1]`.
//!
//! Independence design: pair `i` draws `beta_i ~ U[0.5, 1.5]`,
//! `alpha_i ~ U[-0.5, 0.5]`, sets `f_i(t) = beta_i sin(2 pi t) + alpha_i t`
//! and observes `x = f_i(t) + N(0, noise²)` on one side and
//! `y = g(f_i(t')) + N(0, noise²)` on the other.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ObservationSet, PairedSample, Sample};
use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_INVGAMMA_SHAPE: f64 = 3.0;
pub const DEFAULT_SET_SIZES: (usize, usize) = (5, 50);

/// How many observations each set receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SetSizes {
    /// Uniform integer on `[low, high]`.
    Uniform { low: usize, high: usize },
    /// Exactly `round(small_fraction * N)` sets of size `small`, the rest of
    /// size `large`, in random order.
    TwoPoint {
        small: usize,
        large: usize,
        small_fraction: f64,
    },
}

impl Default for SetSizes {
    fn default() -> Self {
        SetSizes::Uniform {
            low: DEFAULT_SET_SIZES.0,
            high: DEFAULT_SET_SIZES.1,
        }
    }
}

impl SetSizes {
    fn validate(&self) -> Result<()> {
        match *self {
            SetSizes::Uniform { low, high } if low >= 1 && high >= low => Ok(()),
            SetSizes::Uniform { low, high } => Err(Error::invalid(format!(
                "invalid set size range [{low}, {high}]"
            ))),
            SetSizes::TwoPoint {
                small,
                large,
                small_fraction,
            } => {
                if small >= 1 && large >= 1 && (0.0..=1.0).contains(&small_fraction) {
                    Ok(())
                } else {
                    Err(Error::invalid("invalid two-point set sizes"))
                }
            }
        }
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match *self {
            SetSizes::Uniform { low, high } => (0..n).map(|_| rng.random_range(low..=high)).collect(),
            SetSizes::TwoPoint {
                small,
                large,
                small_fraction,
            } => {
                let n_small = (small_fraction * n as f64).round() as usize;
                let mut sizes: Vec<usize> = (0..n).map(|i| if i < n_small { small } else { large }).collect();
                sizes.shuffle(rng);
                sizes
            }
        }
    }
}

/// Draw from `f(x; mu) = x^(-mu-1) exp(-1/x) / Gamma(mu)`, as `1 / Gamma(mu, 1)`.
pub fn invgamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::invalid(format!("inverse gamma shape must be positive, got {shape}")));
    }
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    loop {
        let g: f64 = gamma.sample(rng);
        // Gamma draws at tiny shapes can underflow to zero.
        if g > 0.0 {
            return Ok(1.0 / g);
        }
    }
}

fn normal(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleDesign {
    /// Amplitude of the first value channel.
    pub eta: f64,
    /// Baseline noise variance shared by all sets.
    pub sigma: f64,
    #[serde(default = "default_shape")]
    pub invgamma_shape: f64,
    pub n_sets: usize,
    #[serde(default)]
    pub set_sizes: SetSizes,
    /// Number of value channels; channels after the first use amplitude 1.
    #[serde(default = "one")]
    pub dims: usize,
    pub seed: u64,
}

fn default_shape() -> f64 {
    DEFAULT_INVGAMMA_SHAPE
}

fn one() -> usize {
    1
}

impl TwoSampleDesign {
    pub fn new(eta: f64, sigma: f64, n_sets: usize, seed: u64) -> Self {
        Self {
            eta,
            sigma,
            invgamma_shape: DEFAULT_INVGAMMA_SHAPE,
            n_sets,
            set_sizes: SetSizes::default(),
            dims: 1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.set_sizes.validate()?;
        if self.n_sets < 2 {
            return Err(Error::invalid(format!("need at least 2 sets, got {}", self.n_sets)));
        }
        if self.dims == 0 {
            return Err(Error::invalid("dims must be at least 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.eta.is_finite()) {
            return Err(Error::invalid("eta must be finite and sigma nonnegative"));
        }
        if !(self.invgamma_shape > 0.0) {
            return Err(Error::invalid("inverse gamma shape must be positive"));
        }
        Ok(())
    }
}

pub fn gen_two_sample(design: &TwoSampleDesign) -> Result<Sample> {
    design.validate()?;
    let mut rng = util::rng_from_seed(design.seed);
    let sizes = design.set_sizes.draw(design.n_sets, &mut rng);
    let mut sets = Vec::with_capacity(design.n_sets);
    for (i, &n) in sizes.iter().enumerate() {
        let sigma_i = invgamma_sample(design.invgamma_shape, &mut rng)?;
        let noise = normal((sigma_i + design.sigma).sqrt())?;
        let points = (0..n)
            .map(|_| {
                let t: f64 = rng.random();
                let wave = (2.0 * PI * t).sin();
                let mut p = Vec::with_capacity(design.dims + 1);
                p.push(t);
                for c in 0..design.dims {
                    let amp = if c == 0 { design.eta } else { 1.0 };
                    p.push(amp * wave + noise.sample(&mut rng));
                }
                p
            })
            .collect();
        sets.push(ObservationSet::new(format!("set-{i}"), points)?);
    }
    Sample::new(sets)
}

/// Link `g` between the two sides of a dependent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Square,
    Cube,
    Cos,
    Negexp,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::Square, Link::Cube, Link::Cos, Link::Negexp];

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Link::Square => v * v,
            Link::Cube => v * v * v,
            Link::Cos => v.cos(),
            Link::Negexp => (-v).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Square => "square",
            Link::Cube => "cube",
            Link::Cos => "cos",
            Link::Negexp => "negexp",
        }
    }
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Link::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown link `{s}` (square, cube, cos, negexp)")))
    }
}

/// Amplitude and trend of one latent curve `beta sin(2 pi t) + alpha t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub beta: f64,
    pub alpha: f64,
}

impl Latent {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            beta: rng.random_range(0.5..1.5),
            alpha: rng.random_range(-0.5..0.5),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.beta * (2.0 * PI * t).sin() + self.alpha * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceDesign {
    /// Observation noise standard deviation.
    pub noise: f64,
    pub link: Link,
    pub n_pairs: usize,
    #[serde(default)]
    pub set_sizes: SetSizes,
    /// Value channels per side; channels after the first are nuisance curves
    /// with their own latents.
    #[serde(default = "one")]
    pub dims: usize,
    /// Observe both sides of a pair at the same times.
    #[serde(default)]
    pub shared_times: bool,
    pub seed: u64,
}

impl IndependenceDesign {
    pub fn new(noise: f64, link: Link, n_pairs: usize, seed: u64) -> Self {
        Self {
            noise,
            link,
            n_pairs,
            set_sizes: SetSizes::default(),
            dims: 1,
            shared_times: false,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.set_sizes.validate()?;
        if self.n_pairs < 2 {
            return Err(Error::invalid(format!("need at least 2 pairs, got {}", self.n_pairs)));
        }
        if self.dims == 0 {
            return Err(Error::invalid("dims must be at least 1"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be nonnegative"));
        }
        Ok(())
    }
}

/// Observations of one pair given the latents of each side, with `n_x` and
/// `n_y` points (equal when times are shared).
///
/// `nuisance` supplies one extra latent per additional channel and side.
pub fn gen_pair<R: Rng + ?Sized>(
    design: &IndependenceDesign,
    latent_x: Latent,
    latent_y: Latent,
    nuisance: &[(Latent, Latent)],
    n_x: usize,
    n_y: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if nuisance.len() + 1 != design.dims {
        return Err(Error::size("one nuisance latent pair per extra channel"));
    }
    if design.shared_times && n_x != n_y {
        return Err(Error::size("shared times need equal set sizes on both sides"));
    }
    let noise = normal(design.noise)?;
    let mut xs = Vec::with_capacity(n_x);
    let mut times = Vec::with_capacity(n_x);
    for _ in 0..n_x {
        let t: f64 = rng.random();
        let mut x = vec![t, latent_x.eval(t) + noise.sample(rng)];
        for (nx, _) in nuisance {
            x.push(nx.eval(t) + noise.sample(rng));
        }
        times.push(t);
        xs.push(x);
    }
    let mut ys = Vec::with_capacity(n_y);
    for k in 0..n_y {
        let t: f64 = if design.shared_times { times[k] } else { rng.random() };
        let mut y = vec![t, design.link.apply(latent_y.eval(t)) + noise.sample(rng)];
        for (_, ny) in nuisance {
            y.push(design.link.apply(ny.eval(t)) + noise.sample(rng));
        }
        ys.push(y);
    }
    Ok((xs, ys))
}

/// Paired sample; with `dependent = false` the y side of every pair uses a
/// latent drawn from a separate stream, which severs the coupling while
/// keeping both marginals unchanged.
///
/// Set sizes are drawn independently per side, since a shared size alone
/// couples the two embeddings through their sampling noise. Shared times
/// force shared sizes, so a severed design is only independent without them.
pub fn gen_independence(design: &IndependenceDesign, dependent: bool) -> Result<PairedSample> {
    design.validate()?;
    let mut size_x_rng = util::rng_from_seed(util::derive_seed(design.seed, &["sizes", "x"]));
    let mut size_y_rng = util::rng_from_seed(util::derive_seed(design.seed, &["sizes", "y"]));
    let mut latent_x_rng = util::rng_from_seed(util::derive_seed(design.seed, &["latent-x"]));
    let mut latent_y_rng = util::rng_from_seed(util::derive_seed(design.seed, &["latent-y"]));
    let mut nuisance_rng = util::rng_from_seed(util::derive_seed(design.seed, &["nuisance"]));
    let mut obs_rng = util::rng_from_seed(util::derive_seed(design.seed, &["obs"]));
    let sizes_x = design.set_sizes.draw(design.n_pairs, &mut size_x_rng);
    let sizes_y = if design.shared_times {
        sizes_x.clone()
    } else {
        design.set_sizes.draw(design.n_pairs, &mut size_y_rng)
    };
    let mut ids = Vec::with_capacity(design.n_pairs);
    let mut x_sets = Vec::with_capacity(design.n_pairs);
    let mut y_sets = Vec::with_capacity(design.n_pairs);
    for (i, (&n_x, &n_y)) in sizes_x.iter().zip(&sizes_y).enumerate() {
        let lx = Latent::draw(&mut latent_x_rng);
        let independent_y = Latent::draw(&mut latent_y_rng);
        let ly = if dependent { lx } else { independent_y };
        let nuisance: Vec<(Latent, Latent)> = (1..design.dims)
            .map(|_| (Latent::draw(&mut nuisance_rng), Latent::draw(&mut nuisance_rng)))
            .collect();
        let (xs, ys) = gen_pair(design, lx, ly, &nuisance, n_x, n_y, &mut obs_rng)?;
        let id = format!("pair-{i}");
        x_sets.push(ObservationSet::new(format!("{id}/x"), xs)?);
        y_sets.push(ObservationSet::new(format!("{id}/y"), ys)?);
        ids.push(id);
    }
    PairedSample::new(ids, x_sets, y_sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invgamma_positive_and_deterministic() {
        let mut a = util::rng_from_seed(1);
        let mut b = util::rng_from_seed(1);
        for _ in 0..1000 {
            let x = invgamma_sample(0.7, &mut a).unwrap();
            assert!(x > 0.0);
            assert_eq!(x, invgamma_sample(0.7, &mut b).unwrap());
        }
        assert!(invgamma_sample(0.0, &mut a).is_err());
        assert!(invgamma_sample(-1.0, &mut a).is_err());
    }

    #[test]
    fn set_sizes_in_range() {
        let mut d = TwoSampleDesign::new(1.0, 0.1, 200, 4);
        let s = gen_two_sample(&d).unwrap();
        assert!(s.set_sizes().iter().all(|n| (5..=50).contains(n)));
        assert_eq!(s.dim(), 2);
        d.set_sizes = SetSizes::Uniform { low: 6, high: 3 };
        assert!(gen_two_sample(&d).is_err());
        d.set_sizes = SetSizes::TwoPoint {
            small: 3,
            large: 50,
            small_fraction: 0.6,
        };
        let s = gen_two_sample(&d).unwrap();
        assert_eq!(s.set_sizes().iter().filter(|&&n| n == 3).count(), 120);
        assert_eq!(s.set_sizes().iter().filter(|&&n| n == 50).count(), 80);
    }

    #[test]
    fn regeneration_is_bit_exact() {
        let mut d = TwoSampleDesign::new(1.3, 0.2, 20, 77);
        d.dims = 3;
        let a = gen_two_sample(&d).unwrap();
        assert_eq!(a, gen_two_sample(&d).unwrap());
        assert_eq!(a.dim(), 4);
        let p = IndependenceDesign::new(0.3, Link::Cube, 15, 9);
        assert_eq!(gen_independence(&p, true).unwrap(), gen_independence(&p, true).unwrap());
    }

    #[test]
    fn zero_amplitude_has_zero_mean() {
        let mut d = TwoSampleDesign::new(0.0, 0.01, 300, 5);
        d.invgamma_shape = 50.0;
        let s = gen_two_sample(&d).unwrap();
        let values: Vec<f64> = s.sets().iter().flat_map(|set| set.points().iter().map(|p| p[1])).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn larger_amplitude_larger_variance() {
        let pooled_var = |eta: f64| {
            let mut d = TwoSampleDesign::new(eta, 0.05, 400, 12);
            d.invgamma_shape = 20.0;
            let s = gen_two_sample(&d).unwrap();
            let v: Vec<f64> = s.sets().iter().flat_map(|set| set.points().iter().map(|p| p[1])).collect();
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
        };
        let (lo, hi) = (pooled_var(1.0), pooled_var(1.5));
        // Var(eta sin(2 pi T)) = eta^2 / 2 on top of the noise.
        assert!(hi > lo);
        assert!(((hi - lo) - (1.125 - 0.5)).abs() < 0.1, "{lo} {hi}");
    }

    #[test]
    fn noiseless_square_link() {
        let design = IndependenceDesign::new(0.0, Link::Square, 2, 0);
        let l = Latent { beta: 1.0, alpha: 0.0 };
        let mut rng = util::rng_from_seed(3);
        let (_, ys) = gen_pair(&design, l, l, &[], 3, 40, &mut rng).unwrap();
        assert_eq!(ys.len(), 40);
        for y in ys {
            let expected = (2.0 * PI * y[0]).sin().powi(2);
            assert!((y[1] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn severed_pairs_use_separate_latents() {
        let design = IndependenceDesign::new(0.0, Link::Square, 30, 21);
        let dep = gen_independence(&design, true).unwrap();
        let ind = gen_independence(&design, false).unwrap();
        // Same x sides; y sides differ once the latent is redrawn.
        assert_eq!(dep.x_sets(), ind.x_sets());
        assert_ne!(dep.y_sets(), ind.y_sets());
    }

    #[test]
    fn shared_times_align_sides() {
        let mut design = IndependenceDesign::new(0.1, Link::Cos, 5, 2);
        design.shared_times = true;
        let p = gen_independence(&design, true).unwrap();
        for (x, y) in p.x_sets().iter().zip(p.y_sets()) {
            for (a, b) in x.points().iter().zip(y.points()) {
                assert_eq!(a[0], b[0]);
            }
        }
    }

    #[test]
    fn link_parsing() {
        assert_eq!("negexp".parse::<Link>().unwrap(), Link::Negexp);
        assert!("sqrt".parse::<Link>().is_err());
        assert_eq!(Link::Cos.apply(0.0), 1.0);
    }
}
