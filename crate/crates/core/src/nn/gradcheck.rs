//! Central finite-difference verification of reverse-mode gradients.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::error::Result;
use crate::nn::dd::{forward_exact, DoubleF64};
use crate::nn::network::{Gradients, Network, NetworkSpec};
use crate::rng::Rng;

pub const DEFAULT_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-8;

/// Where the largest disagreement was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error between the closure's analytic gradients and central differences.
///
/// The closure is evaluated in plain `f64`. Rounding in the loss then limits
/// agreement to roughly `1e-16 |L| / h` absolute; use [`compare_with_numeric`]
/// with a high-precision value function when small gradients must be checked.
pub fn grad_check<F>(net: &Network, loss: F) -> Result<f64>
where
    F: Fn(&Network) -> Result<(f64, Gradients)>,
{
    Ok(grad_check_report(net, loss, DEFAULT_STEP)?.max_rel_error)
}

pub fn grad_check_report<F>(net: &Network, loss: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&Network) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss(net)?;
    compare_with_numeric(net, &analytic, |n| Ok(loss(n)?.0), h)
}

/// Compare analytic gradients with central differences of `value`.
///
/// `value` may be shifted by any constant; only differences are used.
pub fn compare_with_numeric<F>(net: &Network, analytic: &Gradients, value: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&Network) -> Result<f64>,
{
    let mut probe = net.clone();
    let mut worst = GradCheckReport {
        max_rel_error: 0.0,
        tensor: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for t in 0..probe.params().num_tensors() {
        for i in 0..probe.params().tensor(t).len() {
            let orig = probe.params().tensor(t)[i];
            let (up, down) = (orig + h, orig - h);
            probe.params_mut().tensor_mut(t)[i] = up;
            let plus = value(&probe)?;
            probe.params_mut().tensor_mut(t)[i] = down;
            let minus = value(&probe)?;
            probe.params_mut().tensor_mut(t)[i] = orig;
            let numeric = (plus - minus) / (up - down);
            let a = analytic.0.tensor(t)[i];
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || err.is_nan() {
                worst = GradCheckReport {
                    max_rel_error: if err.is_nan() { f64::INFINITY } else { err },
                    tensor: t,
                    index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}

/// Half squared error over every head, averaged over the batch.
pub fn squared_error_loss(
    net: &Network,
    input: ArrayView2<f64>,
    extras: &[ArrayView2<f64>],
    targets: &[Array2<f64>],
) -> Result<(f64, Gradients)> {
    let (outputs, cache) = net.forward(input, extras)?;
    let batch = input.nrows() as f64;
    let mut loss = 0.0;
    let mut dys = Vec::with_capacity(outputs.len());
    for (y, t) in outputs.iter().zip(targets) {
        let diff = y - t;
        loss += 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / batch;
        dys.push(diff / batch);
    }
    let views: Vec<_> = dys.iter().map(|d| d.view()).collect();
    Ok((loss, net.backward(&cache, &views)?))
}

/// One random gradient-check problem: a network, an input batch and per-head targets.
#[derive(Debug, Clone)]
pub struct Problem {
    pub net: Network,
    pub input: Array2<f64>,
    pub extras: Vec<Array2<f64>>,
    pub targets: Vec<Array2<f64>>,
}

impl Problem {
    pub fn loss(&self, net: &Network) -> Result<(f64, Gradients)> {
        let extras: Vec<_> = self.extras.iter().map(|e| e.view()).collect();
        squared_error_loss(net, self.input.view(), &extras, &self.targets)
    }

    /// The same loss evaluated by a double-double scalar loop.
    pub fn exact_loss(&self, net: &Network) -> Result<DoubleF64> {
        let batch = self.input.nrows();
        let mut total = DoubleF64::ZERO;
        for r in 0..batch {
            let x: Vec<f64> = self.input.row(r).to_vec();
            let extras: Vec<Vec<f64>> = self.extras.iter().map(|e| e.row(r).to_vec()).collect();
            let extra_refs: Vec<&[f64]> = extras.iter().map(|e| e.as_slice()).collect();
            let outs = forward_exact(net, &x, &extra_refs)?;
            for (y, t) in outs.iter().zip(&self.targets) {
                for (yk, &tk) in y.iter().zip(t.row(r)) {
                    let d = *yk - DoubleF64::new(tk);
                    total = total + d * d;
                }
            }
        }
        Ok(total / DoubleF64::new(2.0 * batch as f64))
    }

    /// Backward-pass gradients against central differences of [`Problem::exact_loss`].
    pub fn check(&self, h: f64) -> Result<GradCheckReport> {
        let (_, analytic) = self.loss(&self.net)?;
        self.check_gradients(&analytic, h)
    }

    pub fn check_gradients(&self, analytic: &Gradients, h: f64) -> Result<GradCheckReport> {
        let base = self.exact_loss(&self.net)?;
        compare_with_numeric(&self.net, analytic, |n| Ok((self.exact_loss(n)? - base).to_f64()), h)
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

/// Draws a random one- or two-headed problem whose trunk pre-activations all
/// stay at least `kink_margin` away from zero.
pub fn random_problem(rng: &mut Rng, two_headed: bool, hidden: &[usize], kink_margin: f64) -> Result<Problem> {
    let input_dim = rng.gen_range(2..10);
    let spec = if two_headed {
        NetworkSpec {
            input_dim,
            hidden_dims: hidden.to_vec(),
            output_dims: vec![rng.gen_range(1..6), rng.gen_range(2..9)],
            head_extra_input_dims: vec![0, rng.gen_range(1..8)],
            leaky_slope: NetworkSpec::DEFAULT_LEAKY_SLOPE,
        }
    } else {
        NetworkSpec::single(input_dim, rng.gen_range(1..6)).with_hidden(hidden)
    };
    let batch = rng.gen_range(1..4);
    loop {
        let net = Network::init(spec.clone(), rng)?;
        let input = uniform_matrix(batch, input_dim, rng);
        let extras: Vec<Array2<f64>> = spec
            .head_extra_input_dims
            .iter()
            .map(|&e| uniform_matrix(batch, e, rng))
            .collect();
        let targets = spec
            .output_dims
            .iter()
            .map(|&o| uniform_matrix(batch, o, rng))
            .collect();
        let views: Vec<_> = extras.iter().map(|e| e.view()).collect();
        let (_, cache) = net.forward(input.view(), &views)?;
        if cache.min_abs_preactivation() > kink_margin {
            return Ok(Problem {
                net,
                input,
                extras,
                targets,
            });
        }
    }
}

/// Summary of a batch of gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Gradient check over `cases` random networks, alternating one- and two-headed.
pub fn network_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = crate::rng::SeedStreams::new(seed).stream(0);
    let mut max_err: f64 = 0.0;
    for c in 0..cases {
        // Every tenth case uses the full-width trunk.
        let hidden: Vec<usize> = if c % 10 == 0 {
            NetworkSpec::DEFAULT_HIDDEN.to_vec()
        } else {
            let w = rng.gen_range(3..20);
            vec![w, rng.gen_range(3..20)]
        };
        let p = random_problem(&mut rng, c % 2 == 1, &hidden, 1e-3)?;
        max_err = max_err.max(p.check(DEFAULT_STEP)?.max_rel_error);
    }
    Ok(SuiteReport {
        name: "network",
        cases,
        max_rel_error: max_err,
        tolerance: 1e-6,
    })
}

/// Flips the sign of the largest analytic gradient entry and returns the
/// resulting max relative error; a working checker must report it as large.
pub fn mutation_control(seed: u64) -> Result<f64> {
    let mut rng = crate::rng::SeedStreams::new(seed).stream(0);
    let p = random_problem(&mut rng, true, &[8, 8], 1e-3)?;
    let (_, mut grads) = p.loss(&p.net)?;
    let (mut best_t, mut best_i, mut best) = (0, 0, 0.0);
    for t in 0..grads.0.num_tensors() {
        for (i, g) in grads.0.tensor(t).iter().enumerate() {
            if g.abs() > best {
                (best_t, best_i, best) = (t, i, g.abs());
            }
        }
    }
    let slot = &mut grads.0.tensor_mut(best_t)[best_i];
    *slot = -*slot;
    Ok(p.check_gradients(&grads, DEFAULT_STEP)?.max_rel_error)
}
