//! Whole-network finite-difference check.
//!
//! Perturbing one parameter by ±h can push a PReLU input or a max-pool
//! winner across its switching point, where the network is not
//! differentiable. Those coordinates are detected by comparing activation
//! patterns and excluded from the error maximum; everything else must
//! agree with the analytic gradient.

use crate::error::{Error, Result};
use crate::gradcheck::relative_error;
use crate::losses::{total_loss, LossConfig};
use crate::network::{Network, NetworkConfig};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct NetworkGradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

pub struct NetworkGradCheckOptions {
    pub net: NetworkConfig,
    pub size: usize,
    pub step: f64,
    pub coords_per_tensor: usize,
    pub seed: u64,
    /// Multiplies the analytic gradient of parameters whose name starts
    /// with this prefix; used to prove the check can fail.
    pub corrupt: Option<(String, f64)>,
}

impl Default for NetworkGradCheckOptions {
    fn default() -> Self {
        NetworkGradCheckOptions {
            net: NetworkConfig {
                channel_scale: 1.0 / 16.0,
                use_hypercolumn: true,
                use_deconv_head: true,
                dropout_prob: 0.5,
                input_multiple: 32,
            },
            size: 32,
            step: 1e-3,
            coords_per_tensor: 6,
            seed: 17,
            corrupt: None,
        }
    }
}

struct Problem {
    image: Tensor<f64>,
    log_albedo: Tensor<f64>,
    log_shading: Tensor<f64>,
    mask: Tensor<f64>,
    loss: LossConfig,
    dropout_seed: u64,
}

impl Problem {
    fn eval(&self, net: &mut Network<f64>, image: &Tensor<f64>) -> Result<(f64, u64)> {
        let (a, s) = net.forward(image, true, &mut Rng::new(self.dropout_seed))?;
        let l = total_loss(&self.log_albedo, &self.log_shading, &a, &s, &self.mask, &self.loss)?;
        Ok((l.value, net.activation_pattern().expect("forward cached")))
    }
}

pub fn check_network_gradient(opts: &NetworkGradCheckOptions) -> Result<NetworkGradCheck> {
    let mut rng = Rng::new(opts.seed);
    let mut net = Network::<f64>::build(&opts.net, &mut rng)?;
    let shape = Shape::new(1, 3, opts.size, opts.size)?;
    let smooth = |rng: &mut Rng| Tensor::from_fn(shape, |_, _, _, _| rng.uniform_in(0.1, 1.0));
    let mut mask = Tensor::full(shape.with_c(1), 1.0);
    mask.data_mut()[5] = 0.0;
    let problem = Problem {
        image: smooth(&mut rng),
        log_albedo: smooth(&mut rng).map(f64::ln),
        log_shading: smooth(&mut rng).map(f64::ln),
        mask,
        loss: LossConfig {
            lambda: 0.5,
            use_gradient_loss: true,
            log_epsilon: 1e-4,
        },
        dropout_seed: opts.seed ^ 0xD0,
    };

    // analytic gradients at the base point
    let (a, s) = net.forward(&problem.image, true, &mut Rng::new(problem.dropout_seed))?;
    let base_pattern = net.activation_pattern().expect("forward cached");
    let l = total_loss(&problem.log_albedo, &problem.log_shading, &a, &s, &problem.mask, &problem.loss)?;
    net.params_mut().zero_grads();
    let d_image = net.backward(&l.d_log_albedo, &l.d_log_shading)?;

    let mut report = NetworkGradCheck {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    let h = opts.step;
    let names: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();
    for name in &names {
        let len = net.params().get(name)?.value.len();
        let factor = match &opts.corrupt {
            Some((prefix, f)) if name.starts_with(prefix.as_str()) => *f,
            _ => 1.0,
        };
        for k in pick(len, opts.coords_per_tensor, &mut rng) {
            let analytic = net.params().get(name)?.grad.data()[k] * factor;
            let orig = net.params().get(name)?.value.data()[k];
            let at = |v: f64, net: &mut Network<f64>| -> Result<(f64, u64)> {
                net.params_mut().get_mut(name)?.value.data_mut()[k] = v;
                problem.eval(net, &problem.image)
            };
            let (plus, pp) = at(orig + h, &mut net)?;
            let (minus, pm) = at(orig - h, &mut net)?;
            at(orig, &mut net)?;
            record(&mut report, format!("{name}[{k}]"), analytic, plus, minus, h, pp, pm, base_pattern)?;
        }
    }
    let mut probe = problem.image.clone();
    for k in pick(probe.len(), opts.coords_per_tensor * 2, &mut rng) {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let (plus, pp) = problem.eval(&mut net, &probe)?;
        probe.data_mut()[k] = orig - h;
        let (minus, pm) = problem.eval(&mut net, &probe)?;
        probe.data_mut()[k] = orig;
        record(&mut report, format!("input[{k}]"), d_image.data()[k], plus, minus, h, pp, pm, base_pattern)?;
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn record(
    report: &mut NetworkGradCheck,
    what: String,
    analytic: f64,
    plus: f64,
    minus: f64,
    h: f64,
    pattern_plus: u64,
    pattern_minus: u64,
    base: u64,
) -> Result<()> {
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite(format!("loss at perturbed {what}")));
    }
    if pattern_plus != base || pattern_minus != base {
        report.skipped_kinks += 1;
        return Ok(());
    }
    report.checked += 1;
    let err = relative_error(analytic, (plus - minus) / (2.0 * h));
    if err > report.max_rel_error {
        report.max_rel_error = err;
        report.worst = what;
    }
    Ok(())
}

fn pick(len: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut idx);
    idx.truncate(count);
    idx.sort_unstable();
    idx
}
