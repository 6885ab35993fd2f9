use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::config::{halve, ModelConfig, Pooling, KERNEL, PADDING, STRIDE};
use super::layers::{dropout, magnitude_max_pool, magnitude_softmax};
use super::NnError;
use crate::ctensor::{BatchStats, ComplexTensor, Graph, Var};
use crate::dsp::CqtConfig;

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: ComplexTensor,
}

/// What the backward pass differentiates.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// mean cross-entropy of the magnitude softmax against class targets
    CrossEntropy(&'a [usize]),
    /// sum over the batch of `|logit[b, class]|`
    LogitMagnitude(usize),
    /// forward only
    None,
}

pub struct PassOptions<'a> {
    /// normalize with batch statistics (training) instead of running ones
    pub batch_stats: bool,
    /// dropout is active iff a generator is supplied
    pub dropout: Option<&'a mut dyn RngCore>,
    pub param_grads: bool,
    pub input_grad: bool,
}

impl PassOptions<'_> {
    pub fn eval() -> Self {
        Self {
            batch_stats: false,
            dropout: None,
            param_grads: false,
            input_grad: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PassResult {
    /// complex logits `[B, 2]`
    pub logits: ComplexTensor,
    pub objective: Option<f64>,
    /// one `(∂/∂Re, ∂/∂Im)` pair per parameter, in parameter order
    pub param_grads: Vec<(Vec<f64>, Vec<f64>)>,
    pub input_grad: Option<(Vec<f64>, Vec<f64>)>,
    /// per batch-norm layer, when batch statistics were used
    pub batch_stats: Vec<BatchStats>,
}

/// The complex CQT classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    cqt: CqtConfig,
    params: Vec<Param>,
    /// running batch-norm statistics, one per conv block, once any exist
    running: Option<Vec<RunningStats>>,
}

/// Running per-channel mean and mean squared deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub var: Vec<f64>,
}

const ALPHA: usize = 0;
const C: usize = 1;

fn conv_w(i: usize) -> usize {
    2 + 4 * i
}

fn lin_w(j: usize) -> usize {
    18 + 2 * j
}

fn randn<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> ComplexTensor {
    // Var|w| = 1/fan_in split evenly between the two planes
    let sd = (0.5 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, sd).expect("positive sd");
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| dist.sample(rng)).collect();
    let im = (0..n).map(|_| dist.sample(rng)).collect();
    ComplexTensor::new(shape, re, im).expect("finite init")
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, cqt: CqtConfig, rng: &mut R) -> Result<Self, NnError> {
        config.validate()?;
        cqt.validate().map_err(|e| NnError::InvalidConfig(e.to_string()))?;
        let mut params = Vec::new();
        let mut push = |name: String, value: ComplexTensor| params.push(Param { name, value });
        push("logcomp.alpha".into(), ComplexTensor::scalar(config.log_compress.alpha, 0.0));
        push("logcomp.c".into(), ComplexTensor::scalar(config.log_compress.c, 0.0));
        let mut cin = 1;
        for (i, &cout) in config.conv_channels.iter().enumerate() {
            push(format!("conv{i}.weight"), randn(&[cout, cin, KERNEL, KERNEL], cin * KERNEL * KERNEL, rng));
            push(format!("conv{i}.bias"), ComplexTensor::zeros(&[cout]));
            push(format!("bn{i}.gamma"), ComplexTensor::filled(&[cout], 1.0, 0.0));
            push(format!("bn{i}.beta"), ComplexTensor::zeros(&[cout]));
            cin = cout;
        }
        let (f_out, _) = config.conv_output(cqt.n_bins, 16);
        let mut din = cin * f_out;
        for (j, &dout) in config.linear_widths.iter().enumerate() {
            push(format!("lin{j}.weight"), randn(&[dout, din], din, rng));
            push(format!("lin{j}.bias"), ComplexTensor::zeros(&[dout]));
            din = dout;
        }
        Ok(Self {
            config,
            cqt,
            params,
            running: None,
        })
    }

    /// Reassembles a model from stored parts, checking every shape.
    pub fn from_parts(
        config: ModelConfig,
        cqt: CqtConfig,
        params: Vec<Param>,
        running: Option<Vec<RunningStats>>,
    ) -> Result<Self, NnError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let template = Self::new(config, cqt, &mut rng)?;
        if params.len() != template.params.len() {
            return Err(NnError::Inconsistent(format!(
                "expected {} parameters, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (p, t) in params.iter().zip(&template.params) {
            if p.name != t.name || p.value.shape() != t.value.shape() {
                return Err(NnError::Inconsistent(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    p.name,
                    p.value.shape(),
                    t.name,
                    t.value.shape()
                )));
            }
        }
        if let Some(r) = &running {
            let ok = r.len() == 4
                && r.iter().zip(&template.config.conv_channels).all(|(s, &c)| {
                    s.mean_re.len() == c && s.mean_im.len() == c && s.var.len() == c
                });
            if !ok {
                return Err(NnError::Inconsistent("running statistics do not match the conv channels".into()));
            }
        }
        Ok(Self {
            params,
            running,
            ..template
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cqt(&self) -> &CqtConfig {
        &self.cqt
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Vec<&mut ComplexTensor> {
        self.params.iter_mut().map(|p| &mut p.value).collect()
    }

    pub fn running_stats(&self) -> Option<&[RunningStats]> {
        self.running.as_deref()
    }

    /// Number of complex trainable entries.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn alpha(&self) -> f64 {
        self.params[ALPHA].value.re()[0]
    }

    pub fn c(&self) -> f64 {
        self.params[C].value.re()[0]
    }

    /// Stores gradients from a pass onto the parameters.
    pub fn set_grads(&mut self, grads: Vec<(Vec<f64>, Vec<f64>)>) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            p.value.grad = Some(g);
        }
    }

    /// Keeps α positive and the scalar parameters real after an update.
    pub fn enforce_constraints(&mut self) {
        let floor = 1e-6;
        let a = &mut self.params[ALPHA].value;
        a.re_mut()[0] = a.re()[0].max(floor);
        a.im_mut()[0] = 0.0;
        self.params[C].value.im_mut()[0] = 0.0;
    }

    /// Folds batch statistics into the running ones; the first batch seeds them.
    pub fn update_running(&mut self, stats: &[BatchStats]) {
        let m = self.config.bn_momentum;
        match &mut self.running {
            None => {
                self.running = Some(
                    stats
                        .iter()
                        .map(|s| RunningStats {
                            mean_re: s.mean_re.clone(),
                            mean_im: s.mean_im.clone(),
                            var: s.var.clone(),
                        })
                        .collect(),
                )
            }
            Some(run) => {
                for (r, s) in run.iter_mut().zip(stats) {
                    let ema = |a: &mut Vec<f64>, b: &[f64]| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x = (1.0 - m) * *x + m * y;
                        }
                    };
                    ema(&mut r.mean_re, &s.mean_re);
                    ema(&mut r.mean_im, &s.mean_im);
                    ema(&mut r.var, &s.var);
                }
            }
        }
    }

    pub fn set_running(&mut self, running: Vec<RunningStats>) {
        self.running = Some(running);
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), NnError> {
        if shape.len() != 4 || shape[1] != 1 || shape[2] != self.cqt.n_bins || shape[0] == 0 {
            return Err(NnError::InputShape {
                expected_bins: self.cqt.n_bins,
                shape: shape.to_vec(),
            });
        }
        if shape[2] < 16 || shape[3] < 16 {
            return Err(NnError::InputTooSmall { f: shape[2], t: shape[3] });
        }
        Ok(())
    }

    /// Records the forward pass for `x: [B, 1, F, T]` on `g`, returning logits `[B, 2]`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        x: Var,
        params: &[Var],
        batch_stats: bool,
        mut rng: Option<&mut dyn RngCore>,
        stats_out: &mut Vec<BatchStats>,
    ) -> Result<Var, NnError> {
        self.check_input(g.shape(x))?;
        let running = match (batch_stats, &self.running) {
            (true, _) => None,
            (false, Some(r)) => Some(r),
            (false, None) => return Err(NnError::NoRunningStats),
        };
        let cfg = &self.config;
        let mut h = g.log_compress(x, params[ALPHA], params[C], cfg.log_compress.epsilon)?;
        for i in 0..4 {
            let w = conv_w(i);
            h = g.conv2d(h, params[w], Some(params[w + 1]), STRIDE, PADDING)?;
            h = g.crelu(h)?;
            let fixed = running.map(|r| (&r[i].mean_re[..], &r[i].mean_im[..], &r[i].var[..]));
            let (y, stats) = g.batchnorm(h, params[w + 2], params[w + 3], cfg.bn_eps, fixed)?;
            stats_out.extend(stats);
            h = y;
        }
        let s = g.shape(h).to_vec();
        h = g.reshape(h, &[s[0], s[1] * s[2], s[3]])?;
        for j in 0..3 {
            let w = lin_w(j);
            h = g.linear_time(h, params[w], Some(params[w + 1]))?;
            h = g.crelu(h)?;
            h = dropout(g, h, cfg.dropout_p, rng.as_deref_mut())?;
        }
        let logits = match cfg.pooling {
            Pooling::Mean => g.mean_last_axis(h)?,
            Pooling::MagnitudeMax => magnitude_max_pool(g, h)?,
        };
        Ok(logits)
    }

    /// One forward pass with an optional backward pass for `objective`.
    pub fn run(&self, input: &ComplexTensor, objective: Objective<'_>, opts: PassOptions<'_>) -> Result<PassResult, NnError> {
        let mut g = Graph::new();
        let x = if opts.input_grad {
            g.leaf(input.clone().with_grad())
        } else {
            g.constant(input.clone())
        };
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                let t = p.value.clone();
                if opts.param_grads {
                    g.leaf(t.with_grad())
                } else {
                    g.constant(t)
                }
            })
            .collect();
        let mut stats = Vec::new();
        let logits = self.forward_graph(&mut g, x, &params, opts.batch_stats, opts.dropout, &mut stats)?;
        let batch = g.shape(logits)[0];
        let loss = match objective {
            Objective::None => None,
            Objective::CrossEntropy(targets) => {
                let mags = g.magnitude(logits)?;
                Some(g.softmax_cross_entropy(mags, targets)?)
            }
            Objective::LogitMagnitude(class) => {
                let mags = g.magnitude(logits)?;
                let mut pick = ComplexTensor::zeros(&[batch, 2]);
                for b in 0..batch {
                    pick.re_mut()[b * 2 + class.min(1)] = 1.0;
                }
                let p = g.constant(pick);
                let sel = g.mul(mags, p)?;
                Some(g.sum(sel)?)
            }
        };
        let mut result = PassResult {
            logits: g.value(logits).clone(),
            objective: loss.map(|l| g.value(l).re()[0]),
            param_grads: Vec::new(),
            input_grad: None,
            batch_stats: stats,
        };
        if let Some(l) = loss {
            if opts.param_grads || opts.input_grad {
                g.backward(l)?;
                if opts.param_grads {
                    result.param_grads = params
                        .iter()
                        .zip(&self.params)
                        .map(|(&v, p)| {
                            g.take_grad(v)
                                .unwrap_or_else(|| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                        })
                        .collect();
                }
                if opts.input_grad {
                    let n = input.len();
                    result.input_grad = Some(g.take_grad(x).unwrap_or_else(|| (vec![0.0; n], vec![0.0; n])));
                }
            }
        }
        Ok(result)
    }

    /// Eval-mode logits and magnitude-softmax scores `[B, 2]` (row-major).
    pub fn predict(&self, input: &ComplexTensor) -> Result<(ComplexTensor, Vec<f64>), NnError> {
        let r = self.run(input, Objective::None, PassOptions::eval())?;
        let scores = magnitude_softmax(&r.logits);
        Ok((r.logits, scores))
    }

    /// Frequency extent after the conv stack for this model's input bins.
    pub fn folded_bins(&self) -> usize {
        (0..4).fold(self.cqt.n_bins, |a, _| halve(a))
    }
}
