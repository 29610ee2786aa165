//! Finite-difference checks of every block and loss at random parameter draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::corpus::{Dataset, QueryRecord, Split, VideoRecord};
use super::train::{batch_objective, BatchItem};
use crate::attention::{
    exp_origin_rows, lorentz_linear, EuclideanBlock, LorentzBlock, LorentzLinear,
};
use crate::diff::{finite_diff_check_with, kink_distance_at, Bound, FdOptions, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{maim_fuse, similarity, HlFormer, Maim, ModelConfig};
use crate::objectives::{div_loss, pop_loss_euclidean, sim_loss, BatchSimMatrix, LossWeights};

pub const GRADCHECK_MODULES: [&str; 10] = [
    "lorentz_linear",
    "lorentz_block",
    "euclidean_block",
    "maim",
    "text_encoder",
    "similarity",
    "sim_loss",
    "div_loss",
    "pop_loss",
    "aggregate_loss",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSettings {
    pub draws: usize,
    pub tolerance: f64,
    /// Draws closer than this to a kink of a non-smooth primitive are redrawn.
    pub kink_margin: f64,
    /// Give up after this many rejected draws per accepted draw.
    pub max_rejections: usize,
    pub fd: FdOptions,
    /// Coordinates sampled per tensor for the whole-model check.
    pub aggregate_per_tensor: usize,
    /// Sequence length of block inputs.
    pub seq_len: usize,
    /// Check a narrow copy of the architecture, see [`check_sized`].
    pub shrink: bool,
    pub seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            draws: 20,
            tolerance: 1e-4,
            kink_margin: 1e-3,
            max_rejections: 200,
            fd: FdOptions {
                h: 2e-5,
                floor: 1e-6,
                fourth_order: true,
                ..FdOptions::default()
            },
            aggregate_per_tensor: 4,
            seq_len: 5,
            shrink: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleGradcheck {
    pub module: String,
    pub draws: usize,
    pub rejected: usize,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst: Option<(f64, f64)>,
    pub passed: bool,
}

impl ModuleGradcheck {
    pub fn line(&self) -> String {
        format!(
            "{:<16} {} draws={} rejected={} coords={} max_rel_error={:.3e} worst={:?}",
            self.module,
            if self.passed { "PASS" } else { "FAIL" },
            self.draws,
            self.rejected,
            self.coords_checked,
            self.max_rel_error,
            self.worst
        )
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

/// Moves every parameter off its structured initial value.
fn perturb(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for t in store.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
}

/// `Σ out ⊙ r` for a fixed random `r`, a generic scalar readout. `r` has
/// entries of size `1/sqrt(len)` so the readout stays O(1).
fn readout<'g>(out: Var<'g>, r: &Tensor) -> Result<Var<'g>> {
    out.mul(out.graph().constant(r.clone())?)?.sum_all()
}

/// Tensors to perturb and the scalar function of them.
type Problem = (Vec<Tensor>, CheckFn, Option<usize>);

type CheckFn = Box<dyn for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>>;

fn boxed<F>(f: F) -> CheckFn
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>> + 'static,
{
    Box::new(f)
}

fn split_params<'a, 'g>(vars: &'a [Var<'g>], n: usize) -> (Bound<'g>, &'a [Var<'g>]) {
    (Bound::from_vars(vars[..n].to_vec()), &vars[n..])
}

fn tiny_dataset(config: &ModelConfig, rng: &mut ChaCha8Rng, videos: usize) -> Dataset {
    let mut vids = Vec::with_capacity(videos);
    let mut queries = Vec::new();
    for v in 0..videos {
        let frames = rng.random_range(config.clip_count..config.clip_count + 4);
        vids.push(VideoRecord {
            id: format!("v{v}"),
            frames: normal(rng, frames, config.video_dim, 1.0),
        });
        for k in 0..2 {
            let words = rng.random_range(2..5);
            queries.push(QueryRecord {
                id: format!("v{v}_q{k}"),
                video: v,
                words: normal(rng, words, config.text_dim, 1.0),
                split: Split::Train,
            });
        }
    }
    Dataset {
        videos: vids,
        queries,
        spec: None,
    }
}

fn readout_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    normal(rng, rows, cols, 1.0 / ((rows * cols) as f64).sqrt())
}

fn build(
    module: &str,
    config: &ModelConfig,
    weights: &LossWeights,
    settings: &GradcheckSettings,
    rng: &mut ChaCha8Rng,
) -> Result<Problem> {
    let d = config.dim;
    let m = settings.seq_len;
    let mut store = ParamStore::new();
    let problem: Problem = match module {
        "lorentz_linear" => {
            let n = config.hyper_dim;
            let layer = LorentzLinear::new(&mut store, "ll", n, n, config.lambda_init, rng)?;
            perturb(&mut store, rng);
            let k = store.len();
            let mut ts = store.tensors().to_vec();
            ts.push(normal(rng, m, n, 0.5));
            let r = readout_weights(rng, m, n + 1);
            let cap = config.max_tangent_norm;
            let f = boxed(move |_g, vars| {
                let (p, x) = split_params(vars, k);
                let x = exp_origin_rows(x[0], cap)?;
                readout(lorentz_linear(&p, x, &layer)?, &r)
            });
            (ts, f, None)
        }
        "lorentz_block" => {
            let mut block = LorentzBlock::new(
                &mut store,
                "lb",
                d,
                config.hyper_dim,
                config.ffn_hidden,
                Some(2.0),
                config.beta_init.max(0.2),
                config.lambda_init,
                rng,
            )?;
            block.max_tangent_norm = config.max_tangent_norm;
            perturb(&mut store, rng);
            let k = store.len();
            let mut ts = store.tensors().to_vec();
            ts.push(normal(rng, m, d, 1.0));
            let r = readout_weights(rng, m, d);
            let f = boxed(move |_g, vars| {
                let (p, x) = split_params(vars, k);
                readout(block.forward(&p, x[0])?, &r)
            });
            (ts, f, None)
        }
        "euclidean_block" => {
            let block = EuclideanBlock::new(
                &mut store,
                "eb",
                d,
                config.heads,
                config.ffn_hidden,
                Some(4.0),
                rng,
            )?;
            perturb(&mut store, rng);
            let k = store.len();
            let mut ts = store.tensors().to_vec();
            ts.push(normal(rng, m, d, 1.0));
            let r = readout_weights(rng, m, d);
            let f = boxed(move |_g, vars| {
                let (p, x) = split_params(vars, k);
                readout(block.forward(&p, x[0])?, &r)
            });
            (ts, f, None)
        }
        "maim" => {
            let maim = Maim::new(&mut store, "maim", d, rng)?;
            perturb(&mut store, rng);
            let k = store.len();
            let count = config.total_blocks().max(2);
            let mut ts = store.tensors().to_vec();
            for _ in 0..count {
                ts.push(normal(rng, m, d, 1.0));
            }
            let r = readout_weights(rng, m, d);
            let tau = config.tau;
            let f = boxed(move |_g, vars| {
                let (p, outs) = split_params(vars, k);
                readout(maim_fuse(&p, outs, &maim, tau)?, &r)
            });
            (ts, f, None)
        }
        "text_encoder" => {
            let mut model = HlFormer::new(config.clone())?;
            perturb(&mut model.params, rng);
            let all = model.params.tensors().to_vec();
            let text: Vec<usize> = model
                .params
                .names()
                .iter()
                .enumerate()
                .filter(|(_, n)| n.starts_with("text."))
                .map(|(i, _)| i)
                .collect();
            let mut ts: Vec<Tensor> = text.iter().map(|&i| all[i].clone()).collect();
            ts.push(normal(rng, m, config.text_dim, 1.0));
            let r = readout_weights(rng, 1, d);
            let f = boxed(move |g, vars| {
                let mut bound = all
                    .iter()
                    .map(|t| g.constant(t.clone()))
                    .collect::<Result<Vec<_>>>()?;
                for (k, &i) in text.iter().enumerate() {
                    bound[i] = vars[k];
                }
                let p = Bound::from_vars(bound);
                readout(model.encode_query(&p, vars[text.len()])?.pooled, &r)
            });
            (ts, f, None)
        }
        "similarity" => {
            let ts = vec![
                normal(rng, 1, d, 1.0),
                normal(rng, m, d, 1.0),
                normal(rng, config.clip_count, d, 1.0),
            ];
            let (af, ac) = (config.alpha_frame, config.alpha_clip);
            let f = boxed(move |_g, v| Ok(similarity(v[0], v[1], v[2], af, ac)?.total));
            (ts, f, None)
        }
        "sim_loss" => {
            let ids = vec![0, 0, 1, 2];
            let ts = vec![normal(rng, 4, 3, 0.5), normal(rng, 4, 3, 0.5)];
            let w = weights.clone();
            let f = boxed(move |_g, v| {
                let frame = v[0].gather_cols(&ids)?;
                let clip = v[1].gather_cols(&ids)?;
                sim_loss(&BatchSimMatrix::new(frame, clip, ids.clone())?, &w)
            });
            (ts, f, None)
        }
        "div_loss" => {
            let ids = vec![0, 0, 1, 1];
            let base = normal(rng, 2, d, 1.0);
            let mut q = normal(rng, 4, d, 0.6);
            for i in 0..4 {
                for j in 0..d {
                    q.data_mut()[i * d + j] += base.data()[(i / 2) * d + j];
                }
            }
            let margin = weights.margin_div;
            let f = boxed(move |_g, v| div_loss(v[0], &ids, margin));
            (vec![q], f, None)
        }
        "pop_loss" => {
            let ts = vec![normal(rng, 4, d, 1.0), normal(rng, 4, d, 1.0)];
            let w = weights.clone();
            let cap = config.max_tangent_norm;
            let f = boxed(move |_g, v| pop_loss_euclidean(v[0], v[1], &w, cap));
            (ts, f, None)
        }
        "aggregate_loss" => {
            let mut model = HlFormer::new(config.clone())?;
            perturb(&mut model.params, rng);
            let data = tiny_dataset(config, rng, 4);
            let items: Vec<BatchItem> = (0..4)
                .map(|v| BatchItem {
                    video: v,
                    queries: vec![2 * v, 2 * v + 1],
                })
                .collect();
            let ts = model.params.tensors().to_vec();
            let w = weights.clone();
            let f = boxed(move |_g, vars| {
                let p = Bound::from_vars(vars.to_vec());
                Ok(batch_objective(&model, &p, &data, &items, &w)?.total)
            });
            (ts, f, Some(settings.aggregate_per_tensor))
        }
        other => {
            return Err(Error::arg(format!(
                "unknown module {other}; expected one of {}",
                GRADCHECK_MODULES.join(", ")
            )))
        }
    };
    Ok(problem)
}

/// Same block counts, heads, temperatures and initial scales with narrow
/// widths, so that a random draw has a fair chance of lying 1e-3 away from
/// every ReLU and max kink.
pub fn check_sized(config: &ModelConfig) -> ModelConfig {
    let heads = config.heads.max(1);
    ModelConfig {
        video_dim: config.video_dim.min(6),
        text_dim: config.text_dim.min(5),
        dim: heads * 2,
        hyper_dim: config.hyper_dim.min(4),
        ffn_hidden: config.ffn_hidden.min(4),
        clip_count: config.clip_count.min(3),
        ..config.clone()
    }
}

/// Checks one module at `settings.draws` accepted random draws.
pub fn gradcheck_module(
    module: &str,
    config: &ModelConfig,
    weights: &LossWeights,
    settings: &GradcheckSettings,
) -> Result<ModuleGradcheck> {
    let stream = GRADCHECK_MODULES
        .iter()
        .position(|m| *m == module)
        .ok_or_else(|| {
            Error::arg(format!(
                "unknown module {module}; expected one of {}",
                GRADCHECK_MODULES.join(", ")
            ))
        })?;
    let sized;
    let config = if settings.shrink {
        sized = check_sized(config);
        &sized
    } else {
        config
    };
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(stream as u64);
    let mut out = ModuleGradcheck {
        module: module.to_string(),
        draws: 0,
        rejected: 0,
        coords_checked: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    while out.draws < settings.draws {
        if out.rejected > settings.max_rejections * settings.draws.max(1) {
            // Not enough smooth draws; reported as a failure.
            out.passed = false;
            return Ok(out);
        }
        let (tensors, f, per_tensor) = build(module, config, weights, settings, &mut rng)?;
        if kink_distance_at(&f, &tensors)? < settings.kink_margin {
            out.rejected += 1;
            continue;
        }
        let fd = FdOptions {
            per_tensor,
            seed: rng.random(),
            ..settings.fd
        };
        let report = finite_diff_check_with(f, &tensors, &fd)?;
        if report.min_kink_distance < settings.kink_margin {
            out.rejected += 1;
            continue;
        }
        out.draws += 1;
        out.coords_checked += report.coords_checked;
        if report.max_rel_error >= out.max_rel_error {
            out.max_rel_error = report.max_rel_error;
            out.worst = report.worst_values;
        }
    }
    out.passed = out.max_rel_error < settings.tolerance;
    Ok(out)
}

/// [`gradcheck_module`] over `modules`, or all of them when empty.
pub fn gradcheck_suite(
    modules: &[&str],
    config: &ModelConfig,
    weights: &LossWeights,
    settings: &GradcheckSettings,
) -> Result<Vec<ModuleGradcheck>> {
    let list: Vec<&str> = if modules.is_empty() {
        GRADCHECK_MODULES.to_vec()
    } else {
        modules.to_vec()
    };
    list.iter()
        .map(|m| gradcheck_module(m, config, weights, settings))
        .collect()
}
