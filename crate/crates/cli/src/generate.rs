//! Deterministic synthetic instances. Instance `k` of a config draws from
//! `rng_for(seed, "instance/<task>", k)` and nothing else.

use std::fmt::Write as _;
use std::str::FromStr;

use mlsa::classification::{distinct_uniform, restrict_class, ClassDescriptor, Covariates};
use mlsa::density::DensityClass;
use mlsa::logistic::{sigmoid, LogisticProblem};
use mlsa::loss::loss_by_name;
use mlsa::seed::{derive_seed, rng_for};
use mlsa::vaw::parse_design;
use mlsa::{LabeledSample, LossModel, PredictionTable};
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::config::{ExperimentConfig, InstanceParams, Task};
use crate::error::{HarnessError, Result, StageExt};

#[derive(Debug, Clone)]
pub enum InstanceData {
    Classification {
        descriptor: ClassDescriptor,
        covariates: Option<Covariates>,
        table: PredictionTable,
        sample: LabeledSample,
        /// Labels flipped away from the planted member.
        flips: usize,
    },
    Regression {
        covariates: Option<Vec<f64>>,
        table: PredictionTable,
        sample: LabeledSample,
        loss: LossModel,
    },
    Density {
        class: DensityClass,
        observations: Vec<usize>,
    },
    Logistic {
        problem: LogisticProblem,
    },
    Vaw {
        x: DMatrix<f64>,
        y: DVector<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub index: usize,
    /// Root seed for any Monte-Carlo stage of this instance.
    pub mc_seed: u64,
    pub data: InstanceData,
}

/// Number of instances a config produces: a single one for file inputs.
pub fn instance_count(config: &ExperimentConfig) -> usize {
    if config.instance.input.is_some() {
        1
    } else {
        config.instances
    }
}

pub fn generate_instance(config: &ExperimentConfig, index: usize) -> Result<Instance> {
    let task = config.task.name();
    let id = format!("{task}-{index:04}");
    let mc_seed = derive_seed(config.seed, &format!("mc/{task}"), index as u64);
    let data = match &config.instance.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            from_text(config, &text).stage("load", &id)?
        }
        None => {
            let mut rng = rng_for(config.seed, &format!("instance/{task}"), index as u64);
            synthesize(config, &mut rng).stage("generate", &id)?
        }
    };
    Ok(Instance {
        id,
        index,
        mc_seed,
        data,
    })
}

fn rows_to_table(x: &DMatrix<f64>) -> mlsa::Result<PredictionTable> {
    PredictionTable::from_rows((0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect())
}

fn from_text(config: &ExperimentConfig, text: &str) -> mlsa::Result<InstanceData> {
    let p = &config.instance;
    match config.task {
        Task::Classification => {
            let (x, y) = parse_design(text)?;
            let table = rows_to_table(&x)?;
            let vc_dim = p.vc_dim.unwrap_or(1);
            Ok(InstanceData::Classification {
                descriptor: ClassDescriptor::Explicit {
                    table: table.clone(),
                    vc_dim,
                },
                covariates: None,
                table,
                sample: LabeledSample::new(y),
                flips: 0,
            })
        }
        Task::Regression => {
            let (x, y) = parse_design(text)?;
            Ok(InstanceData::Regression {
                covariates: None,
                table: rows_to_table(&x)?,
                sample: LabeledSample::new(y),
                loss: loss_by_name(&p.loss, p.m_bound)?,
            })
        }
        Task::Density => Err(mlsa::MlsaError::InvalidParameter(
            "density instances are generated, not loaded".into(),
        )),
        Task::Logistic => Ok(InstanceData::Logistic {
            problem: LogisticProblem::parse(text, p.r, p.big_r)?,
        }),
        Task::Vaw => {
            let (x, y) = parse_design(text)?;
            Ok(InstanceData::Vaw {
                x,
                y: DVector::from_vec(y),
            })
        }
    }
}

fn synthesize(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> mlsa::Result<InstanceData> {
    match config.task {
        Task::Classification => classification(config, rng),
        Task::Regression => regression(config, rng),
        Task::Density => density(config, rng),
        Task::Logistic => logistic(config, rng),
        Task::Vaw => Ok(vaw(config.instance.n, config.instance.d, config.instance.rank, config.instance.noise, rng)),
    }
}

fn sorted_uniform(count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..count).map(|_| rng.random()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Uniform covariates, labels from a random member of the class, then
/// independent flips with probability `noise`.
fn classification(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> mlsa::Result<InstanceData> {
    let p = &config.instance;
    let descriptor = ClassDescriptor::from_str(&p.class)?;
    let (covariates, clean): (Covariates, Vec<bool>) = match &descriptor {
        ClassDescriptor::Thresholds => {
            let xs = distinct_uniform(p.n, rng);
            let a: f64 = rng.random();
            let labels = xs.iter().map(|&x| x >= a).collect();
            (Covariates::Line(xs), labels)
        }
        ClassDescriptor::Intervals => {
            let xs = distinct_uniform(p.n, rng);
            let ends = sorted_uniform(2, rng);
            let labels = xs.iter().map(|&x| ends[0] <= x && x <= ends[1]).collect();
            (Covariates::Line(xs), labels)
        }
        ClassDescriptor::UnionsOfIntervals(k) => {
            let xs = distinct_uniform(p.n, rng);
            let ends = sorted_uniform(2 * k, rng);
            let labels = xs
                .iter()
                .map(|&x| ends.chunks(2).any(|run| run[0] <= x && x <= run[1]))
                .collect();
            (Covariates::Line(xs), labels)
        }
        ClassDescriptor::AxisRectangles => {
            let xs = distinct_uniform(p.n, rng);
            let ys = distinct_uniform(p.n, rng);
            let (bx, by) = (sorted_uniform(2, rng), sorted_uniform(2, rng));
            let labels = xs
                .iter()
                .zip(&ys)
                .map(|(&x, &y)| bx[0] <= x && x <= bx[1] && by[0] <= y && y <= by[1])
                .collect();
            (Covariates::Plane(xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect()), labels)
        }
        ClassDescriptor::Explicit { .. } => {
            return Err(mlsa::MlsaError::InvalidParameter("explicit classes come from input files".into()))
        }
    };
    let mut flips = 0;
    let labels = clean
        .iter()
        .map(|&c| {
            let flip = rng.random_bool(p.noise);
            flips += usize::from(flip);
            f64::from(u8::from(c != flip))
        })
        .collect();
    let table = restrict_class(&descriptor, &covariates)?;
    Ok(InstanceData::Classification {
        descriptor,
        covariates: Some(covariates),
        table,
        sample: LabeledSample::new(labels),
        flips,
    })
}

/// Clamped random linear functions on [0, 1]; responses follow member 0
/// plus uniform noise of amplitude `noise`, clamped to [0, 1].
fn regression(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> mlsa::Result<InstanceData> {
    let p = &config.instance;
    let xs: Vec<f64> = (0..p.n).map(|_| rng.random()).collect();
    let members: Vec<(f64, f64)> = (0..p.hypotheses)
        .map(|_| (rng.random::<f64>(), rng.random_range(-1.0..=1.0)))
        .collect();
    let eval = |(a, b): (f64, f64), x: f64| (a + b * x).clamp(0.0, 1.0);
    let columns = members.iter().map(|&m| xs.iter().map(|&x| eval(m, x)).collect()).collect();
    let ys = xs
        .iter()
        .map(|&x| (eval(members[0], x) + p.noise * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0))
        .collect();
    Ok(InstanceData::Regression {
        covariates: Some(xs),
        table: PredictionTable::with_multiplicity(columns)?,
        sample: LabeledSample::new(ys),
        loss: loss_by_name(&p.loss, p.m_bound)?,
    })
}

/// Exponential weights normalized per member, each entry zeroed with
/// probability `zero_fraction`; observations are drawn from member 0.
fn density(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> mlsa::Result<InstanceData> {
    let p = &config.instance;
    // A class whose members all coincide has no loss spread; redraw it.
    let mut probs = density_members(p, rng);
    while probs.len() > 1 && probs.windows(2).all(|w| w[0] == w[1]) {
        probs = density_members(p, rng);
    }
    let planted = WeightedIndex::new(&probs[0])
        .map_err(|e| mlsa::MlsaError::InvalidParameter(format!("planted density: {e}")))?;
    let observations = (0..p.n).map(|_| planted.sample(rng)).collect();
    Ok(InstanceData::Density {
        class: DensityClass::new(probs)?,
        observations,
    })
}

fn density_members(p: &InstanceParams, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..p.hypotheses)
        .map(|_| {
            let mut w: Vec<f64> = (0..p.support)
                .map(|_| {
                    let zero = p.zero_fraction > 0.0 && rng.random_bool(p.zero_fraction);
                    if zero {
                        0.0
                    } else {
                        rng.sample::<f64, _>(Exp1)
                    }
                })
                .collect();
            if w.iter().all(|&v| v == 0.0) {
                let k = rng.random_range(0..p.support);
                w[k] = 1.0;
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        })
        .collect()
}

fn unit_direction(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Gaussian covariates with per-coordinate scale `R / sqrt(d)`, shrunk into
/// the radius-`R` ball; labels are `+1` with probability `sigma(x^T theta_0)`
/// for a planted `theta_0` on the radius-`r` sphere.
fn logistic(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> mlsa::Result<InstanceData> {
    let p = &config.instance;
    let scale = p.big_r / (p.d as f64).sqrt();
    let theta0: Vec<f64> = unit_direction(p.d, rng).into_iter().map(|v| v * p.r).collect();
    let mut x = DMatrix::zeros(p.n, p.d);
    let mut y = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let mut g: Vec<f64> = (0..p.d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > p.big_r {
            g.iter_mut().for_each(|v| *v *= p.big_r / norm);
        }
        let z: f64 = g.iter().zip(&theta0).map(|(a, b)| a * b).sum();
        y.push(if rng.random_bool(sigmoid(z)) { 1.0 } else { -1.0 });
        for (j, v) in g.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(InstanceData::Logistic {
        problem: LogisticProblem::new(x, y, p.r, p.big_r)?,
    })
}

/// Gaussian design, of rank `rank` when given (product of Gaussian factors),
/// with `y = X beta + noise * N(0, 1)`.
pub fn vaw(n: usize, d: usize, rank: Option<usize>, noise: f64, rng: &mut ChaCha8Rng) -> InstanceData {
    let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = match rank {
        Some(k) if k < d.min(n) => gauss(n, k) * gauss(k, d),
        _ => gauss(n, d),
    };
    let beta = gauss(d, 1);
    let mut y = (&x * beta).column(0).into_owned();
    for v in y.iter_mut() {
        *v += noise * rng.sample::<f64, _>(StandardNormal);
    }
    InstanceData::Vaw { x, y }
}

/// Whitespace-delimited text for the `gen` subcommand. Classification and
/// density write their raw draws; the other tasks write `features... response`
/// rows that the same task can load back as input.
pub fn instance_text(instance: &Instance) -> Vec<(String, String)> {
    let mut out = String::new();
    let num = |v: f64| format!("{v:e}");
    match &instance.data {
        InstanceData::Classification {
            covariates, table, sample, ..
        } => {
            match covariates {
                Some(Covariates::Line(xs)) => {
                    for (x, y) in xs.iter().zip(&sample.responses) {
                        let _ = writeln!(out, "{} {}", num(*x), y);
                    }
                }
                Some(Covariates::Plane(pts)) => {
                    for (p, y) in pts.iter().zip(&sample.responses) {
                        let _ = writeln!(out, "{} {} {}", num(p[0]), num(p[1]), y);
                    }
                }
                None => write_table(&mut out, table, sample),
            }
            vec![(format!("{}.txt", instance.id), out)]
        }
        InstanceData::Regression { table, sample, .. } => {
            write_table(&mut out, table, sample);
            vec![(format!("{}.txt", instance.id), out)]
        }
        InstanceData::Density { class, observations } => {
            for row in class.probs() {
                let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
            let obs: Vec<String> = observations.iter().map(usize::to_string).collect();
            vec![
                (format!("{}.class.txt", instance.id), out),
                (format!("{}.obs.txt", instance.id), obs.join("\n") + "\n"),
            ]
        }
        InstanceData::Logistic { problem } => {
            write_design(&mut out, &problem.x, &problem.y);
            vec![(format!("{}.txt", instance.id), out)]
        }
        InstanceData::Vaw { x, y } => {
            write_design(&mut out, x, y.as_slice());
            vec![(format!("{}.txt", instance.id), out)]
        }
    }
}

fn write_table(out: &mut String, table: &PredictionTable, sample: &LabeledSample) {
    for i in 0..table.n_samples() {
        let mut line: Vec<String> = table.row(i).iter().map(|v| format!("{v:e}")).collect();
        line.push(format!("{:e}", sample.responses[i]));
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn write_design(out: &mut String, x: &DMatrix<f64>, y: &[f64]) {
    for i in 0..x.nrows() {
        let mut line: Vec<String> = x.row(i).iter().map(|v| format!("{v:e}")).collect();
        line.push(format!("{:e}", y[i]));
        let _ = writeln!(out, "{}", line.join(" "));
    }
}
