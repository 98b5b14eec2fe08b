use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    attack_p, attack_r, bmia_from_scores, lira_offline, model_score, qmia_attack, qmia_levels,
    read_decisions, train_reference_model, write_decisions, write_score_cache, DecisionRow,
    ScoreRow,
};
use crate::data::{load_csv, make_synthetic_classification, split_four_way, LabeledDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::{write_report, AttackReport};
use crate::laplace::{
    default_prior_grid, fit_last_layer_posterior, load_posterior, save_posterior,
    tune_prior_precision, Likelihood, PreparedPosterior, TuneMode,
};
use crate::nn::{
    load_model, loss_and_grad, save_model, sgd_train, weight_init, MlpArchitecture, MlpModel,
    Task, TrainConfig,
};
use crate::numkit::{derive_seed, mean_std, Matrix, RngState};
use crate::pipeline::config::{AttackKind, DatasetConfig, ExperimentConfig, PriorConfig, QmiaConfig};
use crate::pipeline::{write_manifest, StageFiles};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Data,
    Train,
    LaplaceFit,
    Attack,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Data,
        Stage::Train,
        Stage::LaplaceFit,
        Stage::Attack,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Train => "train",
            Stage::LaplaceFit => "laplace-fit",
            Stage::Attack => "attack",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

const CONFIG_ECHO: &str = "config.toml";
const SPLIT_FILE: &str = "split.json";
const TARGET_MODEL: &str = "models/target.json";
const QMIA_MODEL: &str = "models/qmia.json";
const SUBSETS_FILE: &str = "models/reference_subsets.json";
const TRAIN_TIMING: &str = "timing/train.json";
pub const METRICS_FILE: &str = "metrics.json";
const LAPLACE_TIMING: &str = "timing/laplace.json";
const ATTACK_TIMING: &str = "timing/attack.json";
const POSTERIOR_FILE: &str = "posterior.json";
const SCORES_FILE: &str = "scores.csv";
const POPULATION_SCORES_FILE: &str = "population_scores.csv";
const DECISIONS_FILE: &str = "decisions.csv";
const REPORT_FILE: &str = "report.csv";

fn reference_path(i: usize) -> String {
    format!("models/reference_{i}.json")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct TrainTiming {
    target_seconds: f64,
    reference_seconds: Vec<f64>,
    qmia_seconds: f64,
}

/// Accuracies of the trained models, written to `metrics.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub target_train_accuracy: f64,
    pub target_test_accuracy: f64,
    /// On each reference model's own training half.
    pub reference_train_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct LaplaceTiming {
    fit_seconds: f64,
    prior_precision: f64,
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Generates or reads the configured dataset.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<LabeledDataset> {
    match cfg {
        DatasetConfig::Synthetic { .. } => {
            make_synthetic_classification(&cfg.synthetic_spec().expect("synthetic"))
        }
        DatasetConfig::Csv { path, schema } => load_csv(path, schema),
    }
}

/// Everything a stage may need, loaded lazily from the output directory.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    data: LabeledDataset,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig, out: &Path) -> Result<Self> {
        Ok(Context {
            cfg,
            out: out.to_path_buf(),
            data: load_dataset(&cfg.dataset)?,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn n_classes(&self) -> Result<usize> {
        self.data
            .labels
            .n_classes()
            .ok_or_else(|| Error::Config("membership experiments need class labels".into()))
    }

    fn architecture(&self) -> Result<MlpArchitecture> {
        let mut widths = vec![self.data.dims()];
        widths.extend(&self.cfg.model.hidden);
        widths.push(self.n_classes()?);
        MlpArchitecture::new(widths, self.cfg.model.activation, Task::Classification)
    }

    fn split(&self) -> Result<SplitPlan> {
        read_json(&self.path(SPLIT_FILE))
    }

    fn model(&self, rel: &str) -> Result<MlpModel> {
        load_model(self.path(rel))?.to_model()
    }

    fn runs(&self, k: AttackKind) -> bool {
        self.cfg.attacks.run.contains(&k)
    }

    /// Reference models the configured attacks consume.
    fn n_references(&self) -> usize {
        if self.runs(AttackKind::AttackR) || self.runs(AttackKind::Lira) {
            self.cfg.reference.n_models.max(1)
        } else if self.runs(AttackKind::Bmia) {
            1
        } else {
            0
        }
    }

    fn timing(&self, seconds: f64) -> f64 {
        if self.cfg.report.timing {
            seconds
        } else {
            0.0
        }
    }
}

fn stage_data(ctx: &Context, files: &mut StageFiles) -> Result<()> {
    files.write(ctx.path(CONFIG_ECHO), ctx.cfg.to_toml().as_bytes())?;
    let plan = split_four_way(ctx.data.len(), ctx.cfg.split.fractions, ctx.cfg.split.seed)?;
    files.write(ctx.path(SPLIT_FILE), &to_json(&plan))
}

/// Trains a quantile model on target scores of `train`, one output per
/// level. Targets are standardized for training and the scaling is folded
/// back into the last layer, so the model predicts raw scores.
fn train_quantile_model(
    x: &Matrix,
    scores: &[f64],
    levels: &[f64],
    q: &QmiaConfig,
    weight_decay: f64,
) -> Result<MlpModel> {
    let (mu, sd) = mean_std(scores);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let z: Vec<f64> = scores.iter().map(|s| (s - mu) / sd).collect();
    let mut widths = vec![x.cols()];
    widths.extend(&q.hidden);
    widths.push(levels.len());
    let arch = MlpArchitecture::new(
        widths,
        crate::nn::Activation::Relu,
        Task::Quantile(levels.to_vec()),
    )?;
    let init = weight_init(&arch, q.init_seed)?;
    let data = LabeledDataset::new(x.clone(), crate::data::Labels::Real(z))?;
    let cfg = TrainConfig {
        weight_decay,
        ..q.train.clone()
    };
    let mut rng = RngState::new(q.train.seed).substream("qmia-train", &[]);
    let mut model = sgd_train(&init, &data, &cfg, &mut rng)?;
    let last = model.n_layers() - 1;
    model.weights[last] = model.weights[last].scale(sd);
    for b in model.biases[last].iter_mut() {
        *b = *b * sd + mu;
    }
    Ok(model)
}

fn target_scores(model: &MlpModel, data: &LabeledDataset) -> Result<Vec<f64>> {
    let y = data.labels.classes().expect("class labels");
    (0..data.len())
        .into_par_iter()
        .map(|i| model_score(model, data.row(i), y[i]))
        .collect()
}

fn stage_train(ctx: &Context, files: &mut StageFiles) -> Result<()> {
    let split = ctx.split()?;
    let arch = ctx.architecture()?;
    let cfg = ctx.cfg;
    let mut timing = TrainTiming::default();
    let mut metrics = TrainMetrics::default();

    let target_data = ctx.data.subset(&split.target_train);
    let start = Instant::now();
    let init = weight_init(&arch, derive_seed(cfg.target.seed, "target-init", &[]))?;
    let mut rng = RngState::new(cfg.target.seed).substream("target-train", &[]);
    let target = sgd_train(&init, &target_data, &cfg.target, &mut rng)?;
    timing.target_seconds = ctx.timing(start.elapsed().as_secs_f64());
    metrics.target_train_accuracy = target.accuracy(&target_data)?;
    metrics.target_test_accuracy = target.accuracy(&ctx.data.subset(&split.target_test))?;
    save_model(ctx.path(TARGET_MODEL), &target, Some(&cfg.target), Some(cfg.target.seed))?;
    files.record(ctx.path(TARGET_MODEL));

    let population = ctx.data.subset(&split.population);
    let mut subsets = Vec::new();
    for i in 0..ctx.n_references() {
        let seed = cfg.reference.base_seed.wrapping_add(i as u64);
        let start = Instant::now();
        let (model, subset) = train_reference_model(&population, &arch, &cfg.reference.train, seed)
            .map_err(|e| e.in_stage(&format!("reference model {i}")))?;
        timing.reference_seconds.push(ctx.timing(start.elapsed().as_secs_f64()));
        metrics.reference_train_accuracy.push(model.accuracy(&population.subset(&subset))?);
        save_model(ctx.path(&reference_path(i)), &model, Some(&cfg.reference.train), Some(seed))?;
        files.record(ctx.path(&reference_path(i)));
        subsets.push(subset);
    }
    files.write(ctx.path(SUBSETS_FILE), &to_json(&subsets))?;

    if ctx.runs(AttackKind::Qmia) {
        let q = cfg.attacks.qmia.as_ref().expect("validated");
        let levels = qmia_levels(&cfg.attacks.alphas);
        let start = Instant::now();
        let pop_scores = target_scores(&target, &population)?;
        let holdout = ctx.data.subset(&split.holdout);
        let hold_scores = target_scores(&target, &holdout)?;
        let mut best: Option<(f64, MlpModel)> = None;
        for &wd in &q.weight_decays {
            let m = train_quantile_model(&population.features, &pop_scores, &levels, q, wd)?;
            let loss = if holdout.is_empty() {
                0.0
            } else {
                loss_and_grad(&m, &holdout.features, &crate::data::Labels::Real(hold_scores.clone()), 0.0)?.0
            };
            if best.as_ref().is_none_or(|(l, _)| loss < *l) {
                best = Some((loss, m));
            }
        }
        timing.qmia_seconds = ctx.timing(start.elapsed().as_secs_f64());
        let model = best.expect("non-empty weight decay grid").1;
        save_model(ctx.path(QMIA_MODEL), &model, Some(&q.train), Some(q.train.seed))?;
        files.record(ctx.path(QMIA_MODEL));
    }
    files.write(ctx.path(METRICS_FILE), &to_json(&metrics))?;
    files.write(ctx.path(TRAIN_TIMING), &to_json(&timing))
}

/// Reads the accuracies written by the train stage.
pub fn read_train_metrics(out: &Path) -> Result<TrainMetrics> {
    read_json(&out.join(METRICS_FILE))
}

fn stage_laplace(ctx: &Context, files: &mut StageFiles) -> Result<()> {
    let Some(lc) = &ctx.cfg.laplace else {
        return Ok(());
    };
    if !ctx.runs(AttackKind::Bmia) {
        return Ok(());
    }
    let split = ctx.split()?;
    let subsets: Vec<Vec<usize>> = read_json(&ctx.path(SUBSETS_FILE))?;
    let first = subsets
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reference model was trained".into()))?;
    let reference = ctx.model(&reference_path(0))?;
    let fit_data = ctx.data.subset(&split.population).subset(first);
    let start = Instant::now();
    let lam = match &lc.prior {
        PriorConfig::Fixed { value } => *value,
        PriorConfig::MarginalLikelihood { grid } => tune_prior_precision(
            &reference,
            &fit_data,
            lc.curvature,
            grid.as_deref().unwrap_or(&default_prior_grid()),
            Likelihood::Categorical,
            &TuneMode::MarginalLikelihood,
        )?,
        PriorConfig::Validation {
            grid,
            n_samples,
            seed,
        } => tune_prior_precision(
            &reference,
            &fit_data,
            lc.curvature,
            grid.as_deref().unwrap_or(&default_prior_grid()),
            Likelihood::Categorical,
            &TuneMode::Validation {
                data: ctx.data.subset(&split.holdout),
                n_samples: *n_samples,
                seed: *seed,
            },
        )?,
    };
    let posterior =
        fit_last_layer_posterior(&reference, &fit_data, lc.curvature, lam, Likelihood::Categorical)?;
    let timing = LaplaceTiming {
        fit_seconds: ctx.timing(start.elapsed().as_secs_f64()),
        prior_precision: lam,
    };
    save_posterior(ctx.path(POSTERIOR_FILE), &posterior)?;
    files.record(ctx.path(POSTERIOR_FILE));
    files.write(ctx.path(LAPLACE_TIMING), &to_json(&timing))
}

struct Queries {
    data: LabeledDataset,
    is_member: Vec<bool>,
}

fn queries(ctx: &Context, split: &SplitPlan) -> Queries {
    let mut idx = split.target_train.clone();
    idx.extend(&split.target_test);
    let mut is_member = vec![true; split.target_train.len()];
    is_member.extend(std::iter::repeat_n(false, split.target_test.len()));
    Queries {
        data: ctx.data.subset(&idx),
        is_member,
    }
}

fn stage_attack(ctx: &Context, files: &mut StageFiles) -> Result<()> {
    let cfg = ctx.cfg;
    let alphas = &cfg.attacks.alphas;
    let split = ctx.split()?;
    let target = ctx.model(TARGET_MODEL)?;
    let q = queries(ctx, &split);
    let labels = q.data.labels.classes().expect("class labels").to_vec();
    let nq = q.data.len();
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();

    let start = Instant::now();
    let s0 = target_scores(&target, &q.data)?;
    let target_time = start.elapsed().as_secs_f64();
    let mut score_rows: Vec<ScoreRow> = (0..nq)
        .map(|i| ScoreRow {
            query_id: i,
            model_id: "target".into(),
            score: s0[i],
        })
        .collect();

    let mut per_attack: Vec<(AttackKind, Vec<f64>, Vec<Option<f64>>)> = Vec::new();
    for &kind in &cfg.attacks.run {
        let start = Instant::now();
        let decisions = match kind {
            AttackKind::AttackP => {
                let pop = target_scores(&target, &ctx.data.subset(&split.population))?;
                let rows: Vec<(f64, Option<f64>)> = (0..nq)
                    .map(|i| attack_p(&pop, s0[i], alphas).map(|d| (d.statistic, d.p_value)))
                    .collect::<Result<_>>()?;
                let pop_rows: Vec<ScoreRow> = pop
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| ScoreRow {
                        query_id: i,
                        model_id: "target".into(),
                        score: s,
                    })
                    .collect();
                write_score_cache(ctx.path(POPULATION_SCORES_FILE), &pop_rows)?;
                files.record(ctx.path(POPULATION_SCORES_FILE));
                rows
            }
            AttackKind::AttackR | AttackKind::Lira => {
                let n = cfg.reference.n_models;
                let refs: Vec<MlpModel> =
                    (0..n).map(|i| ctx.model(&reference_path(i))).collect::<Result<_>>()?;
                let ref_scores: Vec<Vec<f64>> = (0..nq)
                    .into_par_iter()
                    .map(|i| {
                        refs.iter()
                            .map(|m| model_score(m, q.data.row(i), labels[i]))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?;
                if !score_rows.iter().any(|r| r.model_id != "target") {
                    for (i, row) in ref_scores.iter().enumerate() {
                        for (m, &s) in row.iter().enumerate() {
                            score_rows.push(ScoreRow {
                                query_id: i,
                                model_id: format!("reference_{m}"),
                                score: s,
                            });
                        }
                    }
                }
                (0..nq)
                    .map(|i| {
                        let d = if kind == AttackKind::AttackR {
                            attack_r(&ref_scores[i], s0[i], alphas)?
                        } else {
                            lira_offline(&ref_scores[i], s0[i], alphas)?
                        };
                        Ok((d.statistic, d.p_value))
                    })
                    .collect::<Result<_>>()?
            }
            AttackKind::Bmia => {
                let b = cfg.attacks.bmia.as_ref().expect("validated");
                let reference = ctx.model(&reference_path(0))?;
                let posterior = PreparedPosterior::new(&load_posterior(ctx.path(POSTERIOR_FILE))?)?;
                let root = RngState::new(b.seed);
                (0..nq)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = root.substream("bmia", &[i as u64]);
                        let scores = posterior.sample_scores(
                            &reference,
                            q.data.row(i),
                            labels[i],
                            b.n_samples,
                            b.mode,
                            &mut rng,
                        )?;
                        let d = bmia_from_scores(s0[i], &scores, alphas)?;
                        Ok((d.statistic, d.p_value))
                    })
                    .collect::<Result<_>>()?
            }
            AttackKind::Qmia => {
                let model = ctx.model(QMIA_MODEL)?;
                (0..nq)
                    .map(|i| {
                        let d = qmia_attack(&model, q.data.row(i), s0[i], alphas)?;
                        Ok((d.statistic, d.p_value))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let seconds = start.elapsed().as_secs_f64() + target_time;
        timings.insert(kind.name().to_string(), ctx.timing(seconds));
        let (stats, ps) = decisions.into_iter().unzip();
        per_attack.push((kind, stats, ps));
    }

    write_score_cache(ctx.path(SCORES_FILE), &score_rows)?;
    files.record(ctx.path(SCORES_FILE));
    let mut rows = Vec::new();
    for (kind, stats, ps) in &per_attack {
        for i in 0..nq {
            rows.push(DecisionRow {
                query_id: i,
                attack: kind.name().to_string(),
                statistic: stats[i],
                p_value: ps[i],
                is_member: q.is_member[i],
            });
        }
    }
    write_decisions(ctx.path(DECISIONS_FILE), &rows)?;
    files.record(ctx.path(DECISIONS_FILE));
    files.write(ctx.path(ATTACK_TIMING), &to_json(&timings))
}

fn stage_evaluate(ctx: &Context, files: &mut StageFiles) -> Result<Vec<AttackReport>> {
    let cfg = ctx.cfg;
    let rows = read_decisions(ctx.path(DECISIONS_FILE))?;
    let train: TrainTiming = read_json(&ctx.path(TRAIN_TIMING))?;
    let attack_t: BTreeMap<String, f64> = read_json(&ctx.path(ATTACK_TIMING))?;
    let laplace: LaplaceTiming = if ctx.path(LAPLACE_TIMING).exists() {
        read_json(&ctx.path(LAPLACE_TIMING))?
    } else {
        LaplaceTiming::default()
    };
    let n_refs = cfg.reference.n_models.min(train.reference_seconds.len());
    let mut reports = Vec::new();
    for &kind in &cfg.attacks.run {
        let name = kind.name();
        let (stats, members): (Vec<f64>, Vec<bool>) = rows
            .iter()
            .filter(|r| r.attack == name)
            .map(|r| (r.statistic, r.is_member))
            .unzip();
        // reference-model cost is charged in full to every attack that uses it
        let train_seconds = match kind {
            AttackKind::AttackP => 0.0,
            AttackKind::AttackR | AttackKind::Lira => {
                train.reference_seconds[..n_refs].iter().sum()
            }
            AttackKind::Bmia => {
                train.reference_seconds.first().copied().unwrap_or(0.0) + laplace.fit_seconds
            }
            AttackKind::Qmia => train.qmia_seconds,
        };
        let attack_seconds = attack_t.get(name).copied().unwrap_or(0.0);
        reports.push(AttackReport::from_statistics(
            name,
            &stats,
            &members,
            train_seconds,
            attack_seconds,
        )?);
    }
    for p in write_report(&reports, ctx.path(REPORT_FILE))? {
        files.record(p);
    }
    Ok(reports)
}

/// Runs one stage, reading earlier stages' outputs from `out`. On failure
/// the files this stage wrote are renamed with a `.partial` suffix and the
/// error names the stage.
pub fn run_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    stage: Stage,
) -> Result<Option<Vec<AttackReport>>> {
    let ctx = Context::new(cfg, out).map_err(|e| e.in_stage(Stage::Data.name()))?;
    run_stage_in(&ctx, stage)
}

fn run_stage_in(ctx: &Context, stage: Stage) -> Result<Option<Vec<AttackReport>>> {
    let mut files = StageFiles::default();
    let result = match stage {
        Stage::Data => stage_data(ctx, &mut files).map(|_| None),
        Stage::Train => stage_train(ctx, &mut files).map(|_| None),
        Stage::LaplaceFit => stage_laplace(ctx, &mut files).map(|_| None),
        Stage::Attack => stage_attack(ctx, &mut files).map(|_| None),
        Stage::Evaluate => stage_evaluate(ctx, &mut files).map(Some),
    };
    match result {
        Ok(r) => {
            write_manifest(&ctx.out)?;
            Ok(r)
        }
        Err(e) => {
            files.mark_partial();
            Err(e.in_stage(stage.name()))
        }
    }
}

/// Full pipeline: split, train target and references, fit the posterior,
/// score every configured attack on the query set and write the reports.
/// With `report.timing = false` every output byte is a function of the config.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AttackReport>> {
    cfg.validate()?;
    let ctx = Context::new(cfg, out).map_err(|e| e.in_stage(Stage::Data.name()))?;
    let mut reports = None;
    for stage in Stage::ALL {
        reports = run_stage_in(&ctx, stage)?;
    }
    Ok(reports.expect("evaluate stage returns reports"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::*;

    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::desk_scale(5);
        c.dataset = DatasetConfig::Synthetic {
            n: 200,
            dims: 4,
            classes: 3,
            separation: 3.0,
            cluster_spread: 1.0,
            seed: 1,
        };
        c.model.hidden = vec![8];
        c.target.epochs = 3;
        c.target.milestone_epochs = vec![];
        c.reference.train = c.target.clone();
        c.reference.n_models = 2;
        c.attacks.bmia.as_mut().unwrap().n_samples = 16;
        let q = c.attacks.qmia.as_mut().unwrap();
        q.hidden = vec![4];
        q.train.epochs = 2;
        q.train.milestone_epochs = vec![];
        c.report.timing = false;
        c
    }

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nope".parse::<Stage>().is_err());
    }

    #[test]
    fn tiny_pipeline_runs_and_resumes() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let reports = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(reports.len(), cfg.attacks.run.len());
        let report = std::fs::read(dir.path().join(REPORT_FILE)).unwrap();
        let again = run_stage(&cfg, dir.path(), Stage::Evaluate).unwrap().unwrap();
        assert_eq!(again, reports);
        assert_eq!(report, std::fs::read(dir.path().join(REPORT_FILE)).unwrap());
        assert!(dir.path().join(crate::pipeline::MANIFEST_NAME).exists());
    }

    #[test]
    fn missing_checkpoint_names_stage() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let err = run_stage(&cfg, dir.path(), Stage::Train).unwrap_err();
        assert!(err.to_string().contains("stage train"), "{err}");
    }
}
