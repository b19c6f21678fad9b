use std::fs;
use std::path::Path;

use hfrisk_core::io::{self, atomic_write, FeatureTable, SubjectRecord};
use hfrisk_core::pipeline::{self, PipelineConfig};
use hfrisk_core::study::{
    self, correlation_study, model_comparison, synth_cohort, synth_day, CohortSpec, ComparisonConfig, StudyConfig,
};
use hfrisk_core::signal::{synth_ecg, EcgRecord};
use hfrisk_core::survival::{FittedModel, ModelKind};
use hfrisk_core::{Error, Result};
use serde::Deserialize;

use crate::{Cli, Command, Model};

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth { subjects, rest_hr_effect } => cmd_synth(out, *subjects, *rest_hr_effect, &cfg),
        Command::Extract { cohort, ecg_dir, rr_dir } => cmd_extract(out, cohort, ecg_dir, rr_dir.as_deref(), &cfg),
        Command::Train { features, model, ecg_only } => cmd_train(out, features, *model, *ecg_only, &cfg),
        Command::Predict { model, features } => cmd_predict(out, model, features),
        Command::Evaluate { model, features } => cmd_evaluate(out, model, features),
        Command::HrvStudy { study } => cmd_hrv_study(out, study.as_deref(), cli.seed),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

fn cmd_synth(out: &Path, subjects: usize, rest_hr_effect: f64, cfg: &PipelineConfig) -> Result<()> {
    let spec = CohortSpec { n_subjects: subjects, seed: cfg.seed, rest_hr_effect, ..Default::default() };
    let cohort = synth_cohort(&spec)?;
    let (ecg_dir, rr_dir) = (out.join("ecg"), out.join("rr"));
    fs::create_dir_all(&ecg_dir)?;
    fs::create_dir_all(&rr_dir)?;
    for s in &cohort {
        let id = &s.record.subject_id;
        io::write_ecg_csv(&ecg_dir.join(format!("{id}.csv")), &synth_ecg(&s.ecg)?.record)?;
        io::write_rr_csv(&rr_dir.join(format!("{id}.csv")), &synth_day(&s.day)?)?;
    }
    let records: Vec<SubjectRecord> = cohort.into_iter().map(|s| s.record).collect();
    io::write_cohort_csv(&out.join("cohort.csv"), &records)?;
    log::info!("wrote {} subjects to {}", records.len(), out.display());
    Ok(())
}

fn pick_lead(mut leads: Vec<EcgRecord>) -> Option<EcgRecord> {
    let i = leads.iter().position(|r| r.lead() == "I").unwrap_or(0);
    (!leads.is_empty()).then(|| leads.swap_remove(i))
}

fn cmd_extract(out: &Path, cohort: &Path, ecg_dir: &Path, rr_dir: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let subjects = io::read_cohort_csv(cohort)?;
    let load = |s: &SubjectRecord| {
        let file = format!("{}.csv", s.subject_id);
        let ecg_path = ecg_dir.join(&file);
        let ecg = if ecg_path.exists() {
            match io::read_ecg_csv(&ecg_path) {
                Ok(leads) => pick_lead(leads).map(|r| r.with_subject(s.subject_id.clone())),
                Err(e) => {
                    log::warn!("{e}");
                    None
                }
            }
        } else {
            log::warn!("{}: no ECG file at {}", s.subject_id, ecg_path.display());
            None
        };
        let day = rr_dir.map(|d| d.join(&file)).filter(|p| p.exists()).and_then(|p| {
            io::read_rr_csv(&p).inspect_err(|e| log::warn!("{e}")).ok()
        });
        (ecg, day)
    };
    let table = pipeline::extract_cohort(&subjects, &load, cfg);
    table.write_csv(&out.join("features.csv"))
}

fn cmd_train(out: &Path, features: &Path, model: Model, ecg_only: bool, cfg: &PipelineConfig) -> Result<()> {
    let mut table = FeatureTable::read_csv(features)?;
    if ecg_only {
        let keep: Vec<String> = table
            .names
            .iter()
            .filter(|n| !pipeline::HRV_NAMES.contains(&n.as_str()))
            .cloned()
            .collect();
        table = table.select(&keep)?;
    }
    let kind = match model {
        Model::BoostedAft => ModelKind::BoostedAft,
        Model::MlpDeephit => ModelKind::MlpDeephit,
    };
    let fitted = pipeline::train(&table, kind, cfg)?;
    let mut json = fitted.to_json()?;
    json.push('\n');
    atomic_write(&out.join("model.json"), json.as_bytes())
}

fn load_model(path: &Path) -> Result<FittedModel> {
    FittedModel::from_json(&fs::read_to_string(path)?)
}

fn cmd_predict(out: &Path, model: &Path, features: &Path) -> Result<()> {
    let model = load_model(model)?;
    let table = FeatureTable::read_csv(features)?;
    let preds = pipeline::predict(&model, &table)?;
    write_json(&out.join("predictions.json"), &preds)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["subject_id", "risk_5y"])?;
    for p in &preds {
        wtr.write_record([p.subject_id.clone(), p.risk_5y.to_string()])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    atomic_write(&out.join("risk.csv"), &bytes)
}

fn cmd_evaluate(out: &Path, model_path: &Path, features: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let table = FeatureTable::read_csv(features)?;
    let report = pipeline::evaluate(&model, &table)?;
    write_json(&out.join("report.json"), &report)?;
    let name = match model.kind() {
        ModelKind::BoostedAft => "boosted_aft",
        ModelKind::MlpDeephit => "mlp_deephit",
    };
    let mut buf = Vec::new();
    report.write_csv(name, &mut buf)?;
    atomic_write(&out.join("report.csv"), &buf)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StudyFile {
    study: StudyConfig,
    comparison: Option<ComparisonConfig>,
}

/// The comparison runs with the pipeline settings of the study file; only
/// `--seed` carries over from the command line.
fn cmd_hrv_study(out: &Path, study_path: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let file: StudyFile = match study_path {
        Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
        None => StudyFile::default(),
    };
    let rows = correlation_study(&file.study)?;
    let mut buf = Vec::new();
    study::write_study_csv(&rows, &mut buf)?;
    atomic_write(&out.join("study.csv"), &buf)?;
    if let Some(mut cmp) = file.comparison {
        if let Some(seed) = seed {
            cmp.pipeline.seed = seed;
        }
        cmp.pipeline.validate()?;
        let rows = model_comparison(&cmp)?;
        let mut buf = Vec::new();
        study::write_comparison_csv(&rows, &mut buf)?;
        atomic_write(&out.join("comparison.csv"), &buf)?;
    }
    Ok(())
}
