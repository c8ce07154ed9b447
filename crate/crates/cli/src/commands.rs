//! Subcommand implementations. Each invocation runs exactly one pipeline
//! stage and writes its outputs atomically.

use crate::args::{self, pick, ConfigFile, Method};
use pdrl_core::baselines::{gmm_fit, knn_fit};
use pdrl_core::dataset::{load_dataset, save_dataset, StructureRecord};
use pdrl_core::eval::{run_id_eval, run_ood_eval, pca_project, IdEvalOptions, OodOptions, OodSet};
use pdrl_core::fsio::atomic_write;
use pdrl_core::heads::{train_pdrl, PdrlOptions};
use pdrl_core::report::{
    eval_reports_to_csv_bytes, eval_reports_to_json_bytes, pca_rows_to_csv_bytes, EvalReport,
    Target, UncertaintyReport,
};
use pdrl_core::residual::{compute_residuals, ResidualDataset};
use pdrl_core::score::{ensemble_report, structure_force_table, Aggregate, SavedModel};
use pdrl_core::synth::{generate_synthetic, SynthConfig};
use pdrl_core::train::TrainSchedule;
use pdrl_core::{Error, Result};
use std::path::{Path, PathBuf};

pub fn gen(a: args::GenArgs, cfg: &ConfigFile) -> Result<()> {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        seed: pick(a.seed, cfg.seed, defaults.seed),
        d_desc: pick(a.d_desc, cfg.d_desc, defaults.d_desc),
        n_train: pick(a.n_train, cfg.n_train, defaults.n_train),
        n_val: pick(a.n_val, cfg.n_val, defaults.n_val),
        n_test: pick(a.n_test, cfg.n_test, defaults.n_test),
        n_ood: pick(a.n_ood, cfg.n_ood, defaults.n_ood),
        atoms_min: pick(a.atoms_min, cfg.atoms_min, defaults.atoms_min),
        atoms_max: pick(a.atoms_max, cfg.atoms_max, defaults.atoms_max),
        ood_shift: pick(a.ood_shift, cfg.ood_shift, defaults.ood_shift),
        noise_scale: pick(a.noise_scale, cfg.noise_scale, defaults.noise_scale),
    };
    let splits = generate_synthetic(&config)?;
    std::fs::create_dir_all(&a.out)?;
    for (name, records) in [
        ("train.jsonl", &splits.train),
        ("val.jsonl", &splits.val),
        ("test.jsonl", &splits.test),
        ("ood.jsonl", &splits.ood),
    ] {
        let path = a.out.join(name);
        save_dataset(&path, records)?;
        println!("wrote {} ({} structures)", path.display(), records.len());
    }
    Ok(())
}

pub fn train(a: args::TrainArgs, cfg: &ConfigFile) -> Result<()> {
    let train_records = load_dataset(&a.data)?;
    let val_records = load_dataset(&a.val)?;
    let train_res = compute_residuals(&train_records)?;
    let val_res = compute_residuals(&val_records)?;

    let defaults = TrainSchedule::default();
    let schedule = TrainSchedule {
        initial_lr: pick(a.lr, cfg.lr, defaults.initial_lr),
        patience: pick(a.patience, cfg.patience, defaults.patience),
        lr_decay: pick(a.lr_decay, cfg.lr_decay, defaults.lr_decay),
        min_lr: pick(a.min_lr, cfg.min_lr, defaults.min_lr),
        max_epochs: pick(a.max_epochs, cfg.max_epochs, defaults.max_epochs),
        batch_size: pick(a.batch_size, cfg.batch_size, defaults.batch_size),
    };
    let options = PdrlOptions {
        hidden_width: pick(a.hidden_width, cfg.hidden_width, 64),
        standardize: !a.no_standardize,
    };
    let seed = pick(a.seed, cfg.seed, 0);
    let trained = train_pdrl(&train_res, &val_res, a.head, &schedule, &options, seed)?;

    if let Some(history_path) = &a.history {
        let mut bytes = serde_json::to_vec_pretty(&trained.history)
            .map_err(|e| Error::InvalidInput(format!("serialize history: {e}")))?;
        bytes.push(b'\n');
        atomic_write(history_path, &bytes)?;
    }
    let last = trained.history.last().expect("nonempty history");
    SavedModel::Pdrl(trained.model).save(&a.out)?;
    println!(
        "trained {} for {} epochs (final val mse {:.6e}), wrote {}",
        a.head,
        last.epoch,
        last.val_mse,
        a.out.display()
    );
    Ok(())
}

pub fn baseline(a: args::BaselineArgs, cfg: &ConfigFile) -> Result<()> {
    let records = load_dataset(&a.data)?;
    let residuals = compute_residuals(&records)?;
    let standardize = !a.no_standardize;
    match a.method {
        Method::Knn => {
            let k = pick(a.k, cfg.k, 10);
            let index = knn_fit(&residuals, k, standardize)?;
            let n = index.points.nrows();
            SavedModel::Knn(index).save(&a.out)?;
            println!("fitted knn (k={k}) on {n} atoms, wrote {}", a.out.display());
        }
        Method::Gmm => {
            let components = pick(a.components, cfg.components, 8);
            let seed = pick(a.seed, cfg.seed, 0);
            let (model, trace) = gmm_fit(&residuals, components, seed, standardize)?;
            SavedModel::Gmm(model).save(&a.out)?;
            println!(
                "fitted gmm ({components} components, {} EM iterations, mean ll {:.6}), wrote {}",
                trace.log_likelihoods.len(),
                trace.log_likelihoods.last().unwrap_or(&f64::NAN),
                a.out.display()
            );
        }
    }
    Ok(())
}

pub fn score(a: args::ScoreArgs, cfg: &ConfigFile) -> Result<()> {
    let model = SavedModel::load(&a.model)?;
    let records = load_dataset(&a.data)?;
    let aggregate = pick(a.aggregate, cfg.aggregate()?, Aggregate::Mean);
    let report = model.score_dataset(&records, aggregate)?;
    report.write_csv(&a.out)?;
    println!(
        "scored {} structures with {} ({} rows), wrote {}",
        records.len(),
        model.name(),
        report.rows.len(),
        a.out.display()
    );
    Ok(())
}

pub fn ensemble_score(a: args::EnsembleScoreArgs) -> Result<()> {
    let records = load_dataset(&a.data)?;
    let report = ensemble_report(&records)?;
    report.write_csv(&a.out)?;
    println!(
        "scored {} structures by ensemble disagreement ({} rows), wrote {}",
        records.len(),
        report.rows.len(),
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: args::EvalArgs, cfg: &ConfigFile) -> Result<()> {
    let scores = UncertaintyReport::read_csv(&a.scores)?;
    let records = load_dataset(&a.data)?;
    let residuals = compute_residuals(&records)?;
    let options = IdEvalOptions {
        low_quantile: pick(a.quantile, cfg.quantile, 0.2),
        per_structure_force: a.per_structure,
    };
    let scorer = a.name.unwrap_or_else(|| file_stem(&a.scores));
    let split = dataset_tag(&records, &a.data);
    let reports = run_id_eval(&scores, &residuals, a.target, &scorer, &split, &options)?;
    write_reports(&a.out, &reports)?;
    print_reports(&reports);
    Ok(())
}

pub fn ood(a: args::OodArgs, cfg: &ConfigFile) -> Result<()> {
    if a.ood_scores.len() != a.ood_data.len() {
        return Err(Error::InvalidInput(format!(
            "{} --ood-scores files but {} --ood-data files",
            a.ood_scores.len(),
            a.ood_data.len()
        )));
    }
    let aggregate = pick(a.aggregate, cfg.aggregate()?, Aggregate::Mean);
    let id_scores_report = UncertaintyReport::read_csv(&a.scores)?;
    let id_records = load_dataset(&a.data)?;
    let id_residuals = compute_residuals(&id_records)?;
    let (id_scores, id_errors) = structure_force_table(&id_scores_report, &id_residuals, aggregate)?;

    let mut sets = Vec::new();
    for (scores_path, data_path) in a.ood_scores.iter().zip(&a.ood_data) {
        let report = UncertaintyReport::read_csv(scores_path)?;
        let records = load_dataset(data_path)?;
        let residuals = compute_residuals(&records)?;
        let (scores, errors) = structure_force_table(&report, &residuals, aggregate)?;
        sets.push(OodSet {
            tag: dataset_tag(&records, data_path),
            scores,
            errors,
        });
    }

    let scorer = a.name.unwrap_or_else(|| file_stem(&a.scores));
    let options = OodOptions {
        spearman_ood_only: a.ood_only,
    };
    let reports = run_ood_eval(&id_scores, &id_errors, &sets, &scorer, Target::Force, &options)?;
    write_reports(&a.out, &reports)?;
    print_reports(&reports);
    Ok(())
}

pub fn pca(a: args::PcaArgs, cfg: &ConfigFile) -> Result<()> {
    let train_records = load_dataset(&a.data)?;
    let train_res = compute_residuals(&train_records)?;
    let mut other_data: Vec<(String, ResidualDataset)> = Vec::new();
    for path in &a.others {
        let records = load_dataset(path)?;
        other_data.push((dataset_tag(&records, path), compute_residuals(&records)?));
    }
    let others: Vec<(String, &ResidualDataset)> = other_data
        .iter()
        .map(|(name, ds)| (name.clone(), ds))
        .collect();

    let scores = a
        .scores
        .as_deref()
        .map(UncertaintyReport::read_csv)
        .transpose()?;
    let uncertainty = scores.as_ref().map(|s| s.atom_map()).transpose()?;

    let k = pick(a.components_pca, cfg.components_pca, 2.min(train_res.d_desc));
    let train_tag = dataset_tag(&train_records, &a.data);
    let (projection, rows) = pca_project(&train_res, &train_tag, &others, k, uncertainty.as_ref())?;
    atomic_write(&a.out, &pca_rows_to_csv_bytes(&rows, k)?)?;
    let variance: f64 = projection.eigenvalues.iter().sum();
    println!(
        "projected {} atoms onto {k} axes (top eigenvalue {:.4}, retained variance {:.4}), wrote {}",
        rows.len(),
        projection.eigenvalues.first().unwrap_or(&0.0),
        variance,
        a.out.display()
    );
    Ok(())
}

/// Split tag of a dataset: the shared `split` field when uniform, otherwise
/// the file stem.
fn dataset_tag(records: &[StructureRecord], path: &Path) -> String {
    let first = records.first().and_then(|r| r.split.clone());
    if let Some(tag) = first {
        if records.iter().all(|r| r.split.as_deref() == Some(tag.as_str())) {
            return tag;
        }
    }
    file_stem(path)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// CSV at `out`, JSON twin next to it.
fn write_reports(out: &Path, reports: &[EvalReport]) -> Result<()> {
    atomic_write(out, &eval_reports_to_csv_bytes(reports)?)?;
    let json_path: PathBuf = out.with_extension("json");
    atomic_write(&json_path, &eval_reports_to_json_bytes(reports)?)?;
    Ok(())
}

fn print_reports(reports: &[EvalReport]) {
    for r in reports {
        println!(
            "{} {} {:?} [{}]: {:.4} (n={})",
            r.scorer,
            r.target.as_str(),
            r.metric,
            r.split,
            r.value,
            r.n
        );
    }
}
