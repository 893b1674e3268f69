use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use w2reg::data::{generate as synthesize, load_csv, save_csv, CsvSchema, SyntheticSpec};
use w2reg::export::build_bundle;
use w2reg::model::Checkpoint;
use w2reg::run::{config_hash, is_run_dir, load_run, write_run};
use w2reg::trainer::{evaluate, run_baseline_only, run_pipeline, RunArtifacts, TrainConfig};
use w2reg::{Dataset, Error};

use crate::{AuditArgs, ConfigArgs, DataArgs, GenerateArgs, ReportArgs, SweepArgs, TrainArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Config,
    Data,
    Io,
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    kind: Kind,
    message: String,
}

impl CliError {
    fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.kind {
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Io => "io",
            Kind::Runtime => "runtime",
        }
    }

    pub fn code(&self) -> u8 {
        match self.kind {
            Kind::Usage => 2,
            Kind::Config => 3,
            Kind::Data => 4,
            Kind::Io => 5,
            Kind::Runtime => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Config(_) => Kind::Config,
            Error::Input(_) | Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => Kind::Data,
            Error::Io { .. } => Kind::Io,
            Error::Precondition(_) | Error::Domain(_) => Kind::Runtime,
        };
        Self::new(kind, e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn as_kind<E: fmt::Display>(kind: Kind, context: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::new(kind, format!("{}: {e}", context.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(as_kind(Kind::Io, parent))?;
    }
    fs::write(path, text).map_err(as_kind(Kind::Io, path))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::new(Kind::Runtime, e.to_string()))
}

fn load_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(as_kind(Kind::Config, path))?;
            serde_json::from_str(&text).map_err(as_kind(Kind::Config, path))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
        cfg.lambda_grid.clear();
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let schema_path = args.schema.clone().or_else(|| {
        let sibling = args.data.with_file_name("schema.json");
        sibling.is_file().then_some(sibling)
    });
    let schema = match &schema_path {
        Some(p) => CsvSchema::load(p).map_err(as_kind(Kind::Data, p))?,
        None => CsvSchema::default(),
    };
    load_csv(&args.data, &schema).map_err(|e| match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Csv(_) | Error::Input(_) => {
            CliError::new(Kind::Data, format!("{}: {e}", args.data.display()))
        }
        other => other.into(),
    })
}

pub fn generate(out_root: &Path, args: GenerateArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(as_kind(Kind::Config, path))?;
            serde_json::from_str::<SyntheticSpec>(&text).map_err(as_kind(Kind::Config, path))?
        }
        None => SyntheticSpec::acceptance(0),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let dataset = synthesize(&spec)?;
    let dir = args.out.unwrap_or_else(|| out_root.join("data"));
    fs::create_dir_all(&dir).map_err(as_kind(Kind::Io, &dir))?;
    save_csv(&dataset, &dir.join("data.csv"))?;
    write_text(&dir.join("schema.json"), &to_json(&CsvSchema::for_dataset(&dataset))?)?;
    write_text(&dir.join("summary.json"), &to_json(&dataset.summary())?)?;
    write_text(&dir.join("spec.json"), &to_json(&spec)?)?;
    println!("{}", dir.display());
    Ok(())
}

fn run_one(dataset: &Dataset, cfg: &TrainConfig, baseline_only: bool) -> Result<RunArtifacts> {
    Ok(if baseline_only {
        run_baseline_only(dataset, cfg)?
    } else {
        run_pipeline(dataset, cfg)?
    })
}

fn describe(run: &RunArtifacts) -> String {
    let names = |ids: &[usize]| {
        ids.iter()
            .map(|&c| run.class_names[c].as_str())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut s = format!(
        "baseline test accuracy {:.4}; selected [{}]",
        run.baseline_test.accuracy,
        names(&run.selection.selected)
    );
    if !run.selection.flagged_excluded.is_empty() {
        s += &format!("; under-supported [{}]", names(&run.selection.flagged_excluded));
    }
    match &run.regularized {
        Some(r) => {
            s += &format!(
                "; regularized test accuracy {:.4} (lambda {})",
                r.test.accuracy,
                run.chosen_lambda.unwrap_or_default()
            )
        }
        None if run.selection.is_empty() => s += "; no class exceeded tau",
        None => {}
    }
    s
}

pub fn train(out_root: &Path, args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let dataset = load_data(&args.data)?;
    let run = run_one(&dataset, &cfg, args.baseline_only)?;
    let dir = args
        .out
        .unwrap_or_else(|| out_root.join(format!("run-seed{}", cfg.seed)));
    write_run(&run, Some(&dataset), &dir)?;
    println!("{}: {}", dir.display(), describe(&run));
    Ok(())
}

pub fn audit(args: AuditArgs) -> Result<()> {
    let dataset = load_data(&args.data)?;
    let checkpoint = Checkpoint::load(&args.checkpoint).map_err(|e| match e {
        Error::Io { .. } | Error::Json(_) => {
            CliError::new(Kind::Data, format!("{}: {e}", args.checkpoint.display()))
        }
        other => other.into(),
    })?;
    let params = checkpoint.params()?;
    let sizes = params.sizes();
    if sizes[0] != dataset.num_features() || params.num_classes() != dataset.num_classes() {
        return Err(CliError::new(
            Kind::Data,
            format!(
                "checkpoint expects {} features and {} classes; dataset has {} and {}",
                sizes[0],
                params.num_classes(),
                dataset.num_features(),
                dataset.num_classes()
            ),
        ));
    }
    let report = evaluate(&params, &dataset)?;
    let json = report.to_json()? + "\n";
    match &args.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    if let Some(path) = &args.csv {
        write_text(path, &report.to_csv()?)?;
    }
    Ok(())
}

struct Member {
    name: String,
    config: TrainConfig,
}

fn lambda_label(l: f64) -> String {
    l.to_string().replace('.', "p")
}

pub fn sweep(out_root: &Path, args: SweepArgs) -> Result<()> {
    let base = load_config(&args.config)?;
    if args.seeds.is_empty() {
        return Err(CliError::new(Kind::Usage, "--seeds is empty"));
    }
    if args.jobs == Some(0) {
        return Err(CliError::new(Kind::Usage, "--jobs must be at least 1"));
    }
    let dataset = load_data(&args.data)?;
    let dir = args.out.unwrap_or_else(|| out_root.join("sweep"));

    let mut members = Vec::new();
    for &seed in &args.seeds {
        if args.lambdas.is_empty() {
            members.push(Member {
                name: format!("seed{seed}"),
                config: TrainConfig { seed, ..base.clone() },
            });
        }
        for &lambda in &args.lambdas {
            let config = TrainConfig {
                seed,
                lambda,
                lambda_grid: Vec::new(),
                ..base.clone()
            };
            config.validate()?;
            members.push(Member {
                name: format!("seed{seed}-lambda{}", lambda_label(lambda)),
                config,
            });
        }
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::new(Kind::Runtime, e.to_string()))?;
    let runs: Vec<Result<RunArtifacts>> = pool.install(|| {
        members
            .par_iter()
            .map(|m| {
                let run = run_one(&dataset, &m.config, false)?;
                write_run(&run, Some(&dataset), &dir.join(&m.name))?;
                log::info!("{}: {}", m.name, describe(&run));
                Ok(run)
            })
            .collect()
    });
    let runs: Vec<RunArtifacts> = runs.into_iter().collect::<Result<_>>()?;

    let table = sweep_table(&members, &runs)?;
    write_text(&dir.join("sweep.csv"), &table)?;
    println!("{}: {} runs", dir.display(), runs.len());
    Ok(())
}

fn sweep_table(members: &[Member], runs: &[RunArtifacts]) -> Result<String> {
    let mut out = String::new();
    for (m, r) in members.iter().zip(runs) {
        out += &format!(
            "# run={} seed={} config_hash={}\n",
            m.name,
            r.seed(),
            config_hash(&r.config)?
        );
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new(Kind::Runtime, e.to_string());
    let mut header: Vec<String> = [
        "run",
        "seed",
        "lambda",
        "model",
        "accuracy",
        "f1_macro",
        "f1_weighted",
        "selected",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let classes = &runs[0].class_names;
    header.extend(classes.iter().map(|c| format!("tpr_gap_{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (m, r) in members.iter().zip(runs) {
        let selected = r
            .selection
            .selected
            .iter()
            .map(|&c| r.class_names[c].as_str())
            .collect::<Vec<_>>()
            .join(";");
        let mut models = vec![("baseline", &r.baseline_test)];
        if let Some(reg) = &r.regularized {
            models.push(("regularized", &reg.test));
        }
        for (model, report) in models {
            let mut rec = vec![
                m.name.clone(),
                r.seed().to_string(),
                r.chosen_lambda.map(|l| l.to_string()).unwrap_or_default(),
                model.to_string(),
                report.accuracy.to_string(),
                report.f1_macro.to_string(),
                report.f1_weighted.to_string(),
                selected.clone(),
            ];
            rec.extend(
                report
                    .tpr_gap
                    .iter()
                    .map(|g| g.map(|g| g.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::new(Kind::Runtime, e.to_string()))?;
    out += &String::from_utf8(bytes).expect("csv output is utf-8");
    Ok(out)
}

fn collect_runs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for input in inputs {
        if is_run_dir(input) {
            dirs.push(input.clone());
            continue;
        }
        let entries = fs::read_dir(input).map_err(as_kind(Kind::Data, input))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_run_dir(p))
            .collect();
        if found.is_empty() {
            return Err(CliError::new(
                Kind::Data,
                format!("{}: no run directory found", input.display()),
            ));
        }
        found.sort();
        dirs.extend(found);
    }
    Ok(dirs)
}

pub fn report(args: ReportArgs) -> Result<()> {
    let dirs = collect_runs(&args.runs)?;
    let records = dirs
        .iter()
        .map(|d| load_run(d).map_err(|e| CliError::new(Kind::Data, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let bundle = build_bundle(&records)?;
    let out = args.out.unwrap_or_else(|| args.runs[0].join("report"));
    bundle.write(&out)?;
    println!("{}: {} runs", out.display(), records.len());
    Ok(())
}
