use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ztab::annotator::{read_annotations, read_tables, write_annotations, Annotator};
use ztab::domain::{load_class_list, load_schema_collection, ClassSet, DomainConfig};
use ztab::evaluator::{estimate_co2, run_scenario, EvaluationReport};
use ztab::finetune::{write_export, DatasetParams, ExportFormat, ExportRequest, ExportVariant, DEFAULT_EPOCHS};
use ztab::gateway::BackendConfig;
use ztab::prompt::{PromptDesign, PromptOptions, DEFAULT_MAX_CELL_CHARS};
use ztab::prototype::{generate_all_prototypes, load_store, save_store, DEFAULT_PROTOTYPE_SIZE};
use ztab::pseudotable::{generate_epoch_tables, SamplerSeed, SamplingRatio, DEFAULT_ROW_SIZE};
use ztab::ScenarioConfig;

#[derive(Parser)]
#[command(name = "ztab", version, about = "Domain-based zero-shot column type annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Privacy,
    Performance,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Chat,
    Prompt,
}

#[derive(Subcommand)]
enum Command {
    /// Generate class prototypes with a backend and save them as JSONL.
    GeneratePrototypes {
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        backend: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PROTOTYPE_SIZE)]
        e: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one epoch of pseudo-tables as JSONL.
    DumpTables {
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        prototypes: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = DEFAULT_ROW_SIZE)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a fine-tuning dataset and its manifest.
    ExportFinetune {
        #[arg(long, value_enum, default_value_t = Variant::Privacy)]
        variant: Variant,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        prototypes: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = DEFAULT_ROW_SIZE)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_EPOCHS)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "col-target")]
        design: PromptDesign,
        #[arg(long, value_enum, default_value_t = Format::Chat)]
        format: Format,
        /// 0 disables cell truncation.
        #[arg(long, default_value_t = DEFAULT_MAX_CELL_CHARS)]
        max_cell_chars: usize,
        #[arg(long, default_value = "finetune")]
        stem: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotate a tables file against a class list.
    Annotate {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        backend: Option<PathBuf>,
        #[arg(long, default_value = "col-target")]
        design: PromptDesign,
        #[arg(long, default_value_t = DEFAULT_MAX_CELL_CHARS)]
        max_cell_chars: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an annotations file against the gold labels of a tables file.
    Evaluate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario described by a TOML file and print its report.
    RunScenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate fine-tuning emissions in kg CO2e.
    Co2 {
        #[arg(long)]
        power_kw: f64,
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        intensity: f64,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn classes(path: &Path) -> Result<ClassSet> {
    load_class_list(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn domain(classes_path: &Path, schemas_path: &Path) -> Result<DomainConfig> {
    let c = classes(classes_path)?;
    let s = load_schema_collection(open(schemas_path)?, &c).with_context(|| format!("reading {}", schemas_path.display()))?;
    Ok(DomainConfig::new(c, s)?)
}

fn backend_config(path: Option<&Path>) -> Result<BackendConfig> {
    match path {
        Some(p) => BackendConfig::from_path(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(BackendConfig::default()),
    }
}

fn cell_options(max_cell_chars: usize) -> PromptOptions {
    PromptOptions { max_cell_chars: (max_cell_chars > 0).then_some(max_cell_chars) }
}

fn write_report(report: &EvaluationReport, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        let mut w = create(path)?;
        writeln!(w, "{}", report.to_json())?;
        w.flush()?;
    }
    print!("{}", report.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GeneratePrototypes { classes: c, backend, e, out } => {
            let c = classes(&c)?;
            let backend = backend_config(backend.as_deref())?.build()?;
            let store = generate_all_prototypes(&c, e, &backend)?;
            save_store(&store, &out)?;
            eprintln!("wrote {} prototypes to {}", store.len(), out.display());
        }
        Command::DumpTables { classes: c, schemas, prototypes, r, k, seed, epoch, out } => {
            let config = domain(&c, &schemas)?.augmented();
            let store = load_store(&prototypes)?;
            let tables =
                generate_epoch_tables(&config.schemas, &store, SamplingRatio::new(r)?, k, SamplerSeed::new(seed, epoch))?;
            let mut w: Box<dyn Write> = match out {
                Some(p) => Box::new(create(&p)?),
                None => Box::new(std::io::stdout().lock()),
            };
            for (_, t) in &tables {
                writeln!(w, "{}", serde_json::to_string(t)?)?;
            }
            w.flush()?;
        }
        Command::ExportFinetune {
            variant,
            classes: c,
            schemas,
            prototypes,
            r,
            k,
            epochs,
            seed,
            design,
            format,
            max_cell_chars,
            stem,
            out,
        } => {
            let config = domain(&c, &schemas)?;
            let store = load_store(&prototypes)?;
            let manifest = write_export(&ExportRequest {
                config: &config,
                store: &store,
                params: DatasetParams { r: SamplingRatio::new(r)?, k, design, prompt_options: cell_options(max_cell_chars) },
                variant: match variant {
                    Variant::Privacy => ExportVariant::Privacy,
                    Variant::Performance => ExportVariant::Performance,
                },
                format: match format {
                    Format::Chat => ExportFormat::ChatMessages,
                    Format::Prompt => ExportFormat::PromptCompletion,
                },
                epochs,
                base_seed: seed,
                out_dir: &out,
                stem: &stem,
            })?;
            eprintln!("wrote {} samples in {} file(s) to {}", manifest.total_samples, manifest.files.len(), out.display());
        }
        Command::Annotate { tables, classes: c, backend, design, max_cell_chars, out } => {
            let c_pred = classes(&c)?;
            let records = read_tables(open(&tables)?)?;
            let backend = backend_config(backend.as_deref())?.build()?;
            let plain: Vec<_> = records.iter().map(|r| r.table()).collect();
            let corpus = Annotator::new(&backend, &c_pred, design, cell_options(max_cell_chars))?.annotate_corpus(&plain);
            let mut w = create(&out)?;
            write_annotations(&corpus.annotations, &mut w)?;
            w.flush()?;
            for f in &corpus.failures {
                eprintln!("failed: {}: {}", f.table_ref, f.error);
            }
            eprintln!("annotated {} of {} tables", corpus.annotations.len(), plain.len());
            if !corpus.failures.is_empty() {
                bail!("{} table(s) failed", corpus.failures.len());
            }
        }
        Command::Evaluate { annotations, tables, out } => {
            let a = read_annotations(open(&annotations)?)?;
            let t = read_tables(open(&tables)?)?;
            write_report(&EvaluationReport::from_annotations(&a, &t)?, out.as_deref())?;
        }
        Command::RunScenario { config, out } => {
            let c = ScenarioConfig::from_path(&config)?;
            write_report(&run_scenario(&c)?, out.as_deref())?;
        }
        Command::Co2 { power_kw, hours, intensity } => {
            println!("{}", estimate_co2(power_kw, hours, intensity)?);
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}
