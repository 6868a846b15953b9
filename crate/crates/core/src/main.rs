use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ibc_strang::bench::cache::ReferenceCache;
use ibc_strang::bench::config::{load_config, ExperimentSpec, ReferenceTolerances, ReportFormat, SpecOverrides};
use ibc_strang::bench::presets::PresetId;
use ibc_strang::bench::report::{emit_report, render_table};
use ibc_strang::bench::study::{run_convergence_study, StudyOptions};
use ibc_strang::integrators::SchemeKind;

#[derive(Parser)]
#[command(name = "ibc-strang", version, about = "Convergence studies for classic and IBC Strang splitting")]
struct Cli {
    /// Directory for cached reference solutions.
    #[arg(long, global = true, default_value = ".ibc-strang-cache")]
    cache_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long)]
        no_cache: bool,
        /// Sets both reference tolerances.
        #[arg(long)]
        ref_tol: Option<f64>,
    },
    /// Run a built-in experiment.
    Preset {
        id: PresetId,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<SchemeKind>>,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(long)]
        no_cache: bool,
    },
    /// Print the built-in experiments.
    ListPresets,
}

fn study(spec: &ExperimentSpec, no_cache: bool, cache_dir: PathBuf, out: PathBuf, format: ReportFormat) -> Result<()> {
    let cache = if no_cache {
        ReferenceCache::disabled()
    } else {
        ReferenceCache::new(cache_dir)
    };
    let report = run_convergence_study(spec, &StudyOptions { cache }).with_context(|| format!("study {}", spec.name))?;
    print!("{}", render_table(&report));
    for path in emit_report(&report, format, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            no_cache,
            ref_tol,
        } => {
            let mut spec = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(tol) = ref_tol {
                if !(tol > 0.0) {
                    bail!("--ref-tol must be positive");
                }
                spec.reference = ReferenceTolerances {
                    abs_tol: tol,
                    rel_tol: tol,
                };
            }
            let out = out.or_else(|| spec.output.dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
            let format = format.unwrap_or(spec.output.format);
            study(&spec, no_cache, cli.cache_dir, out, format)
        }
        Command::Preset {
            id,
            schemes,
            taus,
            out,
            format,
            no_cache,
        } => {
            let spec = ExperimentSpec::build(
                id,
                SpecOverrides {
                    schemes,
                    taus,
                    ..Default::default()
                },
            )?;
            study(&spec, no_cache, cli.cache_dir, out, format)
        }
        Command::ListPresets => {
            for id in PresetId::ALL {
                let p = id.preset();
                let faces: Vec<String> = p
                    .faces
                    .iter()
                    .map(|(s, a, b)| format!("{s}(a={a},b={b})"))
                    .collect();
                println!("{id}  {}D  {}", p.dimension, p.description);
                println!("       {}", p.formula);
                println!(
                    "       params {:?}, {} interior nodes/dir, t_end {}, faces {}",
                    p.default_params,
                    p.n_interior,
                    p.t_end,
                    faces.join(" ")
                );
            }
            Ok(())
        }
    }
}
