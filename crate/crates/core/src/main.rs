use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nudgecred::dataset::{read_profiles, read_ratings, write_profiles, write_ratings, ProfileRow, RatingRow};
use nudgecred::feed::{self, fetch_feed, parse_feed, parse_post_line, serialize_feed, FetchRequest, HttpFetcher};
use nudgecred::nudge::{annotate_post, NudgeConfig, DEFAULT_DIM_OPACITY};
use nudgecred::registry::Registry;
use nudgecred::report::build_report;
use nudgecred::service::{self, AppState, AssignmentMode, GroupAssigner, RatingStore, ServiceConfig};
use nudgecred::stats::simulate::{simulate_cohort, SimulationSpec};

#[derive(Parser)]
#[command(name = "nudgecred", version, about = "Credibility nudges for news feeds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RegistryArgs {
    /// Mainstream source table (TSV). Defaults to the bundled edition.
    #[arg(long, requires = "registry_nonmainstream")]
    registry_mainstream: Option<PathBuf>,
    /// Non-mainstream source table (TSV). Defaults to the bundled edition.
    #[arg(long, requires = "registry_mainstream")]
    registry_nonmainstream: Option<PathBuf>,
}

impl RegistryArgs {
    fn load(&self) -> anyhow::Result<Registry> {
        match (&self.registry_mainstream, &self.registry_nonmainstream) {
            (Some(m), Some(n)) => Ok(Registry::load(m, n)?),
            _ => Ok(Registry::default_edition()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Comparison,
    Interaction,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate a JSONL feed; each output line is the input post plus a "nudge" object.
    Annotate {
        #[command(flatten)]
        registry: RegistryArgs,
        /// Feed JSONL; standard input when absent or "-".
        #[arg(long)]
        feed: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DIM_OPACITY)]
        dim_opacity: f64,
    },
    /// Serve the annotated feed and collect ratings.
    Serve {
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        feed: PathBuf,
        #[arg(long)]
        store_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Salt for hash-based group assignment.
        #[arg(long, default_value = "nudgecred")]
        salt: String,
        /// Fill the smaller group first instead of assigning by hash.
        #[arg(long)]
        quota: bool,
        /// Shuffle each participant's feed order with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_DIM_OPACITY)]
        dim_opacity: f64,
    },
    /// Group comparison report from exported ratings and profiles, or
    /// straight from a service store.
    Report {
        #[arg(long, required_unless_present = "store_dir", conflicts_with = "store_dir")]
        ratings: Option<PathBuf>,
        #[arg(long, conflicts_with = "store_dir")]
        profiles: Option<PathBuf>,
        #[arg(long)]
        store_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Export a service store as ratings.csv and profiles.csv.
    Export {
        #[arg(long)]
        store_dir: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write a synthetic ratings.csv and profiles.csv.
    Simulate {
        /// JSON simulation spec; overrides --preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "comparison")]
        preset: Preset,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fetch the most-shared recent posts per account from the remote API
    /// configured by NUDGECRED_API_BASE and NUDGECRED_API_TOKEN.
    Fetch {
        /// Account handles.
        #[arg(required = true)]
        accounts: Vec<String>,
        #[arg(long, default_value_t = 48)]
        window_hours: i64,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long, default_value_t = feed::DEFAULT_MAX_REPLIES)]
        max_replies: usize,
        /// Output JSONL; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Annotate {
            registry,
            feed,
            dim_opacity,
        } => return annotate(&registry, feed.as_deref(), dim_opacity),
        Command::Serve {
            registry,
            feed,
            store_dir,
            port,
            bind,
            salt,
            quota,
            seed,
            dim_opacity,
        } => serve(
            &registry,
            &feed,
            store_dir,
            SocketAddr::new(bind, port),
            GroupAssigner::new(salt, if quota { AssignmentMode::Quota } else { AssignmentMode::Hash }),
            seed,
            dim_opacity,
        ),
        Command::Report {
            ratings,
            profiles,
            store_dir,
            format,
        } => report(ratings.as_deref(), profiles.as_deref(), store_dir.as_deref(), format),
        Command::Export { store_dir, out_dir } => export(&store_dir, &out_dir),
        Command::Simulate {
            spec,
            preset,
            seed,
            out_dir,
        } => simulate(spec.as_deref(), preset, seed, &out_dir),
        Command::Fetch {
            accounts,
            window_hours,
            top_k,
            max_replies,
            out,
        } => fetch(&accounts, window_hours, top_k, max_replies, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn open_input(path: Option<&Path>) -> io::Result<Box<dyn BufRead>> {
    match path {
        None => Ok(Box::new(io::stdin().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdin().lock())),
        Some(p) => Ok(Box::new(BufReader::new(File::open(p)?))),
    }
}

/// Exit 0 when every line annotates, 1 when some line failed, 2 when the
/// registry or feed cannot be opened.
fn annotate(registry: &RegistryArgs, feed: Option<&Path>, dim_opacity: f64) -> ExitCode {
    let setup = || -> anyhow::Result<_> {
        let registry = registry.load().context("loading registry")?;
        let config = NudgeConfig::new(dim_opacity)?;
        let input = open_input(feed).context("opening feed")?;
        Ok((registry, config, input))
    };
    let (registry, config, input) = match setup() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let mut out = BufWriter::new(io::stdout().lock());
    let mut failed = false;
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                eprintln!("line {line_no}: {e}");
                failed = true;
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let annotated = parse_post_line(&line, line_no)
            .map_err(|e| e.to_string())
            .and_then(|post| {
                if !seen.insert(post.id.clone()) {
                    return Err(format!("line {line_no}: duplicate post id {}", post.id));
                }
                let nudge = annotate_post(&registry, &post, &config).map_err(|e| format!("line {line_no}: {e}"))?;
                let mut value: serde_json::Value = serde_json::from_str(&line).map_err(|e| e.to_string())?;
                value["nudge"] = serde_json::to_value(nudge).map_err(|e| e.to_string())?;
                Ok(value)
            });
        match annotated {
            Ok(v) => {
                if writeln!(out, "{v}").is_err() {
                    return ExitCode::FAILURE;
                }
            }
            Err(msg) => {
                eprintln!("{msg}");
                failed = true;
            }
        }
    }
    if out.flush().is_err() {
        return ExitCode::FAILURE;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn serve(
    registry: &RegistryArgs,
    feed_path: &Path,
    store_dir: PathBuf,
    addr: SocketAddr,
    assigner: GroupAssigner,
    shuffle_seed: Option<u64>,
    dim_opacity: f64,
) -> anyhow::Result<()> {
    let registry = registry.load().context("loading registry")?;
    let file = File::open(feed_path).with_context(|| format!("opening {}", feed_path.display()))?;
    let feed_id = feed_path.file_stem().map_or("feed".into(), |s| s.to_string_lossy().into_owned());
    let feed = parse_feed(&feed_id, BufReader::new(file))?;
    let state = AppState::new(ServiceConfig {
        registry,
        feed,
        store_dir,
        assigner,
        nudge: NudgeConfig::new(dim_opacity)?,
        shuffle_seed,
    })?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(addr, Arc::new(state), |local| {
        println!("listening on http://{local}");
        let _ = io::stdout().flush();
    }))?;
    Ok(())
}

fn load_store(store_dir: &Path) -> anyhow::Result<(Vec<RatingRow>, Vec<ProfileRow>)> {
    if !store_dir.is_dir() {
        bail!("{} is not a directory", store_dir.display());
    }
    let store = RatingStore::open(store_dir)?;
    Ok(service::export_rows(&store))
}

fn report(ratings: Option<&Path>, profiles: Option<&Path>, store_dir: Option<&Path>, format: Format) -> anyhow::Result<()> {
    let (ratings, profiles) = match (ratings, store_dir) {
        (_, Some(dir)) => load_store(dir)?,
        (Some(ratings), None) => {
            let ratings = read_ratings(File::open(ratings).with_context(|| format!("opening {}", ratings.display()))?)?;
            let profiles = match profiles {
                Some(p) => read_profiles(File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
                None => Vec::new(),
            };
            (ratings, profiles)
        }
        (None, None) => bail!("either --ratings or --store-dir is required"),
    };
    let report = build_report(&ratings, &profiles)?;
    match format {
        Format::Text => print!("{}", report.render_text()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn write_pair(ratings: &[RatingRow], profiles: &[ProfileRow], out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let ratings_path = out_dir.join("ratings.csv");
    let profiles_path = out_dir.join("profiles.csv");
    write_ratings(ratings, BufWriter::new(File::create(&ratings_path)?))?;
    write_profiles(profiles, BufWriter::new(File::create(&profiles_path)?))?;
    eprintln!(
        "wrote {} ratings to {} and {} profiles to {}",
        ratings.len(),
        ratings_path.display(),
        profiles.len(),
        profiles_path.display()
    );
    Ok(())
}

fn export(store_dir: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let (ratings, profiles) = load_store(store_dir)?;
    write_pair(&ratings, &profiles, out_dir)
}

fn simulate(spec: Option<&Path>, preset: Preset, seed: Option<u64>, out_dir: &Path) -> anyhow::Result<()> {
    let mut spec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SimulationSpec::from_json(&text)?
        }
        None => match preset {
            Preset::Comparison => SimulationSpec::group_comparison(0),
            Preset::Interaction => SimulationSpec::interaction_model(0),
        },
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let cohort = simulate_cohort(&spec)?;
    write_pair(&cohort.ratings, &cohort.profiles, out_dir)
}

fn fetch(accounts: &[String], window_hours: i64, top_k: usize, max_replies: usize, out: Option<&Path>) -> anyhow::Result<()> {
    let fetcher = HttpFetcher::from_env()?;
    let outcome = fetch_feed(
        &fetcher,
        &FetchRequest {
            accounts,
            window: chrono::Duration::hours(window_hours),
            top_k,
            now: chrono::Utc::now(),
            max_replies,
        },
    )?;
    for w in &outcome.warnings {
        eprintln!("warning: {}: {}", w.account, w.message);
    }
    for id in &outcome.truncated {
        eprintln!("warning: replies for {id} truncated to {max_replies}");
    }
    if outcome.feed.is_empty() && !accounts.is_empty() && outcome.warnings.len() == accounts.len() {
        bail!("every account failed");
    }
    match out {
        Some(p) => serialize_feed(&outcome.feed, BufWriter::new(File::create(p)?))?,
        None => serialize_feed(&outcome.feed, io::stdout().lock())?,
    }
    Ok(())
}
