//! `habitat-cd` command-line entry point.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use habitat_cd::metrics::{accumulate, report, write_report_files, UndefinedPolicy};
use habitat_cd::raster::{read_raster, write_raster, BandKind, GeoGrid, GridGeometry};
use habitat_cd::runner::{execute, load_label_raster, ExperimentConfig};
use habitat_cd::sampling::{
    assign_split, extract_patches, mosaic_labels, mosaic_scores, partition_blocks, Patch, PatchIndex,
};
use habitat_cd::synth::{generate_scene, SceneSpec};
use habitat_cd::taxonomy::{
    area_stats, area_stats_csv, binarize_change, build_transition_map, remap_labels, ClassScheme, RemapDefault,
    RemapTable, TransitionRuleSet,
};
use habitat_cd::terrain::{curvature, derive_terrain, roughness, slope_aspect};
use habitat_cd::{Error, Result};

#[derive(Parser)]
#[command(name = "habitat-cd", version, about = "Habitat change detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign spatial blocks to train/val/test and write the split CSV.
    Split(SplitArgs),
    /// Cut a raster into overlapping patches.
    Tile(TileArgs),
    /// Reassemble patches written by `tile`.
    Mosaic(MosaicArgs),
    /// Derive slope, aspect, roughness, curvature (and nDSM) from elevation rasters.
    Terrain(TerrainArgs),
    /// Map source label ids to target ids.
    Remap(RemapArgs),
    /// Build the transition map between two label rasters.
    Compare(CompareArgs),
    /// Confusion matrix and metric report of a prediction against a reference.
    Metrics(MetricsArgs),
    /// Generate a synthetic bi-temporal scene.
    Synth(SynthArgs),
    /// Run a configured experiment.
    Run(RunArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Raster whose dimensions define the grid.
    #[arg(long, conflicts_with_all = ["width", "height"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "height")]
    width: Option<usize>,
    #[arg(long, requires = "width")]
    height: Option<usize>,
    #[arg(long, default_value_t = 512)]
    block_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Train, val and test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    fractions: String,
    /// Output CSV (`block_row,block_col,role`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TileArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 256)]
    patch_size: usize,
    #[arg(long, default_value_t = 64)]
    overlap: usize,
    /// Output directory for patches and `patch_index.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MosaicArgs {
    /// Directory written by `tile`.
    #[arg(long)]
    patches: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TerrainArgs {
    #[arg(long)]
    dtm: PathBuf,
    #[arg(long)]
    dsm: Option<PathBuf>,
    /// Roughness window (odd, >= 3).
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RemapArgs {
    #[arg(long)]
    input: PathBuf,
    /// CSV with `source_id,target_id`.
    #[arg(long)]
    table: PathBuf,
    /// Unmapped labels: `error`, `pass-through` or `fixed:N`.
    #[arg(long, default_value = "error")]
    default: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-class area statistics of the result to this CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Scheme for the statistics (bundled habitat scheme if omitted).
    #[arg(long, requires = "stats")]
    scheme: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    t1: PathBuf,
    #[arg(long)]
    t2: PathBuf,
    /// Rule CSV (`from_id,to_id,category_id`); bundled habitat rules if omitted.
    #[arg(long, requires = "categories")]
    rules: Option<PathBuf>,
    /// Category CSV (`category_id,name`).
    #[arg(long, requires = "rules")]
    categories: Option<PathBuf>,
    /// Class scheme the rules are defined over (needed with custom rules).
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the binary change map here.
    #[arg(long)]
    binary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Habitat,
    Transition,
    Binary,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Pixels where the mask is nodata are excluded.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Scheme CSV (`id,name`).
    #[arg(long, conflicts_with = "preset")]
    scheme: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value = "exclude")]
    undefined: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// SceneSpec JSON; a calibrated 512 x 512 habitat scene if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; the bundled synthetic run if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_fractions(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("invalid fraction {p:?}")))
        })
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| Error::Parse(format!("expected three fractions, got {s:?}")))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::Io)?;
    }
    std::fs::write(path, body).map_err(Error::Io)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::Io)
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let (w, h) = match (&a.input, a.width, a.height) {
        (Some(p), _, _) => {
            let g = read_raster(p)?;
            (g.width(), g.height())
        }
        (None, Some(w), Some(h)) => (w, h),
        _ => return Err(Error::InvalidParameter("give --input or --width and --height".into())),
    };
    let p = partition_blocks(w, h, a.block_size)?;
    let s = assign_split(&p, a.seed, parse_fractions(&a.fractions)?)?;
    write_text(&a.out, &s.to_csv_string()?)?;
    let [tr, va, te] = s.counts();
    println!("{} blocks: {tr} train, {va} val, {te} test", p.len());
    Ok(())
}

const PATCH_INDEX: &str = "patch_index.csv";

fn patch_name(row: usize, col: usize) -> String {
    format!("patch_{row}_{col}.tif")
}

fn cmd_tile(a: TileArgs) -> Result<()> {
    let g = read_raster(&a.input)?;
    let (index, patches) = extract_patches(&g, a.patch_size, a.overlap)?;
    create_dir(&a.out)?;
    for p in &patches {
        write_raster(&p.grid, &a.out.join(patch_name(p.row, p.col)))?;
    }
    write_text(&a.out.join(PATCH_INDEX), &index.to_csv_string()?)?;
    println!(
        "{} patches of {} px (stride {})",
        index.len(),
        a.patch_size,
        index.stride()
    );
    Ok(())
}

/// Geometry spanning all patches.
fn mosaic_geometry(patches: &[Patch]) -> Result<GridGeometry> {
    let first = patches
        .first()
        .ok_or_else(|| Error::InvalidParameter("patch index is empty".into()))?
        .grid
        .geometry();
    let px = first.pixel_size;
    let (mut x0, mut y0) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in patches {
        let g = p.grid.geometry();
        x0 = x0.min(g.origin.0 - p.col as f64 * px);
        y0 = y0.max(g.origin.1 + p.row as f64 * px);
    }
    let width = patches.iter().map(|p| p.col + p.grid.width()).max().unwrap_or(0);
    let height = patches.iter().map(|p| p.row + p.grid.height()).max().unwrap_or(0);
    Ok(GridGeometry::new(width, height, px, (x0, y0), first.epsg))
}

fn cmd_mosaic(a: MosaicArgs) -> Result<()> {
    let index_path = a.patches.join(PATCH_INDEX);
    let file = File::open(&index_path).map_err(|_| Error::MissingInput(index_path.display().to_string()))?;
    let origins = PatchIndex::origins_from_csv(file)?;
    let patches = origins
        .into_iter()
        .map(|(row, col)| {
            Ok(Patch {
                row,
                col,
                grid: read_raster(&a.patches.join(patch_name(row, col)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let geometry = mosaic_geometry(&patches)?;
    let out = match patches[0].grid.bands()[0].kind() {
        BandKind::Categorical => mosaic_labels(&patches, &geometry)?,
        BandKind::Continuous => mosaic_scores(&patches, &geometry)?,
    };
    write_raster(&out, &a.out)?;
    println!("mosaic {}x{} from {} patches", out.width(), out.height(), patches.len());
    Ok(())
}

fn cmd_terrain(a: TerrainArgs) -> Result<()> {
    let dtm = read_raster(&a.dtm)?;
    create_dir(&a.out)?;
    let mut products: Vec<(&str, GeoGrid)> = Vec::new();
    match &a.dsm {
        Some(p) => {
            let t = derive_terrain(&dtm, &read_raster(p)?, a.window)?;
            products.extend([
                ("ndsm.tif", t.ndsm),
                ("slope.tif", t.slope),
                ("aspect.tif", t.aspect),
                ("roughness.tif", t.roughness),
                ("curvature.tif", t.curvature),
            ]);
        }
        None => {
            let (slope, aspect) = slope_aspect(&dtm)?;
            products.extend([
                ("slope.tif", slope),
                ("aspect.tif", aspect),
                ("roughness.tif", roughness(&dtm, a.window)?),
                ("curvature.tif", curvature(&dtm)?),
            ]);
        }
    }
    for (name, g) in &products {
        write_raster(g, &a.out.join(name))?;
    }
    println!("wrote {} terrain rasters", products.len());
    Ok(())
}

fn cmd_remap(a: RemapArgs) -> Result<()> {
    let default: RemapDefault = a.default.parse()?;
    let table = RemapTable::load(&a.table, default)?;
    let out = remap_labels(&load_label_raster(&a.input)?, &table)?;
    write_raster(&out, &a.out)?;
    if let Some(stats) = &a.stats {
        let scheme = match &a.scheme {
            Some(p) => ClassScheme::load(p)?,
            None => ClassScheme::habitat(),
        };
        write_text(stats, &area_stats_csv(&area_stats(&out, &scheme)?)?)?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let rules = match (&a.rules, &a.categories) {
        (Some(r), Some(c)) => {
            let n = match &a.scheme {
                Some(s) => ClassScheme::load(s)?.len(),
                None => ClassScheme::habitat().len(),
            };
            TransitionRuleSet::load(r, c, n)?
        }
        _ => TransitionRuleSet::habitat(),
    };
    let t = build_transition_map(&load_label_raster(&a.t1)?, &load_label_raster(&a.t2)?, &rules)?;
    write_raster(&t, &a.out)?;
    if let Some(b) = &a.binary {
        write_raster(&binarize_change(&t, rules.no_change())?, b)?;
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let scheme = match (&a.scheme, a.preset) {
        (Some(p), _) => ClassScheme::load(p)?,
        (None, Some(Preset::Transition)) => ClassScheme::transition_categories(),
        (None, Some(Preset::Binary)) => ClassScheme::binary_change(),
        (None, Some(Preset::Habitat) | None) => ClassScheme::habitat(),
    };
    let policy: UndefinedPolicy = a.undefined.parse()?;
    let pred = load_label_raster(&a.pred)?;
    let reference = load_label_raster(&a.reference)?;
    let mask = a.mask.as_deref().map(read_raster).transpose()?;
    let c = accumulate(&pred, &reference, mask.as_ref(), scheme.len())?;
    let r = report(&c, &scheme, policy)?;
    write_report_files(&a.out, &r, &c)?;
    println!(
        "OA {:.4}  macro IoU {:.4}  macro F1 {:.4}  ({} px)",
        r.overall_accuracy, r.macro_iou, r.macro_f1, r.total_pixels
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => SceneSpec::load(p)?,
        None => SceneSpec::habitat_calibrated(512, 512, 25, 42),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let scene = generate_scene(&spec, &TransitionRuleSet::habitat())?;
    create_dir(&a.out)?;
    for (name, g) in [
        ("t1.tif", &scene.t1),
        ("t2.tif", &scene.t2),
        ("truth.tif", &scene.truth),
    ] {
        write_raster(g, &a.out.join(name))?;
    }
    println!("scene {}x{} seed {}", spec.width, spec.height, spec.seed);
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::bundled_synthetic(),
    };
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = a.out.unwrap_or_else(|| cfg.output_dir());
    let result = execute(&cfg, &out)?;
    for e in &result.evaluations {
        println!(
            "{:<32} {:<12} OA {:.4}  macro IoU {:.4}  macro F1 {:.4}",
            e.scenario, e.task, e.report.overall_accuracy, e.report.macro_iou, e.report.macro_f1
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Split(a) => cmd_split(a),
        Command::Tile(a) => cmd_tile(a),
        Command::Mosaic(a) => cmd_mosaic(a),
        Command::Terrain(a) => cmd_terrain(a),
        Command::Remap(a) => cmd_remap(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
