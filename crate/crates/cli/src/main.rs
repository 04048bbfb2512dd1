use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use cylocc::geom::{erp_depth_to_point_cloud, RasterKind};
use cylocc::grid::{class_frequencies, voxelize_semantic, LabelSet, PayloadKind};
use cylocc::io::{self, FileKind, SpecDoc};
use cylocc::lift::{align_history, build_hit_set, color_voxels, fuse_temporal, FeatureImage};
use cylocc::losses::{
    class_weights, dice_macro, scal_loss, sem2d_loss, total_loss, weighted_ce, ClassWeights,
    LossTerms, ProbGrid, DEFAULT_WEIGHT_CONSTANT,
};
use cylocc::metrics::{generate_rays, ray_iou};
use cylocc::sketch::{dilate_radial, sketch_from_points};
use cylocc::synth::{
    analytic_voxel_gt, default_rig, demo_scene, render_erp_depth, rig_fans,
    sample_scene_point_cloud, LidarFan,
};
use cylocc::{
    CandidateMask, DilationSchedule, Error, FisheyeCamera, GridSpec, RigidTransform, Vec3,
    VoxelGrid,
};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

#[derive(Parser)]
#[command(name = "cylocc", version, about = "Cylindrical occupancy toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Recorded in reports.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene: ERP depth and semantics, a lidar point cloud, and
    /// cylindrical and cuboid ground-truth grids.
    Synth(SynthArgs),
    /// Majority-vote a labeled point cloud into a voxel grid.
    Voxelize(VoxelizeArgs),
    /// Candidate mask from an ERP depth raster, then radial dilation.
    Sketch(SketchArgs),
    /// Average per-camera features into the voxels of a mask.
    Lift(LiftArgs),
    /// Resample a historical feature grid into the current frame.
    Align(AlignArgs),
    /// Average the current grid with aligned history grids.
    Fuse(FuseArgs),
    /// RayIoU of a predicted label grid against ground truth.
    Eval(EvalArgs),
    /// Training losses of a probability grid against ground truth.
    Loss(LossArgs),
    /// Summarize a binary file.
    Info(InfoArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene document; defaults to a generated street scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Generated street scene variant, used without --scene.
    #[arg(long, default_value_t = 0)]
    demo: u64,
    /// Camera rig; defaults to the built-in six-camera rig. The ERP origin
    /// sits at the rig centroid.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, default_value = "2000x1000")]
    erp: String,
    /// Stratified samples per voxel axis for the ground truth.
    #[arg(long, default_value_t = 4)]
    supersample: usize,
    /// Lidar beam density multiplier.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VoxelizeArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// `cylindrical`, `cuboid`, inline JSON or a JSON file.
    #[arg(long, default_value = "cylindrical")]
    spec: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SketchArgs {
    #[arg(long)]
    depth: PathBuf,
    /// Rig whose centroid is the ERP origin; without it the origin is the
    /// ego origin.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, default_value = "cylindrical")]
    spec: String,
    #[arg(long, default_value_t = 1)]
    min_points: usize,
    #[arg(long, default_value = "8.5:0,17:1,25.6:2")]
    schedule: String,
    /// Use every n-th ERP pixel.
    #[arg(long, default_value_t = 1)]
    stride: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    rig: PathBuf,
    /// Directory holding `<camera name>.odpt` feature rasters.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    hist: PathBuf,
    #[arg(long)]
    pose_hist: PathBuf,
    #[arg(long)]
    pose_curr: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    curr: PathBuf,
    #[arg(long, num_args = 0..)]
    aligned: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Azimuths x elevations.
    #[arg(long, default_value = "512x32")]
    rays: String,
    /// Elevation interval `lo:hi` in radians, or degrees with a `deg` suffix.
    #[arg(long, default_value = "-20:8.6deg", allow_hyphen_values = true)]
    elev: String,
    #[arg(long, default_value = "1,2,4")]
    thresholds: String,
    /// Distance bands `lo:hi,...`; `none` disables them.
    #[arg(long, default_value = "0:8.5,8.5:17,17:25.6")]
    bands: String,
    /// Ray origin `x,y,z` in the ego frame.
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    origin: String,
    /// Report path; standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct LossArgs {
    /// Feature grid whose channels are class probabilities.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// `auto` (from ground-truth class frequencies), `unit`, or a JSON array file.
    #[arg(long, default_value = "auto")]
    weights: String,
    /// Any of ce, dice, scal, sem2d.
    #[arg(long, default_value = "ce,dice,scal")]
    terms: String,
    /// Per-pixel probabilities for the sem2d term (feature raster).
    #[arg(long)]
    sem2d_pred: Option<PathBuf>,
    /// Semantic raster for the sem2d term; 255 marks ignored pixels.
    #[arg(long)]
    sem2d_gt: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    file: PathBuf,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io_or_format() {
                EXIT_IO
            } else {
                EXIT_DOMAIN
            })
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Voxelize(a) => voxelize(a),
        Command::Sketch(a) => sketch(a),
        Command::Lift(a) => lift(a),
        Command::Align(a) => align(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a, cli.seed),
        Command::Loss(a) => loss(a, cli.seed),
        Command::Info(a) => info(a),
    }
}

fn parse_list<F: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<F>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| usage(format!("bad {what} `{p}`"))))
        .collect()
}

fn parse_pair<A: std::str::FromStr>(s: &str, sep: char, what: &str) -> CliResult<(A, A)> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| usage(format!("{what} must look like a{sep}b, got `{s}`")))?;
    let p = |x: &str| {
        x.trim()
            .parse()
            .map_err(|_| usage(format!("bad {what} `{s}`")))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_size(s: &str) -> CliResult<(u32, u32)> {
    parse_pair(s, 'x', "size")
}

/// `lo:hi` in radians, or in degrees with a `deg` suffix.
fn parse_elevation(s: &str) -> CliResult<(f64, f64)> {
    let (body, scale) = if let Some(b) = s.strip_suffix("deg") {
        (b, std::f64::consts::PI / 180.0)
    } else {
        (s.strip_suffix("rad").unwrap_or(s), 1.0)
    };
    let (lo, hi): (f64, f64) = parse_pair(body, ':', "elevation")?;
    Ok((lo * scale, hi * scale))
}

fn parse_bands(s: &str) -> CliResult<Option<Vec<(f64, f64)>>> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.split(',')
        .map(|b| parse_pair(b, ':', "band"))
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

fn parse_spec(s: &str) -> CliResult<GridSpec> {
    Ok(match s {
        "cylindrical" => GridSpec::default_cylindrical(),
        "cuboid" => GridSpec::default_cuboid(),
        inline if inline.trim_start().starts_with('{') => io::parse_spec(inline)?,
        path => io::parse_spec(&io::read_text(path)?)?,
    })
}

fn load_rig(path: &Path) -> CliResult<Vec<FisheyeCamera>> {
    Ok(io::parse_rig(&io::read_text(path)?)?)
}

fn rig_centroid(rig: &[FisheyeCamera]) -> Vec3 {
    if rig.is_empty() {
        return Vec3::zero();
    }
    let sum = rig.iter().fold(Vec3::zero(), |acc, c| acc + c.position());
    sum * (1.0 / rig.len() as f64)
}

fn write_json(path: Option<&Path>, doc: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(doc).expect("report serializes");
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let labels = LabelSet::default();
    let (w, h) = parse_size(&a.erp)?;
    let scene = match &a.scene {
        Some(p) => io::parse_scene(&io::read_text(p)?, &labels)?,
        None => demo_scene(a.demo),
    };
    let rig = match &a.rig {
        Some(p) => load_rig(p)?,
        None => default_rig(),
    };
    std::fs::create_dir_all(&a.out)?;
    let origin = rig_centroid(&rig);
    let (depth, sem) = render_erp_depth(&scene, w, h, &RigidTransform::from_translation(origin))?;
    io::write_raster(a.out.join("depth.odpt"), &depth)?;
    io::write_raster(a.out.join("semantic.odpt"), &sem)?;

    let template = LidarFan::dense(Vec3::zero());
    let mut fans = vec![template];
    fans.extend(rig_fans(&rig, &template));
    let cloud = sample_scene_point_cloud(&scene, &fans, a.density)?;
    io::write_point_cloud(a.out.join("cloud.opcd"), &cloud)?;

    for (name, spec) in [
        ("gt_cylindrical.ovox", GridSpec::default_cylindrical()),
        ("gt_cuboid.ovox", GridSpec::default_cuboid()),
    ] {
        io::write_voxel_grid(
            a.out.join(name),
            &analytic_voxel_gt(&scene, &spec, a.supersample)?,
        )?;
    }
    std::fs::write(a.out.join("scene.json"), io::scene_to_json(&scene, &labels))?;
    std::fs::write(a.out.join("rig.json"), io::rig_to_json(&rig))?;
    eprintln!(
        "wrote {} primitives, {}x{} ERP, {} points to {}",
        scene.primitives.len(),
        w,
        h,
        cloud.len(),
        a.out.display()
    );
    Ok(())
}

fn voxelize(a: &VoxelizeArgs) -> CliResult<()> {
    let spec = parse_spec(&a.spec)?;
    let cloud = io::read_point_cloud(&a.cloud)?;
    let grid = voxelize_semantic(&cloud, &spec, &LabelSet::default())?;
    io::write_voxel_grid(&a.out, &grid)?;
    Ok(())
}

fn sketch(a: &SketchArgs) -> CliResult<()> {
    let spec = parse_spec(&a.spec)?;
    let schedule: DilationSchedule = a.schedule.parse()?;
    schedule.validate_for(&spec)?;
    let depth = io::read_raster(&a.depth)?;
    if depth.kind != RasterKind::Depth {
        return Err(Error::Shape(format!("{} is not a depth raster", a.depth.display())).into());
    }
    let origin = match &a.rig {
        Some(p) => rig_centroid(&load_rig(p)?),
        None => Vec3::zero(),
    };
    let cloud = erp_depth_to_point_cloud::<f64>(&depth, None, a.stride)?
        .transformed(&RigidTransform::from_translation(origin));
    let mask = sketch_from_points(&cloud, &spec, a.min_points)?;
    let dilated = dilate_radial(&mask, &schedule);
    eprintln!(
        "{} seed voxels, {} after dilation ({:.2}% of the grid)",
        mask.count(),
        dilated.count(),
        100.0 * dilated.occupied_fraction()
    );
    io::write_voxel_grid(&a.out, dilated.grid())?;
    Ok(())
}

fn lift(a: &LiftArgs) -> CliResult<()> {
    let mask = CandidateMask::from_grid(io::read_voxel_grid(&a.mask)?)?;
    let rig = load_rig(&a.rig)?;
    let features = rig
        .iter()
        .map(|c| {
            let path = a.features.join(format!("{}.odpt", c.name));
            Ok(FeatureImage::new(c.name.clone(), io::read_raster(&path)?)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let hits = build_hit_set(&mask, &rig)?;
    let unhit = hits.unhit().count();
    let grid = color_voxels(&hits, &features)?;
    eprintln!(
        "{} candidate voxels, {unhit} seen by no camera",
        hits.voxels().len()
    );
    io::write_voxel_grid(&a.out, &grid)?;
    Ok(())
}

fn align(a: &AlignArgs) -> CliResult<()> {
    let hist = io::read_voxel_grid(&a.hist)?;
    let t_hist: RigidTransform = io::parse_pose(&io::read_text(&a.pose_hist)?)?;
    let t_curr: RigidTransform = io::parse_pose(&io::read_text(&a.pose_curr)?)?;
    let spec = *hist.spec();
    io::write_voxel_grid(&a.out, &align_history(&hist, &t_hist, &t_curr, &spec)?)?;
    Ok(())
}

fn fuse(a: &FuseArgs) -> CliResult<()> {
    let curr = io::read_voxel_grid(&a.curr)?;
    let aligned = a
        .aligned
        .iter()
        .map(io::read_voxel_grid)
        .collect::<cylocc::Result<Vec<VoxelGrid>>>()?;
    io::write_voxel_grid(&a.out, &fuse_temporal(&curr, &aligned)?)?;
    Ok(())
}

fn eval(a: &EvalArgs, seed: u64) -> CliResult<()> {
    let (na, ne): (usize, usize) = parse_pair(&a.rays, 'x', "ray count")?;
    let elev = parse_elevation(&a.elev)?;
    let thresholds: Vec<f64> = parse_list(&a.thresholds, "threshold")?;
    let bands = parse_bands(&a.bands)?;
    let origin: Vec<f64> = parse_list(&a.origin, "origin")?;
    let origin: [f64; 3] = origin
        .try_into()
        .map_err(|_| usage("origin needs three comma-separated values"))?;

    let pred = io::read_voxel_grid(&a.pred)?;
    let gt = io::read_voxel_grid(&a.gt)?;
    let labels = LabelSet::default();
    let rays = generate_rays(na, ne, elev, Vec3::from_f64(origin))?;
    let report = ray_iou(
        &pred,
        &gt,
        &rays,
        &thresholds,
        bands.as_deref(),
        labels.num_classes(),
    )?;
    let doc = json!({
        "seed": seed,
        "config": {
            "pred": a.pred,
            "gt": a.gt,
            "rays": [na, ne],
            "elevation_rad": [elev.0, elev.1],
            "origin": origin,
            "thresholds": thresholds,
            "bands": bands,
            "max_distance": gt.spec().max_ray_length(),
            "spec": SpecDoc::from_spec(gt.spec()),
        },
        "class_names": labels.names(),
        "ray_iou": report.ray_iou,
        "report": report,
    });
    write_json(a.report.as_deref(), &doc)
}

fn loss(a: &LossArgs, seed: u64) -> CliResult<()> {
    let terms: Vec<String> = parse_list(&a.terms, "term")?;
    for t in &terms {
        if !matches!(t.as_str(), "ce" | "dice" | "scal" | "sem2d") {
            return Err(usage(format!("unknown loss term `{t}`")));
        }
    }
    let want = |t: &str| terms.iter().any(|x| x == t);
    let labels = LabelSet::default();
    let c = labels.num_classes();
    let pred_grid = io::read_voxel_grid(&a.pred)?;
    let gt = io::read_voxel_grid(&a.gt)?;
    if !pred_grid.spec().same_lattice(gt.spec()) {
        return Err(Error::Shape("prediction and ground truth have different specs".into()).into());
    }
    if pred_grid.kind() != PayloadKind::Feature || pred_grid.channels() != c {
        return Err(
            Error::Shape(format!("prediction must be a {c}-channel probability grid")).into(),
        );
    }
    let pred = ProbGrid::from_feature_grid(&pred_grid)?;
    let weights = match a.weights.as_str() {
        "auto" => class_weights(&class_frequencies(&gt, c)?, DEFAULT_WEIGHT_CONSTANT)?,
        "unit" => ClassWeights::unit(c),
        path => {
            let w: Vec<f64> = serde_json::from_str(&io::read_text(path)?).map_err(Error::from)?;
            if w.len() != c {
                return Err(Error::Shape(format!("{} weights for {c} classes", w.len())).into());
            }
            ClassWeights::explicit(w)?
        }
    };

    let mut t = LossTerms::default();
    if want("ce") {
        t.ce = weighted_ce(&pred, &gt, &weights)?;
    }
    if want("scal") {
        t.scal = scal_loss(&pred, &gt)?;
    }
    if want("dice") {
        let argmax = VoxelGrid::from_labels(*gt.spec(), pred.argmax())?;
        t.dice = dice_macro(&argmax, &gt, c)?;
    }
    if want("sem2d") {
        let (Some(pp), Some(gp)) = (&a.sem2d_pred, &a.sem2d_gt) else {
            return Err(usage("the sem2d term needs --sem2d-pred and --sem2d-gt"));
        };
        let img = io::read_raster(pp)?;
        if img.kind != RasterKind::Feature || img.channels as usize != c {
            return Err(Error::Shape(format!(
                "sem2d prediction must be a {c}-channel feature raster"
            ))
            .into());
        }
        let probs = ProbGrid::new(c, img.data().iter().map(|&x| x as f64).collect())?;
        t.sem2d = sem2d_loss(
            &probs,
            &io::read_raster(gp)?,
            &weights,
            Some(cylocc::geom::UNLABELED),
        )?;
    }
    let total = total_loss(&t)?;
    let doc = json!({
        "seed": seed,
        "config": {
            "pred": a.pred,
            "gt": a.gt,
            "terms": terms,
            "weights": a.weights,
            "weight_constant": weights.constant,
        },
        "class_names": labels.names(),
        "class_weights": weights.weights,
        "terms": { "ce": t.ce, "scal": t.scal, "dice": t.dice, "sem2d": t.sem2d },
        "total": total,
    });
    write_json(a.report.as_deref(), &doc)
}

fn info(a: &InfoArgs) -> CliResult<()> {
    let bytes = std::fs::read(&a.file)?;
    match io::sniff(&bytes) {
        Some(FileKind::VoxelGrid) => {
            let grid: VoxelGrid = io::decode_voxel_grid(&bytes)?;
            let spec = grid.spec();
            println!("OVOX voxel grid");
            println!("  coord_sys: {:?}", spec.coord_sys());
            println!("  dims: {:?} ({} voxels)", spec.dims(), spec.voxel_count());
            for (name, (lo, hi)) in ["axis0", "axis1", "axis2"].iter().zip(spec.ranges()) {
                println!("  {name}: [{lo}, {hi})");
            }
            println!("  payload: {:?} x {}", grid.kind(), grid.channels());
            if grid.kind() != PayloadKind::Feature {
                println!("  occupied: {}", grid.occupied_count());
            }
        }
        Some(FileKind::PointCloud) => {
            let cloud: cylocc::LabeledPointCloud = io::decode_point_cloud(&bytes)?;
            println!("OPCD point cloud");
            println!("  points: {}", cloud.len());
        }
        Some(FileKind::Raster) => {
            let img = io::decode_raster(&bytes)?;
            println!("ODPT raster");
            println!("  kind: {:?}", img.kind);
            println!("  size: {}x{} x {}", img.width, img.height, img.channels);
        }
        None => {
            return Err(Error::Format(cylocc::FormatError::BadMagic {
                expected: *b"OVOX",
                found: bytes.iter().take(4).copied().collect(),
            })
            .into())
        }
    }
    Ok(())
}
