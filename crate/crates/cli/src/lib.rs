//! `relief` command line: gen, target, info and serve.
//!
//! Exit codes: 0 success, 1 usage, 2 file I/O, 3 pipeline error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relief_core::{
    load_cloud, prepare_session, save_mesh, BaseSurface, CloudFormat, MeshFormat, PointCloud,
    ReliefError, ReliefParams, Session, SessionConfig, StageTimings, TargetRequest, Vector3,
};
use relief_service::ServiceConfig;
use serde_json::json;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_PIPELINE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "relief",
    version,
    about = "Bas-relief generation from point clouds with normals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a relief at fixed parameters and save it as a mesh.
    Gen(GenArgs),
    /// Search parameters for a target height, then save the relief.
    Target(TargetArgs),
    /// Prepare a session and print its counts and timings as JSON.
    Info(InputArgs),
    /// Run the HTTP and WebSocket service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Point cloud with normals (PLY or XYZ).
    #[arg(short, long)]
    pub input: PathBuf,
    /// View direction as `x,y,z`.
    #[arg(long, default_value = "0,0,1", value_parser = parse_view)]
    pub view: Vector3<f64>,
    /// Requested control point count.
    #[arg(long, default_value_t = 8000)]
    pub controls: usize,
    /// Multilevel B-spline levels.
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    /// Run the frame stages one after another.
    #[arg(long)]
    pub reference_mode: bool,
}

#[derive(Debug, Args)]
pub struct KnobArgs {
    #[arg(long, default_value_t = 4.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.02)]
    pub gamma: f64,
    /// `plane[:z0]`, `fold:x0,s1,s2` or `wave:amp,freq,axis`.
    #[arg(long, default_value = "plane", value_parser = parse_base)]
    pub base: BaseSurface,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output mesh; the extension picks PLY or OBJ unless `--format` is given.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_parser = ["ply", "obj"])]
    pub format: Option<String>,
    /// Print per-stage timings in milliseconds as JSON.
    #[arg(long)]
    pub timings: bool,
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub knobs: KnobArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("goal").required(true).args(["height", "height_frac"]))]
pub struct TargetArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub knobs: KnobArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Target height in input units.
    #[arg(long)]
    pub height: Option<f64>,
    /// Target height as a fraction of the cloud's bounding-box diagonal.
    #[arg(long)]
    pub height_frac: Option<f64>,
    /// Solve budget for the search.
    #[arg(long, default_value_t = relief_core::target::DEFAULT_MAX_SOLVES)]
    pub max_solves: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen port; defaults to `RELIEF_PORT` or 7878.
    #[arg(long)]
    pub port: Option<u16>,
}

fn parse_view(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad view `{s}`: {e}"))?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vector3::new(x, y, z)),
        _ => Err(format!("view `{s}` needs three finite components")),
    }
}

fn parse_base(s: &str) -> Result<BaseSurface, String> {
    s.parse().map_err(|e: ReliefError| e.to_string())
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Pipeline(ReliefError),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(..) => EXIT_IO,
            Failure::Pipeline(_) => EXIT_PIPELINE,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
            Failure::Pipeline(e) => write!(f, "{}: {e}", e.code()),
        }
    }
}

impl From<ReliefError> for Failure {
    fn from(e: ReliefError) -> Self {
        Failure::Pipeline(e)
    }
}

/// Parses `argv` and runs the command, printing errors to stderr.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

pub fn execute(cmd: Command, out: &mut impl Write) -> Result<(), Failure> {
    match cmd {
        Command::Gen(a) => gen(a, out),
        Command::Target(a) => target(a, out),
        Command::Info(a) => info(a, out),
        Command::Serve(a) => serve(a),
    }
}

fn read_cloud(path: &Path) -> Result<PointCloud, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Io(path.into(), e))?;
    let format = CloudFormat::from_path(path).unwrap_or_else(|| CloudFormat::sniff(&bytes));
    Ok(load_cloud(&bytes[..], format)?)
}

fn params(k: &KnobArgs) -> ReliefParams {
    ReliefParams {
        alpha: k.alpha,
        beta: k.beta,
        gamma: k.gamma,
        base: k.base.clone(),
    }
}

fn open_session(input: &InputArgs, knobs: ReliefParams) -> Result<(Session, f64), Failure> {
    if input.levels == 0 {
        return Err(Failure::Usage("--levels must be at least 1".into()));
    }
    let cloud = read_cloud(&input.input)?;
    let diagonal = cloud.diagonal();
    let config = SessionConfig {
        controls: input.controls,
        levels: input.levels,
        params: knobs,
        reference_mode: input.reference_mode,
        ..Default::default()
    };
    Ok((prepare_session(&cloud, input.view, &config)?, diagonal))
}

fn mesh_format(o: &OutputArgs) -> Result<MeshFormat, Failure> {
    match &o.format {
        Some(f) => Ok(MeshFormat::parse(f).expect("clap restricts formats")),
        None => MeshFormat::from_path(&o.output).ok_or_else(|| {
            Failure::Usage(format!(
                "cannot tell the mesh format of `{}`; use .ply, .obj or --format",
                o.output.display()
            ))
        }),
    }
}

fn write_mesh(session: &mut Session, o: &OutputArgs) -> Result<usize, Failure> {
    let format = mesh_format(o)?;
    let mesh = session.export_mesh()?;
    let io = |e| Failure::Io(o.output.clone(), e);
    let file = File::create(&o.output).map_err(io)?;
    let mut w = BufWriter::new(file);
    match save_mesh(&mesh, &mut w, format) {
        Ok(()) => {}
        Err(ReliefError::Io(e)) => return Err(io(e)),
        Err(e) => return Err(e.into()),
    }
    w.flush().map_err(io)?;
    Ok(mesh.triangles().len())
}

fn print_json(out: &mut impl Write, v: serde_json::Value) -> Result<(), Failure> {
    writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"))
        .map_err(|e| Failure::Io("<stdout>".into(), e))
}

fn timings_json(s: &Session, adjust: &StageTimings, drain: &StageTimings) -> serde_json::Value {
    json!({
        "prepare": s.prepared().timings,
        "adjust": adjust,
        "drain": drain,
    })
}

fn gen(a: GenArgs, out: &mut impl Write) -> Result<(), Failure> {
    let p = params(&a.knobs);
    p.validate()?;
    let format = mesh_format(&a.output)?;
    let (mut s, _) = open_session(&a.input, p.clone())?;
    let adjust = s.adjust(&p)?.timings;
    let faces = write_mesh(&mut s, &a.output)?;
    let drain = s.last_frame().timings;
    if a.output.verbose {
        eprintln!(
            "{} visible points, {} controls, {faces} faces -> {} ({format:?})",
            s.point_count(),
            s.control_count(),
            a.output.output.display()
        );
    }
    if a.output.timings {
        print_json(out, timings_json(&s, &adjust, &drain))?;
    }
    Ok(())
}

fn target(a: TargetArgs, out: &mut impl Write) -> Result<(), Failure> {
    let p = params(&a.knobs);
    p.validate()?;
    mesh_format(&a.output)?;
    let (mut s, diagonal) = open_session(&a.input, p)?;
    let h0 = match (a.height, a.height_frac) {
        (Some(h), _) => h,
        (_, Some(f)) => f * diagonal,
        _ => unreachable!("clap requires one of the two"),
    };
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Failure::Usage(format!(
            "target height {h0} must be positive"
        )));
    }
    let req = TargetRequest {
        h0,
        max_solves: a.max_solves,
    };
    let verbose = a.output.verbose;
    let outcome = s.solve_for_height(&req, |pr| {
        if verbose {
            eprintln!(
                "solve {}: alpha {:.6} beta {:.6} span {:.6}",
                pr.solves, pr.alpha, pr.beta, pr.span
            );
        }
    })?;
    write_mesh(&mut s, &a.output)?;
    let drain = s.last_frame().timings;
    let mut report = json!({
        "h0": h0,
        "diagonal": diagonal,
        "alpha": outcome.alpha,
        "beta": outcome.beta,
        "span": outcome.span,
        "height": outcome.height,
        "solves": outcome.solves,
    });
    if a.output.timings {
        report["timings"] = timings_json(&s, &StageTimings::default(), &drain);
    }
    print_json(out, report)
}

fn info(a: InputArgs, out: &mut impl Write) -> Result<(), Failure> {
    let (s, diagonal) = open_session(&a, ReliefParams::default())?;
    let prep = s.prepared();
    print_json(
        out,
        json!({
            "input_count": prep.cloud.len(),
            "visible_count": s.point_count(),
            "control_count": s.control_count(),
            "boundary_count": prep.boundary.boundary_count(),
            "triangle_count": s.triangles().len(),
            "rho": prep.rho.get(),
            "diagonal": diagonal,
            "span": s.last_frame().span,
            "timings": prep.timings,
        }),
    )
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let mut config = ServiceConfig::from_env().map_err(Failure::Usage)?;
    if let Some(port) = a.port {
        config.port = port;
    }
    let port = config.port;
    relief_service::run(config).map_err(|e| Failure::Io(format!("127.0.0.1:{port}").into(), e))
}
