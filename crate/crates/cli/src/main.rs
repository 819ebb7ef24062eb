use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gammaseg_core::energy::EnergyParams;
use gammaseg_core::gammalab::{self, synthetic, MuPlan, MuRule, SweepPlan};
use gammaseg_core::grid::threshold_half;
use gammaseg_core::io::{load_image, save_mask, write_report};
use gammaseg_core::potential::{compute_cw, validate_assumption};
use gammaseg_core::solver::minimize;
use gammaseg_core::transport::{clp_distance, phase_samples, tlp_distance};
use gammaseg_core::{
    DoubleWell, Error, Grid, IndicatorField, Mode, Mu, MultiField, Result, ScalarField, SegmentationState, SolverConfig,
};

#[derive(Parser)]
#[command(name = "gammaseg", version, about = "Phase-field two-phase segmentation and its sharp-interface limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image at a single (eps, mu, nu); writes mask.pgm and trace.csv.
    #[command(allow_negative_numbers = true)]
    Segment {
        #[command(flatten)]
        image: ImageArgs,
        /// Interface width, > 0
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Field smoothness weight, >= 0 or `inf` for piecewise-constant fields
        #[arg(long, default_value = "1", value_parser = parse_mu)]
        mu: Mu,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Epsilon ladder with warm starts; writes report.csv and mask_<k>.pgm.
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[command(flatten)]
        image: ImageArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        /// Fixed mu, >= 0 or `inf`; ignored when --mu-ladder or --mu-divergent is set
        #[arg(long, default_value = "1", value_parser = parse_mu)]
        mu: Mu,
        /// One mu per ladder point, each >= 0, comma separated
        #[arg(long, value_delimiter = ',', conflicts_with = "mu_divergent")]
        mu_ladder: Option<Vec<f64>>,
        /// mu(eps) = MU0 * eps^(-ALPHA), given as MU0,ALPHA with MU0 > 0, ALPHA > 0
        #[arg(long, value_delimiter = ',', value_name = "MU0,ALPHA")]
        mu_divergent: Option<Vec<f64>>,
        /// Replicate seeds, comma separated; reports are written per seed
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Solve every ladder point from scratch instead of warm starting
        #[arg(long)]
        cold: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fixed eps, increasing mu ladder; writes mu_sweep.csv.
    #[command(allow_negative_numbers = true)]
    MuSweep {
        #[command(flatten)]
        image: ImageArgs,
        /// Interface width, > 0
        #[arg(long, default_value_t = 0.025)]
        eps: f64,
        /// Strictly increasing mu values, each > 0, comma separated
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        mu_ladder: Vec<f64>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Piecewise-constant ladder against the sharp energy; writes pc_check.csv and masks.
    #[command(allow_negative_numbers = true)]
    PcCheck {
        #[command(flatten)]
        image: ImageArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Relaxed 1D interface energies against the well constant; writes mm1d.csv.
    #[command(allow_negative_numbers = true)]
    Mm1d {
        /// Positive widths, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.02,0.01")]
        eps_ladder: Vec<f64>,
        /// Number of cells, >= 1024
        #[arg(long, default_value_t = 4096)]
        cells: usize,
        /// Number of interfaces, >= 1
        #[arg(long, default_value_t = 1)]
        jumps: usize,
        /// Double-well potential
        #[arg(long, value_enum, default_value_t = Well::Quartic)]
        well: Well,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Minkowski content of a mask image (or a disc) along a radius ladder; writes minkowski.csv.
    #[command(allow_negative_numbers = true)]
    Minkowski {
        /// Mask image (PGM/PPM), thresholded at 1/2
        #[arg(long, conflicts_with = "disc")]
        input: Option<PathBuf>,
        /// Use a centered disc of this radius, in (0, 0.5), instead of an image
        #[arg(long)]
        disc: Option<f64>,
        /// Disc resolution per side, >= 2
        #[arg(long, default_value_t = 512)]
        size: usize,
        /// Radii, each at least one cell width, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
        a_ladder: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// CL^p distance between two images read as states (v = channel mean clamped to [0, 1], fields = image).
    #[command(allow_negative_numbers = true)]
    TransportDist {
        /// First image
        #[arg(long)]
        a: PathBuf,
        /// Second image, same size and channel count
        #[arg(long)]
        b: PathBuf,
        /// Exponent, > 1
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Well constant and sampled double-well assumption; writes potential.csv.
    #[command(allow_negative_numbers = true)]
    CheckPotential {
        /// Double-well potential
        #[arg(long, value_enum, default_value_t = Well::Quartic)]
        well: Well,
        /// Sample count, >= 100
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Quadrature tolerance, > 0
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Well {
    Quartic,
    Sine,
}

impl Well {
    fn build(self) -> DoubleWell {
        match self {
            Well::Quartic => DoubleWell::quartic(),
            Well::Sine => DoubleWell::sine(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    /// Two halves at 0.25 and 0.75
    Half,
    /// Disc of radius 0.25 at 0.75 on 0.25
    Disc,
    /// Half split shaded by 0.2 cos(pi y)
    Shaded,
    /// Disc plus 40 small specks at 0.8 on 0.2
    Textured,
}

#[derive(Args)]
struct ImageArgs {
    /// Input image, binary PGM (P5) or PPM (P6) with maxval 255
    #[arg(long, required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Seeded synthetic image instead of --input
    #[arg(long, value_enum, conflicts_with = "input")]
    synthetic: Option<Synthetic>,
    /// Synthetic resolution per side, >= 2
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Synthetic uniform noise amplitude, >= 0
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Measure lengths in pixels (h = 1) instead of the unit square
    #[arg(long)]
    pixel_units: bool,
}

impl ImageArgs {
    fn load(&self, seed: u64) -> Result<MultiField> {
        let img = match (self.synthetic, &self.input) {
            (Some(kind), _) => {
                if !(self.noise >= 0.0 && self.noise.is_finite()) {
                    return Err(Error::InvalidParameter(format!("noise must be >= 0, got {}", self.noise)));
                }
                let (n, a) = (self.size, self.noise);
                match kind {
                    Synthetic::Half => synthetic::half_split(n, 0.25, 0.75, a, seed),
                    Synthetic::Disc => synthetic::disc(n, 0.25, 0.25, 0.75, a, seed),
                    Synthetic::Shaded => synthetic::shaded_split(n, 0.4, a, seed),
                    Synthetic::Textured => synthetic::textured(n, 40, a, seed),
                }?
            }
            (None, Some(path)) => load_image(path)?,
            (None, None) => return Err(Error::InvalidParameter("either --input or --synthetic is required".into())),
        };
        if !self.pixel_units {
            return Ok(img);
        }
        let g = img.grid();
        let grid = Grid::new(g.nx, g.ny, 1.0, 1.0, [0.0, 0.0])?;
        MultiField::new(grid, img.channels(), img.values().to_vec())
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Interface weight, > 0
    #[arg(long, default_value_t = 0.1)]
    nu: f64,
    /// Data and gradient exponent, > 1
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Double-well potential
    #[arg(long, value_enum, default_value_t = Well::Quartic)]
    well: Well,
}

#[derive(Args)]
struct LadderArgs {
    /// Strictly decreasing positive widths, at least 3, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    eps_ladder: Vec<f64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Outer iteration cap, >= 1
    #[arg(long, default_value_t = 2000)]
    max_outer: usize,
    /// Relative energy decrease that stops the solver, > 0
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Initial step of the v flow, > 0
    #[arg(long, default_value_t = 1e-2)]
    tau: f64,
    /// Floor of the field weights, in (0, 1e-3]
    #[arg(long, default_value_t = 1e-6)]
    eta: f64,
    /// Conjugate-gradient relative tolerance, > 0
    #[arg(long, default_value_t = 1e-10)]
    cg_tol: f64,
    /// Conjugate-gradient iteration cap, >= 1
    #[arg(long, default_value_t = 20_000)]
    cg_max: usize,
    /// Seed of the initial perturbation and of synthetic noise
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self, mode: Mode) -> Result<SolverConfig> {
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter("max-outer must be >= 1".into()));
        }
        let cfg = SolverConfig {
            max_outer: self.max_outer,
            tol: self.tol,
            tau: self.tau,
            eta: self.eta,
            cg_tol: self.cg_tol,
            cg_max: self.cg_max,
            mode,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output directory, created if missing
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

impl OutArgs {
    fn dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn parse_mu(s: &str) -> std::result::Result<Mu, String> {
    if matches!(s, "inf" | "infinity" | "Inf") {
        return Ok(Mu::Infinite);
    }
    let x: f64 = s.parse().map_err(|_| format!("expected a number >= 0 or `inf`, got `{s}`"))?;
    if x >= 0.0 && x.is_finite() {
        Ok(Mu::Finite(x))
    } else {
        Err(format!("mu must be >= 0 or `inf`, got {x}"))
    }
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn mode_of(mu: Mu) -> Mode {
    if mu.is_infinite() {
        Mode::PiecewiseConstant
    } else {
        Mode::Smooth
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment { image, eps, mu, model, solver, out } => {
            let u0 = image.load(solver.seed)?;
            let cfg = solver.config(mode_of(mu))?;
            let params = EnergyParams::new(model.p, mu, model.nu, eps, false)?;
            let sol = minimize(&u0, &model.well.build(), &params, &cfg, None)?;
            let dir = out.dir()?;
            save_mask(&threshold_half(&sol.state.v), dir.join("mask.pgm"))?;
            let mut csv = String::from("iteration,total,data1,data2,grad1,grad2,gl\n");
            for (k, e) in sol.trace.iter().enumerate() {
                writeln!(csv, "{k},{},{},{},{},{},{}", e.total, e.data1, e.data2, e.grad1, e.grad2, e.gl).unwrap();
            }
            write(dir.join("trace.csv"), &csv)?;
            if !sol.converged {
                eprintln!("gammaseg: warning: iteration cap reached after {} iterations", sol.iterations);
            }
        }
        Command::Sweep { image, ladder, mu, mu_ladder, mu_divergent, seeds, cold, model, solver, out } => {
            let rule = match (mu_ladder, mu_divergent) {
                (Some(seq), _) => MuRule::Sequence(seq),
                (None, Some(d)) => match d[..] {
                    [mu0, alpha] => MuRule::Divergent { mu0, alpha },
                    _ => return Err(Error::InvalidParameter("--mu-divergent takes MU0,ALPHA".into())),
                },
                (None, None) => MuRule::Fixed(mu),
            };
            let mode = if matches!(rule, MuRule::Fixed(Mu::Infinite)) { Mode::PiecewiseConstant } else { Mode::Smooth };
            let cfg = solver.config(mode)?;
            let u0 = image.load(solver.seed)?;
            let plan = SweepPlan::new(ladder.eps_ladder, rule, model.nu, model.p)?
                .with_seeds(seeds.clone())
                .with_warm_start(!cold);
            let w = model.well.build();
            let reports = gammalab::epsilon_sweep_replicates(&u0, &w, &plan, &cfg)?;
            let dir = out.dir()?;
            for (seed, rep) in seeds.iter().zip(&reports) {
                let tag = if seeds.len() > 1 { format!("_seed{seed}") } else { String::new() };
                write_report(rep, dir.join(format!("report{tag}.csv")))?;
                for (k, m) in rep.masks.iter().enumerate() {
                    save_mask(m, dir.join(format!("mask{tag}_{k}.pgm")))?;
                }
            }
        }
        Command::MuSweep { image, eps, mu_ladder, model, solver, out } => {
            let cfg = solver.config(Mode::Smooth)?;
            let u0 = image.load(solver.seed)?;
            let plan = MuPlan { eps, mu_ladder, nu: model.nu, p: model.p };
            let rows = gammalab::mu_sweep(&u0, &model.well.build(), &plan, &cfg)?;
            let mut csv = String::from("mu,std1,std2,u0_std1,u0_std2,rel_dev1,rel_dev2,energy\n");
            for r in &rows {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    r.mu, r.std[0], r.std[1], r.u0_std[0], r.u0_std[1], r.rel_dev[0], r.rel_dev[1], r.energy
                )
                .unwrap();
            }
            write(out.dir()?.join("mu_sweep.csv"), &csv)?;
        }
        Command::PcCheck { image, ladder, model, solver, out } => {
            let cfg = solver.config(Mode::PiecewiseConstant)?;
            let u0 = image.load(solver.seed)?;
            let plan = SweepPlan::new(ladder.eps_ladder, MuRule::Fixed(Mu::Infinite), model.nu, model.p)?
                .with_seeds(vec![solver.seed]);
            let rows = gammalab::pc_gamma_check(&u0, &model.well.build(), &plan, &cfg)?;
            let dir = out.dir()?;
            let mut csv = String::from("eps,c1,c2,c1_limit,c2_limit,e_eps,e_limit,gap,const_change,tv_v\n");
            for (k, r) in rows.iter().enumerate() {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.eps,
                    join(&r.c1),
                    join(&r.c2),
                    join(&r.c1_limit),
                    join(&r.c2_limit),
                    r.e_eps,
                    r.e_limit,
                    r.gap,
                    r.const_change,
                    r.tv_v
                )
                .unwrap();
                save_mask(&r.mask, dir.join(format!("mask_{k}.pgm")))?;
            }
            write(dir.join("pc_check.csv"), &csv)?;
        }
        Command::Mm1d { eps_ladder, cells, jumps, well, out } => {
            let rows = gammalab::modica_mortola_1d(&well.build(), &eps_ladder, cells, jumps)?;
            let mut csv = String::from("eps,gl,ratio,steps\n");
            for r in &rows {
                writeln!(csv, "{},{},{},{}", r.eps, r.gl, r.ratio, r.steps).unwrap();
            }
            write(out.dir()?.join("mm1d.csv"), &csv)?;
        }
        Command::Minkowski { input, disc, size, a_ladder, out } => {
            let e = match (input, disc) {
                (Some(path), _) => threshold_half(&load_image(path)?.channel_mean()),
                (None, Some(r)) => {
                    if !(r > 0.0 && r < 0.5) {
                        return Err(Error::InvalidParameter(format!("disc radius must lie in (0, 0.5), got {r}")));
                    }
                    IndicatorField::from_fn(Grid::unit_square(size)?, |[x, y]| {
                        (x - 0.5).powi(2) + (y - 0.5).powi(2) < r * r
                    })
                }
                (None, None) => return Err(Error::InvalidParameter("either --input or --disc is required".into())),
            };
            let rows = gammalab::minkowski_study(&e, &a_ladder)?;
            let mut csv = String::from("a,volume,content,perimeter,deviation\n");
            for r in &rows {
                writeln!(csv, "{},{},{},{},{}", r.a, r.volume, r.content, r.perimeter, r.deviation).unwrap();
            }
            write(out.dir()?.join("minkowski.csv"), &csv)?;
        }
        Command::TransportDist { a, b, p, out } => {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!("p must lie in (1, inf), got {p}")));
            }
            let (sa, sb) = (image_state(&load_image(a)?)?, image_state(&load_image(b)?)?);
            let d = clp_distance(&sa, &sb, p)?;
            let (a1, a2) = phase_samples(&sa)?;
            let (b1, b2) = phase_samples(&sb)?;
            let tl = |x, y| -> Result<(f64, bool)> {
                match tlp_distance(x, y, p) {
                    Ok(r) => Ok((r.distance, r.approximate)),
                    Err(Error::ZeroMeasure) => Ok((0.0, false)),
                    Err(e) => Err(e),
                }
            };
            let (d1, ap1) = tl(&a1, &b1)?;
            let (d2, ap2) = tl(&a2, &b2)?;
            let csv = format!("d_clp,tl1,tl2,approximate\n{d},{d1},{d2},{}\n", ap1 || ap2);
            print!("{csv}");
            write(out.dir()?.join("transport.csv"), &csv)?;
        }
        Command::CheckPotential { well, samples, tol, out } => {
            let w = well.build();
            let cw = compute_cw(&w, tol)?;
            let rep = validate_assumption(&w, samples)?;
            let csv = format!(
                "well,cw,samples,range_lo,range_hi,min_growth_margin\n{},{cw},{},{},{},{}\n",
                w.name(),
                rep.samples,
                rep.range.0,
                rep.range.1,
                rep.min_growth_margin
            );
            print!("{csv}");
            write(out.dir()?.join("potential.csv"), &csv)?;
        }
    }
    Ok(())
}

/// Image as a state: `v` is the clamped channel mean, both fields are the image.
fn image_state(img: &MultiField) -> Result<SegmentationState> {
    let mean = img.channel_mean();
    let v = ScalarField::new(*mean.grid(), mean.values().iter().map(|x| x.clamp(0.0, 1.0)).collect())?;
    SegmentationState::new(v, img.clone(), img.clone())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("gammaseg: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
