use anyhow::Context;
use clap::{Parser, Subcommand};
use heatwell::mesh::assemble;
use heatwell::nonlinearity::{
    check_overdamping, default_epsilon0, validate_f1, validate_f2_f3, validate_q, QMode,
    SampleWindow,
};
use heatwell::region;
use heatwell_cli::config::RunConfig;
use heatwell_cli::experiments::{
    experiment_convergence, experiment_dependence, experiment_dependence_forced,
    experiment_invariant_sets,
};
use heatwell_cli::profiles::well_setup;
use heatwell_cli::report::{envelope, field_csv, region_csv, write_json, write_text};
use heatwell_cli::simulate::{detect_and_extrapolate_blowup, run_simulation};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_EXPERIMENT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "heatwell",
    version,
    about = "1D semilinear heat equation with a nonlinear dynamical boundary condition: \
             simulations, potential-well classification and blow-up experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the reaction problem from a config; writes the energy ledger and
    /// a blow-up report
    Simulate { config: PathBuf },
    /// Classify the configured initial datum into the stable/unstable sets
    Classify { config: PathBuf },
    /// Compute the variational constants (B1, lambda1, E1, ...) for the
    /// configured mesh and exponent
    WellConstants { config: PathBuf },
    /// Emit the (p, m) admissibility grid for the blow-up theorem
    Region {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 2.0)]
        p_min: f64,
        #[arg(long, default_value_t = 6.0)]
        p_max: f64,
        #[arg(long, default_value_t = 1.05)]
        m_min: f64,
        #[arg(long, default_value_t = 4.0)]
        m_max: f64,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Validate the structural hypotheses on the configured f and Q
    Validate { config: PathBuf },
    /// Temporal/spatial self-convergence and energy-residual study
    Convergence { config: PathBuf },
    /// Continuous-dependence perturbation ladder
    Depend {
        config: PathBuf,
        /// Run the forced (prescribed right-hand side) variant, which also
        /// exercises the discrete stability estimate
        #[arg(long)]
        forced: bool,
    },
    /// Set-invariance grid along the maximizer ray
    InvariantSets { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, ExitCode> {
    match RunConfig::from_path(path) {
        Ok(cfg) => Ok(cfg),
        Err(e) => {
            eprintln!("config error: {e:#}");
            Err(ExitCode::from(EXIT_CONFIG))
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Simulate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            cmd_simulate(&cfg)
        }
        Command::Classify { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            cmd_classify(&cfg)
        }
        Command::WellConstants { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            cmd_well_constants(&cfg)
        }
        Command::Region { n, p_min, p_max, m_min, m_max, resolution, output } => {
            cmd_region(n, (p_min, p_max), (m_min, m_max), resolution, output)
        }
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            cmd_validate(&cfg)
        }
        Command::Convergence { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let rep = experiment_convergence(&cfg)?;
            let pass = rep.pass;
            println!(
                "temporal order {:.3}, spatial order {:.3}, residual ratio {:.3} -> {}",
                rep.temporal_order,
                rep.spatial_order,
                rep.residual_ratio,
                verdict(pass)
            );
            write_report(&cfg, "convergence_report.json", rep)?;
            Ok(exit_pass(pass))
        }
        Command::Depend { config, forced } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let rep = if forced {
                experiment_dependence_forced(&cfg)?
            } else {
                experiment_dependence(&cfg)?
            };
            let pass = rep.pass;
            println!(
                "sup distances {:?}, ratios {:?} -> {}",
                rep.sup_distances,
                rep.ratios,
                verdict(pass)
            );
            write_report(&cfg, "dependence_report.json", rep)?;
            Ok(exit_pass(pass))
        }
        Command::InvariantSets { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let rep = experiment_invariant_sets(&cfg)?;
            let pass = rep.pass;
            println!(
                "{} in-scope runs, {} persistent -> {}",
                rep.in_scope_runs,
                rep.persistent_runs,
                verdict(pass)
            );
            for r in &rep.runs {
                println!(
                    "  amplitude {:>5.2} lambda1: {:?} ({:?})",
                    r.amplitude_rel, r.initial_label, r.status
                );
            }
            write_report(&cfg, "invariant_sets_report.json", rep)?;
            Ok(exit_pass(pass))
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn exit_pass(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_EXPERIMENT)
    }
}

fn write_report<T: Serialize>(cfg: &RunConfig, name: &str, body: T) -> anyhow::Result<()> {
    let path = Path::new(&cfg.output_dir).join(name);
    write_json(&path, &envelope(cfg.fingerprint(), cfg.seed, body))?;
    println!("report written to {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct SimulateBody {
    status: heatwell_cli::simulate::RunStatus,
    blowup: heatwell_cli::simulate::BlowupReport,
    constants: Option<heatwell::well::WellConstants>,
    initial_verdict: Option<heatwell::well::MembershipVerdict>,
    e2: Option<f64>,
    steps: usize,
    final_time: f64,
}

#[derive(Serialize)]
struct FinalState {
    t: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

fn cmd_simulate(cfg: &RunConfig) -> anyhow::Result<ExitCode> {
    let art = run_simulation(cfg).context("simulation")?;
    let blowup =
        detect_and_extrapolate_blowup(&art.ledger, &art.status, cfg.p, cfg.m, cfg.n_dim);
    let steps = art.ledger.records.len() - 1;
    let final_time = art.ledger.last().t;
    println!("status: {:?} after {} steps (t = {:.6})", art.status, steps, final_time);
    if let Some(fit) = &blowup.fit {
        println!(
            "fitted H' = C H^(1+beta): beta = {:.4}, extrapolated T_max = {:.6}",
            fit.beta, fit.t_max
        );
    }

    let out = Path::new(&cfg.output_dir);
    write_text(&out.join("ledger.csv"), &art.ledger.to_csv())?;
    write_text(&out.join("final_state.csv"), &field_csv(&art.final_field))?;
    write_json(
        &out.join("final_state.json"),
        &envelope(
            cfg.fingerprint(),
            cfg.seed,
            FinalState {
                t: final_time,
                nodes: art.final_field.mesh.nodes.clone(),
                values: art.final_field.coeffs.clone(),
            },
        ),
    )?;
    write_report(
        cfg,
        "simulate_report.json",
        SimulateBody {
            status: art.status.clone(),
            blowup,
            constants: art.constants,
            initial_verdict: art.initial_verdict,
            e2: art.e2,
            steps,
            final_time,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(cfg: &RunConfig) -> anyhow::Result<ExitCode> {
    let mesh = cfg.mesh()?;
    let ops = assemble(&mesh);
    let (wc, maximizer) = well_setup(cfg, &ops)?;
    let u0 = match heatwell_cli::profiles::plain_profile(cfg, &mesh)? {
        Some(f) => f,
        None => heatwell_cli::profiles::b1_maximizer_profile(cfg, &ops, &wc, &maximizer)?,
    };
    let f = cfg.source_term()?;
    let tol = cfg.classification_tol.unwrap_or_else(|| wc.default_tol());
    let verdict = heatwell::well::classify(&ops, &u0, &wc, &f, tol)?;
    println!(
        "label: {:?} (J = {:.6e}, K = {:.6e}, |grad| = {:.6e}, margin = {:.3e})",
        verdict.label, verdict.j, verdict.k, verdict.grad_norm, verdict.margin
    );
    write_report(cfg, "classify_report.json", verdict)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_well_constants(cfg: &RunConfig) -> anyhow::Result<ExitCode> {
    let mesh = cfg.mesh()?;
    let ops = assemble(&mesh);
    let (mut wc, _) = well_setup(cfg, &ops)?;
    let f = cfg.source_term()?;
    if !matches!(f.kind, heatwell::nonlinearity::SourceKind::Power) {
        let ascent = heatwell::well::AscentOptions { seed: cfg.seed, ..Default::default() };
        let (d1, _) = heatwell::well::compute_d1(&ops, &f, &ascent)?;
        wc.d1 = Some(d1);
    }
    println!(
        "B1 = {:.12e}, lambda1 = {:.12e}, lambda1~ = {:.12e}, E1 = {:.12e}",
        wc.b1, wc.lambda1, wc.lambda1_tilde, wc.e1
    );
    if let Some((l, e)) = wc.generalized() {
        println!("generalized lambda1 = {l:.6e}, E1 = {e:.6e}");
    }
    write_report(cfg, "well_constants.json", wc)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_region(
    n: u32,
    p_range: (f64, f64),
    m_range: (f64, f64),
    resolution: usize,
    output: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let rows = match region::emit_region_grid(n, p_range, m_range, resolution) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("config error: {e}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    let csv = region_csv(&rows);
    match output {
        Some(path) => {
            write_text(&path, &csv)?;
            println!("{} rows written to {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ValidateBody {
    f1: heatwell::nonlinearity::ValidationReport,
    f2: heatwell::nonlinearity::ValidationReport,
    f3: heatwell::nonlinearity::ValidationReport,
    q: heatwell::nonlinearity::ValidationReport,
    epsilon: f64,
    overdamping_admissible: Option<bool>,
    pass: bool,
}

fn cmd_validate(cfg: &RunConfig) -> anyhow::Result<ExitCode> {
    let f = cfg.source_term()?;
    let q = cfg.damping_term()?;
    let window = SampleWindow { x_range: (0.0, cfg.length), ..SampleWindow::default() };
    let eps = default_epsilon0(cfg.p).max(1e-6);
    let f1 = validate_f1(&f, &window)?;
    let (f2, f3) = validate_f2_f3(&f, eps, &window)?;
    let qr = validate_q(&q, &window, QMode::Auto)?;
    let overdamping_admissible = match q.weight_beta() {
        Some(beta) => Some(check_overdamping(beta, q.m, q.mu)?),
        None => None,
    };
    let pass =
        f1.pass && f2.pass && f3.pass && qr.pass && overdamping_admissible.unwrap_or(true);
    for r in [&f1, &f2, &f3, &qr] {
        println!(
            "{:<8} {}  (worst margin {:+.3e}; {})",
            r.hypothesis,
            verdict(r.pass),
            r.worst_margin,
            r.constants
                .iter()
                .map(|(k, v)| format!("{k} = {v:.4e}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    if let Some(adm) = overdamping_admissible {
        println!("over-damping excluded: {}", verdict(adm));
    }
    write_report(
        cfg,
        "validate_report.json",
        ValidateBody { f1, f2, f3, q: qr, epsilon: eps, overdamping_admissible, pass },
    )?;
    Ok(exit_pass(pass))
}
