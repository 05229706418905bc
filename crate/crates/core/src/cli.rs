//! Command-line driver: `relax`, `dwall`, `sweep` and `gsfe-map`.
//!
//! Exit codes: 0 on success, 1 on configuration or model errors, 2 when a
//! relaxation hit `max_iter` before converging (outputs are still written).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{gsfe_map, width_table, ReportRow, SweepRun};
use crate::domainwall::{characteristic_width, kink_fwhm, solve_kink, wall_energy_per_length, WallSpec};
use crate::error::{Error, Result};
use crate::gsfe::{ElasticModuli, GsfeModel};
use crate::io::{read_field, write_columns, write_csv, write_field, write_map};
use crate::lattice::{moire_cell, Basis2, LayerPair, StrainFamily};
use crate::relax::{default_grid, relax, scaling_diagnostic, DisplacementField, EnergyFunctional, RelaxOptions, RelaxResult};

#[derive(Parser, Debug)]
#[command(name = "moire", version, about = "Relaxation of bilayer moire superlattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in graphene twist sweep when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Grid points per moire period; overrides the configuration.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Relax every configured parameter and write fields, traces and energies.
    Relax,
    /// Solve the one-dimensional wall problem at the configured normal angles.
    Dwall,
    /// Warm-started relaxation sweep followed by the domain-wall width table.
    Sweep,
    /// Misfit energy maps of relaxed (or rigid) configurations.
    GsfeMap {
        /// Map the rigid stacking instead of relaxing.
        #[arg(long)]
        unrelaxed: bool,
        /// Start from a saved field instead of relaxing (single parameter only).
        #[arg(long)]
        field: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Twist,
    Dilation,
    PureShear,
    SimpleShear,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub bond_length_angstrom: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { bond_length_angstrom: 1.42 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub gsfe_c0_mev: f64,
    pub gsfe_c1_mev: f64,
    pub gsfe_c2_mev: f64,
    pub gsfe_c3_mev: f64,
    pub lambda_mev: f64,
    pub mu_mev: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let g = GsfeModel::graphene();
        let m = ElasticModuli::graphene();
        MaterialConfig {
            gsfe_c0_mev: g.c0,
            gsfe_c1_mev: g.c1,
            gsfe_c2_mev: g.c2,
            gsfe_c3_mev: g.c3,
            lambda_mev: m.lambda,
            mu_mev: m.mu,
        }
    }
}

impl MaterialConfig {
    pub fn model(&self) -> GsfeModel {
        GsfeModel {
            c0: self.gsfe_c0_mev,
            c1: self.gsfe_c1_mev,
            c2: self.gsfe_c2_mev,
            c3: self.gsfe_c3_mev,
        }
    }

    pub fn moduli(&self) -> ElasticModuli {
        ElasticModuli {
            lambda: self.lambda_mev,
            mu: self.mu_mev,
        }
    }
}

/// Twist angles are given in degrees, the other families as strain amplitudes.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub twist_deg: Vec<f64>,
    pub strain: Vec<f64>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            kind: FamilyKind::Twist,
            twist_deg: vec![0.8, 0.4, 0.2, 0.1],
            strain: Vec::new(),
        }
    }
}

impl FamilyConfig {
    /// `(reported value, family)` pairs in configuration order.
    pub fn members(&self) -> Result<Vec<(f64, StrainFamily)>> {
        let (values, other) = match self.kind {
            FamilyKind::Twist => (&self.twist_deg, &self.strain),
            _ => (&self.strain, &self.twist_deg),
        };
        if values.is_empty() {
            return Err(Error::Config(format!("no parameter values for family {:?}", self.kind)));
        }
        if !other.is_empty() {
            return Err(Error::Config(
                "twist families take `twist_deg`, strain families take `strain`".into(),
            ));
        }
        values
            .iter()
            .map(|&v| {
                let fam = match self.kind {
                    FamilyKind::Twist => StrainFamily::Twist { theta: v.to_radians() },
                    FamilyKind::Dilation => StrainFamily::Dilation { eps: v },
                    FamilyKind::PureShear => StrainFamily::PureShear { eps: v },
                    FamilyKind::SimpleShear => StrainFamily::SimpleShear { eps: v },
                };
                fam.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok((v, fam))
            })
            .collect()
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub grad_tol_mev_per_angstrom: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Fixed grid; chosen from the moire period when absent.
    pub grid: Option<usize>,
    pub target_spacing_angstrom: f64,
    pub min_grid: usize,
    pub max_grid: usize,
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = RelaxOptions::default();
        SolverConfig {
            grad_tol_mev_per_angstrom: o.grad_tol,
            max_iter: o.max_iter,
            memory: o.memory,
            grid: None,
            target_spacing_angstrom: 2.8,
            min_grid: 128,
            max_grid: 512,
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub samples_per_angstrom: f64,
    pub map_resolution: usize,
    /// Reference shear-wall width; taken from the sweep or the kink theory when absent.
    pub l0_perp_angstrom: Option<f64>,
    pub triplets: Vec<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            samples_per_angstrom: 2.0,
            map_resolution: 256,
            l0_perp_angstrom: None,
            triplets: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KinkConfig {
    pub half_domain: f64,
    pub samples: usize,
    pub normal_angles_deg: Vec<f64>,
}

impl Default for KinkConfig {
    fn default() -> Self {
        KinkConfig {
            half_domain: 12.0,
            samples: 2401,
            normal_angles_deg: vec![90.0, 60.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub material: MaterialConfig,
    pub family: FamilyConfig,
    pub solver: SolverConfig,
    pub analysis: AnalysisConfig,
    pub kink: KinkConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lattice.bond_length_angstrom > 0.0) {
            return bad("bond_length_angstrom must be positive");
        }
        self.material.model().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.material.moduli().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.family.members()?;
        let s = &self.solver;
        if !(s.grad_tol_mev_per_angstrom > 0.0) || s.max_iter == 0 || s.memory == 0 {
            return bad("grad_tol_mev_per_angstrom, max_iter and memory must be positive");
        }
        if s.grid == Some(0) || !(s.target_spacing_angstrom > 0.0) || s.min_grid == 0 || s.min_grid > s.max_grid {
            return bad("grid settings must be positive with min_grid <= max_grid");
        }
        let a = &self.analysis;
        if !(a.samples_per_angstrom > 0.0) || a.map_resolution == 0 {
            return bad("samples_per_angstrom and map_resolution must be positive");
        }
        if a.triplets.iter().any(|&i| !(1..=3).contains(&i)) {
            return bad("triplets must lie in 1..=3");
        }
        if a.l0_perp_angstrom.is_some_and(|l| !(l > 0.0)) {
            return bad("l0_perp_angstrom must be positive");
        }
        let k = &self.kink;
        if !(k.half_domain > 0.0) || k.samples < 9 {
            return bad("kink half_domain must be positive with at least 9 samples");
        }
        Ok(())
    }

    fn reference(&self) -> Basis2 {
        Basis2::hexagonal(self.lattice.bond_length_angstrom)
    }

    fn functional(&self, family: &StrainFamily, grid_override: Option<usize>) -> Result<EnergyFunctional> {
        let pair = LayerPair::from_family(family, &self.reference())?;
        let s = &self.solver;
        let n = match grid_override.or(s.grid) {
            Some(n) => n,
            None => {
                let cell = moire_cell(&pair.a1, &pair.a2, 1)?;
                default_grid(&cell, s.target_spacing_angstrom, s.min_grid, s.max_grid)
            }
        };
        EnergyFunctional::new(pair, n, self.material.model(), self.material.moduli())
    }

    fn options(&self, initial: Option<DisplacementField>) -> RelaxOptions {
        RelaxOptions {
            grad_tol: self.solver.grad_tol_mev_per_angstrom,
            max_iter: self.solver.max_iter,
            memory: self.solver.memory,
            initial,
            precondition: true,
        }
    }
}

/// Sets the global thread pool from `MOIRE_THREADS` when present.
fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MOIRE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("MOIRE_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config("MOIRE_THREADS must be positive".into()));
        }
        // a pool built earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Run a parsed command. `Ok(false)` means some relaxation did not converge.
pub fn run(cli: &Cli) -> Result<bool> {
    configure_threads()?;
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.grid == Some(0) {
        return Err(Error::Config("--grid must be positive".into()));
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Relax => cmd_relax(&config, &cli.out, cli.grid, false).map(|r| r.converged),
        Command::Sweep => cmd_sweep(&config, &cli.out, cli.grid),
        Command::Dwall => cmd_dwall(&config, &cli.out).map(|_| true),
        Command::GsfeMap { unrelaxed, field } => cmd_gsfe_map(&config, &cli.out, cli.grid, *unrelaxed, field.as_deref()),
    }
}

/// Relaxed members of a parameter sweep.
pub struct SweepOutput {
    pub runs: Vec<(f64, StrainFamily, EnergyFunctional, RelaxResult)>,
    pub converged: bool,
}

fn tag(family: &StrainFamily, value: f64) -> String {
    format!("{}_{}", family.name(), value)
}

/// Relax every member, writing `field_*.bin`, `trace_*.csv` and `energy.csv`.
pub fn cmd_relax(config: &RunConfig, out: &Path, grid: Option<usize>, warm_start: bool) -> Result<SweepOutput> {
    let mut runs: Vec<(f64, StrainFamily, EnergyFunctional, RelaxResult)> = Vec::new();
    let mut rows = Vec::new();
    let mut converged = true;
    for (value, family) in config.family.members()? {
        let functional = config.functional(&family, grid)?;
        let initial = match runs.last() {
            Some((_, _, prev_f, prev_r)) if warm_start => {
                // displacements grow with the moire period
                let ratio = (functional.cell().measure() / prev_f.cell().measure()).sqrt();
                let (n1, n2) = functional.shape();
                let mut f = prev_r.field.resampled(n1, n2);
                f.data_mut().iter_mut().for_each(|v| *v *= ratio);
                Some(f)
            }
            _ => None,
        };
        let result = relax(&functional, &config.options(initial))?;
        let (n1, n2) = functional.shape();
        log::info!(
            "{} {}: grid {}x{}, {} iterations, |g|inf {:.3e}, E {:.6} -> {:.6} meV",
            family.name(),
            value,
            n1,
            n2,
            result.iterations,
            result.grad_inf,
            result.unrelaxed.total,
            result.energy.total
        );
        if !result.converged {
            log::warn!("{} {} did not converge within max_iter", family.name(), value);
            converged = false;
        }
        let t = tag(&family, value);
        write_field(&out.join(format!("field_{t}.bin")), &result.field)?;
        let trace: Vec<Vec<String>> = result
            .trace
            .iter()
            .map(|e| vec![e.iteration.to_string(), e.energy.to_string(), e.grad_inf.to_string(), e.step.to_string()])
            .collect();
        write_csv(&out.join(format!("trace_{t}.csv")), &["iteration", "energy_mev", "grad_inf", "step"], &trace)?;
        let e = &result.energy;
        rows.push(vec![
            family.name().to_string(),
            value.to_string(),
            n1.to_string(),
            n2.to_string(),
            result.iterations.to_string(),
            result.converged.to_string(),
            result.grad_inf.to_string(),
            result.unrelaxed.total.to_string(),
            e.total.to_string(),
            e.intra1.to_string(),
            e.intra2.to_string(),
            e.inter.to_string(),
            e.cell_measure.to_string(),
        ]);
        runs.push((value, family, functional, result));
    }
    write_csv(
        &out.join("energy.csv"),
        &[
            "family",
            "parameter",
            "n1",
            "n2",
            "iterations",
            "converged",
            "grad_inf",
            "e_unrelaxed_mev",
            "e_relaxed_mev",
            "intra1_mev",
            "intra2_mev",
            "inter_mev",
            "cell_measure",
        ],
        &rows,
    )?;
    Ok(SweepOutput { runs, converged })
}

/// Width table rows for full-rank members of a sweep.
pub fn sweep_table(config: &RunConfig, sweep: &SweepOutput) -> Result<Vec<ReportRow>> {
    let runs: Vec<SweepRun<'_>> = sweep
        .runs
        .iter()
        .filter(|(_, _, f, _)| f.cell().stripe.is_none())
        .map(|(value, family, functional, result)| SweepRun {
            family: family.name(),
            parameter: *value,
            functional,
            field: &result.field,
            triplets: config.analysis.triplets.clone(),
        })
        .collect();
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    width_table(
        &runs,
        config.material.moduli(),
        &config.material.model(),
        config.analysis.samples_per_angstrom,
        config.analysis.l0_perp_angstrom,
    )
}

fn cmd_sweep(config: &RunConfig, out: &Path, grid: Option<usize>) -> Result<bool> {
    let sweep = cmd_relax(config, out, grid, config.solver.warm_start)?;
    let rows = sweep_table(config, &sweep)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.clone(),
                r.parameter.to_string(),
                r.wall.clone(),
                r.normal_angle.to_string(),
                r.fwhm.to_string(),
                r.ratio.to_string(),
                r.theory_ratio.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("widths.csv"),
        &["family", "parameter", "wall", "theta0_plus_phi_rad", "fwhm_angstrom", "ratio", "theory_ratio"],
        &csv,
    )?;
    for r in &rows {
        log::info!(
            "{} {} triplet {} ({}): FWHM {:.2} A, ratio {:.3} (theory {:.3})",
            r.family,
            r.parameter,
            r.triplet,
            r.wall,
            r.fwhm,
            r.ratio,
            r.theory_ratio
        );
        write_columns(
            &out.join(format!("profile_{}_{}_t{}.csv", r.family, r.parameter, r.triplet)),
            &["y_angstrom", "u"],
            &[&r.profile.y, &r.profile.u],
        )?;
    }
    if config.family.kind == FamilyKind::Twist {
        let input: Vec<(f64, &EnergyFunctional, &DisplacementField)> = sweep
            .runs
            .iter()
            .map(|(_, fam, f, r)| (fam.parameter(), f, &r.field))
            .collect();
        let scaling = scaling_diagnostic(&input)?;
        let csv: Vec<Vec<String>> = scaling
            .iter()
            .map(|s| {
                vec![
                    s.theta.to_degrees().to_string(),
                    s.norm_cell.to_string(),
                    s.scaled_cell.to_string(),
                    s.norm_reference.to_string(),
                    s.scaled_reference.to_string(),
                ]
            })
            .collect();
        write_csv(
            &out.join("scaling.csv"),
            &["twist_deg", "norm_cell", "scaled_cell", "norm_reference", "scaled_reference"],
            &csv,
        )?;
    }
    Ok(sweep.converged)
}

/// Summary row of the one-dimensional wall problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DwallRow {
    pub normal_angle_deg: f64,
    pub k_min: f64,
    pub l_phi: f64,
    pub kappa: f64,
    pub fwhm_dimensionless: f64,
    pub fwhm_angstrom: f64,
    pub energy_mev_per_angstrom: f64,
}

pub fn cmd_dwall(config: &RunConfig, out: &Path) -> Result<Vec<DwallRow>> {
    let reference = config.reference();
    let model = config.material.model();
    let moduli = config.material.moduli();
    let mut rows = Vec::new();
    for &deg in &config.kink.normal_angles_deg {
        let spec = WallSpec::with_normal_angle(1, deg.to_radians(), &reference, moduli, &model)?;
        let widths = characteristic_width(&spec);
        let sol = solve_kink(&spec.potential, config.kink.half_domain, config.kink.samples)?.with_width(widths.l_phi);
        let w = kink_fwhm(&spec.potential)?;
        let energy = wall_energy_per_length(&spec, &sol);
        write_columns(
            &out.join(format!("kink_{deg}.csv")),
            &["t", "y_angstrom", "psi"],
            &[&sol.t, &sol.y(), &sol.psi],
        )?;
        let row = DwallRow {
            normal_angle_deg: deg,
            k_min: spec.potential.k_min,
            l_phi: widths.l_phi,
            kappa: sol.kappa,
            fwhm_dimensionless: w,
            fwhm_angstrom: w * widths.l_phi,
            energy_mev_per_angstrom: energy.total,
        };
        log::info!(
            "wall at {deg} deg: l = {:.3} A, FWHM {:.3} A, kappa {:.5}",
            row.l_phi,
            row.fwhm_angstrom,
            row.kappa
        );
        rows.push(row);
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            [
                r.normal_angle_deg,
                r.k_min,
                r.l_phi,
                r.kappa,
                r.fwhm_dimensionless,
                r.fwhm_angstrom,
                r.energy_mev_per_angstrom,
            ]
            .iter()
            .map(|v| v.to_string())
            .collect()
        })
        .collect();
    write_csv(
        &out.join("dwall.csv"),
        &[
            "normal_angle_deg",
            "k_min_mev",
            "l_phi_angstrom",
            "kappa",
            "fwhm_dimensionless",
            "fwhm_angstrom",
            "energy_mev_per_angstrom",
        ],
        &csv,
    )?;
    Ok(rows)
}

fn cmd_gsfe_map(
    config: &RunConfig,
    out: &Path,
    grid: Option<usize>,
    unrelaxed: bool,
    field: Option<&Path>,
) -> Result<bool> {
    let members = config.family.members()?;
    if field.is_some() && members.len() != 1 {
        return Err(Error::Config("--field needs exactly one configured parameter".into()));
    }
    let mut converged = true;
    for (value, family) in members {
        let functional = config.functional(&family, grid)?;
        let (n1, n2) = functional.shape();
        let u = if unrelaxed {
            DisplacementField::zeros(n1, n2)
        } else if let Some(p) = field {
            let f = read_field(p)?;
            if f.shape() != (n1, n2) {
                return Err(Error::GridMismatch(format!(
                    "field is {:?}, configuration gives {:?}",
                    f.shape(),
                    (n1, n2)
                )));
            }
            f
        } else {
            let r = relax(&functional, &config.options(None))?;
            converged &= r.converged;
            r.field
        };
        let map = gsfe_map(&functional, &u, config.analysis.map_resolution)?;
        let suffix = if unrelaxed { "_rigid" } else { "" };
        write_map(&out.join(format!("map_{}{suffix}.ppm", tag(&family, value))), &map)?;
        log::info!(
            "{} {}: misfit density {:.4}..{:.4} meV, {} AA region(s)",
            family.name(),
            value,
            map.min(),
            map.max(),
            map.count_high_regions(0.5)
        );
    }
    Ok(converged)
}
