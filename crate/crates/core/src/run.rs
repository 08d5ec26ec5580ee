//! Subcommand execution: builds the model from a [`RunConfig`], writes the
//! artifacts and a manifest, and optionally re-checks the artifacts on disk.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{PerturbationSpec, RunConfig, TimeGrid};
use crate::dynamics::{
    bound_check_thm1, geometric_times, growth_fit_thm2, heisenberg_check, mobility_edge_scan, prepare_state,
    uniform_times, Evolution,
};
use crate::error::{Error, Result};
use crate::flux::FluxKind;
use crate::grid::truncation_check;
use crate::io::{fmt_f64, read_csv, write_csv, write_json};
use crate::perturbation::{
    gevrey_validate, AngularPotential, ClosedForm, CoefficientTable, GevreyEnvelope, GevreyReport, Radial,
};
use crate::spectral::{
    c0_for, diagonalize_in, lowest_eigenvalue, spectral_projection, BlockHamiltonian, SpectralProjection,
    SpectralWindow,
};
use crate::weights::{
    build_weight, tunnelling_exterior_sum, tunnelling_interior_sum, twisted_gap_check, weight_validate, WeightFamily,
    WeightRequest, WeightSequence,
};

/// Largest idempotency defect and norm drift accepted by `--verify`.
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Project,
    Tunnel,
    ValidateWeights,
    Evolve,
    Mobility,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Spectrum,
        Command::Project,
        Command::Tunnel,
        Command::ValidateWeights,
        Command::Evolve,
        Command::Mobility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Project => "project",
            Command::Tunnel => "tunnel",
            Command::ValidateWeights => "validate-weights",
            Command::Evolve => "evolve",
            Command::Mobility => "mobility",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce and audit a run. Wall time lives in a
/// separate `timing.json` so that this file is byte-stable.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub constants: BTreeMap<String, Value>,
    pub verdicts: BTreeMap<String, bool>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    pub wall_seconds: f64,
}

/// The discretized model shared by every subcommand.
pub struct Model {
    pub w: AngularPotential,
    pub h: BlockHamiltonian,
    /// Envelope rate; infinite without a perturbation.
    pub a: f64,
    pub zeta: f64,
    pub gevrey: Option<GevreyReport>,
    pub warnings: Vec<String>,
}

pub fn build_model(cfg: &RunConfig) -> Result<Model> {
    let grid = &cfg.grid;
    let pc = &cfg.perturbation;
    let zeta_env = pc.envelope.zeta.unwrap_or(1.0);
    let w = match &pc.spec {
        PerturbationSpec::Zero => AngularPotential::zero(grid),
        PerturbationSpec::ClosedForm { terms } => {
            let cf = ClosedForm { terms: terms.clone() };
            let mut env = cf.envelope(pc.envelope.a.unwrap_or(1.0), zeta_env);
            if let Some(a) = pc.envelope.a {
                env.a = a;
            }
            if let Some(b) = pc.envelope.b {
                env.b = vec![(1.0, Radial::Constant { value: b })];
            }
            AngularPotential::from_closed_form(cf, grid, Some(env), pc.m_max, pc.n_theta)?
        }
        PerturbationSpec::Table { path, decay } => {
            let table = CoefficientTable::load_csv(path, grid)?;
            let a = pc.envelope.a.ok_or_else(|| Error::config("w.envelope.a", "missing required key"))?;
            let b = pc.envelope.b.ok_or_else(|| Error::config("w.envelope.b", "missing required key"))?;
            let env = GevreyEnvelope::new(a, zeta_env, vec![(1.0, Radial::Constant { value: b })])?;
            AngularPotential::from_table(table, Some(env), *decay)
        }
    };
    let mut warnings = Vec::new();
    let gevrey = w.envelope.as_ref().map(|e| gevrey_validate(&w.table, e));
    if let Some(g) = gevrey.as_ref().filter(|g| !g.pass) {
        let msg = format!(
            "perturbation exceeds its Gevrey envelope at {} entries (first at {:?})",
            g.violations, g.first_violation
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let (a, zeta) = match &w.envelope {
        Some(e) if !w.table.is_zero() => (e.a, e.zeta),
        _ => (f64::INFINITY, cfg.weights.zeta.unwrap_or(1.0)),
    };
    let h = BlockHamiltonian::assemble(&cfg.profile, &w, grid, cfg.j_max)?;
    warnings.extend(truncation_check(&cfg.profile, grid, cfg.j_max, cfg.window.upper)?);
    Ok(Model {
        w,
        h,
        a,
        zeta,
        gevrey,
        warnings,
    })
}

struct Record {
    constants: BTreeMap<String, Value>,
    verdicts: BTreeMap<String, bool>,
    artifacts: Vec<String>,
}

impl Record {
    fn put(&mut self, key: &str, v: impl Serialize) {
        self.constants
            .insert(key.to_owned(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn verdict(&mut self, key: &str, pass: bool) {
        self.verdicts.insert(key.to_owned(), pass);
    }

    fn file(&mut self, out: &Path, name: &str) -> PathBuf {
        self.artifacts.push(name.to_owned());
        out.join(name)
    }

    fn window(&mut self, w: &SpectralWindow) {
        self.put("window.e0", w.e0);
        self.put("window.E0", w.upper);
        self.put("window.delta0", w.delta0);
        self.put("window.c0", w.c0);
        self.put("window.e_tilde", w.e_tilde);
    }

    fn model(&mut self, m: &Model) {
        self.put("hamiltonian.dim", m.h.dim());
        self.put("hamiltonian.block_diagonal", m.h.is_block_diagonal());
        self.put("hamiltonian.m_eff", m.h.m_eff);
        self.put("hamiltonian.dropped_coupling_bound", m.h.dropped_coupling_bound);
        self.put("perturbation.a", m.a);
        self.put("perturbation.zeta", m.zeta);
        self.put("perturbation.decay", m.w.decay);
        if let Some(g) = &m.gevrey {
            self.put("perturbation.gevrey_tightest_a", g.tightest_a);
            self.verdict("perturbation.gevrey_envelope", g.pass);
        }
    }
}

/// Runs `cmd`, writing artifacts, `manifest.json` and `timing.json` into `out`.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<RunOutput> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let mut rec = Record {
        constants: BTreeMap::new(),
        verdicts: BTreeMap::new(),
        artifacts: Vec::new(),
    };
    let mut warnings = Vec::new();
    if cmd == Command::Mobility {
        run_mobility(cfg, out, &mut rec)?;
    } else {
        let model = build_model(cfg)?;
        rec.model(&model);
        warnings.extend(model.warnings.iter().cloned());
        match cmd {
            Command::Spectrum => run_spectrum(cfg, &model, out, &mut rec)?,
            Command::Project => run_project(cfg, &model, out, &mut rec)?,
            Command::Tunnel => run_tunnel(cfg, &model, out, &mut rec)?,
            Command::ValidateWeights => run_weights(cfg, &model, out, &mut rec)?,
            Command::Evolve => run_evolve(cfg, &model, out, &mut rec, &mut warnings)?,
            Command::Mobility => unreachable!(),
        }
    }
    let manifest = Manifest {
        program: "fluxlab",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cmd.name(),
        config: cfg.echo.clone(),
        warnings,
        constants: rec.constants,
        verdicts: rec.verdicts,
        artifacts: rec.artifacts,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    write_json(&out.join("timing.json"), &json!({ "wall_seconds": wall_seconds }))?;
    Ok(RunOutput {
        manifest,
        out_dir: out.to_path_buf(),
        wall_seconds,
    })
}

fn projection(cfg: &RunConfig, m: &Model) -> Result<SpectralProjection> {
    spectral_projection(&m.h, &m.w, cfg.window.upper, cfg.window.delta0, cfg.window.c0, &cfg.solver)
}

/// The window without the window eigenvectors.
fn window_only(cfg: &RunConfig, m: &Model) -> Result<SpectralWindow> {
    let e0 = lowest_eigenvalue(&m.h, &cfg.solver)?;
    let c0 = match cfg.window.c0 {
        Some(c) => c,
        None => c0_for(&m.h, &m.w)?,
    };
    SpectralWindow::new(e0, cfg.window.upper.max(e0), cfg.window.delta0, c0)
}

fn run_spectrum(cfg: &RunConfig, m: &Model, out: &Path, rec: &mut Record) -> Result<()> {
    let upper = cfg.spectrum_upper.unwrap_or(cfg.window.upper);
    let e0 = lowest_eigenvalue(&m.h, &cfg.solver)?;
    let tie = 1e-10 * upper.abs().max(e0.abs()).max(1.0);
    let eig = diagonalize_in(&m.h, e0 - tie, upper + tie, &cfg.solver)?;
    eig.save_csv(&rec.file(out, "spectrum.csv"))?;
    rec.put("spectrum.upper", upper);
    rec.put("spectrum.lowest", e0);
    rec.put("spectrum.count", eig.len());
    rec.put("spectrum.residual_max", eig.residual_max);
    rec.put("spectrum.method", eig.method);
    rec.verdict("spectrum.residual", eig.residual_max <= cfg.solver.residual_tol);
    Ok(())
}

fn run_project(cfg: &RunConfig, m: &Model, out: &Path, rec: &mut Record) -> Result<()> {
    let p = projection(cfg, m)?;
    let meta = p.metadata();
    write_json(
        &rec.file(out, "projection.json"),
        &json!({ "projection": meta, "eigenvalues": p.values, "gevrey": m.gevrey }),
    )?;
    rec.window(&p.window);
    rec.put("projection.rank", meta.rank);
    rec.put("projection.idempotency_defect", meta.idempotency_defect);
    rec.put("projection.residual_max", meta.residual_max);
    rec.put("projection.method", meta.method);
    rec.verdict("projection.idempotent", meta.idempotency_defect <= VERIFY_TOL);
    Ok(())
}

fn weight_for(cfg: &RunConfig, m: &Model, req: &WeightRequest, window: &SpectralWindow) -> Result<WeightSequence> {
    build_weight(req, &cfg.profile, window, m.a, m.zeta, &cfg.grid, cfg.j_max)
}

fn run_tunnel(cfg: &RunConfig, m: &Model, out: &Path, rec: &mut Record) -> Result<()> {
    let p = projection(cfg, m)?;
    rec.window(&p.window);
    rec.put("projection.rank", p.rank());
    let g = cfg.profile.growth;
    let t = cfg.tunnel;

    let (c_plus, delta_plus) = match (t.c_plus, t.delta_plus) {
        (Some(c), Some(d)) => (c, d),
        (c, d) => {
            let w = weight_for(cfg, m, &cfg.weights.interior, &p.window)?;
            rec.put("interior.weight", w.kind);
            (c.unwrap_or(w.mask_constant), d.unwrap_or(w.decay_constant))
        }
    };
    let (c_minus, delta_minus) = match (t.c_minus, t.delta_minus) {
        (Some(c), Some(d)) => (c, d),
        (c, d) => {
            let w = weight_for(cfg, m, &cfg.weights.exterior, &p.window)?;
            rec.put("exterior.weight", w.kind);
            (c.unwrap_or(w.mask_constant), d.unwrap_or(w.decay_constant))
        }
    };
    let interior = tunnelling_interior_sum(&p, c_plus, delta_plus, g.sigma_plus, m.zeta);
    let exterior = tunnelling_exterior_sum(&p, c_minus, delta_minus, g.sigma_minus, m.zeta);
    interior.save_csv(&rec.file(out, "tunnel_interior.csv"))?;
    exterior.save_csv(&rec.file(out, "tunnel_exterior.csv"))?;
    write_json(
        &rec.file(out, "tunnel.json"),
        &json!({ "interior": interior, "exterior": exterior }),
    )?;
    for (name, tab) in [("interior", &interior), ("exterior", &exterior)] {
        rec.put(&format!("{name}.mask_constant"), tab.mask_constant);
        rec.put(&format!("{name}.decay_constant"), tab.decay_constant);
        rec.put(&format!("{name}.sum"), tab.sum);
        rec.put(&format!("{name}.tail_ratio"), tab.tail_ratio);
        rec.put(&format!("{name}.norm_slope"), tab.norm_fit.map(|f| f.slope));
        rec.put(&format!("{name}.norm_r2"), tab.norm_fit.map(|f| f.r2));
        rec.verdict(
            &format!("{name}.norm_decay"),
            tab.norm_fit.is_some_and(|f| f.slope < 0.0 && f.r2 >= 0.9),
        );
        rec.verdict(&format!("{name}.tail_ratio_below_one"), tab.tail_ratio.is_some_and(|r| r < 1.0));
    }
    Ok(())
}

fn family_name(f: WeightFamily) -> &'static str {
    match f {
        WeightFamily::Interior => "interior",
        WeightFamily::Exterior => "exterior",
        WeightFamily::Mobility => "mobility",
        WeightFamily::Zero => "zero",
    }
}

fn run_weights(cfg: &RunConfig, m: &Model, out: &Path, rec: &mut Record) -> Result<()> {
    let window = window_only(cfg, m)?;
    rec.window(&window);
    let mut entries = Vec::new();
    for &fam in &cfg.weights.families {
        let req = match fam {
            WeightFamily::Interior => cfg.weights.interior,
            WeightFamily::Exterior => cfg.weights.exterior,
            WeightFamily::Mobility => cfg.weights.mobility,
            WeightFamily::Zero => WeightRequest::default(),
        };
        let name = family_name(fam);
        let w = weight_for(cfg, m, &req, &window)?;
        let report = weight_validate(&w, &cfg.profile, &window, m.a, m.zeta, &cfg.grid, cfg.j_max)?;
        let gap = twisted_gap_check(&m.h, &w, &window)?;
        rec.put(&format!("{name}.weight"), w.kind);
        rec.put(&format!("{name}.mask_constant"), w.mask_constant);
        rec.put(&format!("{name}.decay_constant"), w.decay_constant);
        rec.put(&format!("{name}.gap_lambda_min"), gap.lambda_min);
        rec.put(&format!("{name}.gap_threshold"), gap.threshold);
        rec.put(&format!("{name}.gap_slack"), gap.slack);
        rec.verdict(&format!("{name}.derivative"), report.derivative.pass);
        rec.verdict(&format!("{name}.bounded"), report.bounded.pass);
        rec.verdict(&format!("{name}.lipschitz"), report.lipschitz.pass);
        rec.verdict(&format!("{name}.gap"), gap.pass);
        if !report.pass {
            rec.put(&format!("{name}.first_failure"), report.first_failure());
        }
        entries.push(json!({ "family": name, "report": report, "gap": gap }));
    }
    write_json(&rec.file(out, "weights.json"), &json!({ "window": window, "weights": entries }))
}

fn time_grid(cfg: &RunConfig) -> Vec<f64> {
    let e = &cfg.evolve;
    let mut t = if e.include_zero { vec![0.0] } else { Vec::new() };
    t.extend(match e.times {
        TimeGrid::Geometric { t0, t1, n } => geometric_times(t0, t1, n),
        TimeGrid::Uniform { t_max, n } => uniform_times(t_max, n).into_iter().filter(|&s| s > 0.0 || !e.include_zero).collect(),
    });
    t
}

fn run_evolve(cfg: &RunConfig, m: &Model, out: &Path, rec: &mut Record, warnings: &mut Vec<String>) -> Result<()> {
    let p = projection(cfg, m)?;
    rec.window(&p.window);
    rec.put("projection.rank", p.rank());
    let e = &cfg.evolve;
    let g = cfg.profile.growth;
    let phi0 = prepare_state(&p, &e.seed)?;
    let evo = Evolution::new(&p, &phi0)?;
    let times = time_grid(cfg);

    let beta_ratio = m.zeta * e.nu / g.sigma_minus;
    let ratio_series = evo.observables(&times, e.nu, beta_ratio);
    let growth_series = evo.observables(&times, e.nu, e.beta);
    ratio_series.save_csv(&rec.file(out, "ratio_series.csv"))?;
    growth_series.save_csv(&rec.file(out, "growth_series.csv"))?;
    ratio_series.save_channel_csv(&rec.file(out, "channel_norms.csv"))?;

    let ratio = bound_check_thm1(&ratio_series, e.nu, g.sigma_minus, m.zeta)?;
    let growth = match growth_fit_thm2(&growth_series, &m.w.decay, g.sigma_plus, m.zeta, e.slack) {
        Ok(r) => Some(r),
        Err(Error::Domain(msg)) => {
            let msg = format!("growth exponent check skipped: {msg}");
            log::warn!("{msg}");
            warnings.push(msg);
            None
        }
        Err(err) => return Err(err),
    };
    let heisenberg = match e.heisenberg {
        Some((t_max, steps)) => Some(heisenberg_check(&evo, &m.h, t_max, steps)?),
        None => None,
    };

    rec.put("evolve.seed", e.seed);
    rec.put("evolve.leakage", evo.leakage);
    rec.put("evolve.nu", e.nu);
    rec.put("evolve.beta_ratio", beta_ratio);
    rec.put("evolve.beta_growth", e.beta);
    rec.put("series.max_norm_drift", ratio_series.max_norm_drift());
    rec.put("series.max_channel_drift", ratio_series.max_channel_drift());
    rec.put("ratio.sup", ratio.sup_ratio);
    rec.put("ratio.first_quartile_mean", ratio.first_quartile_mean);
    rec.put("ratio.last_quartile_mean", ratio.last_quartile_mean);
    rec.put("ratio.mann_kendall_z", ratio.mann_kendall_z);
    rec.verdict("ratio.bounded", ratio.pass);
    rec.verdict("series.norm_conserved", ratio_series.max_norm_drift() <= VERIFY_TOL);
    if m.h.is_block_diagonal() {
        rec.verdict("series.channels_conserved", ratio_series.max_channel_drift() <= VERIFY_TOL);
    }
    if let Some(r) = &growth {
        rec.put("growth.model", r.model);
        rec.put("growth.exponent", r.exponent);
        rec.put("growth.bound", r.bound);
        rec.put("growth.slack", r.slack);
        rec.put("growth.reliable", r.reliable);
        rec.put("growth.fit_r2", r.fit.map(|f| f.r2));
        rec.verdict("growth.exponent_within_bound", r.pass);
    }
    if let Some(hz) = &heisenberg {
        rec.put("heisenberg.dt", hz.dt);
        rec.put("heisenberg.max_residual", hz.max_residual);
    }
    write_json(
        &rec.file(out, "evolve.json"),
        &json!({ "ratio": ratio, "growth": growth, "heisenberg": heisenberg }),
    )
}

fn run_mobility(cfg: &RunConfig, out: &Path, rec: &mut Record) -> Result<()> {
    let lambda = match cfg.profile.kind {
        FluxKind::Linear { lambda } => lambda,
        _ => return Err(Error::config("profile.kind", "the mobility scan needs a linear profile")),
    };
    let opts = cfg
        .mobility
        .ok_or_else(|| Error::config("profile.kind", "the mobility scan needs a linear profile"))?;
    let rep = mobility_edge_scan(lambda, &cfg.grid, cfg.j_max, &opts)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    write_csv(
        &rec.file(out, "mobility_localized.csv"),
        &["j", "index", "energy", "decay_rate", "decay_r2", "shift"],
        rep.localized.iter().map(|s| {
            vec![
                s.j.to_string(),
                s.index.to_string(),
                fmt_f64(s.energy),
                opt(s.decay_rate),
                opt(s.decay_r2),
                fmt_f64(s.shift),
            ]
        }),
    )?;
    write_csv(
        &rec.file(out, "mobility_extended.csv"),
        &["j", "count_small", "count_large", "width_small", "width_large", "ratio"],
        rep.extended.iter().filter(|b| !b.empty).map(|b| {
            vec![
                b.j.to_string(),
                b.count_small.to_string(),
                b.count_large.to_string(),
                fmt_f64(b.width_small),
                fmt_f64(b.width_large),
                fmt_f64(b.ratio),
            ]
        }),
    )?;
    write_json(&rec.file(out, "mobility.json"), &rep)?;
    rec.put("mobility.lambda", lambda);
    rec.put("mobility.options", opts);
    rec.put("mobility.r_max_small", rep.r_max_small);
    rec.put("mobility.r_max_low_large", rep.r_max_low_large);
    rec.put("mobility.r_max_high_large", rep.r_max_high_large);
    rec.put(
        "mobility.min_decay_rate_found",
        rep.localized.iter().filter_map(|s| s.decay_rate).reduce(f64::min),
    );
    rec.put("mobility.max_shift_found", rep.localized.iter().map(|s| s.shift).reduce(f64::max));
    rec.put(
        "mobility.min_width_ratio_found",
        rep.extended.iter().filter(|b| !b.empty).map(|b| b.ratio).reduce(f64::min),
    );
    rec.verdict("mobility.localized", rep.localized_pass);
    rec.verdict("mobility.extended", rep.extended_pass);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<VerifyCheck>,
}

fn check(checks: &mut Vec<VerifyCheck>, name: &str, pass: bool, detail: impl Into<String>) {
    checks.push(VerifyCheck {
        name: name.to_owned(),
        pass,
        detail: detail.into(),
    });
}

fn numeric_columns(path: &Path, want: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_csv(path)?;
    if header != want {
        return Err(Error::Verify(format!("{}: header {header:?}, expected {want:?}", path.display())));
    }
    let mut cols = vec![Vec::with_capacity(rows.len()); want.len()];
    for row in &rows {
        for (c, field) in row.iter().enumerate() {
            let x = if field.is_empty() {
                f64::NAN
            } else {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Verify(format!("{}: cannot parse `{field}`", path.display())))?
            };
            cols[c].push(x);
        }
    }
    Ok(cols)
}

fn max_drift(v: &[f64]) -> f64 {
    v.first().map_or(0.0, |&a| v.iter().map(|x| (x - a).abs()).fold(0.0, f64::max))
}

/// Re-reads the artifacts of a finished run and checks their invariants;
/// writes `verify.json` next to them.
pub fn verify(cmd: Command, out: &Path) -> Result<VerifyReport> {
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json"))?)?;
    let konst = |k: &str| manifest["constants"][k].clone();
    let mut checks = Vec::new();
    let missing: Vec<&str> = manifest["artifacts"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(Value::as_str)
        .filter(|a| !out.join(a).is_file())
        .collect();
    check(&mut checks, "artifacts_present", missing.is_empty(), format!("missing: {missing:?}"));

    match cmd {
        Command::Spectrum => {
            let cols = numeric_columns(&out.join("spectrum.csv"), &["index", "lambda"])?;
            let l = &cols[1];
            check(&mut checks, "eigenvalues_finite", l.iter().all(|x| x.is_finite()), "");
            check(
                &mut checks,
                "eigenvalues_sorted",
                l.windows(2).all(|w| w[0] <= w[1]),
                "",
            );
            let n = konst("spectrum.count").as_u64();
            check(&mut checks, "count_matches_manifest", n == Some(l.len() as u64), format!("{} rows", l.len()));
        }
        Command::Project => {
            let p: Value = serde_json::from_slice(&std::fs::read(out.join("projection.json"))?)?;
            let d = p["projection"]["idempotency_defect"].as_f64().unwrap_or(f64::INFINITY);
            check(&mut checks, "idempotency", d <= VERIFY_TOL, format!("{d:e}"));
            let rank = p["projection"]["rank"].as_u64();
            let listed = p["eigenvalues"].as_array().map(|a| a.len() as u64);
            check(&mut checks, "rank_matches_eigenvalues", rank == listed, "");
        }
        Command::Tunnel => {
            let t: Value = serde_json::from_slice(&std::fs::read(out.join("tunnel.json"))?)?;
            for name in ["interior", "exterior"] {
                let cols = numeric_columns(&out.join(format!("tunnel_{name}.csv")), &["j", "norm", "weighted_term"])?;
                let ok = cols[1].iter().chain(&cols[2]).all(|x| x.is_finite() && *x >= 0.0);
                check(&mut checks, &format!("{name}_terms_nonnegative"), ok, "");
                let sum: f64 = cols[2].iter().sum();
                let rec = t[name]["sum"].as_f64().unwrap_or(f64::NAN);
                let ok = (sum - rec).abs() <= 1e-12 * rec.abs().max(f64::MIN_POSITIVE);
                check(&mut checks, &format!("{name}_sum_matches_rows"), ok, format!("{sum:e} vs {rec:e}"));
            }
        }
        Command::ValidateWeights => {
            let w: Value = serde_json::from_slice(&std::fs::read(out.join("weights.json"))?)?;
            for e in w["weights"].as_array().into_iter().flatten() {
                let r = &e["report"];
                let parts = ["derivative", "bounded", "lipschitz"].map(|k| r[k]["pass"].as_bool() == Some(true));
                let consistent = r["pass"].as_bool() == Some(parts.iter().all(|x| *x));
                let name = e["family"].as_str().unwrap_or("?");
                check(&mut checks, &format!("{name}_verdict_consistent"), consistent, "");
            }
        }
        Command::Evolve => {
            let hdr = ["t", "x_moment", "j_moment", "norm"];
            for file in ["ratio_series.csv", "growth_series.csv"] {
                let cols = numeric_columns(&out.join(file), &hdr)?;
                let drift = max_drift(&cols[3]);
                check(&mut checks, &format!("{file}:norm_drift"), drift <= VERIFY_TOL, format!("{drift:e}"));
                let ok = cols[1].iter().chain(&cols[2]).all(|x| x.is_finite() && *x >= 0.0);
                check(&mut checks, &format!("{file}:moments_nonnegative"), ok, "");
                check(&mut checks, &format!("{file}:times_sorted"), cols[0].windows(2).all(|w| w[0] <= w[1]), "");
            }
            let ch = numeric_columns(&out.join("channel_norms.csv"), &["t", "j", "norm2"])?;
            let mut per_j: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            let mut per_t: BTreeMap<u64, f64> = BTreeMap::new();
            for k in 0..ch[0].len() {
                per_j.entry(ch[1][k] as i64).or_default().push(ch[2][k]);
                *per_t.entry(ch[0][k].to_bits()).or_default() += ch[2][k];
            }
            let total = max_drift(&per_t.values().copied().collect::<Vec<_>>());
            check(&mut checks, "channel_sum_conserved", total <= VERIFY_TOL, format!("{total:e}"));
            if konst("hamiltonian.block_diagonal").as_bool() == Some(true) {
                let d = per_j.values().map(|v| max_drift(v)).fold(0.0, f64::max);
                check(&mut checks, "channel_norms_conserved", d <= VERIFY_TOL, format!("{d:e}"));
            }
        }
        Command::Mobility => {
            let loc = numeric_columns(
                &out.join("mobility_localized.csv"),
                &["j", "index", "energy", "decay_rate", "decay_r2", "shift"],
            )?;
            check(&mut checks, "energies_finite", loc[2].iter().all(|x| x.is_finite()), "");
            check(&mut checks, "shifts_nonnegative", loc[5].iter().all(|x| *x >= 0.0), "");
            let ext = numeric_columns(
                &out.join("mobility_extended.csv"),
                &["j", "count_small", "count_large", "width_small", "width_large", "ratio"],
            )?;
            let ok = (0..ext[0].len()).all(|k| ext[3][k] > 0.0 && (ext[4][k] / ext[3][k] - ext[5][k]).abs() <= 1e-12 * ext[5][k]);
            check(&mut checks, "width_ratios_consistent", ok, "");
        }
    }
    let report = VerifyReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    write_json(&out.join("verify.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(Command::parse(c.name()), Some(c));
        }
        assert_eq!(Command::parse("spectra"), None);
    }

    #[test]
    fn drift_of_constant_series_is_zero() {
        assert_eq!(max_drift(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(max_drift(&[]), 0.0);
        assert!((max_drift(&[1.0, 1.5, 0.25]) - 0.75).abs() < 1e-15);
    }
}
