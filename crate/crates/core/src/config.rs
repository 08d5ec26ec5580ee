//! Run configuration: a TOML file read as a flat map of dotted keys.
//!
//! Every key is consumed exactly once in a fixed order, so the first key that
//! fails to parse (or is missing, or unknown) is the one reported.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::{MobilityOptions, SeedSpec};
use crate::error::{Error, Result};
use crate::flux::{FluxProfile, GrowthParams};
use crate::grid::RadialGrid;
use crate::perturbation::{DecayClass, Term};
use crate::spectral::SolveOptions;
use crate::weights::{WeightFamily, WeightRequest};

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationSpec {
    Zero,
    ClosedForm { terms: Vec<Term> },
    /// Coefficient CSV on the run grid plus the claimed envelope and decay.
    Table { path: PathBuf, decay: DecayClass },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSpec {
    pub a: Option<f64>,
    pub zeta: Option<f64>,
    /// Constant envelope amplitude; required for tables.
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub spec: PerturbationSpec,
    pub envelope: EnvelopeSpec,
    pub m_max: Option<usize>,
    pub n_theta: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub upper: f64,
    pub delta0: Option<f64>,
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeGrid {
    Geometric { t0: f64, t1: f64, n: usize },
    Uniform { t_max: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub seed: SeedSpec,
    pub times: TimeGrid,
    /// Prepend `t = 0` to the time grid.
    pub include_zero: bool,
    pub nu: f64,
    /// Moment exponent of the growth fit.
    pub beta: f64,
    pub slack: f64,
    /// `(t_max, steps)` of the Heisenberg-identity check, if requested.
    pub heisenberg: Option<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsConfig {
    pub families: Vec<WeightFamily>,
    pub interior: WeightRequest,
    pub exterior: WeightRequest,
    pub mobility: WeightRequest,
    /// Gevrey exponent used by the weights when the perturbation has none.
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TunnelConfig {
    pub c_plus: Option<f64>,
    pub delta_plus: Option<f64>,
    pub c_minus: Option<f64>,
    pub delta_minus: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile: FluxProfile,
    pub perturbation: PerturbationConfig,
    pub grid: RadialGrid,
    pub j_max: i64,
    pub window: WindowConfig,
    pub solver: SolveOptions,
    pub spectrum_upper: Option<f64>,
    pub weights: WeightsConfig,
    pub tunnel: TunnelConfig,
    pub evolve: EvolveConfig,
    pub mobility: Option<MobilityOptions>,
    pub output_dir: Option<PathBuf>,
    /// The file as read, flattened and sorted, for the manifest.
    pub echo: BTreeMap<String, serde_json::Value>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::config("<syntax>", e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        let echo = flat.iter().map(|(k, v)| (k.clone(), to_json(v))).collect();
        let mut r = Reader {
            map: flat,
            used: BTreeSet::new(),
        };

        let profile = read_profile(&mut r)?;
        let n_r = r.req_usize("grid.n_r")?;
        let r_max = r.req_f64("grid.r_max")?;
        let grid = RadialGrid::new(n_r, r_max).map_err(|e| Error::config("grid.n_r", e.to_string()))?;
        let j_max = r.req_usize("truncation.j_max")? as i64;
        let perturbation = read_perturbation(&mut r, base)?;

        let window = WindowConfig {
            upper: r.req_f64("window.E0")?,
            delta0: r.positive("window.delta0")?,
            c0: r.nonneg("window.c0")?,
        };
        let d = SolveOptions::default();
        let solver = SolveOptions {
            dense_limit: r.opt_usize("solver.dense_limit")?.unwrap_or(d.dense_limit),
            residual_tol: r.positive("solver.residual_tol")?.unwrap_or(d.residual_tol),
            seed: r.opt_usize("solver.seed")?.map(|s| s as u64).unwrap_or(d.seed),
        };
        let spectrum_upper = r.opt_f64("spectrum.upper")?;
        let weights = read_weights(&mut r)?;
        let tunnel = TunnelConfig {
            c_plus: r.positive("tunnel.c_plus")?,
            delta_plus: r.positive("tunnel.delta_plus")?,
            c_minus: r.positive("tunnel.c_minus")?,
            delta_minus: r.positive("tunnel.delta_minus")?,
        };
        let evolve = read_evolve(&mut r)?;
        let mobility = read_mobility(&mut r, &profile)?;
        let output_dir = r.opt_str("output.dir")?.map(|s| base.join(s));

        if let Some(k) = r.map.keys().find(|k| !r.used.contains(*k)) {
            return Err(Error::config(k.clone(), "unknown key"));
        }
        Ok(RunConfig {
            profile,
            perturbation,
            grid,
            j_max,
            window,
            solver,
            spectrum_upper,
            weights,
            tunnel,
            evolve,
            mobility,
            output_dir,
            echo,
        })
    }
}

fn flatten(prefix: &str, t: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(sub) => flatten(&key, sub, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

fn to_json(v: &toml::Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        toml::Value::String(s) => J::String(s.clone()),
        toml::Value::Integer(i) => J::from(*i),
        toml::Value::Float(f) => serde_json::Number::from_f64(*f).map(J::Number).unwrap_or(J::Null),
        toml::Value::Boolean(b) => J::Bool(*b),
        toml::Value::Datetime(d) => J::String(d.to_string()),
        toml::Value::Array(a) => J::Array(a.iter().map(to_json).collect()),
        toml::Value::Table(t) => J::Object(t.iter().map(|(k, v)| (k.clone(), to_json(v))).collect()),
    }
}

struct Reader {
    map: BTreeMap<String, toml::Value>,
    used: BTreeSet<String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_owned());
        }
        v
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        let p = format!("{prefix}.");
        self.map.keys().any(|k| k == prefix || k.starts_with(&p))
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) if f.is_finite() => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Error::config(key, format!("expected a finite number, found {v}"))),
        }
    }

    fn req_f64(&mut self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn positive(&mut self, key: &str) -> Result<Option<f64>> {
        match self.opt_f64(key)? {
            Some(x) if !(x > 0.0) => Err(Error::config(key, format!("must be positive, found {x}"))),
            x => Ok(x),
        }
    }

    fn nonneg(&mut self, key: &str) -> Result<Option<f64>> {
        match self.opt_f64(key)? {
            Some(x) if !(x >= 0.0) => Err(Error::config(key, format!("must be nonnegative, found {x}"))),
            x => Ok(x),
        }
    }

    fn opt_i64(&mut self, key: &str) -> Result<Option<i64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(i)),
            Some(v) => Err(Error::config(key, format!("expected an integer, found {v}"))),
        }
    }

    fn opt_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.opt_i64(key)? {
            Some(i) if i < 0 => Err(Error::config(key, format!("must be nonnegative, found {i}"))),
            x => Ok(x.map(|i| i as usize)),
        }
    }

    fn req_usize(&mut self, key: &str) -> Result<usize> {
        self.opt_usize(key)?.ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn opt_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(Error::config(key, format!("expected true or false, found {v}"))),
        }
    }

    fn opt_str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::config(key, format!("expected a string, found {v}"))),
        }
    }

    fn req_str(&mut self, key: &str) -> Result<String> {
        self.opt_str(key)?.ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn opt_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    _ => Err(Error::config(key, format!("expected numbers, found {v}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Error::config(key, format!("expected an array, found {v}"))),
        }
    }

    fn req_f64_list(&mut self, key: &str) -> Result<Vec<f64>> {
        self.opt_f64_list(key)?.ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn opt_pair(&mut self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.opt_f64_list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v[0] < v[1] => Ok(Some((v[0], v[1]))),
            Some(v) => Err(Error::config(key, format!("expected [lo, hi] with lo < hi, found {v:?}"))),
        }
    }
}

fn read_profile(r: &mut Reader) -> Result<FluxProfile> {
    let kind = r.req_str("profile.kind")?;
    let built = match kind.as_str() {
        "power_law" => {
            let lambda = r.req_f64("profile.lambda")?;
            let sigma = r.req_f64("profile.sigma")?;
            FluxProfile::power_law(lambda, sigma)
        }
        "linear" => FluxProfile::linear(r.req_f64("profile.lambda")?),
        "uniform_field" => FluxProfile::uniform_field(r.req_f64("profile.b0")?),
        "tabulated" => {
            let nodes = r.req_f64_list("profile.nodes")?;
            let values = r.req_f64_list("profile.values")?;
            FluxProfile::tabulated(nodes, values)
        }
        other => {
            return Err(Error::config(
                "profile.kind",
                format!("unknown profile `{other}` (power_law, linear, uniform_field, tabulated)"),
            ))
        }
    };
    let mut profile = built.map_err(|e| Error::config("profile", e.to_string()))?;
    let g = profile.growth;
    let growth = GrowthParams {
        lambda_plus: r.positive("profile.growth.lambda_plus")?.unwrap_or(g.lambda_plus),
        sigma_plus: r.positive("profile.growth.sigma_plus")?.unwrap_or(g.sigma_plus),
        lambda_minus: r.positive("profile.growth.lambda_minus")?.unwrap_or(g.lambda_minus),
        sigma_minus: r.positive("profile.growth.sigma_minus")?.unwrap_or(g.sigma_minus),
        r0: r.positive("profile.growth.r0")?.unwrap_or(g.r0),
    };
    if growth != g {
        profile = profile.with_growth(growth);
    }
    Ok(profile)
}

fn read_perturbation(r: &mut Reader, base: &Path) -> Result<PerturbationConfig> {
    let kind = r.opt_str("w.kind")?.unwrap_or_else(|| "zero".into());
    let spec = match kind.as_str() {
        "zero" => PerturbationSpec::Zero,
        "closed_form" => {
            let terms = match r.take("w.terms") {
                Some(v @ toml::Value::Array(_)) => {
                    Vec::<Term>::deserialize(v).map_err(|e| Error::config("w.terms", e.to_string()))?
                }
                Some(v) => return Err(Error::config("w.terms", format!("expected an array of terms, found {v}"))),
                None => return Err(Error::config("w.terms", "missing required key")),
            };
            PerturbationSpec::ClosedForm { terms }
        }
        "table" => {
            let path = base.join(r.req_str("w.table")?);
            let decay = match r.opt_str("w.decay.kind")?.as_deref() {
                None | Some("none") => DecayClass::None,
                Some("power") => DecayClass::Power {
                    p: r.req_f64("w.decay.p")?,
                },
                Some("stretched_exponential") => DecayClass::StretchedExponential {
                    mu: r.req_f64("w.decay.mu")?,
                    s: r.req_f64("w.decay.s")?,
                },
                Some(other) => {
                    return Err(Error::config(
                        "w.decay.kind",
                        format!("unknown decay class `{other}` (power, stretched_exponential, none)"),
                    ))
                }
            };
            PerturbationSpec::Table { path, decay }
        }
        other => {
            return Err(Error::config(
                "w.kind",
                format!("unknown perturbation `{other}` (zero, closed_form, table)"),
            ))
        }
    };
    let envelope = EnvelopeSpec {
        a: r.positive("w.envelope.a")?,
        zeta: r.positive("w.envelope.zeta")?,
        b: r.nonneg("w.envelope.b")?,
    };
    if let Some(z) = envelope.zeta {
        if z > 1.0 {
            return Err(Error::config("w.envelope.zeta", format!("must lie in (0, 1], found {z}")));
        }
    }
    if matches!(spec, PerturbationSpec::Table { .. }) && (envelope.a.is_none() || envelope.b.is_none()) {
        let key = if envelope.a.is_none() { "w.envelope.a" } else { "w.envelope.b" };
        return Err(Error::config(key, "required for tabulated perturbations"));
    }
    Ok(PerturbationConfig {
        spec,
        envelope,
        m_max: r.opt_usize("truncation.m_max")?,
        n_theta: r.opt_usize("w.n_theta")?,
    })
}

/// `weights.<family> = "auto"` or a table of explicit parameters.
fn read_request(r: &mut Reader, family: WeightFamily, name: &str) -> Result<WeightRequest> {
    let key = format!("weights.{name}");
    let mut req = WeightRequest {
        kind: family,
        ..Default::default()
    };
    if let Some(v) = r.take(&key) {
        return match v {
            toml::Value::String(s) if s == "auto" => Ok(req),
            v => Err(Error::config(key, format!("expected \"auto\" or a parameter table, found {v}"))),
        };
    }
    match family {
        WeightFamily::Interior => {
            req.eps = r.positive(&format!("{key}.eps"))?;
            req.j0 = r.opt_i64(&format!("{key}.j0"))?;
            if req.eps.is_some() != req.j0.is_some() {
                let missing = if req.eps.is_none() { "eps" } else { "j0" };
                return Err(Error::config(format!("{key}.{missing}"), "eps and j0 must be given together"));
            }
        }
        WeightFamily::Exterior => {
            req.c = r.positive(&format!("{key}.c"))?;
            req.eta = r.positive(&format!("{key}.eta"))?;
        }
        WeightFamily::Mobility => {
            req.delta1 = r.positive(&format!("{key}.delta1"))?;
            req.eta1 = r.positive(&format!("{key}.eta1"))?;
        }
        WeightFamily::Zero => {}
    }
    Ok(req)
}

fn read_weights(r: &mut Reader) -> Result<WeightsConfig> {
    let families = match r.take("weights.families") {
        None => vec![WeightFamily::Interior, WeightFamily::Exterior],
        Some(toml::Value::Array(a)) => a
            .iter()
            .map(|v| {
                v.as_str()
                    .and_then(WeightFamily::parse)
                    .ok_or_else(|| Error::config("weights.families", format!("unknown weight family {v}")))
            })
            .collect::<Result<_>>()?,
        Some(v) => return Err(Error::config("weights.families", format!("expected an array, found {v}"))),
    };
    Ok(WeightsConfig {
        families,
        interior: read_request(r, WeightFamily::Interior, "interior")?,
        exterior: read_request(r, WeightFamily::Exterior, "exterior")?,
        mobility: read_request(r, WeightFamily::Mobility, "mobility")?,
        zeta: r.positive("weights.zeta")?,
    })
}

fn read_seed(r: &mut Reader) -> Result<SeedSpec> {
    let kind = r.opt_str("evolve.seed.kind")?.unwrap_or_else(|| "gaussian".into());
    Ok(match kind.as_str() {
        "gaussian" => SeedSpec::Gaussian {
            j0: r.opt_f64("evolve.seed.j0")?.unwrap_or(0.0),
            r0: r.nonneg("evolve.seed.r0")?.unwrap_or(2.5),
            sigma_j: r.positive("evolve.seed.sigma_j")?.unwrap_or(1.0),
            sigma_r: r.positive("evolve.seed.sigma_r")?.unwrap_or(1.0),
        },
        "eigenvector" => SeedSpec::Eigenvector {
            index: r.opt_usize("evolve.seed.index")?.unwrap_or(0),
        },
        "channel" => SeedSpec::Channel {
            j: r.opt_i64("evolve.seed.j")?.unwrap_or(0),
            r0: r.nonneg("evolve.seed.r0")?.unwrap_or(2.5),
            width: r.positive("evolve.seed.width")?.unwrap_or(1.0),
        },
        other => {
            return Err(Error::config(
                "evolve.seed.kind",
                format!("unknown seed `{other}` (gaussian, eigenvector, channel)"),
            ))
        }
    })
}

fn read_evolve(r: &mut Reader) -> Result<EvolveConfig> {
    let seed = read_seed(r)?;
    let kind = r.opt_str("time.kind")?.unwrap_or_else(|| "geometric".into());
    let times = match kind.as_str() {
        "geometric" => {
            let t0 = r.positive("time.t0")?.unwrap_or(1.0);
            let t1 = r.positive("time.t1")?.unwrap_or(1e3);
            if !(t1 > t0) {
                return Err(Error::config("time.t1", format!("must exceed time.t0 = {t0}")));
            }
            TimeGrid::Geometric {
                t0,
                t1,
                n: r.opt_usize("time.n")?.unwrap_or(200),
            }
        }
        "uniform" => TimeGrid::Uniform {
            t_max: r.positive("time.t_max")?.unwrap_or(10.0),
            n: r.opt_usize("time.n")?.unwrap_or(200),
        },
        other => return Err(Error::config("time.kind", format!("unknown time grid `{other}` (geometric, uniform)"))),
    };
    let n = match times {
        TimeGrid::Geometric { n, .. } | TimeGrid::Uniform { n, .. } => n,
    };
    if n < 4 {
        return Err(Error::config("time.n", format!("need at least 4 times, found {n}")));
    }
    let include_zero = r.opt_bool("time.include_zero")?.unwrap_or(true);
    let nu = r.positive("evolve.nu")?.unwrap_or(1.0);
    let beta = r.positive("evolve.beta")?.unwrap_or(1.0);
    let slack = r.nonneg("evolve.slack")?.unwrap_or(0.1);
    let heisenberg = match r.positive("evolve.heisenberg.t_max")? {
        Some(t) => Some((t, r.opt_usize("evolve.heisenberg.steps")?.unwrap_or(64).max(1))),
        None => {
            if r.has_prefix("evolve.heisenberg.steps") {
                return Err(Error::config("evolve.heisenberg.t_max", "missing required key"));
            }
            None
        }
    };
    Ok(EvolveConfig {
        seed,
        times,
        include_zero,
        nu,
        beta,
        slack,
        heisenberg,
    })
}

fn read_mobility(r: &mut Reader, profile: &FluxProfile) -> Result<Option<MobilityOptions>> {
    let base = match profile.kind {
        crate::flux::FluxKind::Linear { lambda } => Some(MobilityOptions::for_lambda(lambda)),
        _ => None,
    };
    let Some(mut o) = base else {
        if r.has_prefix("mobility") {
            return Err(Error::config("mobility", "the mobility scan needs profile.kind = \"linear\""));
        }
        return Ok(None);
    };
    if let Some(b) = r.opt_pair("mobility.low_band")? {
        o.low_band = b;
    }
    if let Some(b) = r.opt_pair("mobility.high_band")? {
        o.high_band = b;
    }
    o.low_box_factor = r.positive("mobility.low_box_factor")?.unwrap_or(o.low_box_factor);
    o.high_box_factor = r.positive("mobility.high_box_factor")?.unwrap_or(o.high_box_factor);
    o.min_decay_rate = r.positive("mobility.min_decay_rate")?.unwrap_or(o.min_decay_rate);
    o.max_shift = r.positive("mobility.max_shift")?.unwrap_or(o.max_shift);
    o.min_width_ratio = r.positive("mobility.min_width_ratio")?.unwrap_or(o.min_width_ratio);
    Ok(Some(o))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LANDAU: &str = r#"
        profile.kind = "uniform_field"
        profile.b0 = 2.0
        grid.n_r = 200
        grid.r_max = 10.0
        truncation.j_max = 2
        window.E0 = 10.0
    "#;

    fn parse(s: &str) -> Result<RunConfig> {
        RunConfig::parse(s, Path::new("."))
    }

    fn failing_key(s: &str) -> String {
        match parse(s) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(LANDAU).unwrap();
        assert_eq!(c.grid.n_r(), 200);
        assert_eq!(c.j_max, 2);
        assert_eq!(c.perturbation.spec, PerturbationSpec::Zero);
        assert_eq!(c.window.upper, 10.0);
        assert!(c.window.delta0.is_none());
        assert_eq!(c.weights.families, vec![WeightFamily::Interior, WeightFamily::Exterior]);
        assert!(c.mobility.is_none());
        assert_eq!(c.echo["grid.n_r"], serde_json::json!(200));
    }

    #[test]
    fn missing_upper_edge_is_named() {
        let s = LANDAU.replace("window.E0 = 10.0", "");
        assert_eq!(failing_key(&s), "window.E0");
    }

    #[test]
    fn bad_values_name_their_key() {
        assert_eq!(failing_key(&LANDAU.replace("grid.n_r = 200", "grid.n_r = -3")), "grid.n_r");
        assert_eq!(failing_key(&LANDAU.replace("grid.n_r = 200", "grid.n_r = 3")), "grid.n_r");
        assert_eq!(failing_key(&LANDAU.replace("2.0", "\"two\"")), "profile.b0");
        assert_eq!(failing_key(&format!("{LANDAU}\ngrid.spacing = 1")), "grid.spacing");
        assert_eq!(failing_key(&format!("{LANDAU}\nwindow.delta0 = 0")), "window.delta0");
        assert_eq!(failing_key(&format!("{LANDAU}\nmobility.max_shift = 1e-6")), "mobility");
    }

    #[test]
    fn closed_form_terms_and_weights() {
        let s = format!(
            r#"{LANDAU}
            w.kind = "closed_form"
            w.terms = [{{ radial = {{ kind = "exponential", amp = 0.5, rate = 0.5 }}, angular = {{ kind = "poisson", q = 0.3 }} }}]
            weights.interior = {{ eps = 0.2, j0 = 1 }}
            weights.exterior = "auto"
            evolve.seed.kind = "channel"
            evolve.seed.j = 1
            "#
        );
        let c = parse(&s).unwrap();
        match &c.perturbation.spec {
            PerturbationSpec::ClosedForm { terms } => assert_eq!(terms.len(), 1),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.weights.interior.eps, Some(0.2));
        assert_eq!(c.weights.interior.j0, Some(1));
        assert!(c.weights.exterior.c.is_none());
        assert!(matches!(c.evolve.seed, SeedSpec::Channel { j: 1, .. }));
        let bad = s.replace("j0 = 1", "");
        assert_eq!(failing_key(&bad), "weights.interior.j0");
    }

    #[test]
    fn linear_profile_accepts_mobility_overrides() {
        let s = r#"
            profile.kind = "linear"
            profile.lambda = 1.0
            grid.n_r = 100
            grid.r_max = 20.0
            truncation.j_max = 2
            window.E0 = 1.0
            mobility.min_width_ratio = 1.4
            mobility.high_band = [1.9, 2.1]
        "#;
        let c = parse(s).unwrap();
        let m = c.mobility.unwrap();
        assert_eq!(m.min_width_ratio, 1.4);
        assert_eq!(m.high_band, (1.9, 2.1));
        assert_eq!(m.low_band, (0.1, 0.8));
    }
}
