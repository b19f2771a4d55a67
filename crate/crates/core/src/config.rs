//! Run configuration: flat `key = value` files with dotted keys.
//!
//! Values are layered as defaults, then the config file, then `--override`
//! pairs, then the dedicated flags. Validation reports every failing key.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{ConeSurface, SurfaceKind};
use crate::linear::TimeScheme;
use crate::presets::{InitialData, Perturbation};

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("surface.kind", "football-flatcap"),
    ("surface.beta", "1"),
    ("surface.blend_width", "2"),
    ("grid.n_rho", "256"),
    ("grid.l_max", "16"),
    ("grid.grading", "1.15"),
    ("grid.octaves", "auto"),
    ("flow.dt", "0.001"),
    ("flow.t_end", "1"),
    ("flow.scheme", "semi-implicit"),
    ("flow.record_every", "10"),
    ("flow.perturbation.kind", "mixed"),
    ("flow.perturbation.amplitude", "0.05"),
    ("flow.perturbation.mode", "1"),
    ("flow.picard.t_end", "0.05"),
    ("flow.picard.tol", "1e-10"),
    ("flow.picard.max_iters", "60"),
    ("flow.cascade.order", "3"),
    ("flow.cascade.delta", "0.1"),
    ("flow.cascade.pole_floor", "0.03125"),
    ("linear.a", "1"),
    ("linear.b", "0"),
    ("linear.dt", "0.001"),
    ("linear.t_end", "0.1"),
    ("linear.scheme", "euler"),
    ("linear.k", "16,32,64,128"),
    ("linear.perturbation.kind", "bump"),
    ("linear.perturbation.amplitude", "1"),
    ("linear.perturbation.mode", "1"),
    ("poisson.rhs", ""),
    ("poisson.gauge", "mean-zero"),
    ("expand.q_target", "1.6"),
    ("expand.input", ""),
    ("expand.rhs", ""),
    ("output.dir", "out"),
    ("seed", "0"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowScheme {
    /// Extrapolated semi-implicit stepping.
    SemiImplicit,
    /// Plain semi-implicit Euler.
    Euler,
    /// Picard iteration over the whole interval.
    Picard,
}

impl FlowScheme {
    pub fn time_scheme(&self) -> TimeScheme {
        match self {
            Self::Euler => TimeScheme::Euler,
            _ => TimeScheme::Extrapolated,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub n_rho: usize,
    pub l_max: usize,
    pub grading: f64,
    pub octaves: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: FlowScheme,
    pub record_every: usize,
    pub initial: InitialData,
    pub picard_t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub cascade_order: usize,
    pub cascade_delta: f64,
    /// Fraction of `L`.
    pub cascade_pole_floor: f64,
}

#[derive(Clone, Debug)]
pub struct LinearConfig {
    pub a: f64,
    pub b: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: TimeScheme,
    pub k: Vec<usize>,
    pub initial: InitialData,
}

#[derive(Clone, Debug)]
pub struct PoissonConfig {
    pub rhs: Option<PathBuf>,
    pub gauge: crate::elliptic::Gauge,
}

#[derive(Clone, Debug)]
pub struct ExpandConfig {
    pub q_target: f64,
    pub input: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub surface: ConeSurface<f64>,
    pub grid: GridConfig,
    pub flow: FlowConfig,
    pub linear: LinearConfig,
    pub poisson: PoissonConfig,
    pub expand: ExpandConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Resolved key/value table, in key order.
    pub resolved: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match split_pair(line) {
            Some(p) => out.push(p),
            None => errors.push(format!(
                "line {}: expected key = value, got `{line}`",
                n + 1
            )),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Config(errors))
    }
}

/// Splits `key=value` (spaces around `=` allowed).
pub fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

struct Reader<'a> {
    table: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        self.table.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<V: FromStr>(&mut self, key: &str) -> Option<V> {
        let raw = self.raw(key);
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key}: cannot parse `{raw}`"));
                None
            }
        }
    }

    fn number(&mut self, key: &str, ok: impl Fn(f64) -> bool, rule: &str) -> f64 {
        match self.parse::<f64>(key) {
            Some(v) if v.is_finite() && ok(v) => v,
            Some(v) => {
                self.errors.push(format!("{key}: {v} violates {rule}"));
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    fn count(&mut self, key: &str, min: usize) -> usize {
        match self.parse::<usize>(key) {
            Some(v) if v >= min => v,
            Some(v) => {
                self.errors.push(format!("{key}: {v} is below {min}"));
                min
            }
            None => min,
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    fn choice<V>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Option<V>,
        allowed: &str,
    ) -> Option<V> {
        let raw = self.raw(key).to_string();
        let v = parse(&raw);
        if v.is_none() {
            self.errors
                .push(format!("{key}: `{raw}` is not one of {allowed}"));
        }
        v
    }

    fn initial(&mut self, prefix: &str, seed: u64) -> InitialData {
        let kind = self
            .choice(
                &format!("{prefix}.kind"),
                Perturbation::parse,
                "none, constant, bump, mixed, random",
            )
            .unwrap_or(Perturbation::None);
        let amplitude = self.number(&format!("{prefix}.amplitude"), |_| true, "finite");
        let mode = self.count(&format!("{prefix}.mode"), 1);
        InitialData {
            kind,
            amplitude,
            mode,
            seed,
        }
    }
}

fn time_scheme(s: &str) -> Option<TimeScheme> {
    match s {
        "euler" => Some(TimeScheme::Euler),
        "extrapolated" => Some(TimeScheme::Extrapolated),
        _ => None,
    }
}

fn flow_scheme(s: &str) -> Option<FlowScheme> {
    match s {
        "semi-implicit" => Some(FlowScheme::SemiImplicit),
        "euler" => Some(FlowScheme::Euler),
        "picard" => Some(FlowScheme::Picard),
        _ => None,
    }
}

fn gauge(s: &str) -> Option<crate::elliptic::Gauge> {
    match s {
        "mean-zero" => Some(crate::elliptic::Gauge::MeanZero),
        "outer-zero" => Some(crate::elliptic::Gauge::OuterBoundaryZero),
        _ => None,
    }
}

impl RunConfig {
    /// Builds and validates a configuration from layered key/value pairs.
    pub fn from_pairs<'a>(layers: impl IntoIterator<Item = &'a (String, String)>) -> Result<Self> {
        let mut table: BTreeMap<String, String> = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut errors = Vec::new();
        for (k, v) in layers {
            match table.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => errors.push(format!("{k}: unknown key")),
            }
        }
        let mut r = Reader {
            table: &table,
            errors,
        };
        let kind = r.choice(
            "surface.kind",
            SurfaceKind::parse,
            "football-cc, football-flatcap, conedisk",
        );
        let beta = r.number("surface.beta", |b| b > -1.0, "beta > -1");
        let blend = r.number("surface.blend_width", |w| w > 0.0, "blend_width > 0");
        let n_rho = r.count("grid.n_rho", 16);
        let l_max = r.count("grid.l_max", 1);
        let grading = r.number("grid.grading", |g| g > 1.0 && g < 2.0, "1 < grading < 2");
        let octaves = match r.raw("grid.octaves") {
            "auto" => None,
            _ => Some(r.count("grid.octaves", 2)),
        };
        let seed = r.parse::<u64>("seed").unwrap_or(0);
        let positive = |v: f64| v > 0.0;
        let flow = FlowConfig {
            dt: r.number("flow.dt", positive, "dt > 0"),
            t_end: r.number("flow.t_end", |t| t >= 0.0, "t_end >= 0"),
            scheme: r
                .choice("flow.scheme", flow_scheme, "semi-implicit, euler, picard")
                .unwrap_or(FlowScheme::SemiImplicit),
            record_every: r.count("flow.record_every", 1),
            initial: r.initial("flow.perturbation", seed),
            picard_t_end: r.number("flow.picard.t_end", positive, "t_end > 0"),
            picard_tol: r.number("flow.picard.tol", positive, "tol > 0"),
            picard_max_iters: r.count("flow.picard.max_iters", 2),
            cascade_order: r.count("flow.cascade.order", 1),
            cascade_delta: r.number("flow.cascade.delta", |t| t >= 0.0, "delta >= 0"),
            cascade_pole_floor: r.number(
                "flow.cascade.pole_floor",
                |f| (0.0..0.5).contains(&f),
                "0 <= pole_floor < 0.5",
            ),
        };
        if flow.cascade_order > crate::flow::CASCADE_MAX {
            r.errors.push(format!(
                "flow.cascade.order: {} exceeds {}",
                flow.cascade_order,
                crate::flow::CASCADE_MAX
            ));
        }
        let ks: Vec<usize> = r
            .raw("linear.k")
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect();
        let ks_ok = ks.len() == r.raw("linear.k").split(',').count()
            && ks.len() >= 2
            && ks.iter().all(|&k| k >= 2)
            && ks.windows(2).all(|w| w[1] > w[0]);
        if !ks_ok {
            r.errors.push(format!(
                "linear.k: `{}` must be an increasing list of at least two integers >= 2",
                r.raw("linear.k")
            ));
        }
        let linear = LinearConfig {
            a: r.number("linear.a", positive, "a > 0"),
            b: r.number("linear.b", |_| true, "finite"),
            dt: r.number("linear.dt", positive, "dt > 0"),
            t_end: r.number("linear.t_end", positive, "t_end > 0"),
            scheme: r
                .choice("linear.scheme", time_scheme, "euler, extrapolated")
                .unwrap_or(TimeScheme::Euler),
            k: ks,
            initial: r.initial("linear.perturbation", seed),
        };
        let poisson = PoissonConfig {
            rhs: r.path("poisson.rhs"),
            gauge: r
                .choice("poisson.gauge", gauge, "mean-zero, outer-zero")
                .unwrap_or(crate::elliptic::Gauge::MeanZero),
        };
        let expand = ExpandConfig {
            q_target: r.number("expand.q_target", positive, "q_target > 0"),
            input: r.path("expand.input"),
            rhs: r.path("expand.rhs"),
        };
        let output_dir = PathBuf::from(r.raw("output.dir"));
        if r.raw("output.dir").is_empty() {
            r.errors.push("output.dir: must not be empty".into());
        }
        let surface = match kind {
            Some(kind) if beta.is_finite() && blend.is_finite() => {
                match ConeSurface::new(kind, beta, blend) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        r.errors.push(format!("surface: {e}"));
                        None
                    }
                }
            }
            _ => None,
        };
        let errors = r.errors;
        match surface {
            Some(surface) if errors.is_empty() => Ok(Self {
                surface,
                grid: GridConfig {
                    n_rho,
                    l_max,
                    grading,
                    octaves,
                },
                flow,
                linear,
                poisson,
                expand,
                output_dir,
                seed,
                resolved: table,
            }),
            _ => Err(Error::Config(errors)),
        }
    }

    /// Reads a config file and applies overrides on top of it.
    pub fn load(path: Option<&std::path::Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(vec![format!("--config {}: {e}", p.display())]))?;
                parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    /// Discretized background domain.
    pub fn domain(&self) -> Result<crate::Domain> {
        crate::Domain::with_octaves(
            self.surface.clone(),
            self.grid.n_rho,
            self.grid.l_max,
            self.grid.grading,
            self.grid.octaves,
        )
    }

    /// The resolved table in file syntax.
    pub fn to_text(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
