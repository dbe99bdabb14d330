//! Run plans: subcommand plus a flat set of validated `key = value` settings.
//!
//! The same key table drives the command-line flags and the config file, so
//! a plan echo written by one run is a valid config for the next.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use amo_core::circle::{AlphaKind, AlphaSpec, TailPolicy};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Num,
    Int,
    Text,
}

/// Every key a plan may carry; anything else is a usage error.
pub const KEYS: &[(&str, Kind, &str)] = &[
    ("alpha", Kind::Text, "golden | silver | linear | quadratic:P,Q,D | cf:A1,A2,..[;period=N|;step=N] | decimal:DIGITS"),
    ("precision", Kind::Int, "fixed-point bits for circle arithmetic"),
    ("seed", Kind::Int, "seed for sampled checks and random covers"),
    ("lambda", Kind::Num, "coupling of the operator"),
    ("delta", Kind::Num, "target resonance strength"),
    ("beta", Kind::Num, "target level-set exponent, mapped to delta through lambda"),
    ("s", Kind::Num, "gauge exponent"),
    ("eta", Kind::Num, "decay rate of the threshold e^{-k eta}"),
    ("K", Kind::Int, "first index of the tail sum"),
    ("ks", Kind::Text, "comma-separated tail starts for the tail table"),
    ("mode", Kind::Text, "faithful | toy"),
    ("depth", Kind::Int, "Cantor depth, or continued-fraction depth for cf"),
    ("branches", Kind::Int, "children expanded per node; 0 expands all"),
    ("tree", Kind::Text, "path to a tree.json from cantor-build"),
    ("leaf", Kind::Text, "leaf path such as 0.1.0"),
    ("n", Kind::Int, "single convergent level for separation"),
    ("q_max", Kind::Int, "largest denominator of a scan or ladder"),
    ("m", Kind::Int, "first orbit index of a discrepancy count"),
    ("len", Kind::Int, "number of orbit points of a discrepancy count"),
    ("interval", Kind::Text, "a,b"),
    ("x", Kind::Num, "circle point in [0, 1)"),
    ("window", Kind::Text, "kmin,kmax"),
    ("tol", Kind::Num, "tolerance of a classification or stability check"),
    ("pq", Kind::Text, "rational frequency p/q"),
    ("E", Kind::Num, "energy"),
    ("samples", Kind::Int, "number of samples"),
    ("eps", Kind::Text, "lo,hi,count log-spaced epsilon grid"),
    ("radii", Kind::Text, "hi,lo,count log-spaced radius grid"),
    ("rungs", Kind::Int, "finest approximants used by localdim"),
    ("ln_r_min", Kind::Num, "log of the smallest certificate radius"),
    ("direction", Kind::Text, "f-to-d | d-to-f"),
    ("cover", Kind::Text, "a,b;a,b;..."),
    ("theta", Kind::Text, "two-phase | grid:M"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Cf,
    Separation,
    Discrepancy,
    Resonance,
    CantorBuild,
    CantorAudit,
    MassAssign,
    MdpCert,
    Tail,
    Butterfly,
    Ids,
    Holder,
    Gaps,
    Localdim,
    MapBetaDelta,
    TransportCover,
}

impl Command {
    pub const ALL: [Command; 16] = [
        Command::Cf,
        Command::Separation,
        Command::Discrepancy,
        Command::Resonance,
        Command::CantorBuild,
        Command::CantorAudit,
        Command::MassAssign,
        Command::MdpCert,
        Command::Tail,
        Command::Butterfly,
        Command::Ids,
        Command::Holder,
        Command::Gaps,
        Command::Localdim,
        Command::MapBetaDelta,
        Command::TransportCover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Cf => "cf",
            Command::Separation => "separation",
            Command::Discrepancy => "discrepancy",
            Command::Resonance => "resonance",
            Command::CantorBuild => "cantor-build",
            Command::CantorAudit => "cantor-audit",
            Command::MassAssign => "mass-assign",
            Command::MdpCert => "mdp-cert",
            Command::Tail => "tail",
            Command::Butterfly => "butterfly",
            Command::Ids => "ids",
            Command::Holder => "holder",
            Command::Gaps => "gaps",
            Command::Localdim => "localdim",
            Command::MapBetaDelta => "map-beta-delta",
            Command::TransportCover => "transport-cover",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown command `{s}`")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub command: Command,
    /// Validated settings, keyed by [`KEYS`] names; always holds `seed`.
    pub values: BTreeMap<String, String>,
    /// Not part of the plan echo, so reruns elsewhere reproduce the manifest.
    pub out: PathBuf,
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|&(_, kind, _)| kind)
}

fn check_value(key: &str, value: &str) -> Result<(), CliError> {
    let ok = match kind_of(key) {
        None => return Err(CliError::Usage(format!("unknown key `{key}`"))),
        Some(Kind::Num) => value.parse::<f64>().map(|v| !v.is_nan()).unwrap_or(false),
        Some(Kind::Int) => value.parse::<u64>().is_ok(),
        Some(Kind::Text) => !value.is_empty(),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("bad value {value:?} for `{key}`")))
    }
}

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key = value", i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k != "command" {
            check_value(k, v)
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Usage(format!(
                "config line {}: duplicate key `{k}`",
                i + 1
            )));
        }
    }
    Ok(out)
}

fn cli() -> clap::Command {
    let mut cmd = clap::Command::new("amo")
        .about("Resonance sets, Cantor constructions and spectral checks for the almost Mathieu operator")
        .arg(
            clap::Arg::new("command")
                .help("cf, separation, discrepancy, resonance, cantor-build, cantor-audit, mass-assign, mdp-cert, tail, butterfly, ids, holder, gaps, localdim, map-beta-delta, transport-cover"),
        )
        .arg(clap::Arg::new("config").long("config").help("flat key = value plan file"))
        .arg(clap::Arg::new("out").long("out").help("artifact directory (default amo-out)"));
    for &(key, _, help) in KEYS {
        let mut arg = clap::Arg::new(key)
            .long(key)
            .help(help)
            .allow_hyphen_values(true);
        if key == "beta" {
            arg = arg.conflicts_with("delta");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

/// Merges the config file (if any) with the flags; flags win.
pub fn parse_plan<I, T>(argv: I) -> Result<RunPlan, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = cli()
        .try_get_matches_from(argv)
        .map_err(|e| match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                CliError::Help(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        })?;
    let mut values = match matches.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
            parse_config(&text)?
        }
        None => BTreeMap::new(),
    };
    let from_config = values.remove("command");
    let command = match matches
        .get_one::<String>("command")
        .or(from_config.as_ref())
    {
        Some(c) => Command::parse(c)?,
        None => return Err(CliError::Usage("no command given".into())),
    };
    for &(key, _, _) in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            check_value(key, v).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
            // beta and delta name the same parameter
            match key {
                "beta" => values.remove("delta"),
                "delta" => values.remove("beta"),
                _ => None,
            };
            values.insert(key.to_string(), v.clone());
        }
    }
    if values.contains_key("beta") && values.contains_key("delta") {
        return Err(CliError::Usage(
            "beta and delta are mutually exclusive".into(),
        ));
    }
    values.entry("seed".into()).or_insert_with(|| "0".into());
    let out = matches
        .get_one::<String>("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("amo-out"));
    Ok(RunPlan {
        command,
        values,
        out,
    })
}

pub fn usage() -> String {
    cli().render_help().to_string()
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::Usage(format!("`{key}` = {value:?}: {why}"))
}

impl RunPlan {
    /// `command = ...` followed by the sorted settings; a valid config file.
    pub fn canonical(&self) -> String {
        let mut s = format!("command = {}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn f64_opt(&self, key: &str) -> Option<f64> {
        self.raw(key)
            .map(|v| v.parse().expect("validated at parse time"))
    }

    pub fn u64_opt(&self, key: &str) -> Option<u64> {
        self.raw(key)
            .map(|v| v.parse().expect("validated at parse time"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> f64 {
        self.f64_opt(key).unwrap_or(default)
    }

    pub fn u64_or(&self, key: &str, default: u64) -> u64 {
        self.u64_opt(key).unwrap_or(default)
    }

    pub fn f64_req(&self, key: &str) -> Result<f64, CliError> {
        self.f64_opt(key)
            .ok_or_else(|| CliError::Usage(format!("{} needs --{key}", self.command)))
    }

    pub fn text_req(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Usage(format!("{} needs --{key}", self.command)))
    }

    pub fn seed(&self) -> u64 {
        self.u64_or("seed", 0)
    }

    /// Comma-separated numbers of a fixed arity.
    pub fn numbers(&self, key: &str, arity: usize) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(key, v, e))?;
        if parts.len() != arity {
            return Err(bad(
                key,
                v,
                format!("expected {arity} comma-separated numbers"),
            ));
        }
        Ok(Some(parts))
    }

    pub fn alpha(&self) -> Result<AlphaSpec, CliError> {
        let v = self.raw("alpha").unwrap_or("golden");
        let mut spec = parse_alpha(v).map_err(|why| bad("alpha", v, why))?;
        if let Some(bits) = self.u64_opt("precision") {
            spec = spec.with_precision(
                u32::try_from(bits).map_err(|e| bad("precision", &bits.to_string(), e))?,
            );
        }
        spec.validate()?;
        Ok(spec)
    }

    /// `delta` directly, or `beta` mapped through `lambda`.
    pub fn delta_opt(&self) -> Result<Option<f64>, CliError> {
        if let Some(d) = self.f64_opt("delta") {
            return Ok(Some(d));
        }
        match self.f64_opt("beta") {
            Some(beta) => {
                let lambda = self.f64_req("lambda")?;
                Ok(Some(amo_core::amo::delta_of_beta(beta, lambda)?))
            }
            None => Ok(None),
        }
    }

    pub fn delta_req(&self) -> Result<f64, CliError> {
        self.delta_opt()?
            .ok_or_else(|| CliError::Usage(format!("{} needs --delta or --beta", self.command)))
    }
}

fn parse_alpha(v: &str) -> Result<AlphaSpec, String> {
    let ints = |s: &str| -> Result<Vec<i64>, String> {
        s.split(',')
            .map(|p| p.trim().parse::<i64>().map_err(|e| e.to_string()))
            .collect()
    };
    let spec = match v {
        "golden" => AlphaSpec::golden(),
        "silver" => AlphaSpec::silver(),
        "linear" => AlphaSpec::linear_cf(),
        _ => match v.split_once(':') {
            Some(("quadratic", rest)) => match ints(rest)?[..] {
                [p, q, d] if d >= 0 => AlphaSpec::new(AlphaKind::Quadratic { p, q, d: d as u64 }),
                _ => return Err("quadratic needs P,Q,D with D >= 0".into()),
            },
            Some(("cf", rest)) => {
                let (qs, tail) = rest.split_once(';').unwrap_or((rest, "period=1"));
                let quotients = ints(qs)?
                    .into_iter()
                    .map(|a| u64::try_from(a).map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()?;
                let tail = match tail.split_once('=') {
                    Some(("period", n)) => TailPolicy::Periodic {
                        period: n
                            .parse()
                            .map_err(|e: std::num::ParseIntError| e.to_string())?,
                    },
                    Some(("step", n)) => TailPolicy::Linear {
                        step: n
                            .parse()
                            .map_err(|e: std::num::ParseIntError| e.to_string())?,
                    },
                    _ => return Err("tail must be period=N or step=N".into()),
                };
                AlphaSpec::new(AlphaKind::CfPrefix { quotients, tail })
            }
            Some(("decimal", digits)) => AlphaSpec::decimal(digits),
            _ => return Err("unknown alpha form".into()),
        },
    };
    Ok(spec)
}
