//! Flat `key = value` configuration files and their merge order.
//!
//! An invocation starts from built-in defaults, then applies the
//! `NOMA_LIMFB_SEED` environment variable, then the `--config` file, then
//! command-line flags, so later sources override earlier ones. Budget keys
//! accept either a single bit count or an inclusive range `a..b`; every
//! other key mirrors one experiment-configuration field.

use noma_limfb::error::{Error, Result};
use noma_limfb::harness::{CodebookMode, DeltaSource, ExperimentConfig};
use noma_limfb::noma::LfFeasibilityMode;

/// Fully merged invocation: a per-cell base configuration plus the budget
/// grids a sweep iterates over.
#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub base: ExperimentConfig,
    pub b_grid: Vec<u32>,
    pub bp_grid: Vec<u32>,
}

impl Default for Invocation {
    fn default() -> Self {
        let base = ExperimentConfig::default();
        let b_grid = vec![base.cqi_bits];
        let bp_grid = vec![base.codebook_bits];
        Self { base, b_grid, bp_grid }
    }
}

impl Invocation {
    /// Require a single-valued gain-bit budget, for subcommands that run
    /// one cell.
    pub fn single_b(&self) -> Result<u32> {
        single(&self.b_grid, "b")
    }

    /// Require a single-valued codebook-bit budget.
    pub fn single_bp(&self) -> Result<u32> {
        single(&self.bp_grid, "bprime")
    }

    /// Render in the config-file format; parsing the result reproduces
    /// this invocation exactly.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("n_t", self.base.n_t.to_string());
        kv("cqi_bits", format_grid(&self.b_grid));
        kv("codebook_bits", format_grid(&self.bp_grid));
        kv("snr_db", self.base.snr_db.to_string());
        kv("r_th", self.base.r_th.to_string());
        kv("n_samples", self.base.n_samples.to_string());
        kv("seed", self.base.seed.to_string());
        kv("delta_source", format_delta_source(self.base.delta_source));
        kv("codebook_mode", format_codebook_mode(self.base.codebook_mode));
        kv("feasibility_mode", format_feasibility_mode(self.base.feasibility_mode));
        kv("independent_user_codebooks", self.base.independent_user_codebooks.to_string());
        kv("condition_on_unsaturated", self.base.condition_on_unsaturated.to_string());
        kv("delta_train_samples", self.base.delta_train_samples.to_string());
        out
    }

    /// Overwrite fields present in `overlay`.
    pub fn apply(&mut self, overlay: &Overlay) {
        let o = overlay.clone();
        if let Some(v) = o.n_t {
            self.base.n_t = v;
        }
        if let Some(v) = o.cqi_bits {
            self.base.cqi_bits = v[0];
            self.b_grid = v;
        }
        if let Some(v) = o.codebook_bits {
            self.base.codebook_bits = v[0];
            self.bp_grid = v;
        }
        if let Some(v) = o.snr_db {
            self.base.snr_db = v;
        }
        if let Some(v) = o.r_th {
            self.base.r_th = v;
        }
        if let Some(v) = o.n_samples {
            self.base.n_samples = v;
        }
        if let Some(v) = o.seed {
            self.base.seed = v;
        }
        if let Some(v) = o.delta_source {
            self.base.delta_source = v;
        }
        if let Some(v) = o.codebook_mode {
            self.base.codebook_mode = v;
        }
        if let Some(v) = o.feasibility_mode {
            self.base.feasibility_mode = v;
        }
        if let Some(v) = o.independent_user_codebooks {
            self.base.independent_user_codebooks = v;
        }
        if let Some(v) = o.condition_on_unsaturated {
            self.base.condition_on_unsaturated = v;
        }
        if let Some(v) = o.delta_train_samples {
            self.base.delta_train_samples = v;
        }
    }
}

fn single(grid: &[u32], name: &str) -> Result<u32> {
    if grid.len() == 1 {
        Ok(grid[0])
    } else {
        Err(Error::Config(format!("this subcommand needs a single --{name}, not a range")))
    }
}

/// One source's worth of settings; `None` leaves the field untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overlay {
    pub n_t: Option<usize>,
    pub cqi_bits: Option<Vec<u32>>,
    pub codebook_bits: Option<Vec<u32>>,
    pub snr_db: Option<f64>,
    pub r_th: Option<f64>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub delta_source: Option<DeltaSource>,
    pub codebook_mode: Option<CodebookMode>,
    pub feasibility_mode: Option<LfFeasibilityMode>,
    pub independent_user_codebooks: Option<bool>,
    pub condition_on_unsaturated: Option<bool>,
    pub delta_train_samples: Option<usize>,
}

/// Parse `a..b` (inclusive, ascending) or a single bit count.
pub fn parse_grid(text: &str) -> Result<Vec<u32>> {
    let bad = |what: &str| Error::Config(format!("{what} in budget range {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let lo: u32 = a.trim().parse().map_err(|_| bad("unreadable start"))?;
        let hi: u32 = b.trim().parse().map_err(|_| bad("unreadable end"))?;
        if lo == 0 || hi < lo {
            return Err(bad("empty or zero-based span"));
        }
        Ok((lo..=hi).collect())
    } else {
        let k: u32 = text.trim().parse().map_err(|_| bad("unreadable bit count"))?;
        if k == 0 {
            return Err(bad("zero bits"));
        }
        Ok(vec![k])
    }
}

fn format_grid(grid: &[u32]) -> String {
    if grid.len() == 1 {
        grid[0].to_string()
    } else {
        format!("{}..{}", grid[0], grid[grid.len() - 1])
    }
}

/// Parse `reference`, `trained`, or `explicit:VALUE`.
pub fn parse_delta_source(text: &str) -> Result<DeltaSource> {
    match text {
        "reference" => Ok(DeltaSource::Reference),
        "trained" => Ok(DeltaSource::Trained),
        other => {
            if let Some(v) = other.strip_prefix("explicit:") {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Config(format!("unreadable explicit step {v:?}")))?;
                Ok(DeltaSource::Explicit(x))
            } else {
                Err(Error::Config(format!(
                    "delta source {other:?} is not reference, trained, or explicit:VALUE"
                )))
            }
        }
    }
}

fn format_delta_source(source: DeltaSource) -> String {
    match source {
        DeltaSource::Reference => "reference".into(),
        DeltaSource::Trained => "trained".into(),
        DeltaSource::Explicit(v) => format!("explicit:{v}"),
    }
}

pub fn parse_codebook_mode(text: &str) -> Result<CodebookMode> {
    match text {
        "per-sample" => Ok(CodebookMode::PerSample),
        "fixed" => Ok(CodebookMode::Fixed),
        other => {
            Err(Error::Config(format!("codebook mode {other:?} is not per-sample or fixed")))
        }
    }
}

fn format_codebook_mode(mode: CodebookMode) -> String {
    match mode {
        CodebookMode::PerSample => "per-sample".into(),
        CodebookMode::Fixed => "fixed".into(),
    }
}

pub fn parse_feasibility_mode(text: &str) -> Result<LfFeasibilityMode> {
    match text {
        "operational" => Ok(LfFeasibilityMode::Operational),
        "conservative" => Ok(LfFeasibilityMode::Conservative),
        other => Err(Error::Config(format!(
            "feasibility mode {other:?} is not operational or conservative"
        ))),
    }
}

fn format_feasibility_mode(mode: LfFeasibilityMode) -> String {
    match mode {
        LfFeasibilityMode::Operational => "operational".into(),
        LfFeasibilityMode::Conservative => "conservative".into(),
    }
}

fn parse_bool(key: &str, text: &str) -> Result<bool> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!("{key} must be true or false, got {other:?}"))),
    }
}

/// Parse a config file: one `key = value` per line, `#` starts a comment,
/// blank lines are skipped, unknown keys are rejected.
pub fn parse_config_file(text: &str) -> Result<Overlay> {
    let mut o = Overlay::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| Error::Config(format!("config line {}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let num = |what: &str| at(format!("unreadable {what} {value:?}"));
        match key {
            "n_t" => o.n_t = Some(value.parse().map_err(|_| num("antenna count"))?),
            "cqi_bits" => o.cqi_bits = Some(parse_grid(value).map_err(|e| at(e.to_string()))?),
            "codebook_bits" => {
                o.codebook_bits = Some(parse_grid(value).map_err(|e| at(e.to_string()))?)
            }
            "snr_db" => o.snr_db = Some(value.parse().map_err(|_| num("SNR"))?),
            "r_th" => o.r_th = Some(value.parse().map_err(|_| num("rate threshold"))?),
            "n_samples" => o.n_samples = Some(value.parse().map_err(|_| num("sample count"))?),
            "seed" => o.seed = Some(value.parse().map_err(|_| num("seed"))?),
            "delta_source" => {
                o.delta_source = Some(parse_delta_source(value).map_err(|e| at(e.to_string()))?)
            }
            "codebook_mode" => {
                o.codebook_mode = Some(parse_codebook_mode(value).map_err(|e| at(e.to_string()))?)
            }
            "feasibility_mode" => {
                o.feasibility_mode =
                    Some(parse_feasibility_mode(value).map_err(|e| at(e.to_string()))?)
            }
            "independent_user_codebooks" => {
                o.independent_user_codebooks =
                    Some(parse_bool(key, value).map_err(|e| at(e.to_string()))?)
            }
            "condition_on_unsaturated" => {
                o.condition_on_unsaturated =
                    Some(parse_bool(key, value).map_err(|e| at(e.to_string()))?)
            }
            "delta_train_samples" => {
                o.delta_train_samples = Some(value.parse().map_err(|_| num("sample count"))?)
            }
            other => return Err(at(format!("unknown config key {other:?}"))),
        }
    }
    Ok(o)
}
