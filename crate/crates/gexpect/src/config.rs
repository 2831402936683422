//! Run configuration: a flat sectioned `key = value` text file (JSON object
//! of objects accepted as an alternative encoding), held internally as
//! sorted string maps so the canonical re-serialization is byte-identical
//! across runs. Typed accessors build the domain objects and report missing
//! sections/keys by name.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::core::{
    CoefFn, CoefficientSpec, FunctionForm, GCoefficients, GeneratorSpec, SpaceGrid, TimeGrid,
};
use crate::error::{GxError, Result};
use crate::scenario::{feedback_control_from_field, ControlKind, VolatilityControl};

type Section = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    sections: BTreeMap<String, Section>,
}

fn cfg_err(msg: String) -> GxError {
    GxError::Config(msg)
}

impl RunConfig {
    /// Parse from text: a leading `{` selects the JSON encoding, anything
    /// else the sectioned key=value format.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_ini(text)
        }
    }

    fn parse_ini(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                cfg_err(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let sec = current
                .as_ref()
                .ok_or_else(|| cfg_err(format!("line {}: key outside any section", lineno + 1)))?;
            sections
                .get_mut(sec)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    fn parse_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| cfg_err(format!("invalid JSON config: {}", e)))?;
        let obj = v
            .as_object()
            .ok_or_else(|| cfg_err("JSON config must be an object of sections".into()))?;
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        for (sec, body) in obj {
            let body = body.as_object().ok_or_else(|| {
                cfg_err(format!("section {:?} must be an object", sec))
            })?;
            let mut out = Section::new();
            for (k, val) in body {
                let s = match val {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    other => {
                        return Err(cfg_err(format!(
                            "section {:?} key {:?}: unsupported value {}",
                            sec, k, other
                        )))
                    }
                };
                out.insert(k.clone(), s);
            }
            sections.insert(sec.clone(), out);
        }
        Ok(Self { sections })
    }

    /// Apply one `section.key=value` override.
    pub fn apply_set(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("override {:?}: expected section.key=value", spec)))?;
        let (sec, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| cfg_err(format!("override {:?}: expected section.key=value", spec)))?;
        self.sections
            .entry(sec.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    /// Canonical text form: sections and keys sorted, `key = value` lines.
    /// Byte-identical across runs for equal contents.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (sec, body) in &self.sections {
            writeln!(out, "[{}]", sec).unwrap();
            for (k, v) in body {
                writeln!(out, "{} = {}", k, v).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical form, hex-encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn has_section(&self, sec: &str) -> bool {
        self.sections.contains_key(sec)
    }

    fn section(&self, sec: &str) -> Result<&Section> {
        self.sections
            .get(sec)
            .ok_or_else(|| cfg_err(format!("missing section [{}]", sec)))
    }

    pub fn get(&self, sec: &str, key: &str) -> Result<&str> {
        self.section(sec)?
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| cfg_err(format!("missing key {} in section [{}]", key, sec)))
    }

    pub fn get_or<'a>(&'a self, sec: &str, key: &str, default: &'a str) -> &'a str {
        self.sections
            .get(sec)
            .and_then(|s| s.get(key))
            .map(String::as_str)
            .unwrap_or(default)
    }

    pub fn get_f64(&self, sec: &str, key: &str) -> Result<f64> {
        let raw = self.get(sec, key)?;
        raw.parse()
            .map_err(|_| cfg_err(format!("[{}] {} = {:?} is not a number", sec, key, raw)))
    }

    pub fn get_f64_or(&self, sec: &str, key: &str, default: f64) -> Result<f64> {
        match self.sections.get(sec).and_then(|s| s.get(key)) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| cfg_err(format!("[{}] {} = {:?} is not a number", sec, key, raw))),
        }
    }

    pub fn get_usize(&self, sec: &str, key: &str) -> Result<usize> {
        let raw = self.get(sec, key)?;
        raw.parse()
            .map_err(|_| cfg_err(format!("[{}] {} = {:?} is not an integer", sec, key, raw)))
    }

    pub fn get_u64_or(&self, sec: &str, key: &str, default: u64) -> Result<u64> {
        match self.sections.get(sec).and_then(|s| s.get(key)) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| cfg_err(format!("[{}] {} = {:?} is not an integer", sec, key, raw))),
        }
    }

    pub fn get_usize_or(&self, sec: &str, key: &str, default: usize) -> Result<usize> {
        match self.sections.get(sec).and_then(|s| s.get(key)) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| cfg_err(format!("[{}] {} = {:?} is not an integer", sec, key, raw))),
        }
    }

    // ---- typed builders -------------------------------------------------

    pub fn band(&self) -> Result<GCoefficients<f64>> {
        GCoefficients::new(self.get_f64("g", "sigma_low")?, self.get_f64("g", "sigma_high")?)
    }

    pub fn space_grid(&self) -> Result<SpaceGrid<f64>> {
        SpaceGrid::new(
            self.get_f64("grid", "x_min")?,
            self.get_f64("grid", "x_max")?,
            self.get_usize("grid", "nx")?,
        )
    }

    pub fn time_grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::new(self.get_f64("grid", "T")?, self.get_usize("grid", "nt")?)
    }

    pub fn generator(&self) -> Result<GeneratorSpec<f64>> {
        if !self.has_section("generator") {
            return Ok(GeneratorSpec::zero());
        }
        let form = parse_form(self.get_or("generator", "name", "zero"))?;
        let f_form = match self.sections.get("generator").and_then(|s| s.get("f")) {
            None => None,
            Some(spec) => Some(parse_form(spec)?),
        };
        let mut lip = form.lipschitz();
        if let Some(f) = &f_form {
            lip = lip.max(f.lipschitz());
        }
        GeneratorSpec::new(form, lip, f_form)
    }

    pub fn coefficients(&self) -> Result<CoefficientSpec<f64>> {
        if !self.has_section("coeffs") {
            return Ok(CoefficientSpec::canonical());
        }
        Ok(CoefficientSpec {
            b: parse_coef(self.get_or("coeffs", "b", "constant(0)"))?,
            h: parse_coef(self.get_or("coeffs", "h", "constant(0)"))?,
            sigma: parse_coef(self.get_or("coeffs", "sigma", "constant(1)"))?,
        })
    }

    /// Terminal payoff `phi(x)` from the `[payoff]` section's named form.
    pub fn payoff(&self) -> Result<NamedPayoff> {
        parse_payoff(self.get("payoff", "name")?)
    }

    pub fn x0(&self) -> Result<f64> {
        self.get_f64_or("payoff", "x0", 0.0)
    }

    /// Penalty schedule: `geometric(base,max)` or an explicit comma list.
    pub fn schedule(&self) -> Result<Vec<f64>> {
        let spec = self.get_or("penalty", "schedule", "geometric(2,4096)");
        if let Some(args) = strip_call(spec, "geometric") {
            let (base, max) = two_args(args, spec)?;
            let (base, max) = (base as u32, max as u32);
            if base < 2 || max < 1 {
                return Err(cfg_err(format!("bad schedule {:?}", spec)));
            }
            return Ok(crate::decompose::geometric_schedule(base, max));
        }
        let vals: Vec<f64> = spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| cfg_err(format!("bad schedule entry {:?}", s)))
            })
            .collect::<Result<_>>()?;
        Ok(vals)
    }

    pub fn gap_tol(&self) -> Result<f64> {
        self.get_f64_or("penalty", "gap_tol", 1e-3)
    }

    pub fn n_paths(&self) -> Result<usize> {
        self.get_usize_or("mc", "n_paths", 100_000)
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.get_u64_or("mc", "master_seed", 1)
    }

    /// Control family from the comma-separated `[mc] controls` list. Entries:
    /// `constant(h)`, `alternating`, `feedback` (requires `feedback_field`).
    pub fn controls(
        &self,
        gc: GCoefficients<f64>,
        time: &TimeGrid<f64>,
        feedback_field: Option<&crate::core::SpaceTimeField<f64>>,
    ) -> Result<Vec<VolatilityControl<f64>>> {
        let spec = self.get_or("mc", "controls", "constant(sigma_low), constant(sigma_high)");
        let mut out = Vec::new();
        for entry in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            // rejoin constant(h): split on ',' cannot break it since the
            // argument has no comma
            out.push(parse_control(entry, gc, time, feedback_field)?);
        }
        if out.is_empty() {
            return Err(cfg_err("empty control list".into()));
        }
        Ok(out)
    }

    /// Verification pairs: `dyadic` (default) or `s:t;s:t;...`.
    pub fn verify_pairs(&self, time: &TimeGrid<f64>) -> Result<Vec<(f64, f64)>> {
        let spec = self.get_or("verify", "pairs", "dyadic");
        if spec == "dyadic" {
            return Ok(crate::verify::default_pairs(time));
        }
        spec.split(';')
            .map(|pair| {
                let (s, t) = pair
                    .split_once(':')
                    .ok_or_else(|| cfg_err(format!("bad pair {:?}, expected s:t", pair)))?;
                Ok((
                    s.trim()
                        .parse()
                        .map_err(|_| cfg_err(format!("bad pair time {:?}", s)))?,
                    t.trim()
                        .parse()
                        .map_err(|_| cfg_err(format!("bad pair time {:?}", t)))?,
                ))
            })
            .collect()
    }

    pub fn verify_tol(&self) -> Result<Option<f64>> {
        match self.sections.get("verify").and_then(|s| s.get("tol")) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(format!("[verify] tol = {:?} is not a number", raw))),
        }
    }

    pub fn out_dir(&self) -> Option<&str> {
        self.sections
            .get("io")
            .and_then(|s| s.get("out_dir"))
            .map(String::as_str)
    }
}

/// A payoff from the closed registry, carrying its canonical name.
pub struct NamedPayoff {
    pub name: String,
    pub f: Box<dyn Fn(f64) -> f64 + Sync + Send>,
}

fn strip_call<'a>(spec: &'a str, name: &str) -> Option<&'a str> {
    spec.trim()
        .strip_prefix(name)?
        .trim()
        .strip_prefix('(')?
        .strip_suffix(')')
}

fn num_args(args: &str, ctx: &str) -> Result<Vec<f64>> {
    args.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| cfg_err(format!("bad argument {:?} in {:?}", s, ctx)))
        })
        .collect()
}

fn two_args(args: &str, ctx: &str) -> Result<(f64, f64)> {
    let v = num_args(args, ctx)?;
    if v.len() != 2 {
        return Err(cfg_err(format!("{:?} takes 2 arguments", ctx)));
    }
    Ok((v[0], v[1]))
}

/// Driver form registry: `zero`, `affine(a,b,c)`, `abs_z(mu)`.
pub fn parse_form(spec: &str) -> Result<FunctionForm<f64>> {
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(FunctionForm::Zero);
    }
    if let Some(args) = strip_call(spec, "affine") {
        let v = num_args(args, spec)?;
        if v.len() != 3 {
            return Err(cfg_err(format!("{:?}: affine takes (a, b, c)", spec)));
        }
        return Ok(FunctionForm::Affine {
            a: v[0],
            b: v[1],
            c: v[2],
        });
    }
    if let Some(args) = strip_call(spec, "abs_z") {
        let v = num_args(args, spec)?;
        if v.len() != 1 {
            return Err(cfg_err(format!("{:?}: abs_z takes (mu)", spec)));
        }
        return Ok(FunctionForm::AbsZ { mu: v[0] });
    }
    Err(cfg_err(format!("unknown driver form {:?}", spec)))
}

/// Coefficient form registry: `constant(c)`, `linear(alpha,beta)`.
pub fn parse_coef(spec: &str) -> Result<CoefFn<f64>> {
    let spec = spec.trim();
    if let Some(args) = strip_call(spec, "constant") {
        let v = num_args(args, spec)?;
        if v.len() != 1 {
            return Err(cfg_err(format!("{:?}: constant takes (c)", spec)));
        }
        return Ok(CoefFn::Constant(v[0]));
    }
    if let Some(args) = strip_call(spec, "linear") {
        let (alpha, beta) = two_args(args, spec)?;
        return Ok(CoefFn::Linear { alpha, beta });
    }
    Err(cfg_err(format!("unknown coefficient form {:?}", spec)))
}

/// Payoff registry: `square`, `neg_square`, `quartic`, `neg_quartic`, `abs`,
/// `pos_part`, `neg_part`, `identity`, `neg_identity`, `constant(c)`.
pub fn parse_payoff(spec: &str) -> Result<NamedPayoff> {
    let spec = spec.trim();
    let f: Box<dyn Fn(f64) -> f64 + Sync + Send> = match spec {
        "square" => Box::new(|x| x * x),
        "neg_square" => Box::new(|x| -x * x),
        "quartic" => Box::new(|x| x * x * x * x),
        "neg_quartic" => Box::new(|x| -(x * x * x * x)),
        "abs" => Box::new(f64::abs),
        "pos_part" => Box::new(|x| x.max(0.0)),
        "neg_part" => Box::new(|x: f64| (-x).max(0.0)),
        "identity" => Box::new(|x| x),
        "neg_identity" => Box::new(|x| -x),
        _ => {
            if let Some(args) = strip_call(spec, "constant") {
                let v = num_args(args, spec)?;
                if v.len() != 1 {
                    return Err(cfg_err(format!("{:?}: constant takes (c)", spec)));
                }
                let c = v[0];
                Box::new(move |_| c)
            } else {
                return Err(cfg_err(format!("unknown payoff {:?}", spec)));
            }
        }
    };
    Ok(NamedPayoff {
        name: spec.to_string(),
        f,
    })
}

fn parse_control(
    entry: &str,
    gc: GCoefficients<f64>,
    time: &TimeGrid<f64>,
    feedback_field: Option<&crate::core::SpaceTimeField<f64>>,
) -> Result<VolatilityControl<f64>> {
    if let Some(args) = strip_call(entry, "constant") {
        let h = match args.trim() {
            "sigma_low" => gc.sigma_low(),
            "sigma_high" => gc.sigma_high(),
            other => other
                .parse()
                .map_err(|_| cfg_err(format!("bad control level {:?}", other)))?,
        };
        return VolatilityControl::new(ControlKind::Constant(h), gc);
    }
    if entry == "alternating" {
        let vals = (0..time.n_steps())
            .map(|i| {
                if i % 2 == 0 {
                    gc.sigma_low()
                } else {
                    gc.sigma_high()
                }
            })
            .collect();
        return VolatilityControl::new(ControlKind::Piecewise(vals), gc);
    }
    if entry == "feedback" {
        let u = feedback_field.ok_or_else(|| {
            cfg_err("control `feedback` requires a solved value field in this pipeline".into())
        })?;
        return Ok(feedback_control_from_field(u.clone(), gc));
    }
    Err(cfg_err(format!("unknown control {:?}", entry)))
}
