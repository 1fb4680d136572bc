use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use dstc::im2col::ConvShape;
use dstc::spconv::ConvMode;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub a_density: f64,
    pub b_density: f64,
    /// `dense`, `single` or `dual`; dual when absent.
    #[serde(default)]
    pub mode: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Kh")]
    pub kh: usize,
    #[serde(rename = "Kw")]
    pub kw: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub act_density: f64,
    #[serde(default = "full")]
    pub wgt_density: f64,
    #[serde(default = "dual")]
    pub mode: String,
}

fn full() -> f64 {
    1.0
}

fn dual() -> String {
    "dual".into()
}

impl LayerSpec {
    pub fn shape(&self) -> Result<ConvShape> {
        ConvShape::new(self.h, self.w, self.c, self.kh, self.kw, self.s, self.n)
            .with_context(|| format!("layer {}", self.name))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Workload {
    Gemm(GemmSpec),
    Conv(LayerSpec),
    Im2colBench(LayerSpec),
}

/// One entry of a sweep file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub workload: Workload,
    /// Falls back to the global `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn density(what: &str, d: f64) -> Result<()> {
    ensure!((0.0..=1.0).contains(&d), "{what} {d} outside [0, 1]");
    Ok(())
}

fn dims(what: &[(&str, usize)]) -> Result<()> {
    for (name, v) in what {
        ensure!(*v >= 1, "{name} must be at least 1");
    }
    Ok(())
}

pub fn parse_mode(s: &str) -> Result<ConvMode> {
    s.parse::<ConvMode>().map_err(|e| anyhow::anyhow!("{e}"))
}

impl Scenario {
    pub fn new(workload: Workload) -> Self {
        Self {
            workload,
            seed: None,
            repetitions: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.repetitions >= 1, "repetitions must be at least 1");
        match &self.workload {
            Workload::Gemm(g) => {
                dims(&[("M", g.m), ("N", g.n), ("K", g.k)])?;
                density("a_density", g.a_density)?;
                density("b_density", g.b_density)?;
                if let Some(m) = &g.mode {
                    parse_mode(m)?;
                }
            }
            Workload::Conv(l) | Workload::Im2colBench(l) => {
                dims(&[("H", l.h), ("W", l.w), ("C", l.c), ("N", l.n), ("Kh", l.kh), ("Kw", l.kw), ("S", l.s)])?;
                density("act_density", l.act_density)?;
                density("wgt_density", l.wgt_density)?;
                parse_mode(&l.mode)?;
                l.shape()?;
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match &self.workload {
            Workload::Gemm(g) => g.name.clone().unwrap_or_else(|| {
                format!("gemm_{}x{}x{}_a{}_b{}", g.m, g.n, g.k, g.a_density, g.b_density)
            }),
            Workload::Conv(l) | Workload::Im2colBench(l) => l.name.clone(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.workload {
            Workload::Gemm(_) => "gemm",
            Workload::Conv(_) => "conv",
            Workload::Im2colBench(_) => "im2col-bench",
        }
    }
}

/// Parse a sweep file: a JSON array of scenarios, or `{"scenarios": [...]}`.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        List(Vec<Scenario>),
        Wrapped { scenarios: Vec<Scenario> },
    }
    let list = match serde_json::from_str::<File>(text) {
        Ok(File::List(l)) | Ok(File::Wrapped { scenarios: l }) => l,
        Err(_) => {
            // re-parse as a plain list for a precise error location
            serde_json::from_str::<Vec<Scenario>>(text).context("scenario file")?
        }
    };
    if list.is_empty() {
        bail!("scenario file lists no scenarios");
    }
    for (i, s) in list.iter().enumerate() {
        s.validate().with_context(|| format!("scenario {i} ({})", s.name()))?;
    }
    Ok(list)
}
