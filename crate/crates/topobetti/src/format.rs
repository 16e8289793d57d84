//! JSON and ASCII file formats. Every rational crosses the boundary as a canonical `p/q` string.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use topobetti_core::arrangement::PolyhedralComplex;
use topobetti_core::exact::{format_rational, parse_rational, BoxDomain, Matrix, Scalar};
use topobetti_core::network::{AffineLayer, ReluNetwork};
use topobetti_core::stability::StabilityReport;
use topobetti_core::verify::SignGrid;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerJson {
    pub weights: Vec<Vec<String>>,
    pub bias: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkJson {
    pub architecture: Vec<usize>,
    pub layers: Vec<LayerJson>,
}

impl NetworkJson {
    pub fn from_network(net: &ReluNetwork) -> NetworkJson {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                let w = l.weights();
                LayerJson {
                    weights: (0..w.rows()).map(|r| w.row(r).iter().map(format_rational).collect()).collect(),
                    bias: l.bias().iter().map(format_rational).collect(),
                }
            })
            .collect();
        NetworkJson { architecture: net.architecture(), layers }
    }

    /// Validates shapes and canonical rationals; errors name the 1-based layer.
    pub fn to_network(&self) -> Result<ReluNetwork> {
        if self.layers.is_empty() {
            bail!("network has no layers");
        }
        if self.architecture.len() != self.layers.len() + 1 {
            bail!("architecture lists {} widths but there are {} layers", self.architecture.len(), self.layers.len());
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let n = i + 1;
            let (rows, cols) = (self.architecture[i + 1], self.architecture[i]);
            if l.weights.len() != rows {
                bail!("layer {n}: expected {rows} weight rows, found {}", l.weights.len());
            }
            if l.bias.len() != rows {
                bail!("layer {n}: expected bias of length {rows}, found {}", l.bias.len());
            }
            let mut data = Vec::with_capacity(rows * cols);
            for (r, row) in l.weights.iter().enumerate() {
                if row.len() != cols {
                    bail!("layer {n}: weight row {} has {} entries, expected {cols}", r + 1, row.len());
                }
                for s in row {
                    data.push(parse_rational(s).with_context(|| format!("layer {n}: weight {s:?}"))?);
                }
            }
            let bias = l
                .bias
                .iter()
                .map(|s| parse_rational(s).with_context(|| format!("layer {n}: bias {s:?}")))
                .collect::<Result<Vec<_>>>()?;
            let weights = Matrix::new(rows, cols, data).with_context(|| format!("layer {n}"))?;
            layers.push(AffineLayer::new(weights, bias).with_context(|| format!("layer {n}"))?);
        }
        ReluNetwork::new(layers).map_err(Into::into)
    }
}

pub fn network_to_json(net: &ReluNetwork) -> String {
    serde_json::to_string_pretty(&NetworkJson::from_network(net)).expect("network JSON serializes")
}

pub fn network_from_json(text: &str) -> Result<ReluNetwork> {
    let j: NetworkJson = serde_json::from_str(text).context("malformed network JSON")?;
    j.to_network()
}

pub fn save_network(net: &ReluNetwork, path: &Path) -> Result<()> {
    fs::write(path, network_to_json(net) + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn load_network(path: &Path) -> Result<ReluNetwork> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    network_from_json(&text).with_context(|| format!("loading {}", path.display()))
}

/// `lo:hi` pairs separated by commas, e.g. `0:1,-1/2:1/2`.
pub fn parse_box(s: &str) -> Result<BoxDomain> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for part in s.split(',') {
        let (lo, hi) = part.split_once(':').with_context(|| format!("box interval {part:?} is not lo:hi"))?;
        lower.push(parse_cli_rational(lo)?);
        upper.push(parse_cli_rational(hi)?);
    }
    Ok(BoxDomain::new(lower, upper)?)
}

/// Accepts any `p/q` or integer, reduced or not.
pub fn parse_cli_rational(s: &str) -> Result<Scalar> {
    topobetti_core::exact::parse_rational_lenient(s.trim()).map_err(Into::into)
}

pub fn rationals(xs: &[Scalar]) -> Vec<String> {
    xs.iter().map(format_rational).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BoxJson {
    pub lower: Vec<String>,
    pub upper: Vec<String>,
}

impl BoxJson {
    pub fn new(b: &BoxDomain) -> BoxJson {
        BoxJson { lower: rationals(b.lower()), upper: rationals(b.upper()) }
    }
}

#[derive(Serialize)]
struct CellJson<'a> {
    id: usize,
    dim: usize,
    sign: &'a str,
    vertices: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct ComplexJson<'a> {
    cells: Vec<CellJson<'a>>,
    faces: &'a [(usize, usize)],
}

pub fn complex_to_json(pc: &PolyhedralComplex) -> String {
    let cells = pc
        .cells()
        .iter()
        .map(|c| CellJson {
            id: c.id,
            dim: c.dim,
            sign: c.sign.as_str(),
            vertices: c.vertices.iter().map(|&v| rationals(&pc.points()[v])).collect(),
        })
        .collect();
    serde_json::to_string_pretty(&ComplexJson { cells, faces: pc.faces() }).expect("complex JSON serializes")
}

#[derive(Serialize)]
struct ViolationJson {
    layer: usize,
    neuron: usize,
    cell: usize,
    reason: &'static str,
}

#[derive(Serialize)]
struct StabilityJson {
    combinatorially_stable: bool,
    topologically_stable: bool,
    violations: Vec<ViolationJson>,
    certified_delta: Option<String>,
    trials: usize,
    seed: u64,
    status: &'static str,
    baseline: Option<Vec<usize>>,
    trial_betti: Vec<Vec<usize>>,
    tried: Vec<String>,
}

pub fn stability_to_json(r: &StabilityReport) -> String {
    let j = StabilityJson {
        combinatorially_stable: r.combinatorially_stable,
        topologically_stable: r.topologically_stable,
        violations: r
            .violations
            .iter()
            .map(|v| ViolationJson { layer: v.neuron.layer, neuron: v.neuron.index, cell: v.cell, reason: v.reason.as_str() })
            .collect(),
        certified_delta: r.certified_delta.as_ref().map(format_rational),
        trials: r.trials,
        seed: r.seed,
        status: r.status.as_str(),
        baseline: r.baseline.as_ref().map(|b| b.values().to_vec()),
        trial_betti: r.trial_betti.iter().map(|b| b.values().to_vec()).collect(),
        tried: rationals(&r.tried),
    };
    serde_json::to_string_pretty(&j).expect("stability JSON serializes")
}

fn require_plane(g: &SignGrid) -> Result<usize> {
    if g.d() != 2 {
        bail!("grid dumps need a 2-dimensional grid, got d = {}", g.d());
    }
    Ok(g.resolution() as usize + 1)
}

/// Plain PGM (`P2`), gray levels `sign + 1`, top row at the largest second coordinate.
pub fn grid_to_pgm(g: &SignGrid) -> Result<String> {
    let side = require_plane(g)?;
    let mut out = format!("P2\n{side} {side}\n2\n");
    for row in (0..side).rev() {
        let line: Vec<String> = (0..side).map(|col| (g.signs()[row * side + col] + 1).to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    Ok(out)
}

/// One line per value of the second coordinate, ascending; one sign per cell.
pub fn grid_to_csv(g: &SignGrid) -> Result<String> {
    let side = require_plane(g)?;
    let mut out = String::new();
    for row in 0..side {
        let line: Vec<String> = (0..side).map(|col| g.signs()[row * side + col].to_string()).collect();
        writeln!(out, "{}", line.join(",")).unwrap();
    }
    Ok(out)
}
