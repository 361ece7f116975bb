//! SVG drawing of networks with mode, globality, extension and prediction
//! overlays.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde_json::Value;

use floppynet::control::compute_basis;
use floppynet::loadpredict::{globality, read_extensions_csv, DEFAULT_ENSEMBLE};
use floppynet::network::edge_key;
use floppynet::{Error, Method, Network};

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 40.0;
const DARK: [u8; 3] = [0x3b, 0x0f, 0x2c];
const BRIGHT: [u8; 3] = [0xff, 0xe0, 0x66];
const PURPLE: &str = "#7b3fbf";
const FIXED: &str = "#2f6fd6";
const FREE: &str = "#444444";
const ARROW: &str = "#1f9d55";

#[derive(Args)]
pub struct RenderArgs {
    network: PathBuf,
    /// none, mode:K, globality, extensions or prediction.
    #[arg(long, default_value = "none")]
    overlay: String,
    /// Basis method for mode overlays.
    #[arg(long, default_value = "snd")]
    method: String,
    /// Extensions CSV or prediction JSON for those overlays.
    #[arg(long)]
    data: Option<PathBuf>,
    /// SND runs for the globality overlay.
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE)]
    ensemble: usize,
    /// Lower end of the color scale (default: data minimum).
    #[arg(long)]
    min: Option<f64>,
    /// Upper end of the color scale (default: data maximum).
    #[arg(long)]
    max: Option<f64>,
}

enum Overlay {
    None,
    Mode(usize),
    Globality,
    Extensions,
    Prediction,
}

fn parse_overlay(s: &str) -> Result<Overlay, Error> {
    Ok(match s {
        "none" => Overlay::None,
        "globality" => Overlay::Globality,
        "extensions" => Overlay::Extensions,
        "prediction" => Overlay::Prediction,
        _ => match s.strip_prefix("mode:").map(str::parse::<usize>) {
            Some(Ok(k)) => Overlay::Mode(k),
            _ => return Err(Error::InvalidConfig(format!("unknown overlay `{s}`"))),
        },
    })
}

/// Maps network coordinates to SVG pixels with y pointing up.
struct Frame {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(net: &Network) -> Self {
        let (lo, hi) = net.bounds();
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let scale = (WIDTH - 2.0 * MARGIN) / span;
        Self {
            lo,
            scale,
            height: (hi[1] - lo[1]) * scale + 2.0 * MARGIN,
        }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            self.height - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn gradient(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let c: Vec<u8> = (0..3)
        .map(|i| (DARK[i] as f64 + t * (BRIGHT[i] as f64 - DARK[i] as f64)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn bounds(values: &[f64], min: Option<f64>, max: Option<f64>) -> (f64, f64) {
    let lo = min.unwrap_or_else(|| values.iter().cloned().fold(f64::INFINITY, f64::min));
    let hi = max.unwrap_or_else(|| values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn normalize(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        1.0
    }
}

fn read_data(args: &RenderArgs) -> Result<(PathBuf, String), Error> {
    let path = args
        .data
        .clone()
        .ok_or_else(|| Error::InvalidConfig("this overlay needs --data".into()))?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.clone(), e))?;
    Ok((path, text))
}

pub fn render(args: &RenderArgs, seed: u64) -> Result<String, Error> {
    let net = Network::load(&args.network)?;
    let overlay = parse_overlay(&args.overlay)?;
    let frame = Frame::new(&net);
    let mut edge_color = vec![FREE.to_string(); net.edge_count()];
    let mut node_color: Vec<String> = (0..net.node_count())
        .map(|i| if net.is_fixed(i) { FIXED } else { FREE }.to_string())
        .collect();
    let mut arrows = Vec::new();

    match overlay {
        Overlay::None => {}
        Overlay::Mode(k) => {
            let basis = compute_basis(&net, args.method.parse::<Method>()?)?;
            let mode = basis.modes.get(k).ok_or_else(|| {
                Error::DimensionMismatch(format!("mode {k} requested, basis has {} modes", basis.len()))
            })?;
            let peak = mode
                .node_support
                .iter()
                .map(|&i| mode.node_displacement(i))
                .fold(0.0, f64::max);
            // longest arrow is 0.8 mean edge lengths
            let unit = 0.8 * net.mean_edge_length() / peak.max(1e-300);
            for &i in &mode.node_support {
                let p = net.pos(i);
                let d = [mode.vector[2 * i] * unit, mode.vector[2 * i + 1] * unit];
                arrows.push((p, [p[0] + d[0], p[1] + d[1]]));
            }
        }
        Overlay::Globality => {
            let g = globality(&net, args.ensemble, seed)?;
            let scale = bounds(&g.f, args.min, args.max);
            for i in 0..net.node_count() {
                node_color[i] = if g.rigid[i] && !net.is_fixed(i) {
                    PURPLE.to_string()
                } else {
                    gradient(normalize(g.f[i], scale))
                };
            }
        }
        Overlay::Extensions => {
            let (path, text) = read_data(args)?;
            let ext = read_extensions_csv(text.as_bytes())?;
            let mut value = vec![None; net.edge_count()];
            for x in &ext {
                let idx = net.edge_index(x.a, x.b).ok_or_else(|| {
                    Error::EdgeMismatch(format!("{}: ({}, {}) is not an edge", path.display(), x.a, x.b))
                })?;
                value[idx] = Some(x.value.abs());
            }
            let known: Vec<f64> = value.iter().flatten().copied().collect();
            let scale = bounds(&known, args.min, args.max);
            for (idx, v) in value.iter().enumerate() {
                if let Some(v) = v {
                    edge_color[idx] = gradient(normalize(*v, scale));
                }
            }
        }
        Overlay::Prediction => {
            let (path, text) = read_data(args)?;
            let root: Value = serde_json::from_str(&text)?;
            let list = root
                .get("predicted_edges")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::schema("predicted_edges", "expected an array"))?;
            let mut loaded = BTreeSet::new();
            for e in list {
                let pair = e
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .and_then(|p| Some((p[0].as_u64()? as usize, p[1].as_u64()? as usize)))
                    .ok_or_else(|| Error::schema("predicted_edges[]", "expected [a, b]"))?;
                if !net.has_edge(pair.0, pair.1) {
                    return Err(Error::EdgeMismatch(format!(
                        "{}: ({}, {}) is not an edge",
                        path.display(),
                        pair.0,
                        pair.1
                    )));
                }
                loaded.insert(edge_key(pair.0, pair.1));
            }
            for (idx, e) in net.edges().iter().enumerate() {
                edge_color[idx] = gradient(if loaded.contains(&e.key()) { 1.0 } else { 0.0 });
            }
        }
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#,
        w = WIDTH,
        h = frame.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="{ARROW}"/></marker></defs>"#
    );
    for (idx, e) in net.edges().iter().enumerate() {
        let (x1, y1) = frame.px(net.pos(e.a));
        let (x2, y2) = frame.px(net.pos(e.b));
        let _ = writeln!(
            svg,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{}" stroke-width="3"/>"#,
            edge_color[idx]
        );
    }
    for i in 0..net.node_count() {
        let (x, y) = frame.px(net.pos(i));
        if net.is_fixed(i) {
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#,
                x - 5.0,
                y - 5.0,
                node_color[i]
            );
        } else {
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"/>"#, node_color[i]);
        }
    }
    for (from, to) in arrows {
        let (x1, y1) = frame.px(from);
        let (x2, y2) = frame.px(to);
        let _ = writeln!(
            svg,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{ARROW}" stroke-width="2" marker-end="url(#head)"/>"#
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
