//! Model configuration files.
//!
//! Human-readable structured text, line oriented. `#` starts a comment.
//! Sections:
//!
//! ```text
//! # optional keys before any section
//! name      = my-model          # report label
//! seed      = 42                # default RNG seed
//! samples   = 1000              # default sample count per scan
//! tol_scale = 1.0               # global tolerance scale
//! horizon   = 10.0              # default geodesic horizon
//! checks    = cvc0-scan, rank-scan   # subset of checks to run (default all)
//!
//! [chart]                       # a registry model, addressed by name
//! model = s3_graph
//! kappa = 1.0                   # curvature parameter (round3 only)
//!
//! [graph]                       # or: an explicit plumbing graph
//! vertex = disk r0=0.1 r1=0.22 fiber=1
//! vertex = disk r0=0.1 r1=0.22 fiber=1
//!
//! [gluing]
//! edge = (v0.b0) -B- (v1.b0)
//!
//! [tolerances]                  # per-check overrides; defaults mirror the
//! cvc0-scan = 1e-6              # built-in tolerance ladder
//! ```
//!
//! A config defines exactly one model: either `[chart]` with `model = ...`
//! or `[graph]`/`[gluing]` sections. Vertex kinds are `disk`, `cylinder`
//! (`length=`, optional `bulge=`), and `torus`; every kind takes an optional
//! `fiber=` (default 1). The kind `lens` is recognized and rejected: lens
//! spaces need a quotient construction this tool does not perform. Edges
//! accept `(v0.b1)` and bare `(0.1)` endpoint forms with words `-A-`
//! (circle-to-circle) and `-B-` (circle-to-fiber swap).

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::atlas::{
    build_graph_manifold, build_round3, Atlas, AtlasError, GraphDescription, GraphEdge,
    GraphVertex, SurfaceKind, Word,
};
use crate::profile::build_disk_profile;
use crate::zoo;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("line {line}: unknown section `[{name}]` (expected chart, graph, gluing, tolerances)")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in section `{section}`")]
    UnknownKey {
        line: usize,
        section: &'static str,
        key: String,
    },
    #[error("line {line}: key `{key}`: {detail}")]
    BadValue {
        line: usize,
        key: String,
        detail: String,
    },
    #[error("line {line}: vertex kind `{kind}` is not supported: {detail}")]
    UnsupportedKind {
        line: usize,
        kind: String,
        detail: String,
    },
    #[error("config defines both a `[chart]` model and a `[graph]`; pick one")]
    Conflict,
    #[error("config defines no model: add `[chart]` with `model = ...` or a `[graph]` section")]
    MissingModel,
    #[error("no model named `{0}` in the registry")]
    UnknownModel(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

/// Which model a config describes.
#[derive(Clone, Debug)]
pub enum ModelSource {
    /// A registry entry by name, with an optional curvature parameter
    /// (only `round3` accepts one).
    Zoo { name: String, kappa: Option<f64> },
    /// An explicit plumbing graph.
    Graph(GraphDescription),
}

/// Parsed configuration.
#[derive(Clone, Debug)]
pub struct Config {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub tol_scale: Option<f64>,
    pub horizon: Option<f64>,
    /// Check names to run; `None` means the full suite.
    pub checks: Option<Vec<String>>,
    /// Per-check tolerance overrides from `[tolerances]`.
    pub tolerances: BTreeMap<String, f64>,
    pub source: ModelSource,
    /// Raw text as read, for content hashing in reports.
    pub raw: String,
}

impl Config {
    /// Display label: the explicit `name =` key, else derived from the model.
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.source {
            ModelSource::Zoo { name, .. } => name.clone(),
            ModelSource::Graph(_) => "graph".to_string(),
        }
    }

    /// Build the configured atlas.
    pub fn build_atlas(&self) -> Result<Atlas, ConfigError> {
        match &self.source {
            ModelSource::Zoo { name, kappa } => {
                if let Some(k) = kappa {
                    if name != "round3" {
                        return Err(ConfigError::Invalid(format!(
                            "`kappa` only parameterizes round3, not `{name}`"
                        )));
                    }
                    if *k <= 0.0 {
                        return Err(ConfigError::Invalid(format!(
                            "round3 needs kappa > 0, got {k}"
                        )));
                    }
                    return Ok(build_round3(*k));
                }
                let entry = zoo::find(name)
                    .map_err(|_| ConfigError::UnknownModel(name.clone()))?;
                entry.build().map_err(|e| match e {
                    zoo::ZooError::Atlas(a) => ConfigError::Atlas(a),
                    other => ConfigError::Invalid(other.to_string()),
                })
            }
            ModelSource::Graph(desc) => Ok(build_graph_manifold(desc)?),
        }
    }
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Top,
    Chart,
    Graph,
    Gluing,
    Tolerances,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Top => "top level",
            Section::Chart => "chart",
            Section::Graph => "graph",
            Section::Gluing => "gluing",
            Section::Tolerances => "tolerances",
        }
    }
}

/// Parse configuration text.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut section = Section::Top;
    let mut name = None;
    let mut seed = None;
    let mut samples = None;
    let mut tol_scale = None;
    let mut horizon = None;
    let mut checks: Option<Vec<String>> = None;
    let mut tolerances = BTreeMap::new();
    let mut model: Option<String> = None;
    let mut kappa: Option<f64> = None;
    let mut vertices: Vec<GraphVertex> = Vec::new();
    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut saw_graph_section = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }

        if let Some(rest) = content.strip_prefix('[') {
            let Some(sect) = rest.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line,
                    detail: format!("section header `{content}` is missing `]`"),
                });
            };
            section = match sect.trim() {
                "chart" => Section::Chart,
                "graph" => {
                    saw_graph_section = true;
                    Section::Graph
                }
                "gluing" => Section::Gluing,
                "tolerances" => Section::Tolerances,
                other => {
                    return Err(ConfigError::UnknownSection {
                        line,
                        name: other.to_string(),
                    })
                }
            };
            continue;
        }

        let Some(eq) = content.find('=') else {
            return Err(ConfigError::Syntax {
                line,
                detail: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = content[..eq].trim();
        let value = content[eq + 1..].trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                detail: "empty key or value".to_string(),
            });
        }

        match section {
            Section::Top => match key {
                "name" => name = Some(value.to_string()),
                "seed" => seed = Some(parse_num::<u64>(line, key, value)?),
                "samples" => samples = Some(parse_num::<usize>(line, key, value)?),
                "tol_scale" => tol_scale = Some(parse_num::<f64>(line, key, value)?),
                "horizon" => horizon = Some(parse_num::<f64>(line, key, value)?),
                "checks" => {
                    checks = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    )
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        section: section.name(),
                        key: key.to_string(),
                    })
                }
            },
            Section::Chart => match key {
                "model" => model = Some(value.to_string()),
                "kappa" => kappa = Some(parse_num::<f64>(line, key, value)?),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        section: section.name(),
                        key: key.to_string(),
                    })
                }
            },
            Section::Graph => match key {
                "vertex" => vertices.push(parse_vertex(line, value)?),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        section: section.name(),
                        key: key.to_string(),
                    })
                }
            },
            Section::Gluing => match key {
                "edge" => edges.push(parse_edge(line, value)?),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        section: section.name(),
                        key: key.to_string(),
                    })
                }
            },
            Section::Tolerances => {
                tolerances.insert(key.to_string(), parse_num::<f64>(line, key, value)?);
            }
        }
    }

    let source = match (model, saw_graph_section || !vertices.is_empty()) {
        (Some(_), true) => return Err(ConfigError::Conflict),
        (Some(m), false) => ModelSource::Zoo { name: m, kappa },
        (None, true) => ModelSource::Graph(GraphDescription { vertices, edges }),
        (None, false) => return Err(ConfigError::MissingModel),
    };

    Ok(Config {
        name,
        seed,
        samples,
        tol_scale,
        horizon,
        checks,
        tolerances,
        source,
        raw: text.to_string(),
    })
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        detail: format!("cannot parse `{value}`: {e}"),
    })
}

/// `disk r0=0.1 r1=0.22 fiber=1` / `cylinder length=1.5 bulge=0.35` /
/// `torus` — kind token followed by `key=value` fields.
fn parse_vertex(line: usize, value: &str) -> Result<GraphVertex, ConfigError> {
    let mut tokens = value.split_whitespace();
    let kind = tokens.next().unwrap_or_default().to_string();
    let mut fields: BTreeMap<String, f64> = BTreeMap::new();
    for tok in tokens {
        let Some(eq) = tok.find('=') else {
            return Err(ConfigError::Syntax {
                line,
                detail: format!("vertex field `{tok}` is not `key=value`"),
            });
        };
        let k = tok[..eq].to_string();
        let v = parse_num::<f64>(line, &k, &tok[eq + 1..])?;
        fields.insert(k, v);
    }
    let mut take = |k: &str| fields.remove(k);
    let require = |line: usize, kind: &str, got: Option<f64>, k: &str| {
        got.ok_or_else(|| ConfigError::BadValue {
            line,
            key: "vertex".to_string(),
            detail: format!("kind `{kind}` needs `{k}=`"),
        })
    };

    let fiber = take("fiber").unwrap_or(1.0);
    let surface = match kind.as_str() {
        "disk" => {
            let r0 = require(line, "disk", take("r0"), "r0")?;
            let r1 = require(line, "disk", take("r1"), "r1")?;
            let profile = build_disk_profile(r0, r1).map_err(|e| ConfigError::BadValue {
                line,
                key: "vertex".to_string(),
                detail: e.to_string(),
            })?;
            SurfaceKind::Disk(profile)
        }
        "cylinder" => {
            let length = require(line, "cylinder", take("length"), "length")?;
            let bulge = take("bulge").unwrap_or(0.0);
            SurfaceKind::Cylinder { length, bulge }
        }
        "torus" => SurfaceKind::Torus,
        "lens" => {
            return Err(ConfigError::UnsupportedKind {
                line,
                kind,
                detail: "lens spaces need a quotient construction this tool does not perform; \
                         supported kinds are disk, cylinder, torus"
                    .to_string(),
            })
        }
        other => {
            return Err(ConfigError::UnsupportedKind {
                line,
                kind: other.to_string(),
                detail: "supported kinds are disk, cylinder, torus".to_string(),
            })
        }
    };
    if let Some(extra) = fields.keys().next() {
        return Err(ConfigError::UnknownKey {
            line,
            section: "graph",
            key: format!("vertex field `{extra}`"),
        });
    }
    Ok(GraphVertex {
        kind: surface,
        fiber,
    })
}

/// `(v0.b0) -B- (v1.b1)`; the `v`/`b` prefixes are optional.
fn parse_edge(line: usize, value: &str) -> Result<GraphEdge, ConfigError> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(ConfigError::Syntax {
            line,
            detail: format!("expected `(v.b) -A|B- (v.b)`, got `{value}`"),
        });
    }
    let a = parse_endpoint(line, tokens[0])?;
    let word = match tokens[1] {
        "-A-" => Word::A,
        "-B-" => Word::B,
        other => {
            return Err(ConfigError::BadValue {
                line,
                key: "edge".to_string(),
                detail: format!("unknown gluing word `{other}` (expected -A- or -B-)"),
            })
        }
    };
    let b = parse_endpoint(line, tokens[2])?;
    Ok(GraphEdge { a, b, word })
}

fn parse_endpoint(line: usize, token: &str) -> Result<(usize, usize), ConfigError> {
    let bad = || ConfigError::BadValue {
        line,
        key: "edge".to_string(),
        detail: format!("endpoint `{token}` is not of the form (v0.b0)"),
    };
    let inner = token
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(bad)?;
    let (v, b) = inner.split_once('.').ok_or_else(bad)?;
    let v = v.trim().strip_prefix('v').unwrap_or(v.trim());
    let b = b.trim().strip_prefix('b').unwrap_or(b.trim());
    Ok((
        v.parse::<usize>().map_err(|_| bad())?,
        b.parse::<usize>().map_err(|_| bad())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoo_model_config_round_trips() {
        let cfg = parse_config(
            "# demo\nname = demo\nseed = 7\nsamples = 250\ntol_scale = 2.0\n\
             checks = cvc0-scan, rank-scan\n[chart]\nmodel = prodS2R\n\
             [tolerances]\ncvc0-scan = 2e-6\n",
        )
        .unwrap();
        assert_eq!(cfg.label(), "demo");
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.samples, Some(250));
        assert_eq!(cfg.tol_scale, Some(2.0));
        assert_eq!(
            cfg.checks.as_deref(),
            Some(&["cvc0-scan".to_string(), "rank-scan".to_string()][..])
        );
        assert_eq!(cfg.tolerances.get("cvc0-scan"), Some(&2e-6));
        let atlas = cfg.build_atlas().unwrap();
        assert_eq!(atlas.charts().len(), 1);
    }

    #[test]
    fn graph_config_builds_the_two_disk_atlas() {
        let cfg = parse_config(
            "[graph]\n\
             vertex = disk r0=0.1 r1=0.22 fiber=1\n\
             vertex = disk r0=0.1 r1=0.22\n\
             [gluing]\n\
             edge = (v0.b0) -B- (v1.b0)\n",
        )
        .unwrap();
        let atlas = cfg.build_atlas().unwrap();
        assert_eq!(atlas.charts().len(), 4);
        assert!(atlas.find_chart("v1-polar").is_some());
        assert_eq!(cfg.label(), "graph");
    }

    #[test]
    fn bare_endpoint_form_and_word_a_parse() {
        let cfg = parse_config(
            "[graph]\n\
             vertex = cylinder length=1.0 fiber=0.5\n\
             vertex = cylinder length=1.0 fiber=0.5\n\
             [gluing]\n\
             edge = (0.0) -A- (1.1)\n\
             edge = (0.1) -A- (1.0)\n",
        )
        .unwrap();
        let ModelSource::Graph(desc) = &cfg.source else {
            panic!("expected a graph source");
        };
        assert_eq!(desc.edges.len(), 2);
        assert_eq!(desc.edges[0].a, (0, 0));
        assert_eq!(desc.edges[0].b, (1, 1));
        assert!(matches!(desc.edges[0].word, Word::A));
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = parse_config("name = x\nbogus line\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }), "{err}");

        let err = parse_config("[nope]\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::UnknownSection { line: 1, .. }),
            "{err}"
        );

        let err = parse_config("name = x\n[chart]\nflavor = blue\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::UnknownKey { line: 3, .. }),
            "{err}"
        );

        let err = parse_config("seed = many\n[chart]\nmodel = flat3\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::BadValue { line: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn lens_kind_is_rejected_with_explanation() {
        let err = parse_config("[graph]\nvertex = lens p=3 q=1\n").unwrap_err();
        match err {
            ConfigError::UnsupportedKind { line, kind, detail } => {
                assert_eq!(line, 2);
                assert_eq!(kind, "lens");
                assert!(detail.contains("quotient"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn model_selection_errors() {
        assert!(matches!(
            parse_config("name = x\n").unwrap_err(),
            ConfigError::MissingModel
        ));
        assert!(matches!(
            parse_config("[chart]\nmodel = flat3\n[graph]\nvertex = torus\n").unwrap_err(),
            ConfigError::Conflict
        ));
        let cfg = parse_config("[chart]\nmodel = nonesuch\n").unwrap();
        assert!(matches!(
            cfg.build_atlas().unwrap_err(),
            ConfigError::UnknownModel(_)
        ));
        let cfg = parse_config("[chart]\nmodel = flat3\nkappa = 2.0\n").unwrap();
        assert!(matches!(
            cfg.build_atlas().unwrap_err(),
            ConfigError::Invalid(_)
        ));
    }

    #[test]
    fn round3_kappa_parameter_builds() {
        let cfg = parse_config("[chart]\nmodel = round3\nkappa = 4.0\n").unwrap();
        let atlas = cfg.build_atlas().unwrap();
        assert_eq!(atlas.charts().len(), 2);
    }

    #[test]
    fn dangling_boundary_surfaces_as_atlas_error() {
        let cfg = parse_config("[graph]\nvertex = disk r0=0.1 r1=0.22\n").unwrap();
        assert!(matches!(
            cfg.build_atlas().unwrap_err(),
            ConfigError::Atlas(AtlasError::DanglingBoundary { .. })
        ));
    }

    #[test]
    fn infeasible_disk_profile_is_a_line_diagnostic() {
        let err = parse_config("[graph]\nvertex = disk r0=0.01 r1=0.05\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::BadValue { line: 2, .. }),
            "{err}"
        );
    }
}
