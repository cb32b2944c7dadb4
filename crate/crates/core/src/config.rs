//! Key-value problem configuration.
//!
//! Line format `key = value`, `#` starts a comment. Unknown and duplicate
//! keys are errors with line numbers; semantic violations name the field.
//! See the repository documentation for the full key list and an example.

use nalgebra::Vector2;

use crate::energy::ProblemData;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::mesh::{generate_initial_mesh, BoundaryLabel, Geometry, Mesh};
use crate::potential::WellParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    SingleSolve,
    Adaptive,
    UniformStudy,
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub geometry: Geometry,
    pub labels: Vec<BoundaryLabel>,
    pub well_f1: Vector2<f64>,
    pub well_f2: Vector2<f64>,
    pub f: Expr,
    pub t0: Expr,
    pub u0: Expr,
    pub h0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub theta: f64,
    pub max_levels: usize,
    pub dof_budget: usize,
    pub eta_target: f64,
    pub mode: RunMode,
    pub out_dir: String,
    pub seed: u64,
    pub dist_surrogate: bool,
}

impl ProblemConfig {
    pub fn wells(&self) -> Result<WellParams> {
        WellParams::new(self.well_f1, self.well_f2).map_err(|_| Error::ConfigValue {
            field: "wells",
            msg: "well_f1 and well_f2 must be distinct".into(),
        })
    }

    pub fn problem_data(&self) -> ProblemData {
        let f = self.f.clone();
        let t0 = self.t0.clone();
        let u0 = self.u0.clone();
        ProblemData {
            f: Box::new(move |x, y| f.eval(x, y)),
            t0: Box::new(move |x, y| t0.eval(x, y)),
            u0: Box::new(move |x, y| u0.eval(x, y)),
        }
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        generate_initial_mesh(&self.geometry, &self.labels, self.h0)
    }
}

pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let mut seen: Vec<(String, usize, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(Error::ConfigParse {
                line,
                msg: format!("expected `key = value`, found `{stripped}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if seen.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::ConfigParse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
        seen.push((key, line, value));
    }
    let get = |name: &str| seen.iter().find(|(k, _, _)| k == name).cloned();
    for (key, line, _) in &seen {
        const KNOWN: &[&str] = &[
            "geometry",
            "polygon",
            "labels",
            "well_f1",
            "well_f2",
            "f",
            "t0",
            "u0",
            "h0",
            "tol",
            "max_iter",
            "theta",
            "max_levels",
            "dof_budget",
            "eta_target",
            "mode",
            "out_dir",
            "seed",
            "dist_surrogate",
        ];
        if !KNOWN.contains(&key.as_str()) {
            return Err(Error::ConfigParse {
                line: *line,
                msg: format!("unknown key `{key}`"),
            });
        }
    }

    let geometry = match get("geometry") {
        None => Geometry::UnitSquare,
        Some((_, line, v)) => match v.as_str() {
            "unit_square" => Geometry::UnitSquare,
            "l_shape" => Geometry::LShape,
            "polygon" => {
                let Some((_, pline, pv)) = get("polygon") else {
                    return Err(Error::ConfigParse {
                        line,
                        msg: "geometry = polygon requires a `polygon` key".into(),
                    });
                };
                Geometry::Polygon(parse_vertex_list(&pv, pline)?)
            }
            other => {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("unknown geometry `{other}`"),
                })
            }
        },
    };
    if get("polygon").is_some() && !matches!(geometry, Geometry::Polygon(_)) {
        let (_, line, _) = get("polygon").unwrap();
        return Err(Error::ConfigParse {
            line,
            msg: "`polygon` requires geometry = polygon".into(),
        });
    }

    let n_segments = geometry.segment_count();
    let labels = match get("labels") {
        None => vec![BoundaryLabel::Transmission; n_segments],
        Some((_, line, v)) => parse_labels(&v, &geometry, line)?,
    };
    if !labels.contains(&BoundaryLabel::Transmission) {
        return Err(Error::ConfigValue {
            field: "labels",
            msg: "the transmission part must be nonempty".into(),
        });
    }

    let well_f1 = parse_vec2_key(&get("well_f1"), Vector2::new(-1.0, 0.0))?;
    let well_f2 = parse_vec2_key(&get("well_f2"), Vector2::new(1.0, 0.0))?;
    if well_f1 == well_f2 {
        return Err(Error::ConfigValue {
            field: "wells",
            msg: "well_f1 and well_f2 must be distinct".into(),
        });
    }

    let parse_expr_key = |name: &str| -> Result<Expr> {
        match get(name) {
            None => Ok(Expr::Number(0.0)),
            Some((_, line, v)) => parse_expression(&v).map_err(|e| Error::ConfigParse {
                line,
                msg: format!("in `{name}`: {e}"),
            }),
        }
    };
    let f = parse_expr_key("f")?;
    let t0 = parse_expr_key("t0")?;
    let u0 = parse_expr_key("u0")?;

    let h0 = parse_f64_key(&get("h0"), 0.25)?;
    if !(h0 > 0.0) {
        return Err(Error::ConfigValue {
            field: "h0",
            msg: format!("must be positive, got {h0}"),
        });
    }
    let tol = parse_f64_key(&get("tol"), 1e-8)?;
    if !(tol > 0.0) {
        return Err(Error::ConfigValue {
            field: "tol",
            msg: "must be positive".into(),
        });
    }
    let theta = parse_f64_key(&get("theta"), 0.5)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::ConfigValue {
            field: "theta",
            msg: format!("must lie in (0, 1], got {theta}"),
        });
    }
    let eta_target = parse_f64_key(&get("eta_target"), 0.0)?;
    let max_iter = parse_usize_key(&get("max_iter"), 100)?;
    let max_levels = parse_usize_key(&get("max_levels"), 6)?.max(1);
    let dof_budget = parse_usize_key(&get("dof_budget"), 50_000)?;
    let seed = parse_usize_key(&get("seed"), 0)? as u64;
    let dist_surrogate = match get("dist_surrogate") {
        None => true,
        Some((_, line, v)) => match v.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("expected true/false, got `{other}`"),
                })
            }
        },
    };
    let mode = match get("mode") {
        None => RunMode::SingleSolve,
        Some((_, line, v)) => match v.as_str() {
            "single_solve" => RunMode::SingleSolve,
            "adaptive" => RunMode::Adaptive,
            "uniform_study" => RunMode::UniformStudy,
            other => {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("unknown mode `{other}`"),
                })
            }
        },
    };
    let out_dir = get("out_dir")
        .map(|(_, _, v)| v)
        .unwrap_or_else(|| "out".into());

    Ok(ProblemConfig {
        geometry,
        labels,
        well_f1,
        well_f2,
        f,
        t0,
        u0,
        h0,
        tol,
        max_iter,
        theta,
        max_levels,
        dof_budget,
        eta_target,
        mode,
        out_dir,
        seed,
        dist_surrogate,
    })
}

fn parse_vertex_list(text: &str, line: usize) -> Result<Vec<[f64; 2]>> {
    text.split(';')
        .map(|pair| {
            let mut it = pair.split(',').map(str::trim);
            let x = it
                .next()
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| Error::ConfigParse {
                    line,
                    msg: format!("bad vertex `{pair}`: {e}"),
                })?;
            let y = it
                .next()
                .ok_or_else(|| Error::ConfigParse {
                    line,
                    msg: format!("vertex `{pair}` needs two coordinates"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::ConfigParse {
                    line,
                    msg: format!("bad vertex `{pair}`: {e}"),
                })?;
            if it.next().is_some() {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("vertex `{pair}` has extra coordinates"),
                });
            }
            Ok([x, y])
        })
        .collect()
}

fn parse_labels(text: &str, geometry: &Geometry, line: usize) -> Result<Vec<BoundaryLabel>> {
    let n = geometry.segment_count();
    let mut labels = vec![BoundaryLabel::Transmission; n];
    for entry in text.split(',') {
        let entry = entry.trim();
        let Some((seg, label)) = entry.split_once(':') else {
            return Err(Error::ConfigParse {
                line,
                msg: format!("expected `segment:label`, found `{entry}`"),
            });
        };
        let label: BoundaryLabel = label
            .trim()
            .parse()
            .map_err(|msg| Error::ConfigParse { line, msg })?;
        let seg = seg.trim();
        let indices: Vec<usize> = if seg == "all" {
            (0..n).collect()
        } else if let Some(idx) = segment_index(seg, geometry) {
            vec![idx]
        } else {
            return Err(Error::ConfigParse {
                line,
                msg: format!("unknown boundary segment `{seg}`"),
            });
        };
        for i in indices {
            labels[i] = label;
        }
    }
    Ok(labels)
}

/// Segment names: `s<k>` for any geometry; the unit square also accepts
/// bottom, right, top, left (counterclockwise from the origin).
fn segment_index(name: &str, geometry: &Geometry) -> Option<usize> {
    let n = geometry.segment_count();
    if let Geometry::UnitSquare = geometry {
        match name {
            "bottom" => return Some(0),
            "right" => return Some(1),
            "top" => return Some(2),
            "left" => return Some(3),
            _ => {}
        }
    }
    name.strip_prefix('s')
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|&k| k < n)
}

fn parse_f64_key(entry: &Option<(String, usize, String)>, default: f64) -> Result<f64> {
    match entry {
        None => Ok(default),
        Some((key, line, v)) => v.parse::<f64>().map_err(|e| Error::ConfigParse {
            line: *line,
            msg: format!("bad number for `{key}`: {e}"),
        }),
    }
}

fn parse_usize_key(entry: &Option<(String, usize, String)>, default: usize) -> Result<usize> {
    match entry {
        None => Ok(default),
        Some((key, line, v)) => v.parse::<usize>().map_err(|e| Error::ConfigParse {
            line: *line,
            msg: format!("bad integer for `{key}`: {e}"),
        }),
    }
}

fn parse_vec2_key(
    entry: &Option<(String, usize, String)>,
    default: Vector2<f64>,
) -> Result<Vector2<f64>> {
    match entry {
        None => Ok(default),
        Some((key, line, v)) => {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::ConfigParse {
                    line: *line,
                    msg: format!("`{key}` needs two comma-separated components"),
                });
            }
            let x = parts[0].parse::<f64>().map_err(|e| Error::ConfigParse {
                line: *line,
                msg: format!("bad number in `{key}`: {e}"),
            })?;
            let y = parts[1].parse::<f64>().map_err(|e| Error::ConfigParse {
                line: *line,
                msg: format!("bad number in `{key}`: {e}"),
            })?;
            Ok(Vector2::new(x, y))
        }
    }
}
