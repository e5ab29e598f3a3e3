//! TOML scenario format.
//!
//! ```toml
//! name = "toy"
//! dim = 1                                 # state dimension, 1 or 2
//!
//! [params]                                # named constants usable in every expression
//! C = 1.0
//!
//! [dynamics]
//! drift = ["u"]                           # one expression per state component, in t, x/x1.., u/u1..
//! coupling = "u^2 * alpha"                # k(t, x, u, alpha); alpha/alpha1.. are atom parameters
//! controls = { min = -2.0, max = 2.0, steps = 41 }   # or: control_values = [[-1.0], [1.0]]
//!
//! [friction]
//! potential = "relu"                      # relu | abs | { kind = "distance", lo, hi }
//!                                         # | { kind = "quadratic", scale } | { kind = "piecewise_affine", breakpoints, slopes }
//! atoms = [{ alpha = [0.5], weight = 1.0 }]
//! overrides = [{ atom = 0, potential = "abs" }]      # optional per-atom potential
//!
//! [target]
//! kind = "intervals"                      # 1D: union of [lo(t), hi(t)]; endpoints are numbers or expressions in t
//! intervals = [["r", "inf"]]
//! # kind = "signed_distance"; expr = "..."   (2D: inside where expr(t, x1, x2) <= 0)
//! # time_range = [0.0, 5.0]; outside = "empty" | "clamp"
//!
//! [cost]
//! expr = "C*t + 1/x^2"                    # W(t, x)
//!
//! [numerics]
//! horizon = 6.0                           # required: latest admissible hitting time
//! state_box = { lo = [-2.0], hi = [3.0] } # required
//! t_start = 0.0                           # first grid time (default 0)
//! time_window = [0.0, 6.0]                # constant estimation window (default [t_start, horizon])
//! h = 0.01                                # value grid time step (default 0.01)
//! delta = 0.01                            # value grid spacing (default 0.01)
//! seed = 0                                # sampling seed (default 0)
//! samples = 1000                          # validation and estimation samples (default 1000)
//! interior_samples = 3                    # interior velocity samples per hull edge (default 3)
//! reach_h = 0.01                          # reachability time step (default 0.01)
//! reach_delta = 1e-4                      # reachability cell size (default reach_h^2)
//! oracle_h = 0.1                          # brute-force oracle step (default 0.1)
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;
use smallvec::SmallVec;

use super::{
    Atom, ControlSet, FrictionMeasure, Numerics, OutsideRange, Potential, PotentialSpec, Scenario, StateBox,
    TargetTube, TubeShape,
};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarScope};
use crate::geometry::Point;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoot {
    name: Option<String>,
    dim: usize,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    dynamics: DynamicsSection,
    #[serde(default)]
    friction: FrictionSection,
    target: TargetSection,
    cost: CostSection,
    numerics: NumericsSection,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrExpr {
    Num(f64),
    Expr(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlGrid {
    min: OneOrMany<f64>,
    max: OneOrMany<f64>,
    steps: OneOrMany<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    drift: OneOrMany<String>,
    #[serde(default)]
    coupling: Option<NumOrExpr>,
    controls: Option<ControlGrid>,
    control_values: Option<Vec<OneOrMany<f64>>>,
}

#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum PotentialEntry {
    Name(String),
    Table(PotentialTable),
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct PotentialTable {
    kind: String,
    lo: Option<f64>,
    hi: Option<f64>,
    scale: Option<f64>,
    breakpoints: Option<Vec<f64>>,
    slopes: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomEntry {
    alpha: OneOrMany<f64>,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideEntry {
    atom: usize,
    potential: PotentialEntry,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FrictionSection {
    potential: Option<PotentialEntry>,
    #[serde(default)]
    atoms: Vec<AtomEntry>,
    #[serde(default)]
    overrides: Vec<OverrideEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    kind: String,
    intervals: Option<Vec<(NumOrExpr, NumOrExpr)>>,
    expr: Option<String>,
    time_range: Option<(f64, f64)>,
    outside: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    expr: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxEntry {
    lo: OneOrMany<f64>,
    hi: OneOrMany<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsSection {
    horizon: f64,
    state_box: BoxEntry,
    t_start: Option<f64>,
    time_window: Option<(f64, f64)>,
    h: Option<f64>,
    delta: Option<f64>,
    seed: Option<u64>,
    samples: Option<usize>,
    interior_samples: Option<usize>,
    reach_h: Option<f64>,
    reach_delta: Option<f64>,
    oracle_h: Option<f64>,
}

fn compile(field: &str, src: &str, scope: VarScope, params: &BTreeMap<String, f64>) -> Result<Expr> {
    Expr::compile(src, scope, params).map_err(|source| Error::Expr { field: field.to_string(), source })
}

fn compile_num(field: &str, v: &NumOrExpr, scope: VarScope, params: &BTreeMap<String, f64>) -> Result<Expr> {
    match v {
        NumOrExpr::Num(x) => Ok(Expr::constant(*x)),
        NumOrExpr::Expr(s) => compile(field, s, scope, params),
    }
}

fn potential(entry: &PotentialEntry) -> Result<Potential> {
    let missing = |what: &str, kind: &str| Error::Parse(format!("potential `{kind}` needs `{what}`"));
    match entry {
        PotentialEntry::Name(n) => match n.as_str() {
            "relu" => Ok(Potential::Relu),
            "abs" => Ok(Potential::Abs),
            other => Err(Error::Parse(format!("unknown potential `{other}` (table form needed for parameters)"))),
        },
        PotentialEntry::Table(t) => match t.kind.as_str() {
            "relu" => Ok(Potential::Relu),
            "abs" => Ok(Potential::Abs),
            "distance" | "distance_to_interval" => Ok(Potential::DistanceToInterval {
                lo: t.lo.ok_or_else(|| missing("lo", &t.kind))?,
                hi: t.hi.ok_or_else(|| missing("hi", &t.kind))?,
            }),
            "quadratic" => Ok(Potential::Quadratic { scale: t.scale.ok_or_else(|| missing("scale", &t.kind))? }),
            "piecewise_affine" | "pwa" => Ok(Potential::PiecewiseAffine {
                breakpoints: t.breakpoints.clone().ok_or_else(|| missing("breakpoints", &t.kind))?,
                slopes: t.slopes.clone().ok_or_else(|| missing("slopes", &t.kind))?,
            }),
            other => Err(Error::Parse(format!("unknown potential kind `{other}`"))),
        },
    }
}

pub(super) fn parse(text: &str, overrides: &BTreeMap<String, f64>) -> Result<Scenario> {
    let root: FileRoot = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let dim = root.dim;
    if !(1..=2).contains(&dim) {
        return Err(Error::Parse(format!("dim must be 1 or 2, got {dim}")));
    }
    let mut params = root.params;
    for (k, v) in overrides {
        params.insert(k.clone(), *v);
    }

    let controls = match (&root.dynamics.controls, &root.dynamics.control_values) {
        (Some(g), None) => ControlSet::grid(&g.min.to_vec(), &g.max.to_vec(), &g.steps.to_vec()),
        (None, Some(vals)) => {
            ControlSet::from_values(vals.iter().map(|v| v.to_vec().into_iter().collect::<Point>()).collect())
        }
        _ => Err(Error::Parse("[dynamics] needs exactly one of `controls` or `control_values`".into())),
    }
    .map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Parse(m),
        other => other,
    })?;
    let m = controls.dim();

    let atoms: Vec<Atom> = root
        .friction
        .atoms
        .iter()
        .map(|a| Atom { alpha: a.alpha.to_vec().into_iter().collect::<SmallVec<[f64; 4]>>(), weight: a.weight })
        .collect();
    let measure = FrictionMeasure { atoms };
    let nu = measure.param_dim();

    let drift_src = root.dynamics.drift.to_vec();
    if drift_src.len() != dim {
        return Err(Error::Parse(format!("drift has {} components, dim is {dim}", drift_src.len())));
    }
    let drift = drift_src
        .iter()
        .enumerate()
        .map(|(i, s)| compile(&format!("dynamics.drift[{i}]"), s, VarScope::drift(dim, m), &params))
        .collect::<Result<Vec<_>>>()?;
    let coupling = match &root.dynamics.coupling {
        Some(c) => compile_num("dynamics.coupling", c, VarScope::coupling(dim, m, nu), &params)?,
        None => Expr::constant(0.0),
    };

    let base = match &root.friction.potential {
        Some(p) => potential(p)?,
        None => Potential::Relu,
    };
    let mut spec = PotentialSpec::uniform(base);
    for o in &root.friction.overrides {
        if o.atom >= measure.atoms.len() {
            return Err(Error::Parse(format!("override for atom {} but only {} atoms", o.atom, measure.atoms.len())));
        }
        spec.overrides.insert(o.atom, potential(&o.potential)?);
    }

    let shape = match root.target.kind.as_str() {
        "intervals" => {
            if dim != 1 {
                return Err(Error::Parse("interval targets are 1D only; use signed_distance".into()));
            }
            let iv = root.target.intervals.as_ref().ok_or_else(|| Error::Parse("target needs `intervals`".into()))?;
            let compiled = iv
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    Ok((
                        compile_num(&format!("target.intervals[{i}].lo"), a, VarScope::time_only(), &params)?,
                        compile_num(&format!("target.intervals[{i}].hi"), b, VarScope::time_only(), &params)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            TubeShape::Intervals(compiled)
        }
        "signed_distance" => {
            let src = root.target.expr.as_ref().ok_or_else(|| Error::Parse("target needs `expr`".into()))?;
            TubeShape::SignedDistance(compile("target.expr", src, VarScope::cost(dim), &params)?)
        }
        other => return Err(Error::Parse(format!("unknown target kind `{other}`"))),
    };
    let outside = match root.target.outside.as_deref() {
        None | Some("empty") => OutsideRange::Empty,
        Some("clamp") => OutsideRange::Clamp,
        Some(o) => return Err(Error::Parse(format!("target.outside must be `empty` or `clamp`, got `{o}`"))),
    };
    let target = TargetTube { shape, time_range: root.target.time_range, outside };

    let cost = compile("cost.expr", &root.cost.expr, VarScope::cost(dim), &params)?;

    let n = &root.numerics;
    let state_box = StateBox {
        lo: n.state_box.lo.to_vec().into_iter().collect(),
        hi: n.state_box.hi.to_vec().into_iter().collect(),
    };
    if state_box.lo.len() != dim || state_box.hi.len() != dim {
        return Err(Error::Parse(format!("state_box must have {dim} components")));
    }
    let t_start = n.t_start.unwrap_or(0.0);
    let reach_h = n.reach_h.unwrap_or(0.01);
    let numerics = Numerics {
        t_start,
        horizon: n.horizon,
        time_window: n.time_window.unwrap_or((t_start, n.horizon)),
        h: n.h.unwrap_or(0.01),
        delta: n.delta.unwrap_or(0.01),
        seed: n.seed.unwrap_or(0),
        samples: n.samples.unwrap_or(1000),
        interior_samples: n.interior_samples.unwrap_or(3),
        reach_h,
        reach_delta: n.reach_delta.unwrap_or(reach_h * reach_h),
        oracle_h: n.oracle_h.unwrap_or(0.1),
    };

    Ok(Scenario {
        name: root.name.unwrap_or_else(|| "scenario".to_string()),
        dim,
        params,
        drift,
        coupling,
        potential: spec,
        measure,
        controls,
        target,
        cost,
        state_box,
        numerics,
    })
}
