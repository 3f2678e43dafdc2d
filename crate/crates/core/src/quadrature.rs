//! Adaptive tensor Gauss–Legendre quadrature on the unit square, and the
//! quadrant / triangle integrators built on it.
//!
//! The engine refines dyadic panels. Every leaf carries its own estimate and
//! the estimate from its four children; the difference drives refinement.
//! Panels are evaluated in parallel but always summed in key order, so the
//! result does not depend on the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub nodes_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_nodes: usize,
    /// Gauss points per axis on each panel.
    pub points: usize,
    /// Scale `S` of the half-line map `s = S (v/(1−v))²`.
    pub scale: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            tol_rel: 1e-7,
            tol_abs: 1e-13,
            max_nodes: 2_000_000,
            points: 10,
            scale: 1.0,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(tol_rel: f64, tol_abs: f64) -> Self {
        QuadOptions {
            tol_rel,
            tol_abs,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0 && self.tol_abs > 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        if self.points < 2 || self.points > 64 {
            return Err(invalid("points per axis must be in 2..=64"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid("quadrature scale must be positive"));
        }
        Ok(())
    }
}

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> GaussLegendre {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { z } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = nf * (z * pn - pm) / (z * z - 1.0);
                let dz = pn / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (a + h * x, h * w))
    }
}

/// A dyadic panel `[x0, x1] × [y0, y1]` of the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    level: u32,
    i: u32,
    j: u32,
}

const MAX_LEVEL: u32 = 40;
const START_LEVEL: u32 = 2;

impl Key {
    fn panel(&self) -> Panel {
        let h = 0.5f64.powi(self.level as i32);
        Panel {
            x0: self.i as f64 * h,
            x1: (self.i + 1) as f64 * h,
            y0: self.j as f64 * h,
            y1: (self.j + 1) as f64 * h,
        }
    }

    fn children(&self) -> [Key; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            Key { level: l, i, j },
            Key {
                level: l,
                i: i + 1,
                j,
            },
            Key {
                level: l,
                i,
                j: j + 1,
            },
            Key {
                level: l,
                i: i + 1,
                j: j + 1,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Leaf {
    coarse: f64,
    children: [f64; 4],
}

impl Leaf {
    fn fine(&self) -> f64 {
        self.children.iter().sum()
    }

    fn err(&self) -> f64 {
        (self.coarse - self.fine()).abs()
    }
}

/// Adaptive integration over `[0,1]²` given a rule that integrates one panel.
/// `panel_nodes` is the number of integrand evaluations one panel costs.
pub fn integrate_unit_square<F>(
    rule: F,
    panel_nodes: usize,
    opts: &QuadOptions,
) -> Result<QuadResult>
where
    F: Fn(&Panel) -> Result<f64> + Sync,
{
    opts.validate()?;
    let eval =
        |keys: &[Key]| -> Result<Vec<f64>> { keys.par_iter().map(|k| rule(&k.panel())).collect() };
    let side = 1u32 << START_LEVEL;
    let roots: Vec<Key> = (0..side)
        .flat_map(|i| {
            (0..side).map(move |j| Key {
                level: START_LEVEL,
                i,
                j,
            })
        })
        .collect();
    let mut batch: Vec<Key> = Vec::with_capacity(roots.len() * 5);
    for k in &roots {
        batch.push(*k);
        batch.extend(k.children());
    }
    let vals = eval(&batch)?;
    let mut nodes_used = batch.len() * panel_nodes;
    let mut leaves: BTreeMap<Key, Leaf> = BTreeMap::new();
    for (idx, k) in roots.iter().enumerate() {
        let v = &vals[idx * 5..idx * 5 + 5];
        leaves.insert(
            *k,
            Leaf {
                coarse: v[0],
                children: [v[1], v[2], v[3], v[4]],
            },
        );
    }

    loop {
        let (value, err) = leaves
            .values()
            .fold((0.0, 0.0), |(v, e), l| (v + l.fine(), e + l.err()));
        let target = opts.tol_abs.max(opts.tol_rel * value.abs());
        if err <= target {
            return Ok(QuadResult {
                value,
                error_estimate: err,
                nodes_used,
                converged: true,
            });
        }
        let mut ranked: Vec<(Key, f64)> = leaves
            .iter()
            .filter(|(k, _)| k.level < MAX_LEVEL)
            .map(|(k, l)| (*k, l.err()))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let per_leaf = 16 * panel_nodes;
        let budget = opts.max_nodes.saturating_sub(nodes_used) / per_leaf.max(1);
        let mut chosen = Vec::new();
        let mut acc = 0.0;
        for (k, e) in ranked {
            if chosen.len() >= budget || (acc >= 0.5 * err && !chosen.is_empty()) || e == 0.0 {
                break;
            }
            acc += e;
            chosen.push(k);
        }
        if chosen.is_empty() {
            return Ok(QuadResult {
                value,
                error_estimate: err,
                nodes_used,
                converged: false,
            });
        }
        let mut batch = Vec::with_capacity(chosen.len() * 16);
        for k in &chosen {
            for c in k.children() {
                batch.extend(c.children());
            }
        }
        let vals = eval(&batch)?;
        nodes_used += batch.len() * panel_nodes;
        for (a, k) in chosen.iter().enumerate() {
            let old = leaves.remove(k).expect("chosen leaf exists");
            for (b, c) in k.children().into_iter().enumerate() {
                let v = &vals[a * 16 + b * 4..a * 16 + b * 4 + 4];
                leaves.insert(
                    c,
                    Leaf {
                        coarse: old.children[b],
                        children: [v[0], v[1], v[2], v[3]],
                    },
                );
            }
        }
    }
}

/// Half-line map `s = S (v/(1−v))²` and its derivative. Squaring makes
/// `s^{−1/2} ds` smooth at the origin.
pub fn half_line_map(v: f64, scale: f64) -> (f64, f64) {
    let w = v / (1.0 - v);
    (scale * w * w, 2.0 * scale * w / ((1.0 - v) * (1.0 - v)))
}

fn check_value(v: f64, s11: f64, s22: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIntegrand { s11, s22 })
    }
}

/// `∫₀^∞∫₀^∞ f(s11, s22) ds11 ds22` with a fallible integrand.
pub fn try_integrate_quadrant<F>(f: F, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    opts.validate()?;
    let gl = GaussLegendre::new(opts.points);
    let scale = opts.scale;
    let rule = |p: &Panel| -> Result<f64> {
        let ys: Vec<(f64, f64)> = gl
            .on(p.y0, p.y1)
            .map(|(y, wy)| {
                let (s, j) = half_line_map(y, scale);
                (s, wy * j)
            })
            .collect();
        let mut acc = 0.0;
        for (x, wx) in gl.on(p.x0, p.x1) {
            let (s11, jx) = half_line_map(x, scale);
            for &(s22, wy) in &ys {
                acc += wx * jx * wy * check_value(f(s11, s22)?, s11, s22)?;
            }
        }
        Ok(acc)
    };
    integrate_unit_square(rule, opts.points * opts.points, opts)
}

pub fn integrate_quadrant<F>(f: F, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    try_integrate_quadrant(|a, b| Ok(f(a, b)), opts)
}

/// `2 ∫∫_{s22 < s11} f` for a symmetric `f`. The lower triangle of the
/// mapped square is parametrised as `(v1, v2) = (a, a·b)`, so no node lies on
/// the diagonal.
pub fn try_integrate_triangle_symmetric<F>(f: F, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    opts.validate()?;
    let gl = GaussLegendre::new(opts.points);
    let scale = opts.scale;
    let rule = |p: &Panel| -> Result<f64> {
        let mut acc = 0.0;
        for (a, wa) in gl.on(p.x0, p.x1) {
            let (s11, j1) = half_line_map(a, scale);
            for (b, wb) in gl.on(p.y0, p.y1) {
                let (s22, j2) = half_line_map(a * b, scale);
                acc += wa * wb * a * j1 * j2 * check_value(f(s11, s22)?, s11, s22)?;
            }
        }
        Ok(2.0 * acc)
    };
    integrate_unit_square(rule, opts.points * opts.points, opts)
}

pub fn integrate_triangle_symmetric<F>(f: F, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    try_integrate_triangle_symmetric(|a, b| Ok(f(a, b)), opts)
}
