//! Bellman step over finite payment and continuation menus.
//!
//! The per-effort problem is solved by a depth-first search over outputs
//! with value and feasibility bounds. Incentive compatibility uses the same
//! interval reduction on `D = Σ (f_high - f_low) z` as the continuous solver.

use rayon::prelude::*;

use super::bellman::Context;
use super::kernel::EffortData;
use super::{GridContract, ValueFunction};
use crate::error::SolverError;

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Option_ {
    z: f64,
    gain: f64,
    payment: f64,
    continuation: f64,
}

struct Search<'a> {
    e: &'a EffortData,
    menus: Vec<Vec<Option_>>,
    b: f64,
    d_range: (f64, f64),
    /// Suffix bounds: best gain, max promise, min and max of `d z` from
    /// output `y` on.
    best_gain: Vec<f64>,
    max_pk: Vec<f64>,
    d_min: Vec<f64>,
    d_max: Vec<f64>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn run(&mut self, y: usize, pk: f64, d: f64, gain: f64) {
        let n = self.menus.len();
        if y == n {
            if pk < self.b - SLACK || d < self.d_range.0 - SLACK || d > self.d_range.1 + SLACK {
                return;
            }
            let improves = match &self.best {
                None => true,
                Some((g, _)) => gain > g + 1e-12 * (1.0 + g.abs()),
            };
            if improves {
                self.best = Some((gain, self.chosen.clone()));
            }
            return;
        }
        if let Some((g, _)) = &self.best {
            if gain + self.best_gain[y] <= g + 1e-12 * (1.0 + g.abs()) {
                return;
            }
        }
        if pk + self.max_pk[y] < self.b - SLACK
            || d + self.d_max[y] < self.d_range.0 - SLACK
            || d + self.d_min[y] > self.d_range.1 + SLACK
        {
            return;
        }
        let (fy, dy) = (self.e.f[y], self.e.d[y]);
        for j in 0..self.menus[y].len() {
            let o = self.menus[y][j];
            self.chosen[y] = j;
            self.run(y + 1, pk + fy * o.z, d + dy * o.z, gain + fy * o.gain);
        }
    }
}

pub(crate) fn step(
    ctx: &Context,
    k: &ValueFunction,
    payments: &[f64],
    continuations: &[f64],
) -> Result<Vec<Option<(f64, GridContract)>>, SolverError> {
    if k.domain().is_none() {
        return Err(SolverError::EmptyDomain);
    }
    let prefs = ctx.model.preferences();
    let rho = prefs.discount();
    let scale = 1.0 + ctx.settings.alpha;
    let mut pays: Vec<f64> = payments.to_vec();
    pays.sort_by(f64::total_cmp);
    let mut conts: Vec<f64> = continuations.to_vec();
    conts.sort_by(f64::total_cmp);
    let mut raw = Vec::new();
    for &p in &pays {
        for &w in &conts {
            if let Some(kw) = k.interpolate(w) {
                raw.push(Option_ {
                    z: prefs.utility(p) + rho * w,
                    gain: -scale * p + rho * kw,
                    payment: p,
                    continuation: w,
                });
            }
        }
    }
    if raw.is_empty() {
        return Ok(vec![None; k.grid().len()]);
    }
    // Among options delivering the same promise keep the cheapest, first in
    // lexicographic (payment, continuation) order on ties.
    let mut dedup: Vec<Option_> = Vec::new();
    for o in &raw {
        match dedup.iter_mut().find(|d| d.z == o.z) {
            Some(d) if o.gain > d.gain => *d = *o,
            Some(_) => {}
            None => dedup.push(*o),
        }
    }
    let outputs = ctx.model.output_grid().points();
    Ok(k
        .grid()
        .points()
        .par_iter()
        .map(|&v| {
            let mut best: Option<(f64, usize, Vec<Option_>)> = None;
            for (i, e) in ctx.efforts.iter().enumerate() {
                if !e.implementable {
                    continue;
                }
                let menus: Vec<Vec<Option_>> = (0..e.f.len())
                    .map(|y| if e.f[y] > 0.0 { dedup.clone() } else { raw.clone() })
                    .collect();
                let n = menus.len();
                let mut s = Search {
                    e,
                    b: v + e.cost,
                    d_range: e.ic.unwrap_or((f64::NEG_INFINITY, f64::INFINITY)),
                    best_gain: vec![0.0; n + 1],
                    max_pk: vec![0.0; n + 1],
                    d_min: vec![0.0; n + 1],
                    d_max: vec![0.0; n + 1],
                    chosen: vec![0; n],
                    best: None,
                    menus,
                };
                for y in (0..n).rev() {
                    let m = &s.menus[y];
                    let (fy, dy) = (e.f[y], e.d[y]);
                    let g = m.iter().map(|o| o.gain).fold(f64::NEG_INFINITY, f64::max);
                    let z_max = m.iter().map(|o| o.z).fold(f64::NEG_INFINITY, f64::max);
                    let dz = m.iter().map(|o| dy * o.z);
                    let (lo, hi) = dz.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
                    s.best_gain[y] = s.best_gain[y + 1] + if fy > 0.0 { fy * g } else { 0.0 };
                    s.max_pk[y] = s.max_pk[y + 1] + fy * z_max;
                    s.d_min[y] = s.d_min[y + 1] + lo;
                    s.d_max[y] = s.d_max[y + 1] + hi;
                }
                s.run(0, 0.0, 0.0, 0.0);
                if let Some((gain, picks)) = s.best {
                    let value = e.expected_output + gain;
                    let better = match &best {
                        None => true,
                        Some((b, _, _)) => value > b + 1e-12 * (1.0 + b.abs()),
                    };
                    if better {
                        let chosen = picks.iter().enumerate().map(|(y, &j)| s.menus[y][j]).collect();
                        best = Some((value, i, chosen));
                    }
                }
            }
            let (value, i, chosen) = best?;
            debug_assert_eq!(chosen.len(), outputs.len());
            Some((
                value,
                GridContract {
                    v,
                    effort_index: i,
                    effort: ctx.efforts[i].effort,
                    payments: chosen.iter().map(|o| o.payment).collect(),
                    continuations: chosen.iter().map(|o| o.continuation).collect(),
                    lambda: None,
                    mu: None,
                    clamped: false,
                },
            ))
        })
        .collect())
}
