//! Relatively uniform convergence of sequences.
//!
//! A sequence `x_n` converges relatively uniformly to `x` with respect to a
//! positive regulator `u` when for every `ε > 0` there is an index `N` with
//! `|x_n - x| <= ε u` for all `n >= N`. At desk scale the quantifier over `ε`
//! is truncated to a finite [`RuSchedule`] and indices are bounded by
//! `max_index`, so a certificate is evidence at the declared scale.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{leq, Element};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuSchedule {
    epsilons: Vec<f64>,
    max_index: usize,
}

impl RuSchedule {
    pub fn new(epsilons: Vec<f64>, max_index: usize) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::InvalidSchedule("epsilon list is empty".into()));
        }
        if epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidSchedule("epsilons must be positive and finite".into()));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidSchedule("epsilons must be strictly decreasing".into()));
        }
        if max_index == 0 {
            return Err(Error::InvalidSchedule("max_index must be positive".into()));
        }
        Ok(RuSchedule { epsilons, max_index })
    }

    /// `[1, 0.1, 0.01, 0.001]` up to `max_index`.
    pub fn with_max_index(max_index: usize) -> Result<Self> {
        Self::new(vec![1.0, 0.1, 0.01, 0.001], max_index)
    }

    /// `[1, 1/2, ..., 2^-(levels-1)]`.
    pub fn dyadic(levels: usize, max_index: usize) -> Result<Self> {
        Self::new((0..levels).map(|k| 0.5f64.powi(k as i32)).collect(), max_index)
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn smallest_epsilon(&self) -> f64 {
        *self.epsilons.last().expect("schedule is nonempty")
    }
}

impl Default for RuSchedule {
    fn default() -> Self {
        Self::with_max_index(1000).expect("default schedule is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub epsilon: f64,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RuVerdict {
    Certified,
    /// No tail up to `max_index` satisfies the bound at `epsilon`.
    /// `best_achievable_index` is the last index at which the bound still
    /// held, if any.
    Refuted {
        epsilon: f64,
        best_achievable_index: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuCertificate {
    pub regulator: Element,
    pub witnesses: Vec<Witness>,
    pub verdict: RuVerdict,
}

impl RuCertificate {
    pub fn is_certified(&self) -> bool {
        matches!(self.verdict, RuVerdict::Certified)
    }

    pub fn refuted_epsilon(&self) -> Option<f64> {
        match self.verdict {
            RuVerdict::Refuted { epsilon, .. } => Some(epsilon),
            RuVerdict::Certified => None,
        }
    }

    pub fn witness_for(&self, epsilon: f64) -> Option<usize> {
        self.witnesses
            .iter()
            .find(|w| w.epsilon == epsilon)
            .map(|w| w.index)
    }

    /// Writes `epsilon,index,satisfied` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "index", "satisfied"])?;
        for wit in &self.witnesses {
            w.write_record([wit.epsilon.to_string(), wit.index.to_string(), "true".into()])?;
        }
        if let RuVerdict::Refuted {
            epsilon,
            best_achievable_index,
        } = self.verdict
        {
            let idx = best_achievable_index.map(|i| i.to_string()).unwrap_or_default();
            w.write_record([epsilon.to_string(), idx, "false".into()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How far along the sequence the synthesized regulator may start, per `ε`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Budget {
    /// `N_ε = ceil(1/ε)`, matched to `1/n` convergence rates.
    #[default]
    Reciprocal,
    /// `N_ε = ceil(log2(1/ε))`, matched to sequences indexed by `2^-n` steps.
    Log2,
    /// One index per schedule entry.
    Fixed(Vec<usize>),
}

impl Budget {
    fn index(&self, k: usize, eps: f64) -> Result<usize> {
        Ok(match self {
            Budget::Reciprocal => (1.0 / eps - 1e-9).ceil().max(0.0) as usize,
            Budget::Log2 => (-eps.log2() - 1e-9).ceil().max(0.0) as usize,
            Budget::Fixed(v) => *v.get(k).ok_or_else(|| {
                Error::InvalidSchedule(format!("fixed budget has no entry for epsilon #{k}"))
            })?,
        })
    }
}

fn materialize<F>(seq: &F, max_index: usize) -> Vec<Element>
where
    F: Fn(usize) -> Element + Sync,
{
    (0..=max_index).into_par_iter().map(seq).collect()
}

fn check_regulator(u: &Element) -> Result<()> {
    match u.samples().iter().position(|&v| v < 0.0) {
        Some(index) => Err(Error::NegativeRegulator {
            index,
            value: u.samples()[index],
        }),
        None => Ok(()),
    }
}

fn within(err: &Element, bound: &Element) -> bool {
    leq(err, bound, 0.0).map(|v| v.nonnegative).unwrap_or(false)
}

fn errors_to(terms: &[Element], limit: &Element) -> Result<Vec<Element>> {
    terms.iter().map(|x| x.abs_diff(limit)).collect()
}

/// Componentwise `max_{m >= n} |x_m - x_{m'}|` over the tail starting at
/// each `n`, i.e. suffix max minus suffix min.
fn suffix_ranges(terms: &[Element]) -> Vec<Element> {
    let len = terms.len();
    let kind = *terms[0].kind();
    let dim = kind.len();
    let mut hi = terms[len - 1].samples().to_vec();
    let mut lo = hi.clone();
    let mut out = vec![Element::zeros(kind); len];
    for n in (0..len).rev() {
        for i in 0..dim {
            let v = terms[n].samples()[i];
            hi[i] = hi[i].max(v);
            lo[i] = lo[i].min(v);
        }
        let range: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
        out[n] = Element::from_parts_unchecked(kind, range);
    }
    out
}

fn certify_tails(
    errs: &[Element],
    regulator: &Element,
    schedule: &RuSchedule,
    monotone: bool,
    latest_witness: usize,
) -> RuCertificate {
    let mut witnesses = Vec::with_capacity(schedule.epsilons.len());
    for &eps in &schedule.epsilons {
        let bound = regulator.scale(eps);
        // Smallest N such that every tail element from N on is within bound.
        let mut n0 = errs.len();
        while n0 > 0 && within(&errs[n0 - 1], &bound) {
            n0 -= 1;
        }
        if n0 > latest_witness {
            let best = if monotone {
                (n0 < errs.len()).then_some(n0)
            } else {
                errs.iter().rposition(|e| within(e, &bound))
            };
            return RuCertificate {
                regulator: regulator.clone(),
                witnesses,
                verdict: RuVerdict::Refuted {
                    epsilon: eps,
                    best_achievable_index: best,
                },
            };
        }
        witnesses.push(Witness { epsilon: eps, index: n0 });
    }
    RuCertificate {
        regulator: regulator.clone(),
        witnesses,
        verdict: RuVerdict::Certified,
    }
}

/// Certifies `seq(n) -> limit` relatively uniformly with respect to
/// `regulator` over the schedule, or reports the first `ε` that fails.
pub fn verify_ru_limit<F>(
    seq: F,
    limit: &Element,
    regulator: &Element,
    schedule: &RuSchedule,
) -> Result<RuCertificate>
where
    F: Fn(usize) -> Element + Sync,
{
    limit.check_compatible(regulator)?;
    check_regulator(regulator)?;
    let terms = materialize(&seq, schedule.max_index);
    let errs = errors_to(&terms, limit)?;
    Ok(certify_tails(&errs, regulator, schedule, false, schedule.max_index))
}

/// Certifies that `seq` is ru-Cauchy: `|x_n - x_m| <= ε u` for all
/// `n, m >= N`.
///
/// A one-element tail is trivially Cauchy, so witnesses must leave at least
/// the upper half of the index window: `N <= max_index / 2`.
pub fn verify_ru_cauchy<F>(seq: F, regulator: &Element, schedule: &RuSchedule) -> Result<RuCertificate>
where
    F: Fn(usize) -> Element + Sync,
{
    check_regulator(regulator)?;
    let terms = materialize(&seq, schedule.max_index);
    for t in &terms {
        t.check_compatible(regulator)?;
    }
    let ranges = suffix_ranges(&terms);
    Ok(certify_tails(&ranges, regulator, schedule, true, schedule.max_index / 2))
}

fn tail_max(errs: &[Element], from: usize) -> Element {
    let kind = *errs[0].kind();
    let mut acc = vec![0.0f64; kind.len()];
    for e in &errs[from..] {
        for (a, &v) in acc.iter_mut().zip(e.samples()) {
            *a = a.max(v);
        }
    }
    Element::from_parts_unchecked(kind, acc)
}

/// Tail errors at or below this multiple of `1 + |scale|` are rounding
/// noise and count as exact.
const NOISE_FLOOR: f64 = 1e-13;

fn noise_floor(scale: &Element) -> Element {
    scale.map(|v| NOISE_FLOOR * (1.0 + v.abs()))
}

fn denoise(tail: Element, floor: &Element) -> Element {
    let samples = tail
        .samples()
        .iter()
        .zip(floor.samples())
        .map(|(&v, &f)| if v <= f { 0.0 } else { v })
        .collect();
    Element::from_parts_unchecked(*tail.kind(), samples)
}

fn synthesize_from_tails(
    raw_tails: impl Fn(usize) -> Element,
    len: usize,
    schedule: &RuSchedule,
    budget: &Budget,
    floor: &Element,
) -> Result<Element> {
    let max_index = schedule.max_index;
    let tails = |n: usize| denoise(raw_tails(n), floor);
    // Eventually exact at desk scale: zero regulator.
    let exact_from = (0..len).rev().take_while(|&n| tails(n).is_zero()).last();
    if let Some(n0) = exact_from {
        if n0 <= max_index / 2 {
            return Ok(Element::zeros(*tails(0).kind()));
        }
    }

    let mut u: Option<Element> = None;
    let mut prev_tail: Option<Element> = None;
    for (k, &eps) in schedule.epsilons.iter().enumerate() {
        let n = budget.index(k, eps)?;
        if n > max_index {
            return Err(Error::SynthesisFailed {
                epsilon: eps,
                reason: format!("budget index {n} exceeds max_index {max_index}"),
            });
        }
        let tail = tails(n);
        if let Some(prev) = &prev_tail {
            // A non-monotone sequence may hold its tail for a step; a stall
            // is a tail that also fails to shrink over the rest of the window.
            let later = tails(if n < max_index / 2 { max_index / 2 } else { max_index });
            let stalled = tail
                .samples()
                .iter()
                .zip(prev.samples())
                .zip(later.samples())
                .any(|((&cur, &before), &rest)| cur > 0.0 && cur >= before && rest >= cur);
            if stalled {
                return Err(Error::SynthesisFailed {
                    epsilon: eps,
                    reason: "tail error does not shrink between budget indices".into(),
                });
            }
        }
        let scaled = tail.scale(1.0 / eps);
        u = Some(match u {
            Some(acc) => acc.sup(&scaled)?,
            None => scaled,
        });
        prev_tail = Some(tail);
    }
    Ok(u.expect("schedule is nonempty"))
}

/// Picks a regulator that certifies `seq -> limit` over the schedule.
///
/// For each `ε` the tail starts at the budget index `N_ε` and the regulator
/// is the componentwise maximum of `|seq(n) - limit| / ε` over those tails.
/// Fails when a budget index exceeds `max_index` or the tail error stops
/// shrinking (the mark of a sequence with no ru-limit).
pub fn synthesize_regulator<F>(
    seq: F,
    limit: &Element,
    schedule: &RuSchedule,
    budget: &Budget,
) -> Result<Element>
where
    F: Fn(usize) -> Element + Sync,
{
    let terms = materialize(&seq, schedule.max_index);
    let errs = errors_to(&terms, limit)?;
    let floor = noise_floor(limit);
    let u = synthesize_from_tails(|n| tail_max(&errs, n), errs.len(), schedule, budget, &floor)?;
    if certify_tails(&errs, &u, schedule, false, schedule.max_index).is_certified() {
        return Ok(u);
    }
    // Rounding noise was treated as exact; widen by the floor so it passes.
    u.add(&floor.scale(1.0 / schedule.smallest_epsilon()))
}

/// Cauchy counterpart of [`synthesize_regulator`]: uses the componentwise
/// spread of each tail in place of the distance to a limit.
pub fn synthesize_cauchy_regulator<F>(seq: F, schedule: &RuSchedule, budget: &Budget) -> Result<Element>
where
    F: Fn(usize) -> Element + Sync,
{
    let terms = materialize(&seq, schedule.max_index);
    let ranges = suffix_ranges(&terms);
    let floor = noise_floor(&terms[terms.len() - 1]);
    let u = synthesize_from_tails(|n| ranges[n].clone(), ranges.len(), schedule, budget, &floor)?;
    if certify_tails(&ranges, &u, schedule, true, schedule.max_index / 2).is_certified() {
        return Ok(u);
    }
    u.add(&floor.scale(1.0 / schedule.smallest_epsilon()))
}
