//! Mean densities of lower-dimensional germ-grain sets: the Campbell-type
//! integral, Monte Carlo ball-hitting ratios, overlap decay and the
//! capacity-based estimator `λ̂`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_volume, translated_grain_integral, Grain, Point, Window};
use crate::mc::chunked;
use crate::model::{GermGrainModel, Realization};
use crate::rng::derive_seed;

/// A Monte Carlo probability, possibly normalized by `b_{d−n} r^{d−n}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub replications: usize,
    pub radius: f64,
    pub seed: u64,
}

impl DensityEstimate {
    pub(crate) fn from_count(hits: usize, n: usize, radius: f64, seed: u64, scale: f64) -> Self {
        let p = hits as f64 / n as f64;
        DensityEstimate {
            value: p / scale,
            stderr: (p * (1.0 - p) / n as f64).sqrt() / scale,
            replications: n,
            radius,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Values along a strictly decreasing radius sequence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub entries: Vec<CurvePoint>,
}

/// Value of the `r → 0` linear fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Upper bound `Σ|wᵢ|σᵢ`, valid for any correlation between entries.
    pub stderr: f64,
    pub slope: f64,
    /// Root mean square residual of the fit.
    pub residual: f64,
}

impl RatioCurve {
    pub fn new(entries: Vec<CurvePoint>) -> Result<Self> {
        if entries.windows(2).any(|w| !(w[1].r < w[0].r)) {
            return Err(invalid("curve radii must be strictly decreasing"));
        }
        Ok(RatioCurve { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.entries.last()
    }

    /// Least-squares line `value + slope·r` through the last three entries,
    /// evaluated at `r = 0`. Shorter curves use all their entries.
    pub fn extrapolate(&self) -> Result<Extrapolation> {
        let tail = &self.entries[self.entries.len().saturating_sub(3)..];
        match tail {
            [] => Err(invalid("cannot extrapolate an empty curve")),
            [p] => Ok(Extrapolation { value: p.value, stderr: p.stderr, slope: 0.0, residual: 0.0 }),
            _ => {
                let n = tail.len() as f64;
                let rbar = tail.iter().map(|p| p.r).sum::<f64>() / n;
                let sxx: f64 = tail.iter().map(|p| (p.r - rbar).powi(2)).sum();
                let w: Vec<f64> = tail.iter().map(|p| 1.0 / n - rbar * (p.r - rbar) / sxx).collect();
                let value: f64 = w.iter().zip(tail).map(|(w, p)| w * p.value).sum();
                let stderr: f64 = w.iter().zip(tail).map(|(w, p)| w.abs() * p.stderr).sum();
                let slope = tail.iter().map(|p| (p.r - rbar) * p.value).sum::<f64>() / sxx;
                let residual = (tail.iter().map(|p| (p.value - value - slope * p.r).powi(2)).sum::<f64>() / n).sqrt();
                Ok(Extrapolation { value, stderr, slope, residual })
            }
        }
    }
}

/// Radii `R_N = c·N^{−τ}` for the estimator study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSchedule {
    pub c: f64,
    pub tau: f64,
    pub n_values: Vec<usize>,
}

impl EstimatorSchedule {
    /// Requires `τ ∈ (0, 1/(d−n))` so that `R_N → 0` and `N R_N^{d−n} → ∞`.
    pub fn validate(&self, codim: usize) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(invalid(format!("schedule constant c must be positive, got {}", self.c)));
        }
        if codim == 0 {
            return Err(invalid("the estimator needs a lower-dimensional set"));
        }
        let upper = 1.0 / codim as f64;
        if !(self.tau > 0.0 && self.tau < upper) {
            return Err(invalid(format!("tau must lie in (0, {upper}), got {}", self.tau)));
        }
        if self.n_values.is_empty() || self.n_values[0] == 0 || self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("N values must be positive and strictly increasing"));
        }
        Ok(())
    }

    pub fn radius(&self, n: usize) -> f64 {
        self.c * (n as f64).powf(-self.tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub n: usize,
    pub radius: f64,
    pub estimate: f64,
    pub abs_error: f64,
}

/// Counts over replications `derive_seed(seed, i)`. Every radius sees the
/// same realizations, so the per-replication curves are monotone in `r`.
#[derive(Clone, Debug, Default)]
pub(crate) struct Tally {
    pub n: usize,
    /// `x ∈ Θ`.
    pub inside: usize,
    /// `x ∈ Θ_{⊕r}`, per radius.
    pub hit: Vec<usize>,
    /// At least two enlarged grains contain `x`, per radius.
    pub pair: Vec<usize>,
}

impl Tally {
    fn merge(parts: Vec<Tally>, k: usize) -> Tally {
        parts.into_iter().fold(Tally { hit: vec![0; k], pair: vec![0; k], ..Tally::default() }, |mut a, p| {
            a.n += p.n;
            a.inside += p.inside;
            for j in 0..k {
                a.hit[j] += p.hit[j];
                a.pair[j] += p.pair[j];
            }
            a
        })
    }

    /// `x ∈ Θ_{⊕r} ∖ Θ`.
    pub fn annulus(&self, k: usize) -> usize {
        self.hit[k] - self.inside
    }
}

pub(crate) fn tally(model: &GermGrainModel, x: &Point, radii: &[f64], n: usize, rng_seed: u64) -> Result<Tally> {
    if n == 0 {
        return Err(invalid("replications must be positive"));
    }
    if x.dim() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: x.dim() });
    }
    let k = radii.len();
    let parts = chunked(
        n,
        || Ok(Tally { hit: vec![0; k], pair: vec![0; k], ..Tally::default() }),
        |acc: &mut Result<Tally>, i| {
            let Ok(t) = acc else { return };
            let real = match model.realize(derive_seed(rng_seed, i as u64)) {
                Ok(r) => r,
                Err(e) => {
                    *acc = Err(e);
                    return;
                }
            };
            let (d1, d2) = real.nearest_distances(x);
            t.n += 1;
            t.inside += usize::from(d1 <= 0.0);
            for (j, &r) in radii.iter().enumerate() {
                t.hit[j] += usize::from(d1 <= r);
                t.pair[j] += usize::from(d2 <= r);
            }
        },
    );
    Ok(Tally::merge(parts.into_iter().collect::<Result<Vec<_>>>()?, k))
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("radius sequence is empty"));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(invalid("radii must be positive and finite"));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("radii must be strictly decreasing"));
    }
    Ok(())
}

fn normalizer(model: &GermGrainModel, r: f64) -> Result<f64> {
    ball_volume(model.codim(), r)
}

fn require_lower_dim(model: &GermGrainModel) -> Result<()> {
    if model.codim() == 0 {
        return Err(Error::Unsupported(
            "full-dimensional grains have no lower-dimensional mean density; use the surface routines".into(),
        ));
    }
    Ok(())
}

/// Mark quadrature nodes per parameter for a given spatial `steps`.
pub(crate) fn mark_nodes(steps: usize) -> usize {
    (steps / 16).clamp(2, 64)
}

/// `λ_{Θn}(x) = ∫_K ∫_{x−Z(s)} λ(y, s) ℋⁿ(dy) Q(ds)`, with `steps` quadrature
/// nodes per unit length (or per axis for surfaces).
pub fn theoretical_density(model: &GermGrainModel, x: &Point, steps: usize) -> Result<f64> {
    require_lower_dim(model)?;
    if x.dim() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: x.dim() });
    }
    let mut total = 0.0;
    for (shape, w) in model.marks().discretize(mark_nodes(steps))? {
        total += w * translated_grain_integral(x, &shape, |y| model.intensity(y, &shape), steps)?;
    }
    Ok(total)
}

/// Fraction of `N` realizations whose `r`-enlargement contains `x`.
pub fn hitting_probability(
    model: &GermGrainModel,
    x: &Point,
    r: f64,
    n: usize,
    rng_seed: u64,
) -> Result<DensityEstimate> {
    check_radii(&[r])?;
    let t = tally(model, x, &[r], n, rng_seed)?;
    Ok(DensityEstimate::from_count(t.hit[0], n, r, rng_seed, 1.0))
}

/// `P(x ∈ Θ_{⊕r}) / (b_{d−n} r^{d−n})`.
pub fn density_ratio(model: &GermGrainModel, x: &Point, r: f64, n: usize, rng_seed: u64) -> Result<DensityEstimate> {
    if r == 0.0 {
        return Err(invalid("the density ratio needs r > 0"));
    }
    require_lower_dim(model)?;
    check_radii(&[r])?;
    let t = tally(model, x, &[r], n, rng_seed)?;
    Ok(DensityEstimate::from_count(t.hit[0], n, r, rng_seed, normalizer(model, r)?))
}

/// Density ratios along `radii` from one shared set of realizations.
pub fn convergence_study(
    model: &GermGrainModel,
    x: &Point,
    radii: &[f64],
    n: usize,
    rng_seed: u64,
) -> Result<RatioCurve> {
    require_lower_dim(model)?;
    check_radii(radii)?;
    let t = tally(model, x, radii, n, rng_seed)?;
    curve(radii, &t.hit, n, rng_seed, |r| normalizer(model, r))
}

/// `P(W_r > 0) / (b_{d−n} r^{d−n})`, where `W_r` counts pairs of distinct
/// enlarged grains containing `x`.
pub fn overlap_decay(model: &GermGrainModel, x: &Point, radii: &[f64], n: usize, rng_seed: u64) -> Result<RatioCurve> {
    require_lower_dim(model)?;
    check_radii(radii)?;
    let t = tally(model, x, radii, n, rng_seed)?;
    curve(radii, &t.pair, n, rng_seed, |r| normalizer(model, r))
}

pub(crate) fn curve<F>(radii: &[f64], counts: &[usize], n: usize, seed: u64, scale: F) -> Result<RatioCurve>
where
    F: Fn(f64) -> Result<f64>,
{
    let entries = radii
        .iter()
        .zip(counts)
        .map(|(&r, &c)| {
            let e = DensityEstimate::from_count(c, n, r, seed, scale(r)?);
            Ok(CurvePoint { r, value: e.value, stderr: e.stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    RatioCurve::new(entries)
}

/// Compact test set for the empirical capacity functional.
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    Ball { center: Point, radius: f64 },
    Window(Window),
    Grain(Grain),
}

impl Probe {
    pub fn hit_by(&self, real: &Realization) -> bool {
        match self {
            Probe::Ball { center, radius } => real.covers(center, *radius),
            Probe::Window(w) => real.hits_box(w),
            Probe::Grain(g) => real.hits_grain(g),
        }
    }
}

/// `T̂ᴺ(K) = (1/N) Σ 1{Θᵢ ∩ K ≠ ∅}`.
pub fn empirical_capacity(realizations: &[Realization], probe: &Probe) -> Result<f64> {
    if realizations.is_empty() {
        return Err(invalid("no realizations given"));
    }
    let hits = realizations.iter().filter(|r| probe.hit_by(r)).count();
    Ok(hits as f64 / realizations.len() as f64)
}

/// `λ̂ᴺ(x) = Σ 1{Θᵢ ∩ B_R(x) ≠ ∅} / (N b_{d−n} R^{d−n})`.
pub fn lambda_hat(realizations: &[Realization], x: &Point, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    let first = realizations.first().ok_or_else(|| invalid("no realizations given"))?;
    let codim = first.ambient_dim - first.grain_dim;
    let capacity = empirical_capacity(realizations, &Probe::Ball { center: *x, radius })?;
    Ok(capacity / ball_volume(codim, radius)?)
}

/// `λ̂` at each `(N, R_N)` of the schedule, from fresh realizations per row.
pub fn estimator_study(
    model: &GermGrainModel,
    x: &Point,
    schedule: &EstimatorSchedule,
    rng_seed: u64,
    steps: usize,
) -> Result<Vec<EstimatorRow>> {
    require_lower_dim(model)?;
    schedule.validate(model.codim())?;
    let truth = theoretical_density(model, x, steps)?;
    schedule
        .n_values
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let radius = schedule.radius(n);
            let t = tally(model, x, &[radius], n, derive_seed(rng_seed, 1 << 32 | k as u64))?;
            // same arithmetic as lambda_hat: capacity, then division
            let capacity = t.hit[0] as f64 / n as f64;
            let estimate = capacity / normalizer(model, radius)?;
            Ok(EstimatorRow { n, radius, estimate, abs_error: (estimate - truth).abs() })
        })
        .collect()
}
