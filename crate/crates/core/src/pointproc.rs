//! Germ processes: samplers, intensities, second moment densities and
//! i.i.d. marking, plus Monte Carlo checks of Campbell's formula and of the
//! second factorial moment measure.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{GrainShape, Point, Window};
use crate::mc::{chunked, Moments};
use crate::rng::{derive_seed, stream_rng, STREAM_GERMS, STREAM_MARKS};

/// User-supplied intensity function with its declared upper bound.
#[derive(Clone)]
pub struct CustomIntensity {
    pub label: String,
    pub bound: f64,
    pub func: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomIntensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({}, bound={:?})", self.label, self.bound)
    }
}

/// Germ intensity `λ(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensitySpec {
    Constant {
        value: f64,
    },
    /// `max(base + gradient·x, 0)`, thinned against the declared `bound`.
    Affine {
        base: f64,
        gradient: Vec<f64>,
        bound: f64,
    },
    #[serde(skip)]
    Custom(CustomIntensity),
}

impl IntensitySpec {
    pub fn value_at(&self, x: &Point) -> f64 {
        match self {
            IntensitySpec::Constant { value } => *value,
            IntensitySpec::Affine { base, gradient, .. } => {
                let lin: f64 = gradient.iter().zip(x.coords()).map(|(g, c)| g * c).sum();
                (base + lin).max(0.0)
            }
            IntensitySpec::Custom(c) => (c.func)(x),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            IntensitySpec::Constant { value } => *value,
            IntensitySpec::Affine { bound, .. } => *bound,
            IntensitySpec::Custom(c) => c.bound,
        }
    }

    /// Checks the declared bound against the supremum over `window`.
    pub fn validate(&self, window: &Window) -> Result<()> {
        match self {
            IntensitySpec::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::ModelValidation(format!(
                        "constant intensity must be finite and >= 0, got {value}"
                    )));
                }
            }
            IntensitySpec::Affine { gradient, bound, .. } => {
                if gradient.len() != window.dim() {
                    return Err(Error::DimensionMismatch { expected: window.dim(), got: gradient.len() });
                }
                // an affine function peaks at a corner
                let d = window.dim();
                let sup = (0..1usize << d)
                    .map(|mask| {
                        let c: Vec<f64> = (0..d)
                            .map(|i| if mask >> i & 1 == 1 { window.hi().coord(i) } else { window.lo().coord(i) })
                            .collect();
                        self.value_at(&Point::from_slice(&c).expect("corner"))
                    })
                    .fold(0.0, f64::max);
                // rounding in the corner values must not reject a tight bound
                if !(bound.is_finite() && *bound >= sup * (1.0 - 1e-12)) {
                    return Err(Error::ModelValidation(format!(
                        "declared intensity bound {bound} is below the supremum {sup} over the sampling window"
                    )));
                }
            }
            IntensitySpec::Custom(c) => {
                if !(c.bound.is_finite() && c.bound >= 0.0) {
                    return Err(Error::ModelValidation(format!("intensity '{}' needs a finite bound", c.label)));
                }
            }
        }
        Ok(())
    }
}

/// Law of the germ process `Φ̃`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum GermLaw {
    Poisson {
        intensity: IntensitySpec,
    },
    /// Exactly `m` i.i.d. uniform points in the window.
    Binomial {
        m: u64,
    },
    /// Planar Matérn cluster process: Poisson(`alpha`) parents, Poisson(`m`)
    /// children uniform in the parent's `cluster_radius` disc.
    MaternCluster {
        alpha: f64,
        m: f64,
        cluster_radius: f64,
    },
    /// A single uniform point in the window.
    OneGrainUniform,
}

impl GermLaw {
    pub fn name(&self) -> &'static str {
        match self {
            GermLaw::Poisson { .. } => "poisson",
            GermLaw::Binomial { .. } => "binomial",
            GermLaw::MaternCluster { .. } => "matern_cluster",
            GermLaw::OneGrainUniform => "one_grain_uniform",
        }
    }

    /// Whether the law is a whole-space stationary process observed through a
    /// window (as opposed to a finite process living inside the window).
    pub fn is_whole_space(&self) -> bool {
        matches!(self, GermLaw::Poisson { .. } | GermLaw::MaternCluster { .. })
    }

    pub fn validate(&self, window: &Window) -> Result<()> {
        match self {
            GermLaw::Poisson { intensity } => intensity.validate(window),
            GermLaw::Binomial { m } => {
                if *m == 0 {
                    return Err(Error::ModelValidation("binomial process needs m >= 1".into()));
                }
                Ok(())
            }
            GermLaw::MaternCluster { alpha, m, cluster_radius } => {
                if window.dim() != 2 {
                    return Err(Error::Unsupported("Matérn cluster process is only available in the plane".into()));
                }
                for (name, v) in [("alpha", alpha), ("m", m), ("cluster_radius", cluster_radius)] {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(Error::ModelValidation(format!("Matérn {name} must be positive, got {v}")));
                    }
                }
                Ok(())
            }
            GermLaw::OneGrainUniform => Ok(()),
        }
    }
}

pub(crate) fn uniform_in<R: Rng + ?Sized>(window: &Window, rng: &mut R) -> Point {
    let mut c = [0.0; 3];
    for (i, v) in c.iter_mut().enumerate().take(window.dim()) {
        *v = window.lo().coord(i) + rng.random::<f64>() * window.extent(i);
    }
    Point::from_slice(&c[..window.dim()]).expect("window point")
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
}

/// Samples germs of `law` in `window` using the caller's generator.
pub fn sample_germs_with<R: Rng + ?Sized>(law: &GermLaw, window: &Window, rng: &mut R) -> Result<Vec<Point>> {
    match law {
        GermLaw::Poisson { intensity } => {
            if let IntensitySpec::Constant { value } = intensity {
                let n = poisson_count(value * window.volume(), rng);
                return Ok((0..n).map(|_| uniform_in(window, rng)).collect());
            }
            let bound = intensity.bound();
            let n = poisson_count(bound * window.volume(), rng);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let p = uniform_in(window, rng);
                let v = intensity.value_at(&p);
                if v > bound * (1.0 + 1e-12) || v < 0.0 {
                    return Err(Error::ModelValidation(format!(
                        "intensity {v} at {p} violates the declared bound {bound}"
                    )));
                }
                if rng.random::<f64>() * bound < v {
                    out.push(p);
                }
            }
            Ok(out)
        }
        GermLaw::Binomial { m } => Ok((0..*m).map(|_| uniform_in(window, rng)).collect()),
        GermLaw::MaternCluster { alpha, m, cluster_radius } => {
            let parents_window = window.dilate(*cluster_radius);
            let parents = poisson_count(alpha * parents_window.volume(), rng);
            let mut out = Vec::new();
            for _ in 0..parents {
                let c = uniform_in(&parents_window, rng);
                let k = poisson_count(*m, rng);
                for _ in 0..k {
                    let rho = cluster_radius * rng.random::<f64>().sqrt();
                    let t = 2.0 * PI * rng.random::<f64>();
                    let p = Point::new2(c.coord(0) + rho * t.cos(), c.coord(1) + rho * t.sin());
                    if window.contains(&p) {
                        out.push(p);
                    }
                }
            }
            Ok(out)
        }
        GermLaw::OneGrainUniform => Ok(vec![uniform_in(window, rng)]),
    }
}

/// Samples germs of `law` in `window`; deterministic in `seed`.
pub fn sample_germs(law: &GermLaw, window: &Window, rng_seed: u64) -> Result<Vec<Point>> {
    law.validate(window)?;
    sample_germs_with(law, window, &mut stream_rng(rng_seed, STREAM_GERMS))
}

/// `λ(x)` of the germ process at a point of the window.
pub fn intensity_at(law: &GermLaw, window: &Window, x: &Point) -> Result<f64> {
    if !window.contains(x) {
        return Err(Error::Domain(x.to_string()));
    }
    Ok(match law {
        GermLaw::Poisson { intensity } => intensity.value_at(x),
        GermLaw::Binomial { m } => *m as f64 / window.volume(),
        GermLaw::MaternCluster { alpha, m, .. } => alpha * m,
        GermLaw::OneGrainUniform => 1.0 / window.volume(),
    })
}

/// Area of the intersection of two discs of radius `r` whose centres are `dist` apart.
pub fn lens_area(dist: f64, r: f64) -> f64 {
    if dist >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (dist / (2.0 * r)).acos() - 0.5 * dist * (4.0 * r * r - dist * dist).sqrt()
}

/// Second moment density `g̃(x, y)` of the germ process.
pub fn second_moment_at(law: &GermLaw, window: &Window, x: &Point, y: &Point) -> Result<f64> {
    for p in [x, y] {
        if !window.contains(p) {
            return Err(Error::Domain(p.to_string()));
        }
    }
    Ok(match law {
        GermLaw::Poisson { intensity } => intensity.value_at(x) * intensity.value_at(y),
        GermLaw::Binomial { m } => {
            let m = *m as f64;
            m * (m - 1.0) / window.volume().powi(2)
        }
        GermLaw::MaternCluster { alpha, m, cluster_radius } => {
            let r = *cluster_radius;
            alpha * alpha * m * m + alpha * m * m * lens_area(x.distance(y), r) / (PI * PI * r.powi(4))
        }
        GermLaw::OneGrainUniform => 0.0,
    })
}

/// `g̃` bundled with its global bound.
#[derive(Clone, Debug)]
pub struct SecondMomentDensity {
    law: GermLaw,
    window: Window,
}

impl SecondMomentDensity {
    pub fn new(law: GermLaw, window: Window) -> Self {
        SecondMomentDensity { law, window }
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        second_moment_at(&self.law, &self.window, x, y)
    }

    pub fn bound(&self) -> Option<f64> {
        match &self.law {
            GermLaw::Poisson { intensity } => Some(intensity.bound().powi(2)),
            GermLaw::Binomial { m } => {
                let m = *m as f64;
                Some(m * (m - 1.0) / self.window.volume().powi(2))
            }
            GermLaw::MaternCluster { alpha, m, cluster_radius } => {
                Some(alpha * alpha * m * m + alpha * m * m / (PI * cluster_radius * cluster_radius))
            }
            GermLaw::OneGrainUniform => Some(0.0),
        }
    }
}

/// Mark distribution `Q`. Marks are grain shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkDistribution {
    Dirac {
        shape: GrainShape,
    },
    /// Segments with length uniform in `[length_lo, length_hi]` and isotropic orientation.
    SegmentUniform {
        length_lo: f64,
        length_hi: f64,
    },
    Discrete {
        atoms: Vec<MarkAtom>,
    },
    FixedRadius {
        shape: RoundKind,
        radius: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkAtom {
    pub shape: GrainShape,
    pub probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Circle,
    Disc,
    Sphere,
    Ball,
}

impl RoundKind {
    pub fn shape(self, radius: f64) -> GrainShape {
        match self {
            RoundKind::Circle => GrainShape::Circle { radius },
            RoundKind::Disc => GrainShape::Disc { radius },
            RoundKind::Sphere => GrainShape::Sphere { radius },
            RoundKind::Ball => GrainShape::Ball { radius },
        }
    }
}

impl MarkDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkDistribution::Dirac { shape } => shape.validate(),
            MarkDistribution::SegmentUniform { length_lo, length_hi } => {
                if !(length_lo.is_finite()
                    && length_hi.is_finite()
                    && *length_lo >= 0.0
                    && length_lo <= length_hi
                    && *length_hi > 0.0)
                {
                    return Err(Error::ModelValidation(format!(
                        "segment lengths need 0 <= lo <= hi, hi > 0; got [{length_lo}, {length_hi}]"
                    )));
                }
                Ok(())
            }
            MarkDistribution::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::ModelValidation("discrete mark distribution has no atoms".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.probability).sum();
                if atoms.iter().any(|a| !(a.probability >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::ModelValidation(format!(
                        "mark probabilities must be >= 0 and sum to 1, got {total}"
                    )));
                }
                for a in atoms {
                    a.shape.validate()?;
                }
                let n = atoms[0].shape.hausdorff_dim();
                let d = atoms[0].shape.ambient_dim();
                if atoms.iter().any(|a| a.shape.hausdorff_dim() != n || a.shape.ambient_dim() != d) {
                    return Err(Error::ModelValidation("all marks must share the same dimension".into()));
                }
                Ok(())
            }
            MarkDistribution::FixedRadius { shape, radius } => shape.shape(*radius).validate(),
        }
    }

    fn representative(&self) -> GrainShape {
        match self {
            MarkDistribution::Dirac { shape } => shape.clone(),
            MarkDistribution::SegmentUniform { length_hi, .. } => GrainShape::segment(*length_hi, 0.0),
            MarkDistribution::Discrete { atoms } => atoms[0].shape.clone(),
            MarkDistribution::FixedRadius { shape, radius } => shape.shape(*radius),
        }
    }

    pub fn hausdorff_dim(&self) -> usize {
        self.representative().hausdorff_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.representative().ambient_dim()
    }

    /// Largest bounding radius over the support.
    pub fn max_bounding_radius(&self) -> f64 {
        match self {
            MarkDistribution::Discrete { atoms } => {
                atoms.iter().filter(|a| a.probability > 0.0).map(|a| a.shape.bounding_radius()).fold(0.0, f64::max)
            }
            other => other.representative().bounding_radius(),
        }
    }

    /// Infimum of segment lengths in the support, if any segment marks exist.
    pub fn min_segment_length(&self) -> Option<f64> {
        let seg = |s: &GrainShape| match s {
            GrainShape::Segment { length, .. } => Some(*length),
            _ => None,
        };
        match self {
            MarkDistribution::Dirac { shape } => seg(shape),
            MarkDistribution::SegmentUniform { length_lo, .. } => Some(*length_lo),
            MarkDistribution::Discrete { atoms } => {
                atoms.iter().filter(|a| a.probability > 0.0).filter_map(|a| seg(&a.shape)).reduce(f64::min)
            }
            MarkDistribution::FixedRadius { .. } => None,
        }
    }

    /// Mark as a pure function of two uniforms in `[0, 1)`.
    pub fn mark_from_uniforms(&self, u1: f64, u2: f64) -> GrainShape {
        match self {
            MarkDistribution::Dirac { shape } => shape.clone(),
            MarkDistribution::SegmentUniform { length_lo, length_hi } => {
                // 1 − u1 ∈ (0, 1] keeps lengths positive when length_lo = 0
                let length = length_lo + (length_hi - length_lo) * (1.0 - u1);
                GrainShape::segment(length, 2.0 * PI * u2)
            }
            MarkDistribution::Discrete { atoms } => {
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.probability;
                    if u1 < acc {
                        return a.shape.clone();
                    }
                }
                atoms.iter().rev().find(|a| a.probability > 0.0).unwrap_or(&atoms[0]).shape.clone()
            }
            MarkDistribution::FixedRadius { shape, radius } => shape.shape(*radius),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GrainShape {
        let u1 = rng.random::<f64>();
        let u2 = rng.random::<f64>();
        self.mark_from_uniforms(u1, u2)
    }

    /// Quadrature rule for `Q`: exact for atomic laws, a midpoint product rule
    /// with `nodes` points per parameter for uniform segment marks.
    pub fn discretize(&self, nodes: usize) -> Result<Vec<(GrainShape, f64)>> {
        Ok(match self {
            MarkDistribution::Dirac { shape } => vec![(shape.clone(), 1.0)],
            MarkDistribution::Discrete { atoms } => {
                atoms.iter().filter(|a| a.probability > 0.0).map(|a| (a.shape.clone(), a.probability)).collect()
            }
            MarkDistribution::FixedRadius { shape, radius } => vec![(shape.shape(*radius), 1.0)],
            MarkDistribution::SegmentUniform { .. } => {
                if nodes == 0 {
                    return Err(invalid("mark quadrature needs at least one node"));
                }
                let w = 1.0 / (nodes * nodes) as f64;
                let mut out = Vec::with_capacity(nodes * nodes);
                for i in 0..nodes {
                    for j in 0..nodes {
                        let u1 = 1.0 - (i as f64 + 0.5) / nodes as f64;
                        let u2 = (j as f64 + 0.5) / nodes as f64;
                        out.push((self.mark_from_uniforms(u1, u2), w));
                    }
                }
                out
            }
        })
    }
}

/// Attaches i.i.d. marks. Every mark consumes exactly two uniforms from one
/// stream, so the mark of point `i` depends only on `(seed, i)`.
pub fn attach_marks(points: &[Point], q: &MarkDistribution, rng_seed: u64) -> Vec<(Point, GrainShape)> {
    let mut rng = stream_rng(rng_seed, STREAM_MARKS);
    points.iter().map(|p| (*p, q.sample(&mut rng))).collect()
}

/// Outcome of a Monte Carlo check against a deterministic integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloCheck {
    pub mc_mean: f64,
    pub integral: f64,
    pub stderr: f64,
}

impl MonteCarloCheck {
    /// `|mc_mean − integral| ≤ sigmas · stderr`, plus a rounding allowance
    /// of 1e-9 relative for zero-variance cases.
    pub fn within(&self, sigmas: f64) -> bool {
        (self.mc_mean - self.integral).abs() <= sigmas * self.stderr + 1e-9 * self.integral.abs().max(1.0)
    }
}

fn box_quadrature<F: FnMut(&Point)>(window: &Window, nodes: usize, mut f: F) {
    let d = window.dim();
    let total = nodes.pow(d as u32);
    for k in 0..total {
        let mut c = [0.0; 3];
        let mut rem = k;
        for (i, v) in c.iter_mut().enumerate().take(d) {
            let idx = rem % nodes;
            rem /= nodes;
            *v = window.lo().coord(i) + (idx as f64 + 0.5) / nodes as f64 * window.extent(i);
        }
        f(&Point::from_slice(&c[..d]).expect("node"));
    }
}

/// Monte Carlo mean of `Σ_{x∈Φ̃} f(x)` over the window versus `∫_W f λ dx`.
pub fn campbell_check<F>(
    law: &GermLaw,
    window: &Window,
    f: F,
    replications: usize,
    rng_seed: u64,
) -> Result<MonteCarloCheck>
where
    F: Fn(&Point) -> f64 + Sync,
{
    law.validate(window)?;
    if replications == 0 {
        return Err(invalid("replications must be positive"));
    }
    let parts = chunked(
        replications,
        || Ok(Moments::default()),
        |acc: &mut Result<Moments>, i| {
            let Ok(m) = acc else { return };
            match sample_germs(law, window, derive_seed(rng_seed, i as u64)) {
                Ok(pts) => m.push(pts.iter().map(&f).sum()),
                Err(e) => *acc = Err(e),
            }
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let m = Moments::merge(&parts);
    let nodes = if window.dim() == 2 { 400 } else { 64 };
    let cell = window.volume() / (nodes as f64).powi(window.dim() as i32);
    let mut integral = 0.0;
    let mut err = None;
    box_quadrature(window, nodes, |p| match intensity_at(law, window, p) {
        Ok(l) => integral += f(p) * l * cell,
        Err(e) => err = Some(e),
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(MonteCarloCheck { mc_mean: m.mean(), integral, stderr: m.stderr() })
}

/// Monte Carlo mean of `Σ_{x≠y} 1_A(x) 1_B(y)` for disjoint boxes versus `∫_A ∫_B g̃`.
pub fn pair_count_check(
    law: &GermLaw,
    window: &Window,
    a: &Window,
    b: &Window,
    replications: usize,
    rng_seed: u64,
) -> Result<MonteCarloCheck> {
    law.validate(window)?;
    if replications == 0 {
        return Err(invalid("replications must be positive"));
    }
    let overlap: f64 = (0..a.dim())
        .map(|i| (a.hi().coord(i).min(b.hi().coord(i)) - a.lo().coord(i).max(b.lo().coord(i))).max(0.0))
        .product();
    if overlap > 0.0 {
        return Err(invalid("pair-count boxes must be disjoint"));
    }
    for corner in [a.lo(), a.hi(), b.lo(), b.hi()] {
        if !window.contains(&corner) {
            return Err(Error::Domain(corner.to_string()));
        }
    }
    let parts = chunked(
        replications,
        || Ok(Moments::default()),
        |acc: &mut Result<Moments>, i| {
            let Ok(m) = acc else { return };
            match sample_germs(law, window, derive_seed(rng_seed, i as u64)) {
                Ok(pts) => {
                    let na = pts.iter().filter(|p| a.contains(p)).count();
                    let nb = pts.iter().filter(|p| b.contains(p)).count();
                    m.push((na * nb) as f64);
                }
                Err(e) => *acc = Err(e),
            }
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let m = Moments::merge(&parts);
    let nodes = if window.dim() == 2 { 24 } else { 8 };
    let mut xs = Vec::new();
    box_quadrature(a, nodes, |p| xs.push(*p));
    let mut ys = Vec::new();
    box_quadrature(b, nodes, |p| ys.push(*p));
    let cell = a.volume() / xs.len() as f64 * b.volume() / ys.len() as f64;
    let mut integral = 0.0;
    for x in &xs {
        for y in &ys {
            integral += second_moment_at(law, window, x, y)? * cell;
        }
    }
    Ok(MonteCarloCheck { mc_mean: m.mean(), integral, stderr: m.stderr() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> Window {
        Window::cube(2, 1.0).unwrap()
    }

    #[test]
    fn binomial_sample_size_and_support() {
        let law = GermLaw::Binomial { m: 10 };
        let pts = sample_germs(&law, &unit(), 3).unwrap();
        assert_eq!(pts.len(), 10);
        assert!(pts.iter().all(|p| unit().contains(p)));
        assert_eq!(pts, sample_germs(&law, &unit(), 3).unwrap());
        assert_ne!(pts, sample_germs(&law, &unit(), 4).unwrap());
    }

    #[test]
    fn one_grain_has_one_point() {
        assert_eq!(sample_germs(&GermLaw::OneGrainUniform, &unit(), 1).unwrap().len(), 1);
    }

    #[test]
    fn zero_intensity_is_empty() {
        let law = GermLaw::Poisson { intensity: IntensitySpec::Constant { value: 0.0 } };
        assert!(sample_germs(&law, &unit(), 1).unwrap().is_empty());
    }

    #[test]
    fn poisson_mean_count() {
        // mean of 10^4 Poisson(5) counts: sd of the mean is sqrt(5/10^4)
        let law = GermLaw::Poisson { intensity: IntensitySpec::Constant { value: 5.0 } };
        let n = 10_000;
        let total: usize = (0..n).map(|i| sample_germs(&law, &unit(), derive_seed(9, i)).unwrap().len()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 5.0).abs() <= 3.0 * (5.0f64 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn matern_mean_count() {
        let w = Window::cube(2, 10.0).unwrap();
        let law = GermLaw::MaternCluster { alpha: 2.0, m: 3.0, cluster_radius: 0.5 };
        let n = 400;
        let counts: Vec<f64> =
            (0..n).map(|i| sample_germs(&law, &w, derive_seed(5, i)).unwrap().len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 600.0).abs() <= 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn thinning_rejects_understated_bound() {
        let law = GermLaw::Poisson {
            intensity: IntensitySpec::Custom(CustomIntensity {
                label: "steep".into(),
                bound: 1.0,
                func: Arc::new(|p: &Point| 50.0 * p.coord(0)),
            }),
        };
        assert!(matches!(sample_germs(&law, &unit(), 1), Err(Error::ModelValidation(_))));
        let affine =
            GermLaw::Poisson { intensity: IntensitySpec::Affine { base: 1.0, gradient: vec![10.0, 0.0], bound: 5.0 } };
        assert!(matches!(sample_germs(&affine, &unit(), 1), Err(Error::ModelValidation(_))));
    }

    #[test]
    fn inhomogeneous_poisson_campbell() {
        let law =
            GermLaw::Poisson { intensity: IntensitySpec::Affine { base: 2.0, gradient: vec![20.0, 0.0], bound: 22.0 } };
        let chk = campbell_check(&law, &unit(), |_| 1.0, 20_000, 8).unwrap();
        assert_abs_diff_eq!(chk.integral, 12.0, epsilon = 1e-9);
        assert!(chk.within(4.0), "{chk:?}");
    }

    #[test]
    fn intensities() {
        let w = unit();
        let x = Point::new2(0.5, 0.5);
        assert_abs_diff_eq!(intensity_at(&GermLaw::Binomial { m: 10 }, &w, &x).unwrap(), 10.0);
        let matern = GermLaw::MaternCluster { alpha: 0.5, m: 4.0, cluster_radius: 1.0 };
        assert_abs_diff_eq!(intensity_at(&matern, &w, &x).unwrap(), 2.0);
        let w10 = Window::cube(2, 10.0).unwrap();
        assert_abs_diff_eq!(intensity_at(&GermLaw::OneGrainUniform, &w10, &x).unwrap(), 0.01);
        assert!(matches!(intensity_at(&GermLaw::OneGrainUniform, &w, &Point::new2(2.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn second_moments() {
        let w = unit();
        let (x, y) = (Point::new2(0.1, 0.1), Point::new2(0.9, 0.9));
        assert_abs_diff_eq!(second_moment_at(&GermLaw::Binomial { m: 3 }, &w, &x, &y).unwrap(), 6.0);
        let w10 = Window::cube(2, 10.0).unwrap();
        let (alpha, m, r) = (0.3, 2.0, 0.5);
        let matern = GermLaw::MaternCluster { alpha, m, cluster_radius: r };
        let far = second_moment_at(&matern, &w10, &Point::new2(1.0, 1.0), &Point::new2(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(far, alpha * alpha * m * m);
        let same = second_moment_at(&matern, &w10, &x, &x).unwrap();
        assert_abs_diff_eq!(same, alpha * alpha * m * m + alpha * m * m / (PI * r * r), epsilon = 1e-12);
        let smd = SecondMomentDensity::new(matern, w10);
        assert!(smd.eval(&x, &Point::new2(0.3, 0.2)).unwrap() <= smd.bound().unwrap() + 1e-12);
        assert_eq!(second_moment_at(&GermLaw::OneGrainUniform, &w, &x, &y).unwrap(), 0.0);
    }

    #[test]
    fn lens_area_limits() {
        assert_abs_diff_eq!(lens_area(0.0, 1.0), PI, epsilon = 1e-12);
        assert_eq!(lens_area(2.0, 1.0), 0.0);
        // two unit discs at distance 1: 2π/3 − √3/2
        assert_abs_diff_eq!(lens_area(1.0, 1.0), 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn poisson_second_moment_factorizes() {
        use rand::SeedableRng;
        let intensity = IntensitySpec::Affine { base: 1.0, gradient: vec![2.0, -0.5], bound: 3.0 };
        let law = GermLaw::Poisson { intensity: intensity.clone() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = uniform_in(&unit(), &mut rng);
            let y = uniform_in(&unit(), &mut rng);
            let g = second_moment_at(&law, &unit(), &x, &y).unwrap();
            assert_eq!(g, intensity.value_at(&x) * intensity.value_at(&y));
        }
    }

    #[test]
    fn marks() {
        let pts: Vec<Point> = (0..5).map(|i| Point::new2(i as f64 * 0.1, 0.0)).collect();
        let dirac = MarkDistribution::Dirac { shape: GrainShape::segment(2.0, 0.0) };
        assert!(attach_marks(&pts, &dirac, 1).iter().all(|(_, s)| *s == GrainShape::segment(2.0, 0.0)));
        assert!(attach_marks(&[], &dirac, 1).is_empty());
        // mark of point i depends only on (seed, i)
        let q = MarkDistribution::SegmentUniform { length_lo: 0.0, length_hi: 3.0 };
        let long = attach_marks(&pts, &q, 7);
        let short = attach_marks(&pts[..3], &q, 7);
        assert_eq!(&long[..3], &short[..]);
    }

    #[test]
    fn uniform_length_mean() {
        let l = 3.0;
        let q = MarkDistribution::SegmentUniform { length_lo: 0.0, length_hi: l };
        let pts = vec![Point::new2(0.0, 0.0); 100_000];
        let lengths: Vec<f64> = attach_marks(&pts, &q, 21)
            .into_iter()
            .map(|(_, s)| match s {
                GrainShape::Segment { length, .. } => length,
                _ => unreachable!(),
            })
            .collect();
        assert!(lengths.iter().all(|&x| x > 0.0 && x <= l));
        let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
        let sd = l / 12f64.sqrt() / (lengths.len() as f64).sqrt();
        assert!((mean - l / 2.0).abs() <= 3.0 * sd, "{mean}");
    }

    #[test]
    fn discrete_marks_validate() {
        let bad = MarkDistribution::Discrete {
            atoms: vec![
                MarkAtom { shape: GrainShape::segment(1.0, 0.0), probability: 0.5 },
                MarkAtom { shape: GrainShape::segment(2.0, 0.0), probability: 0.4 },
            ],
        };
        assert!(bad.validate().is_err());
        let mixed = MarkDistribution::Discrete {
            atoms: vec![
                MarkAtom { shape: GrainShape::segment(1.0, 0.0), probability: 0.5 },
                MarkAtom { shape: GrainShape::Disc { radius: 1.0 }, probability: 0.5 },
            ],
        };
        assert!(mixed.validate().is_err());
        let rule = MarkDistribution::SegmentUniform { length_lo: 1.0, length_hi: 3.0 }.discretize(4).unwrap();
        assert_eq!(rule.len(), 16);
        assert_abs_diff_eq!(rule.iter().map(|(_, w)| w).sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn campbell_binomial_is_exact() {
        let chk = campbell_check(&GermLaw::Binomial { m: 7 }, &unit(), |_| 1.0, 100, 3).unwrap();
        assert_eq!(chk.mc_mean, 7.0);
        assert_abs_diff_eq!(chk.integral, 7.0, epsilon = 1e-9);
        assert_eq!(chk.stderr, 0.0);
        assert!(chk.within(4.0));
    }

    #[test]
    fn campbell_poisson_first_coordinate() {
        let law = GermLaw::Poisson { intensity: IntensitySpec::Constant { value: 10.0 } };
        let chk = campbell_check(&law, &unit(), |p| p.coord(0), 20_000, 4).unwrap();
        assert_abs_diff_eq!(chk.integral, 5.0, epsilon = 1e-9);
        assert!(chk.within(4.0), "{chk:?}");
    }

    #[test]
    fn matern_rejected_in_3d() {
        let law = GermLaw::MaternCluster { alpha: 1.0, m: 1.0, cluster_radius: 1.0 };
        assert!(matches!(law.validate(&Window::cube(3, 1.0).unwrap()), Err(Error::Unsupported(_))));
    }
}
