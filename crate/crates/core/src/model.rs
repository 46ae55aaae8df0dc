//! Germ-grain models `Θ = ⋃ xᵢ + Z(sᵢ)`: realizations, coverage queries,
//! covering counts and the measure of a realization inside a region.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::geometry::{translated_grain_integral, DistanceField, Grain, GrainShape, Point, RegularityEnvelope, Window};
use crate::pointproc::{attach_marks, intensity_at, sample_germs_with, GermLaw, MarkDistribution};
use crate::rng::{stream_rng, STREAM_GERMS, STREAM_THINNING};

/// How the regularity envelope `Ξ(s)` is built from a mark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeRule {
    /// `Ξ(s) = Z(s)`.
    #[default]
    Identity,
    /// Segments shorter than 2 are extended about their centre to length 2.
    ExtendSegments,
}

impl EnvelopeRule {
    pub fn envelope(self, shape: &GrainShape) -> RegularityEnvelope {
        match self {
            EnvelopeRule::Identity => RegularityEnvelope::identity(shape),
            EnvelopeRule::ExtendSegments => RegularityEnvelope::extended_segment(shape),
        }
    }
}

pub type ModulationFn = Arc<dyn Fn(&Point, &GrainShape) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomModulation {
    pub label: String,
    pub func: ModulationFn,
}

impl fmt::Debug for CustomModulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({})", self.label)
    }
}

/// Retention probability `p(x, s) ∈ [0, 1]` applied after marking, so the
/// marked intensity becomes `λ(x) p(x, s)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulation {
    /// `base + gradient·x`, which must stay within `[0, 1]` on the sampling window.
    Affine { base: f64, gradient: Vec<f64> },
    #[serde(skip)]
    Custom(CustomModulation),
}

impl Modulation {
    pub fn value(&self, x: &Point, s: &GrainShape) -> f64 {
        match self {
            Modulation::Affine { base, gradient } => {
                base + gradient.iter().zip(x.coords()).map(|(g, c)| g * c).sum::<f64>()
            }
            Modulation::Custom(c) => (c.func)(x, s),
        }
    }
}

/// Serializable description of a germ-grain model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub germs: GermLaw,
    pub window: Window,
    pub marks: MarkDistribution,
    #[serde(default)]
    pub envelope: EnvelopeRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Modulation>,
}

/// A validated germ-grain model.
///
/// For whole-space laws (Poisson, Matérn) `window` is the observation window
/// and germs are sampled on it dilated by the largest grain radius. For
/// finite laws (binomial, one grain) `window` is the region the germs live in.
#[derive(Clone, Debug)]
pub struct GermGrainModel {
    spec: ModelSpec,
    grain_dim: usize,
    max_radius: f64,
    fingerprint: u64,
}

impl GermGrainModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.marks.validate()?;
        let d = spec.window.dim();
        if spec.marks.ambient_dim() != d {
            return Err(Error::ModelValidation(format!(
                "marks live in dimension {} but the window has dimension {d}",
                spec.marks.ambient_dim()
            )));
        }
        let max_radius = spec.marks.max_bounding_radius();
        if !max_radius.is_finite() {
            return Err(Error::ModelValidation("grain family has no finite bounding radius".into()));
        }
        let sampling = if spec.germs.is_whole_space() { spec.window.dilate(max_radius) } else { spec.window };
        spec.germs.validate(&sampling)?;
        if let Some(Modulation::Affine { gradient, .. }) = &spec.modulation {
            if gradient.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: gradient.len() });
            }
        }
        let digest = Sha256::digest(format!("{spec:?}").as_bytes());
        let fingerprint = u64::from_be_bytes(digest[..8].try_into().expect("digest"));
        Ok(GermGrainModel { grain_dim: spec.marks.hausdorff_dim(), spec, max_radius, fingerprint })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn germs(&self) -> &GermLaw {
        &self.spec.germs
    }

    pub fn window(&self) -> &Window {
        &self.spec.window
    }

    pub fn marks(&self) -> &MarkDistribution {
        &self.spec.marks
    }

    pub fn grain_dim(&self) -> usize {
        self.grain_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.spec.window.dim()
    }

    /// `d − n`.
    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.grain_dim
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn max_bounding_radius(&self) -> f64 {
        self.max_radius
    }

    /// Region the germs are drawn from.
    pub fn sampling_window(&self) -> Window {
        if self.spec.germs.is_whole_space() {
            self.spec.window.dilate(self.max_radius)
        } else {
            self.spec.window
        }
    }

    pub fn envelope(&self, shape: &GrainShape) -> RegularityEnvelope {
        self.spec.envelope.envelope(shape)
    }

    /// Marked intensity density `λ(y, s)`, zero outside the sampling window.
    pub fn intensity(&self, y: &Point, s: &GrainShape) -> f64 {
        let sw = self.sampling_window();
        let Ok(base) = intensity_at(&self.spec.germs, &sw, y) else {
            return 0.0;
        };
        match &self.spec.modulation {
            Some(m) => base * m.value(y, s).clamp(0.0, 1.0),
            None => base,
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self.spec.germs, GermLaw::Poisson { .. })
    }

    pub fn is_one_grain(&self) -> bool {
        matches!(self.spec.germs, GermLaw::OneGrainUniform)
    }

    /// Builds one realization; deterministic in `rng_seed`.
    pub fn realize(&self, rng_seed: u64) -> Result<Realization> {
        let sw = self.sampling_window();
        let germs = sample_germs_with(&self.spec.germs, &sw, &mut stream_rng(rng_seed, STREAM_GERMS))?;
        let marked = attach_marks(&germs, &self.spec.marks, rng_seed);
        let grains = match &self.spec.modulation {
            None => marked.into_iter().map(|(x, s)| Grain::new(x, s)).collect(),
            Some(m) => {
                let mut rng = stream_rng(rng_seed, STREAM_THINNING);
                let mut out = Vec::with_capacity(marked.len());
                for (x, s) in marked {
                    let p = m.value(&x, &s);
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::ModelValidation(format!("modulation {p} at {x} is outside [0, 1]")));
                    }
                    if rng.random::<f64>() < p {
                        out.push(Grain::new(x, s));
                    }
                }
                out
            }
        };
        Ok(Realization {
            grains,
            seed: rng_seed,
            fingerprint: self.fingerprint,
            ambient_dim: self.ambient_dim(),
            grain_dim: self.grain_dim,
        })
    }
}

/// Builds one realization of `model`.
pub fn realize(model: &GermGrainModel, rng_seed: u64) -> Result<Realization> {
    model.realize(rng_seed)
}

/// Result of [`Realization::measure_in_region`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionMeasure {
    pub value: f64,
    /// Pairs of curve grains sharing a piece of positive length.
    pub overlaps: usize,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub grains: Vec<Grain>,
    pub seed: u64,
    pub fingerprint: u64,
    pub ambient_dim: usize,
    pub grain_dim: usize,
}

impl Realization {
    pub fn from_grains(grains: Vec<Grain>, grain_dim: usize) -> Self {
        let ambient_dim = grains.first().map_or(2, |g| g.shape.ambient_dim());
        Realization { grains, seed: 0, fingerprint: 0, ambient_dim, grain_dim }
    }

    pub fn is_empty(&self) -> bool {
        self.grains.is_empty()
    }

    /// `x ∈ Θ_{⊕r}` (closed enlargement).
    pub fn covers(&self, x: &Point, r: f64) -> bool {
        self.grains.iter().any(|g| g.bbox_distance(x) <= r && g.distance(x) <= r)
    }

    /// Number of grains whose `r`-enlargement contains `x`.
    pub fn covering_count(&self, x: &Point, r: f64) -> usize {
        self.grains.iter().filter(|g| g.bbox_distance(x) <= r && g.distance(x) <= r).count()
    }

    /// Number of unordered pairs of distinct enlarged grains covering `x`.
    pub fn pair_cover_count(&self, x: &Point, r: f64) -> usize {
        let y = self.covering_count(x, r);
        y * y.saturating_sub(1) / 2
    }

    /// Smallest and second smallest grain distances from `x` (`∞` when absent).
    pub fn nearest_distances(&self, x: &Point) -> (f64, f64) {
        let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
        for g in &self.grains {
            if g.bbox_distance(x) >= d2 {
                continue;
            }
            let d = g.distance(x);
            if d < d1 {
                d2 = d1;
                d1 = d;
            } else if d < d2 {
                d2 = d;
            }
        }
        (d1, d2)
    }

    /// Whether `Θ` meets the box `k`.
    pub fn hits_box(&self, k: &Window) -> bool {
        self.grains.iter().any(|g| g.bbox_window().intersects(k) && grain_meets_box(g, k))
    }

    /// Whether `Θ` meets the grain `probe`.
    pub fn hits_grain(&self, probe: &Grain) -> bool {
        self.grains.iter().any(|g| g.bbox_window().intersects(&probe.bbox_window()) && grains_meet(g, probe))
    }

    /// `ℋⁿ(Θ ∩ region)`. Curves are clipped exactly and summed, with pieces
    /// shared by two grains reported in `overlaps`; full-dimensional sets use
    /// a grid of cell size about `tol`.
    pub fn measure_in_region(&self, region: &Window, tol: f64) -> Result<RegionMeasure> {
        if !(tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {tol}")));
        }
        if self.grain_dim == self.ambient_dim {
            let longest = (0..region.dim()).map(|i| region.extent(i)).fold(0.0, f64::max);
            let wanted = (longest / tol).ceil() as usize;
            let warning =
                (wanted < 16).then(|| format!("tolerance {tol} is coarse for the region; using 16 cells per axis"));
            let field = DistanceField::compute(&self.grains, region, wanted.max(16), 0.0)?;
            return Ok(RegionMeasure { value: field.volume_within(0.0), overlaps: 0, warning });
        }
        let mut value = 0.0;
        for g in &self.grains {
            if !g.bbox_window().intersects(region) {
                continue;
            }
            value += clipped_measure(g, region, tol)?;
        }
        Ok(RegionMeasure { value, overlaps: self.curve_overlaps(), warning: None })
    }

    fn curve_overlaps(&self) -> usize {
        let mut count = 0;
        for (i, a) in self.grains.iter().enumerate() {
            for b in &self.grains[i + 1..] {
                if a.bbox_window().intersects(&b.bbox_window()) && curves_share_length(a, b) {
                    count += 1;
                }
            }
        }
        count
    }

    /// One JSON object per grain and line.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for g in &self.grains {
            out.push_str(&serde_json::to_string(g)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn grains_from_json_lines(text: &str) -> Result<Vec<Grain>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let g: Grain = serde_json::from_str(l)?;
                g.shape.validate()?;
                Ok(g.rebuilt())
            })
            .collect()
    }
}

pub fn covers(real: &Realization, x: &Point, r: f64) -> bool {
    real.covers(x, r)
}

pub fn covering_count(real: &Realization, x: &Point, r: f64) -> usize {
    real.covering_count(x, r)
}

pub fn pair_cover_count(real: &Realization, x: &Point, r: f64) -> usize {
    real.pair_cover_count(x, r)
}

pub fn measure_in_region(real: &Realization, region: &Window, tol: f64) -> Result<RegionMeasure> {
    real.measure_in_region(region, tol)
}

/// Straight pieces of a curve grain, in world coordinates.
fn segment_pieces(g: &Grain) -> Vec<(Point, Point)> {
    match &g.shape {
        GrainShape::Segment { length, angle } => {
            let u = Point::new2(angle.cos(), angle.sin()) * (0.5 * length);
            vec![(g.germ - u, g.germ + u)]
        }
        GrainShape::Polyline { vertices } => vertices.windows(2).map(|e| (g.germ + e[0], g.germ + e[1])).collect(),
        _ => vec![],
    }
}

/// Length of the part of segment `ab` inside the box (Liang–Barsky).
fn clip_segment(a: &Point, b: &Point, k: &Window) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..k.dim() {
        let p = a.coord(i);
        let dp = b.coord(i) - p;
        let (lo, hi) = (k.lo().coord(i), k.hi().coord(i));
        if dp == 0.0 {
            if p < lo || p > hi {
                return 0.0;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo - p) / dp, (hi - p) / dp);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return 0.0;
        }
    }
    (t1 - t0) * a.distance(b)
}

/// Arc length of the circle `(c, r)` inside the box.
fn clip_circle(c: &Point, r: f64, k: &Window) -> f64 {
    let mut cuts = vec![0.0, 2.0 * std::f64::consts::PI];
    for i in 0..2 {
        for bound in [k.lo().coord(i), k.hi().coord(i)] {
            let off = (bound - c.coord(i)) / r;
            if off.abs() < 1.0 {
                let base = off.acos();
                // angle measured from the x axis; for i = 1 cos → sin
                let pair = if i == 0 {
                    [base, -base]
                } else {
                    [std::f64::consts::FRAC_PI_2 - base, std::f64::consts::FRAC_PI_2 + base]
                };
                for t in pair {
                    cuts.push(t.rem_euclid(2.0 * std::f64::consts::PI));
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .filter(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            k.contains(&Point::new2(c.coord(0) + r * mid.cos(), c.coord(1) + r * mid.sin()))
        })
        .map(|w| (w[1] - w[0]) * r)
        .sum()
}

fn clipped_measure(g: &Grain, k: &Window, tol: f64) -> Result<f64> {
    Ok(match &g.shape {
        GrainShape::Segment { .. } | GrainShape::Polyline { .. } => {
            segment_pieces(g).iter().map(|(a, b)| clip_segment(a, b, k)).sum()
        }
        GrainShape::Circle { radius } => clip_circle(&g.germ, *radius, k),
        GrainShape::Sphere { radius } => {
            // symmetric shape, so germ − Z = germ + Z
            let steps = ((radius / tol).ceil() as usize).clamp(16, 4096);
            translated_grain_integral(&g.germ, &g.shape, |p| if k.contains(p) { 1.0 } else { 0.0 }, steps)?
        }
        other => return Err(Error::Unsupported(format!("{} grains are not curves", other.kind()))),
    })
}

fn cross2(u: &Point, v: &Point) -> f64 {
    u.coord(0) * v.coord(1) - u.coord(1) * v.coord(0)
}

fn curves_share_length(a: &Grain, b: &Grain) -> bool {
    const EPS: f64 = 1e-12;
    match (&a.shape, &b.shape) {
        (GrainShape::Circle { radius: r1 }, GrainShape::Circle { radius: r2 })
        | (GrainShape::Sphere { radius: r1 }, GrainShape::Sphere { radius: r2 }) => {
            a.germ.distance(&b.germ) <= EPS && (r1 - r2).abs() <= EPS
        }
        _ => {
            let (pa, pb) = (segment_pieces(a), segment_pieces(b));
            pa.iter().any(|(p, q)| {
                pb.iter().any(|(s, t)| {
                    let u = *q - *p;
                    let len = u.norm();
                    if len == 0.0
                        || cross2(&u, &(*t - *s)).abs() > EPS * len * len
                        || cross2(&u, &(*s - *p)).abs() > EPS * len
                    {
                        return false;
                    }
                    let proj = |x: &Point| (*x - *p).dot(&u) / len;
                    let (s0, s1) = (proj(s).min(proj(t)), proj(s).max(proj(t)));
                    s1.min(len) - s0.max(0.0) > EPS
                })
            })
        }
    }
}

/// Primitive pieces used for intersection tests.
enum Piece {
    Seg(Point, Point),
    /// Circle or sphere boundary.
    Shell(Point, f64),
    /// Disc or ball.
    Solid(Point, f64),
}

fn pieces(g: &Grain) -> Vec<Piece> {
    match &g.shape {
        GrainShape::Segment { .. } | GrainShape::Polyline { .. } => {
            segment_pieces(g).into_iter().map(|(a, b)| Piece::Seg(a, b)).collect()
        }
        GrainShape::Circle { radius } | GrainShape::Sphere { radius } => vec![Piece::Shell(g.germ, *radius)],
        GrainShape::Disc { radius } | GrainShape::Ball { radius } => vec![Piece::Solid(g.germ, *radius)],
        GrainShape::WhiskeredDisc { radius, whisker, angle } => {
            let u = Point::new2(angle.cos(), angle.sin());
            vec![Piece::Solid(g.germ, *radius), Piece::Seg(g.germ + u * *radius, g.germ + u * (radius + whisker))]
        }
    }
}

fn grain_meets_box(g: &Grain, k: &Window) -> bool {
    pieces(g).iter().any(|p| match p {
        Piece::Seg(a, b) => clip_segment(a, b, k) > 0.0 || k.contains(a),
        Piece::Shell(c, r) => k.distance(c) <= *r && k.farthest_distance(c) >= *r,
        Piece::Solid(c, r) => k.distance(c) <= *r,
    })
}

fn segment_segment_distance(p: &Point, q: &Point, s: &Point, t: &Point) -> f64 {
    use crate::geometry::point_segment_distance as psd;
    if p.dim() == 2 {
        let (d1, d2) = (cross2(&(*q - *p), &(*s - *p)), cross2(&(*q - *p), &(*t - *p)));
        let (d3, d4) = (cross2(&(*t - *s), &(*p - *s)), cross2(&(*t - *s), &(*q - *s)));
        if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
            return 0.0;
        }
    }
    psd(p, s, t).min(psd(q, s, t)).min(psd(s, p, q)).min(psd(t, p, q))
}

fn pieces_meet(a: &Piece, b: &Piece) -> bool {
    use crate::geometry::point_segment_distance as psd;
    match (a, b) {
        (Piece::Seg(p, q), Piece::Seg(s, t)) => segment_segment_distance(p, q, s, t) <= 0.0,
        (Piece::Seg(p, q), Piece::Solid(c, r)) | (Piece::Solid(c, r), Piece::Seg(p, q)) => psd(c, p, q) <= *r,
        (Piece::Seg(p, q), Piece::Shell(c, r)) | (Piece::Shell(c, r), Piece::Seg(p, q)) => {
            psd(c, p, q) <= *r && c.distance(p).max(c.distance(q)) >= *r
        }
        (Piece::Solid(c1, r1), Piece::Solid(c2, r2)) => c1.distance(c2) <= r1 + r2,
        (Piece::Shell(c1, r1), Piece::Shell(c2, r2)) => {
            let d = c1.distance(c2);
            d <= r1 + r2 && d >= (r1 - r2).abs()
        }
        (Piece::Shell(c1, r1), Piece::Solid(c2, r2)) | (Piece::Solid(c2, r2), Piece::Shell(c1, r1)) => {
            (c1.distance(c2) - r1).abs() <= *r2
        }
    }
}

fn grains_meet(a: &Grain, b: &Grain) -> bool {
    let (pa, pb) = (pieces(a), pieces(b));
    pa.iter().any(|p| pb.iter().any(|q| pieces_meet(p, q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::IntensitySpec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn w10() -> Window {
        Window::cube(2, 10.0).unwrap()
    }

    fn segment_boolean(lambda: f64) -> GermGrainModel {
        GermGrainModel::new(ModelSpec {
            germs: GermLaw::Poisson { intensity: IntensitySpec::Constant { value: lambda } },
            window: w10(),
            marks: MarkDistribution::SegmentUniform { length_lo: 2.0, length_hi: 2.0 },
            envelope: EnvelopeRule::ExtendSegments,
            modulation: None,
        })
        .unwrap()
    }

    #[test]
    fn one_grain_segment() {
        let m = GermGrainModel::new(ModelSpec {
            germs: GermLaw::OneGrainUniform,
            window: w10(),
            marks: MarkDistribution::Dirac { shape: GrainShape::segment(1.0, 0.0) },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        })
        .unwrap();
        assert_eq!(m.realize(1).unwrap().grains.len(), 1);
    }

    #[test]
    fn zero_intensity_realization_is_empty() {
        let r = segment_boolean(0.0).realize(3).unwrap();
        assert!(r.is_empty());
        assert!(!r.covers(&Point::new2(5.0, 5.0), 100.0));
        assert_eq!(r.covering_count(&Point::new2(5.0, 5.0), 1.0), 0);
    }

    #[test]
    fn binomial_circles() {
        let m = GermGrainModel::new(ModelSpec {
            germs: GermLaw::Binomial { m: 5 },
            window: w10(),
            marks: MarkDistribution::Dirac { shape: GrainShape::Circle { radius: 1.0 } },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        })
        .unwrap();
        let r = m.realize(9).unwrap();
        assert_eq!(r.grains.len(), 5);
        assert!(r.grains.iter().all(|g| w10().contains(&g.germ)));
        assert_eq!(r, m.realize(9).unwrap());
    }

    #[test]
    fn whole_space_laws_sample_on_dilated_window() {
        let m = segment_boolean(0.5);
        assert_eq!(m.sampling_window(), w10().dilate(1.0));
        let r = m.realize(4).unwrap();
        assert!(r.grains.iter().any(|g| !w10().contains(&g.germ)));
    }

    #[test]
    fn coverage_queries() {
        let seg = Grain::new(Point::new2(0.0, 0.0), GrainShape::segment(2.0, 0.0));
        let r = Realization::from_grains(vec![seg], 1);
        assert!(r.covers(&Point::new2(0.5, 0.0), 0.0));
        // closed enlargement: distance exactly r counts
        assert!(r.covers(&Point::new2(0.0, 0.25), 0.25));
        assert!(!r.covers(&Point::new2(0.0, 0.25), 0.2499));
        let circles = Realization::from_grains(
            vec![
                Grain::new(Point::new2(0.0, 0.0), GrainShape::Circle { radius: 1.0 }),
                Grain::new(Point::new2(0.0, 0.0), GrainShape::Circle { radius: 1.2 }),
            ],
            1,
        );
        let x = Point::new2(1.1, 0.0);
        assert_eq!(circles.covering_count(&x, 0.15), 2);
        assert_eq!(circles.pair_cover_count(&x, 0.15), 1);
        assert_eq!(circles.pair_cover_count(&x, 0.05), 0);
        let (d1, d2) = circles.nearest_distances(&x);
        assert_abs_diff_eq!(d1, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(d2, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn pair_count_table() {
        let four = Realization::from_grains(
            (0..4)
                .map(|i| Grain::new(Point::new2(0.0, 0.0), GrainShape::Circle { radius: 1.0 + 0.01 * i as f64 }))
                .collect(),
            1,
        );
        let x = Point::new2(1.0, 0.0);
        assert_eq!(four.covering_count(&x, 0.1), 4);
        assert_eq!(four.pair_cover_count(&x, 0.1), 6);
        assert_eq!(four.covering_count(&x, 0.015), 2);
        assert_eq!(four.pair_cover_count(&x, 0.015), 1);
        assert_eq!(four.pair_cover_count(&x, 0.0), 0);
    }

    #[test]
    fn pruning_never_changes_answers() {
        let m = segment_boolean(0.3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in 0..1000 {
            let real = m.realize(k).unwrap();
            let x = Point::new2(10.0 * rng.random::<f64>(), 10.0 * rng.random::<f64>());
            let r = rng.random::<f64>();
            let brute = real.grains.iter().filter(|g| g.distance(&x) <= r).count();
            assert_eq!(real.covering_count(&x, r), brute);
            assert_eq!(real.covers(&x, r), brute > 0);
            let mut all: Vec<f64> = real.grains.iter().map(|g| g.distance(&x)).collect();
            all.sort_by(f64::total_cmp);
            let (d1, d2) = real.nearest_distances(&x);
            assert_eq!(d1, all.first().copied().unwrap_or(f64::INFINITY));
            assert_eq!(d2, all.get(1).copied().unwrap_or(f64::INFINITY));
        }
    }

    #[test]
    fn covers_is_monotone_in_r() {
        let m = segment_boolean(0.2);
        let x = Point::new2(5.0, 5.0);
        for k in 0..200 {
            let real = m.realize(k).unwrap();
            let radii = [0.0, 0.01, 0.1, 0.5, 1.0, 3.0];
            let hits: Vec<bool> = radii.iter().map(|&r| real.covers(&x, r)).collect();
            assert!(hits.windows(2).all(|w| !w[0] || w[1]));
        }
    }

    #[test]
    fn clipped_lengths() {
        let inside =
            Realization::from_grains(vec![Grain::new(Point::new2(5.0, 5.0), GrainShape::segment(2.0, 0.3))], 1);
        let region = Window::new(Point::new2(2.0, 2.0), Point::new2(8.0, 8.0)).unwrap();
        assert_abs_diff_eq!(inside.measure_in_region(&region, 0.01).unwrap().value, 2.0, epsilon = 1e-12);
        let straddle =
            Realization::from_grains(vec![Grain::new(Point::new2(8.0, 5.0), GrainShape::segment(2.0, 0.0))], 1);
        assert_abs_diff_eq!(straddle.measure_in_region(&region, 0.01).unwrap().value, 1.0, epsilon = 1e-12);
        // circle of radius 1 centred on the region edge: half inside
        let circle =
            Realization::from_grains(vec![Grain::new(Point::new2(2.0, 5.0), GrainShape::Circle { radius: 1.0 })], 1);
        assert_abs_diff_eq!(
            circle.measure_in_region(&region, 0.01).unwrap().value,
            std::f64::consts::PI,
            epsilon = 1e-12
        );
        // circle in a corner: quarter inside
        let corner =
            Realization::from_grains(vec![Grain::new(Point::new2(2.0, 2.0), GrainShape::Circle { radius: 1.0 })], 1);
        assert_abs_diff_eq!(
            corner.measure_in_region(&region, 0.01).unwrap().value,
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn clipped_circle_matches_sampling() {
        let region = Window::new(Point::new2(0.3, -0.2), Point::new2(2.0, 0.45)).unwrap();
        let c = Point::new2(0.7, 0.1);
        let r = 0.55;
        let n = 400_000;
        let brute = (0..n)
            .filter(|i| {
                let t = (*i as f64 + 0.5) / n as f64 * 2.0 * std::f64::consts::PI;
                region.contains(&Point::new2(c.coord(0) + r * t.cos(), c.coord(1) + r * t.sin()))
            })
            .count() as f64
            / n as f64
            * 2.0
            * std::f64::consts::PI
            * r;
        assert_abs_diff_eq!(clip_circle(&c, r, &region), brute, epsilon = 1e-5);
    }

    #[test]
    fn overlap_detection() {
        let g = |x: f64| Grain::new(Point::new2(x, 1.0), GrainShape::segment(2.0, 0.0));
        let r = Realization::from_grains(vec![g(1.0), g(1.5), g(5.0)], 1);
        let region = Window::cube(2, 10.0).unwrap();
        let m = r.measure_in_region(&region, 0.1).unwrap();
        assert_eq!(m.overlaps, 1);
        assert_abs_diff_eq!(m.value, 6.0, epsilon = 1e-12);
        let crossing =
            Realization::from_grains(vec![g(1.0), Grain::new(Point::new2(1.0, 1.0), GrainShape::segment(2.0, 1.0))], 1);
        assert_eq!(crossing.measure_in_region(&region, 0.1).unwrap().overlaps, 0);
    }

    #[test]
    fn full_dimensional_measure() {
        let r = Realization::from_grains(vec![Grain::new(Point::new2(5.0, 5.0), GrainShape::Disc { radius: 1.0 })], 2);
        let region = Window::new(Point::new2(3.0, 3.0), Point::new2(5.0, 7.0)).unwrap();
        let m = r.measure_in_region(&region, 0.002).unwrap();
        assert!((m.value - std::f64::consts::FRAC_PI_2).abs() < 1e-3, "{}", m.value);
        assert!(m.warning.is_none());
        assert!(r.measure_in_region(&region, 1.0).unwrap().warning.is_some());
    }

    #[test]
    fn hit_tests() {
        let r = Realization::from_grains(vec![Grain::new(Point::new2(0.0, 0.0), GrainShape::segment(2.0, 0.0))], 1);
        assert!(r.hits_box(&Window::new(Point::new2(0.5, -0.1), Point::new2(0.6, 0.1)).unwrap()));
        assert!(!r.hits_box(&Window::new(Point::new2(0.5, 0.1), Point::new2(0.6, 0.2)).unwrap()));
        let ring = Grain::new(Point::new2(0.0, 0.0), GrainShape::Circle { radius: 0.5 });
        assert!(r.hits_grain(&ring));
        let small_ring = Grain::new(Point::new2(0.0, 2.0), GrainShape::Circle { radius: 0.5 });
        assert!(!r.hits_grain(&small_ring));
        let disc = Grain::new(Point::new2(0.0, 0.3), GrainShape::Disc { radius: 0.31 });
        assert!(r.hits_grain(&disc));
        // box strictly inside a circle does not meet it
        let circ = Realization::from_grains(vec![ring], 1);
        assert!(!circ.hits_box(&Window::new(Point::new2(-0.1, -0.1), Point::new2(0.1, 0.1)).unwrap()));
    }

    #[test]
    fn json_lines_roundtrip() {
        let real = segment_boolean(0.1).realize(2).unwrap();
        let text = real.to_json_lines().unwrap();
        assert_eq!(text.lines().count(), real.grains.len());
        let back = Realization::grains_from_json_lines(&text).unwrap();
        assert_eq!(back, real.grains);
        assert!(text.lines().next().unwrap().contains("\"type\":\"segment\""));
    }

    #[test]
    fn modulation_thins_by_position_and_mark() {
        let spec = ModelSpec {
            germs: GermLaw::Binomial { m: 2000 },
            window: w10(),
            marks: MarkDistribution::SegmentUniform { length_lo: 0.5, length_hi: 1.5 },
            envelope: EnvelopeRule::ExtendSegments,
            modulation: Some(Modulation::Custom(CustomModulation {
                label: "left-long".into(),
                func: Arc::new(|x: &Point, s: &GrainShape| {
                    let long = matches!(s, GrainShape::Segment { length, .. } if *length > 1.0);
                    if x.coord(0) < 5.0 && long {
                        1.0
                    } else {
                        0.0
                    }
                }),
            })),
        };
        let m = GermGrainModel::new(spec).unwrap();
        let r = m.realize(1).unwrap();
        assert!(!r.is_empty());
        assert!(r.grains.iter().all(|g| g.germ.coord(0) < 5.0 && hausdorff(&g.shape) > 1.0));
        let y = Point::new2(2.0, 2.0);
        assert_eq!(m.intensity(&y, &GrainShape::segment(1.2, 0.0)), 20.0);
        assert_eq!(m.intensity(&y, &GrainShape::segment(0.8, 0.0)), 0.0);
    }

    fn hausdorff(s: &GrainShape) -> f64 {
        crate::geometry::hausdorff_measure(s)
    }

    #[test]
    fn envelope_lower_mass_bound_spot_checks() {
        // ℋ¹(Ξ ∩ B_ρ(x)) ≥ γρ for x ∈ Z, ρ ∈ (0, 1), segments extended to length 2
        let q = MarkDistribution::SegmentUniform { length_lo: 0.0, length_hi: 3.0 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let shape = q.sample(&mut rng);
            let env = EnvelopeRule::ExtendSegments.envelope(&shape);
            assert_eq!(env.gamma, 1.0);
            assert!(hausdorff(&env.shape) >= hausdorff(&shape));
            let GrainShape::Segment { length, angle } = shape else { unreachable!() };
            let t = rng.random::<f64>() - 0.5;
            let x = Point::new2(angle.cos(), angle.sin()) * (t * length);
            let rho = rng.random::<f64>();
            let mass = translated_grain_integral(
                &Point::new2(0.0, 0.0),
                &env.shape,
                |y| if y.distance(&(x * -1.0)) <= rho { 1.0 } else { 0.0 },
                20_000,
            )
            .unwrap();
            assert!(mass >= env.gamma * rho - 1e-3, "mass {mass} rho {rho}");
        }
    }

    #[test]
    fn rejects_bad_models() {
        let spec = ModelSpec {
            germs: GermLaw::MaternCluster { alpha: 1.0, m: 1.0, cluster_radius: 1.0 },
            window: Window::cube(3, 1.0).unwrap(),
            marks: MarkDistribution::Dirac { shape: GrainShape::Ball { radius: 0.1 } },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        };
        assert!(matches!(GermGrainModel::new(spec), Err(Error::Unsupported(_))));
        let mismatch = ModelSpec {
            germs: GermLaw::OneGrainUniform,
            window: Window::cube(3, 1.0).unwrap(),
            marks: MarkDistribution::Dirac { shape: GrainShape::segment(1.0, 0.0) },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        };
        assert!(GermGrainModel::new(mismatch).is_err());
    }
}
