//! Specific area, outer Minkowski content and the local spherical contact
//! distribution of germ-grain sets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::density::{curve, mark_nodes, tally, CurvePoint, DensityEstimate, Extrapolation, RatioCurve};
use crate::error::{invalid, Error, Result};
use crate::geometry::{outer_minkowski_curve, translated_grain_integral, GrainShape, Point, Window};
use crate::mc::{chunked, Moments};
use crate::model::GermGrainModel;
use crate::rng::derive_seed;

/// Split of `ℋ^{d−1}(∂A)` by the volume density of `A` at boundary points:
/// ½ (essential), 0 (whisker) or 1 (interiorised).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDecomposition {
    pub essential: f64,
    pub whisker: f64,
    pub interiorised: f64,
}

impl BoundaryDecomposition {
    pub fn total(&self) -> f64 {
        self.essential + self.whisker + self.interiorised
    }

    /// `𝒮ℳ(A) = ℋ^{d−1}(∂*A) + 2ℋ^{d−1}(∂A ∩ A⁰)`.
    pub fn outer_minkowski_content(&self) -> f64 {
        self.essential + 2.0 * self.whisker
    }
}

/// Test sets with a known boundary split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogShape {
    Disc {
        radius: f64,
    },
    /// Disc with a radial segment attached outward at one boundary point.
    DiscWithWhisker {
        radius: f64,
        whisker: f64,
    },
    Segment {
        length: f64,
    },
    Circle {
        radius: f64,
    },
    Ball {
        radius: f64,
    },
    Sphere {
        radius: f64,
    },
    /// Union of two discs whose centres are `distance` apart.
    TwoDiscs {
        radius1: f64,
        radius2: f64,
        distance: f64,
    },
}

impl CatalogShape {
    /// Catalog entry for a grain shape, if it has one.
    pub fn from_grain(shape: &GrainShape) -> Result<Self> {
        Ok(match *shape {
            GrainShape::Disc { radius } => CatalogShape::Disc { radius },
            GrainShape::WhiskeredDisc { radius, whisker, .. } => CatalogShape::DiscWithWhisker { radius, whisker },
            GrainShape::Segment { length, .. } => CatalogShape::Segment { length },
            GrainShape::Circle { radius } => CatalogShape::Circle { radius },
            GrainShape::Ball { radius } => CatalogShape::Ball { radius },
            GrainShape::Sphere { radius } => CatalogShape::Sphere { radius },
            GrainShape::Polyline { .. } => {
                return Err(Error::Unsupported("polyline grains have no catalog boundary decomposition".into()))
            }
        })
    }
}

fn outer_arc(r: f64, other: f64, d: f64) -> f64 {
    // arc of the circle of radius r lying outside the disc of radius `other`
    let cos = ((d * d + r * r - other * other) / (2.0 * d * r)).clamp(-1.0, 1.0);
    2.0 * r * (PI - cos.acos())
}

pub fn boundary_decomposition(shape: &CatalogShape) -> Result<BoundaryDecomposition> {
    let positive = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(format!("{what} must be positive, got {v}")))
        }
    };
    let split = |essential, whisker| BoundaryDecomposition { essential, whisker, interiorised: 0.0 };
    Ok(match *shape {
        CatalogShape::Disc { radius } => split(2.0 * PI * positive(radius, "radius")?, 0.0),
        CatalogShape::DiscWithWhisker { radius, whisker } => {
            split(2.0 * PI * positive(radius, "radius")?, positive(whisker, "whisker")?)
        }
        CatalogShape::Segment { length } => split(0.0, positive(length, "length")?),
        CatalogShape::Circle { radius } => split(0.0, 2.0 * PI * positive(radius, "radius")?),
        CatalogShape::Ball { radius } => split(4.0 * PI * positive(radius, "radius")?.powi(2), 0.0),
        CatalogShape::Sphere { radius } => split(0.0, 4.0 * PI * positive(radius, "radius")?.powi(2)),
        CatalogShape::TwoDiscs { radius1, radius2, distance } => {
            let (r1, r2) = (positive(radius1, "radius")?, positive(radius2, "radius")?);
            if !(distance >= 0.0) {
                return Err(invalid(format!("distance must be non-negative, got {distance}")));
            }
            let essential = if distance >= r1 + r2 {
                2.0 * PI * (r1 + r2)
            } else if distance <= (r1 - r2).abs() {
                2.0 * PI * r1.max(r2)
            } else {
                outer_arc(r1, r2, distance) + outer_arc(r2, r1, distance)
            };
            split(essential, 0.0)
        }
    })
}

fn require_full_dim(model: &GermGrainModel) -> Result<()> {
    if model.codim() != 0 {
        return Err(Error::Unsupported("lower-dimensional grains: use the mean density routines instead".into()));
    }
    Ok(())
}

/// `E[ℋ^d((Θ_{⊕r} ∖ Θ) ∩ region)] / r` over `radii`, each realization measured
/// on a `resolution^d` grid over `region`.
pub fn mean_outer_content(
    model: &GermGrainModel,
    region: &Window,
    radii: &[f64],
    n: usize,
    rng_seed: u64,
    resolution: usize,
) -> Result<RatioCurve> {
    require_full_dim(model)?;
    if n == 0 {
        return Err(invalid("replications must be positive"));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("radii must be strictly decreasing"));
    }
    let k = radii.len();
    let parts = chunked(
        n,
        || Ok(vec![Moments::default(); k]),
        |acc: &mut Result<Vec<Moments>>, i| {
            let Ok(m) = acc else { return };
            let step = model
                .realize(derive_seed(rng_seed, i as u64))
                .and_then(|real| outer_minkowski_curve(&real.grains, radii, region, resolution));
            match step {
                Ok(values) => {
                    for (mj, (_, est)) in m.iter_mut().zip(values) {
                        mj.push(est.value);
                    }
                }
                Err(e) => *acc = Err(e),
            }
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let entries = (0..k)
        .map(|j| {
            let col: Vec<Moments> = parts.iter().map(|p| p[j]).collect();
            let m = Moments::merge(&col);
            CurvePoint { r: radii[j], value: m.mean(), stderr: m.stderr() }
        })
        .collect();
    RatioCurve::new(entries)
}

/// `P(x ∈ Θ_{⊕r} ∖ Θ)`.
pub fn annulus_probability(
    model: &GermGrainModel,
    x: &Point,
    r: f64,
    n: usize,
    rng_seed: u64,
) -> Result<DensityEstimate> {
    if !(r > 0.0) {
        return Err(invalid(format!("radius must be positive, got {r}")));
    }
    let t = tally(model, x, &[r], n, rng_seed)?;
    Ok(DensityEstimate::from_count(t.annulus(0), n, r, rng_seed, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecificArea {
    pub curve: RatioCurve,
    pub extrapolated: Extrapolation,
}

/// `P(x ∈ Θ_{⊕r} ∖ Θ)/r` along decreasing `radii`, extrapolated to `r = 0`.
pub fn specific_area(
    model: &GermGrainModel,
    x: &Point,
    radii: &[f64],
    n: usize,
    rng_seed: u64,
) -> Result<SpecificArea> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("radii must be positive"));
    }
    let t = tally(model, x, radii, n, rng_seed)?;
    let counts: Vec<usize> = (0..radii.len()).map(|k| t.annulus(k)).collect();
    let curve = curve(radii, &counts, n, rng_seed, Ok)?;
    let extrapolated = curve.extrapolate()?;
    Ok(SpecificArea { curve, extrapolated })
}

/// Integrals over the grain boundary pieces reflected through `x`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BoundaryIntegrals {
    /// `∫_K ∫_{x−∂*Z(s)} λ ℋ^{d−1} Q(ds)`.
    pub essential: f64,
    /// `∫_K ∫_{(x−∂Z(s)) ∩ (x−Z(s)⁰)} λ ℋ^{d−1} Q(ds)`.
    pub whisker: f64,
    /// `∫_K ∫_{x−Z(s)} λ dy Q(ds)` for full-dimensional grains, else 0.
    pub volume: f64,
}

impl BoundaryIntegrals {
    /// The specific-area bracket, with whiskers counted twice.
    pub fn bracket(&self) -> f64 {
        self.essential + 2.0 * self.whisker
    }

    /// Mean density of `∂Θ` for a single grain: every boundary piece once.
    pub fn boundary_density(&self) -> f64 {
        self.essential + self.whisker
    }
}

pub fn boundary_integrals(model: &GermGrainModel, x: &Point, steps: usize) -> Result<BoundaryIntegrals> {
    if x.dim() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: x.dim() });
    }
    let mut out = BoundaryIntegrals::default();
    for (shape, w) in model.marks().discretize(mark_nodes(steps))? {
        CatalogShape::from_grain(&shape)?;
        let lam = |y: &Point| model.intensity(y, &shape);
        let (essential, whisker) = shape.boundary_parts();
        for part in &essential {
            out.essential += w * translated_grain_integral(x, part, lam, steps)?;
        }
        for part in &whisker {
            out.whisker += w * translated_grain_integral(x, part, lam, steps)?;
        }
        if shape.is_full_dimensional() {
            out.volume += w * translated_grain_integral(x, &shape, lam, steps)?;
        }
    }
    Ok(out)
}

/// `σ_Θ(x) = P(x ∉ Θ)·[essential + 2·whisker]` for Boolean models, with
/// `P(x ∉ Θ) = exp(−∫∫ 1_{x−Z(s)} λ dy Q)`.
pub fn boolean_specific_area_theoretical(model: &GermGrainModel, x: &Point, steps: usize) -> Result<f64> {
    if !model.is_boolean() {
        return Err(Error::Unsupported(format!(
            "the closed-form specific area applies only to Boolean models, not {}",
            model.germs().name()
        )));
    }
    let b = boundary_integrals(model, x, steps)?;
    Ok((-b.volume).exp() * b.bracket())
}

/// `σ_Θ(x) = essential + 2·whisker` for a single random grain; no void factor.
pub fn onegrain_specific_area_theoretical(model: &GermGrainModel, x: &Point, steps: usize) -> Result<f64> {
    if !model.is_one_grain() {
        return Err(Error::Unsupported(format!(
            "the one-grain specific area needs a single grain, not {}",
            model.germs().name()
        )));
    }
    Ok(boundary_integrals(model, x, steps)?.bracket())
}

/// Mean density of `∂Θ` at `x` for a single random grain.
pub fn onegrain_boundary_density(model: &GermGrainModel, x: &Point, steps: usize) -> Result<f64> {
    if !model.is_one_grain() {
        return Err(Error::Unsupported("boundary density is implemented for single grains only".into()));
    }
    Ok(boundary_integrals(model, x, steps)?.boundary_density())
}

/// `P(x ∉ Θ)` from the same quadrature, for Boolean or single-grain models.
pub fn void_probability_theoretical(model: &GermGrainModel, x: &Point, steps: usize) -> Result<f64> {
    let b = boundary_integrals(model, x, steps)?;
    if model.is_boolean() {
        Ok((-b.volume).exp())
    } else if model.is_one_grain() {
        Ok(1.0 - b.volume)
    } else {
        Err(Error::Unsupported(format!("no closed-form void probability for {}", model.germs().name())))
    }
}

/// `∂H/∂r|₀ = σ_Θ(x)/P(x ∉ Θ)`.
pub fn contact_derivative_theoretical(model: &GermGrainModel, x: &Point, steps: usize) -> Result<f64> {
    let sigma = if model.is_boolean() {
        boolean_specific_area_theoretical(model, x, steps)?
    } else {
        onegrain_specific_area_theoretical(model, x, steps)?
    };
    let void = void_probability_theoretical(model, x, steps)?;
    if void <= 0.0 {
        return Err(Error::IllConditioned("x is covered almost surely".into()));
    }
    Ok(sigma / void)
}

/// Below this estimated `P(x ∉ Θ)` the contact distribution is refused.
pub const CONDITIONING_THRESHOLD: f64 = 0.05;

/// `H(r, x) = P(x ∈ Θ_{⊕r} | x ∉ Θ)` along increasing radii.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContactCurve {
    pub entries: Vec<CurvePoint>,
    /// Estimated `P(x ∉ Θ)`.
    pub conditioning: f64,
    pub conditioning_stderr: f64,
    pub replications: usize,
}

pub fn contact_distribution(
    model: &GermGrainModel,
    x: &Point,
    radii: &[f64],
    n: usize,
    rng_seed: u64,
) -> Result<ContactCurve> {
    if radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(invalid("contact radii must be non-negative and finite"));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let t = tally(model, x, &sorted, n, rng_seed)?;
    let outside = n - t.inside;
    let conditioning = outside as f64 / n as f64;
    if conditioning < CONDITIONING_THRESHOLD {
        return Err(Error::IllConditioned(format!(
            "estimated P(x not in the set) = {conditioning} is below {CONDITIONING_THRESHOLD}"
        )));
    }
    let entries = sorted
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let h = t.annulus(k) as f64 / outside as f64;
            CurvePoint { r, value: h, stderr: (h * (1.0 - h) / outside as f64).sqrt() }
        })
        .collect();
    Ok(ContactCurve {
        entries,
        conditioning,
        conditioning_stderr: (conditioning * (1.0 - conditioning) / n as f64).sqrt(),
        replications: n,
    })
}

/// Right derivative of `H` at 0: the fit `H = s·r + c·r²` on the three
/// smallest positive radii, i.e. the `r → 0` intercept of `H(r)/r`.
pub fn contact_derivative_at_zero(curve: &ContactCurve) -> Result<Extrapolation> {
    let mut small: Vec<CurvePoint> = curve
        .entries
        .iter()
        .filter(|p| p.r > 0.0)
        .take(3)
        .map(|p| CurvePoint { r: p.r, value: p.value / p.r, stderr: p.stderr / p.r })
        .collect();
    small.reverse();
    if small.len() < 3 {
        return Err(invalid("the contact derivative needs at least three positive radii"));
    }
    RatioCurve::new(small)?.extrapolate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x5() -> Point {
        Point::new2(5.0, 5.0)
    }
    use crate::model::{EnvelopeRule, ModelSpec};
    use crate::pointproc::{GermLaw, IntensitySpec, MarkDistribution};
    use approx::assert_abs_diff_eq;

    fn model(germs: GermLaw, shape: GrainShape) -> GermGrainModel {
        GermGrainModel::new(ModelSpec {
            germs,
            window: Window::cube(2, 10.0).unwrap(),
            marks: MarkDistribution::Dirac { shape },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        })
        .unwrap()
    }

    fn poisson(l: f64) -> GermLaw {
        GermLaw::Poisson { intensity: IntensitySpec::Constant { value: l } }
    }

    #[test]
    fn decomposition_catalog() {
        let d = boundary_decomposition(&CatalogShape::Disc { radius: 1.0 }).unwrap();
        assert_eq!((d.essential, d.whisker, d.interiorised), (2.0 * PI, 0.0, 0.0));
        let s = boundary_decomposition(&CatalogShape::Segment { length: 1.0 }).unwrap();
        assert_eq!((s.essential, s.whisker, s.interiorised), (0.0, 1.0, 0.0));
        assert_eq!(s.outer_minkowski_content(), 2.0);
        let w = boundary_decomposition(&CatalogShape::DiscWithWhisker { radius: 1.0, whisker: 0.5 }).unwrap();
        assert_abs_diff_eq!(w.outer_minkowski_content(), 2.0 * PI + 1.0, epsilon = 1e-15);
        // two unit discs at distance 1: each keeps an outer arc of angle 4π/3
        let two =
            boundary_decomposition(&CatalogShape::TwoDiscs { radius1: 1.0, radius2: 1.0, distance: 1.0 }).unwrap();
        assert_abs_diff_eq!(two.essential, 8.0 * PI / 3.0, epsilon = 1e-12);
        let apart =
            boundary_decomposition(&CatalogShape::TwoDiscs { radius1: 1.0, radius2: 2.0, distance: 5.0 }).unwrap();
        assert_abs_diff_eq!(apart.essential, 6.0 * PI, epsilon = 1e-12);
        let nested =
            boundary_decomposition(&CatalogShape::TwoDiscs { radius1: 1.0, radius2: 3.0, distance: 1.0 }).unwrap();
        assert_abs_diff_eq!(nested.essential, 6.0 * PI, epsilon = 1e-12);
        assert!(CatalogShape::from_grain(&GrainShape::Polyline {
            vertices: vec![Point::new2(0.0, 0.0), Point::new2(1.0, 0.0)]
        })
        .is_err());
        assert!(boundary_decomposition(&CatalogShape::Disc { radius: -1.0 }).is_err());
    }

    #[test]
    fn decomposition_sums_to_boundary() {
        for shape in [
            CatalogShape::Disc { radius: 0.7 },
            CatalogShape::DiscWithWhisker { radius: 0.7, whisker: 0.3 },
            CatalogShape::Segment { length: 2.5 },
            CatalogShape::Circle { radius: 1.5 },
            CatalogShape::TwoDiscs { radius1: 1.0, radius2: 0.6, distance: 1.2 },
        ] {
            let d = boundary_decomposition(&shape).unwrap();
            let boundary = match shape {
                CatalogShape::Disc { radius } => 2.0 * PI * radius,
                CatalogShape::DiscWithWhisker { radius, whisker } => 2.0 * PI * radius + whisker,
                CatalogShape::Segment { length } => length,
                CatalogShape::Circle { radius } => 2.0 * PI * radius,
                _ => {
                    // brute-force arc count on the two circles
                    let (c2, r1, r2) = (Point::new2(1.2, 0.0), 1.0, 0.6);
                    let n = 200_000;
                    let mut len = 0.0;
                    for i in 0..n {
                        let t = (i as f64 + 0.5) / n as f64 * 2.0 * PI;
                        let p = Point::new2(r1 * t.cos(), r1 * t.sin());
                        if p.distance(&c2) > r2 {
                            len += 2.0 * PI * r1 / n as f64;
                        }
                        let q = c2 + Point::new2(r2 * t.cos(), r2 * t.sin());
                        if q.norm() > r1 {
                            len += 2.0 * PI * r2 / n as f64;
                        }
                    }
                    assert_abs_diff_eq!(d.essential, len, epsilon = 1e-4);
                    len
                }
            };
            assert_abs_diff_eq!(d.total(), boundary, epsilon = 1e-4);
        }
    }

    #[test]
    fn theoretical_specific_areas() {
        let boolean = model(poisson(0.05), GrainShape::Disc { radius: 1.0 });
        let sigma = boolean_specific_area_theoretical(&boolean, &x5(), 64).unwrap();
        assert_abs_diff_eq!(sigma, (-0.05 * PI).exp() * 0.1 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(contact_derivative_theoretical(&boolean, &x5(), 64).unwrap(), 0.1 * PI, epsilon = 1e-12);
        let one = model(GermLaw::OneGrainUniform, GrainShape::Disc { radius: 1.0 });
        let s1 = onegrain_specific_area_theoretical(&one, &x5(), 64).unwrap();
        assert_abs_diff_eq!(s1, 2.0 * PI / 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            contact_derivative_theoretical(&one, &x5(), 64).unwrap(),
            (2.0 * PI / 100.0) / (1.0 - PI / 100.0),
            epsilon = 1e-12
        );
        assert!(matches!(boolean_specific_area_theoretical(&one, &x5(), 64), Err(Error::Unsupported(_))));
        assert!(matches!(onegrain_specific_area_theoretical(&boolean, &x5(), 64), Err(Error::Unsupported(_))));
        // a whisker at a generic angle enters the bracket twice
        let whiskered = model(poisson(0.05), GrainShape::WhiskeredDisc { radius: 1.0, whisker: 0.5, angle: 0.7 });
        let b = boundary_integrals(&whiskered, &x5(), 256).unwrap();
        assert_abs_diff_eq!(b.bracket(), 0.05 * (2.0 * PI + 1.0), epsilon = 1e-12);
        // tiny intensity: σ/λ → 2πR
        let faint = model(poisson(1e-9), GrainShape::Disc { radius: 1.0 });
        assert_abs_diff_eq!(
            boolean_specific_area_theoretical(&faint, &x5(), 64).unwrap() / 1e-9,
            2.0 * PI,
            epsilon = 1e-6
        );
    }

    #[test]
    fn one_grain_and_boolean_formulas_differ_by_void_factor() {
        // same grain law, evaluated by the two formulas on the one-grain intensity
        let one = model(GermLaw::OneGrainUniform, GrainShape::Disc { radius: 1.0 });
        let b = boundary_integrals(&one, &x5(), 64).unwrap();
        let as_boolean = (-b.volume).exp() * b.bracket();
        let direct = onegrain_specific_area_theoretical(&one, &x5(), 64).unwrap();
        assert_abs_diff_eq!(as_boolean / direct, (-PI / 100.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn whisker_gap_against_boundary_density() {
        let plain = model(GermLaw::OneGrainUniform, GrainShape::Disc { radius: 1.0 });
        assert_abs_diff_eq!(
            onegrain_specific_area_theoretical(&plain, &x5(), 64).unwrap(),
            onegrain_boundary_density(&plain, &x5(), 64).unwrap(),
            epsilon = 1e-15
        );
        let whiskered =
            model(GermLaw::OneGrainUniform, GrainShape::WhiskeredDisc { radius: 1.0, whisker: 0.5, angle: 0.7 });
        let sigma = onegrain_specific_area_theoretical(&whiskered, &x5(), 256).unwrap();
        let boundary = onegrain_boundary_density(&whiskered, &x5(), 256).unwrap();
        let whisker_density = boundary_integrals(&whiskered, &x5(), 256).unwrap().whisker;
        assert_abs_diff_eq!(whisker_density, 0.5 / 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma - boundary, whisker_density, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma - 2.0 * PI / 100.0, 2.0 * whisker_density, epsilon = 1e-12);
    }

    #[test]
    fn annulus_trivial_cases() {
        let empty = model(poisson(0.0), GrainShape::Disc { radius: 1.0 });
        assert_eq!(annulus_probability(&empty, &x5(), 0.1, 100, 1).unwrap().value, 0.0);
        let sure = GermGrainModel::new(ModelSpec {
            germs: GermLaw::Binomial { m: 1 },
            window: Window::new(Point::new2(4.99, 4.99), Point::new2(5.01, 5.01)).unwrap(),
            marks: MarkDistribution::Dirac { shape: GrainShape::Disc { radius: 1.0 } },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        })
        .unwrap();
        assert_eq!(annulus_probability(&sure, &x5(), 0.1, 100, 1).unwrap().value, 0.0);
        assert!(matches!(contact_distribution(&sure, &x5(), &[0.1], 100, 1), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn annulus_matches_boolean_oracle() {
        let m = model(poisson(0.05), GrainShape::Disc { radius: 1.0 });
        let r = 0.1;
        let oracle = (-0.05 * PI).exp() - (-0.05 * PI * (1.0 + r) * (1.0 + r)).exp();
        let est = annulus_probability(&m, &x5(), r, 200_000, 2).unwrap();
        assert!((est.value - oracle).abs() <= 4.0 * est.stderr, "{} vs {oracle}", est.value);
    }

    #[test]
    fn contact_curve_shape() {
        let m = model(GermLaw::OneGrainUniform, GrainShape::Disc { radius: 1.0 });
        let c = contact_distribution(&m, &x5(), &[0.4, 0.0, 0.1, 30.0, 0.2], 20_000, 3).unwrap();
        assert_eq!(c.entries[0].value, 0.0);
        assert_eq!(c.entries.last().unwrap().value, 1.0);
        assert!(c.entries.windows(2).all(|w| w[0].value <= w[1].value));
        // H(r) = ((1+r)² − 1)π / (100 − π)
        let h = |r: f64| PI * ((1.0 + r).powi(2) - 1.0) / (100.0 - PI);
        for p in &c.entries[1..4] {
            assert!((p.value - h(p.r)).abs() <= 4.0 * p.stderr + 1e-12, "{:?}", p);
        }
        let ds = contact_derivative_at_zero(&c).unwrap();
        assert!(ds.value > 0.0);
        let short = ContactCurve { entries: c.entries[..3].to_vec(), ..c.clone() };
        assert!(contact_derivative_at_zero(&short).is_err());
    }

    #[test]
    fn contact_derivative_is_specific_area_over_conditioning() {
        let m = model(poisson(0.05), GrainShape::Disc { radius: 1.0 });
        let radii = [0.08, 0.04, 0.02, 0.01];
        let sa = specific_area(&m, &x5(), &radii, 50_000, 5).unwrap();
        let c = contact_distribution(&m, &x5(), &radii, 50_000, 5).unwrap();
        let ds = contact_derivative_at_zero(&c).unwrap();
        assert_abs_diff_eq!(ds.value, sa.extrapolated.value / c.conditioning, epsilon = 1e-12);
    }

    #[test]
    fn far_point_has_zero_derivative() {
        let m = GermGrainModel::new(ModelSpec {
            germs: GermLaw::OneGrainUniform,
            window: Window::new(Point::new2(0.0, 0.0), Point::new2(1.0, 1.0)).unwrap(),
            marks: MarkDistribution::Dirac { shape: GrainShape::Disc { radius: 0.2 } },
            envelope: EnvelopeRule::Identity,
            modulation: None,
        })
        .unwrap();
        let far = Point::new2(5.0, 5.0);
        let c = contact_distribution(&m, &far, &[0.01, 0.02, 0.04], 1000, 1).unwrap();
        assert_eq!(contact_derivative_at_zero(&c).unwrap().value, 0.0);
        assert_eq!(onegrain_specific_area_theoretical(&m, &far, 64).unwrap(), 0.0);
    }

    #[test]
    fn mean_outer_content_of_one_disc() {
        let m = model(GermLaw::OneGrainUniform, GrainShape::Disc { radius: 1.0 });
        let region = Window::new(Point::new2(-2.0, -2.0), Point::new2(12.0, 12.0)).unwrap();
        let curve = mean_outer_content(&m, &region, &[0.4, 0.2, 0.1], 4, 7, 1400).unwrap();
        for p in &curve.entries {
            let exact = 2.0 * PI + PI * p.r;
            assert!((p.value - exact).abs() / exact < 0.02, "{} vs {exact}", p.value);
        }
        let empty = model(poisson(0.0), GrainShape::Disc { radius: 1.0 });
        let zero = mean_outer_content(&empty, &region, &[0.2, 0.1], 3, 7, 64).unwrap();
        assert!(zero.entries.iter().all(|p| p.value == 0.0));
        let segs = model(poisson(0.1), GrainShape::segment(1.0, 0.0));
        assert!(mean_outer_content(&segs, &region, &[0.1], 1, 1, 64).is_err());
    }

    #[test]
    fn circle_specific_area_is_twice_density() {
        let m = model(GermLaw::OneGrainUniform, GrainShape::Circle { radius: 1.0 });
        assert_abs_diff_eq!(
            onegrain_specific_area_theoretical(&m, &x5(), 64).unwrap(),
            4.0 * PI / 100.0,
            epsilon = 1e-12
        );
    }
}
