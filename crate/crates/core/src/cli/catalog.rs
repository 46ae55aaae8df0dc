use serde::Serialize;

use super::config::{cube, RunConfig, Study, Tolerances};
use crate::density::EstimatorSchedule;
use crate::geometry::{GrainShape, Point};
use crate::model::{EnvelopeRule, ModelSpec};
use crate::pointproc::{GermLaw, IntensitySpec, MarkDistribution};

/// A ready-to-run configuration mirroring one of the standard examples.
#[derive(Clone, Debug, Serialize)]
pub struct ReferenceModel {
    pub name: &'static str,
    pub description: &'static str,
    /// Results the default study exercises.
    pub exercises: Vec<&'static str>,
    pub config: RunConfig,
}

fn config(germs: GermLaw, shape: GrainShape, study: Study, replications: usize) -> RunConfig {
    RunConfig {
        model: ModelSpec {
            germs,
            window: cube(2, 10.0),
            marks: MarkDistribution::Dirac { shape },
            envelope: EnvelopeRule::ExtendSegments,
            modulation: None,
        },
        study,
        points: vec![Point::new2(5.0, 5.0)],
        radii: vec![0.08, 0.04, 0.02, 0.01],
        schedule: None,
        replications,
        seed: 20240611,
        output_dir: None,
        steps: 256,
        resolution: None,
        tolerances: Tolerances::default(),
    }
}

fn poisson(value: f64) -> GermLaw {
    GermLaw::Poisson { intensity: IntensitySpec::Constant { value } }
}

const SEGMENT_ANGLE: f64 = 0.5;

pub fn list_reference_models() -> Vec<ReferenceModel> {
    let segment = GrainShape::segment(2.0, SEGMENT_ANGLE);
    let mut estimator = config(poisson(0.1), segment.clone(), Study::Estimator, 1);
    estimator.schedule = Some(EstimatorSchedule { c: 0.5, tau: 0.25, n_values: vec![1_000, 10_000, 100_000] });
    let mut outer = config(
        GermLaw::OneGrainUniform,
        GrainShape::WhiskeredDisc { radius: 1.0, whisker: 0.5, angle: 0.7 },
        Study::OuterMinkowski,
        1,
    );
    outer.points.clear();
    outer.radii = vec![0.04, 0.02, 0.01];
    let mut contact = config(GermLaw::OneGrainUniform, GrainShape::Disc { radius: 1.0 }, Study::Contact, 400_000);
    contact.radii = vec![0.0, 0.04, 0.08, 0.16, 0.32];
    vec![
        ReferenceModel {
            name: "segment_boolean",
            description: "Poisson germs of intensity 0.1 carrying segments of length 2",
            exercises: vec!["mean density limit", "void probability"],
            config: config(poisson(0.1), segment.clone(), Study::Density, 1_000_000),
        },
        ReferenceModel {
            name: "segment_estimator",
            description: "segment Boolean model, capacity estimator with R_N = 0.5 N^(-1/4)",
            exercises: vec!["estimator consistency"],
            config: estimator,
        },
        ReferenceModel {
            name: "binomial_segments",
            description: "20 uniform germs in [0,10]^2 carrying segments of length 2",
            exercises: vec!["mean density limit beyond Poisson germs"],
            config: config(GermLaw::Binomial { m: 20 }, segment.clone(), Study::Density, 500_000),
        },
        ReferenceModel {
            name: "matern_segments",
            description: "Matern cluster germs (alpha 0.05, mean 2 children, radius 1) carrying segments of length 2",
            exercises: vec!["mean density limit for clustered germs", "overlap decay"],
            config: config(
                GermLaw::MaternCluster { alpha: 0.05, m: 2.0, cluster_radius: 1.0 },
                segment,
                Study::Overlap,
                1_000_000,
            ),
        },
        ReferenceModel {
            name: "onegrain_circle",
            description: "one unit circle with centre uniform in [0,10]^2",
            exercises: vec!["mean density limit", "specific area of a curve equals twice its density"],
            config: config(GermLaw::OneGrainUniform, GrainShape::Circle { radius: 1.0 }, Study::Density, 1_000_000),
        },
        ReferenceModel {
            name: "onegrain_disc",
            description: "one unit disc with centre uniform in [0,10]^2",
            exercises: vec!["contact distribution derivative at zero", "single-grain specific area"],
            config: contact,
        },
        ReferenceModel {
            name: "disc_boolean",
            description: "Poisson germs of intensity 0.05 carrying unit discs",
            exercises: vec!["Boolean specific area", "contact distribution derivative at zero"],
            config: config(poisson(0.05), GrainShape::Disc { radius: 1.0 }, Study::SpecificArea, 1_000_000),
        },
        ReferenceModel {
            name: "disc_whisker",
            description: "unit disc with a radial whisker of length 0.5 at angle 0.7",
            exercises: vec!["outer Minkowski content", "2x whisker term"],
            config: outer,
        },
    ]
}

pub fn reference(name: &str) -> Option<ReferenceModel> {
    list_reference_models().into_iter().find(|m| m.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::validate;

    #[test]
    fn catalog_is_runnable() {
        let all = list_reference_models();
        assert!(all.len() >= 6);
        for m in &all {
            assert_eq!(validate(&m.config), vec![], "{}", m.name);
            let text = m.config.to_json().unwrap();
            assert_eq!(RunConfig::from_json(&text).unwrap().hash().unwrap(), m.config.hash().unwrap());
        }
        assert!(reference("disc_whisker").unwrap().exercises.contains(&"2x whisker term"));
        assert!(reference("nope").is_none());
    }
}
