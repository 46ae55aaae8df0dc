use germgrain::geometry::{Point, Window};
use germgrain::pointproc::{sample_germs, GermLaw, IntensitySpec};
use germgrain::rng::derive_seed;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

const SEED: u64 = 77;

fn counts(law: &GermLaw, window: &Window, reps: u64) -> Vec<usize> {
    (0..reps).map(|i| sample_germs(law, window, derive_seed(SEED, i)).unwrap().len()).collect()
}

#[test]
fn poisson_counts_pass_chi_square() {
    let w = Window::cube(2, 10.0).unwrap();
    let law = GermLaw::Poisson { intensity: IntensitySpec::Constant { value: 0.3 } };
    let n = counts(&law, &w, 4000);
    let mean = 30.0;
    let dist = Poisson::new(mean).unwrap();
    // bins [0,21], 22..=38 singly, [39,inf)
    let mut edges: Vec<(u64, u64)> = vec![(0, 21)];
    edges.extend((22..=38).map(|k| (k, k)));
    edges.push((39, u64::MAX));
    let total = n.len() as f64;
    let mut stat = 0.0;
    for &(lo, hi) in &edges {
        let observed = n.iter().filter(|&&c| (c as u64) >= lo && (c as u64) <= hi).count() as f64;
        let p = if hi == u64::MAX {
            1.0 - dist.cdf(lo - 1)
        } else if lo == 0 {
            dist.cdf(hi)
        } else {
            (lo..=hi).map(|k| dist.pmf(k)).sum()
        };
        let expected = p * total;
        assert!(expected >= 5.0, "bin {lo}..{hi} too thin");
        stat += (observed - expected).powi(2) / expected;
    }
    let p_value = 1.0 - ChiSquared::new((edges.len() - 1) as f64).unwrap().cdf(stat);
    assert!(p_value > 1e-3, "chi-square {stat:.1}, p = {p_value:.2e}");
}

#[test]
fn binomial_count_is_fixed() {
    let w = Window::cube(2, 10.0).unwrap();
    assert!(counts(&GermLaw::Binomial { m: 17 }, &w, 50).iter().all(|&c| c == 17));
}

#[test]
fn inhomogeneous_germs_follow_intensity() {
    let w = Window::cube(2, 10.0).unwrap();
    let law =
        GermLaw::Poisson { intensity: IntensitySpec::Affine { base: 0.1, gradient: vec![0.02, 0.0], bound: 0.3 } };
    let mut left = 0usize;
    let mut right = 0usize;
    for i in 0..2000 {
        for p in sample_germs(&law, &w, derive_seed(SEED, 10_000 + i)).unwrap() {
            if p.coord(0) < 5.0 {
                left += 1;
            } else {
                right += 1;
            }
        }
    }
    // means 2000 * 50 * (0.1 + 0.02 * 2.5) and 2000 * 50 * (0.1 + 0.02 * 7.5)
    let (el, er) = (15_000.0, 25_000.0);
    assert!((left as f64 - el).abs() < 4.0 * el.sqrt(), "{left}");
    assert!((right as f64 - er).abs() < 4.0 * er.sqrt(), "{right}");
}

#[test]
fn germs_stay_inside_window() {
    let w = Window::new(Point::new2(-1.0, 2.0), Point::new2(3.0, 4.5)).unwrap();
    let laws = [
        GermLaw::Poisson { intensity: IntensitySpec::Constant { value: 2.0 } },
        GermLaw::Binomial { m: 40 },
        GermLaw::MaternCluster { alpha: 0.5, m: 3.0, cluster_radius: 0.4 },
        GermLaw::OneGrainUniform,
    ];
    for law in &laws {
        for i in 0..20 {
            for p in sample_germs(law, &w, derive_seed(SEED, 50_000 + i)).unwrap() {
                assert!(w.contains(&p), "{} {p:?}", law.name());
            }
        }
    }
}
