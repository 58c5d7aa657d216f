use classmix_core::models::{reference_model, Family, Inner, ModelSpec, ParamVector};
use classmix_core::pipeline::read_records;
use classmix_core::rng::seeded_rng;
use classmix_core::selection::build_candidates;
use classmix_core::FeatureVector;
use rand::Rng;

use crate::Check;

fn classes(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

// Parameters inside each family's domain.
fn draw_params<R: Rng>(spec: &ModelSpec, rng: &mut R) -> Vec<f64> {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut p = match spec.family() {
        Family::Powerlaw => vec![rng.random_range(-2.0..2.0), rng.random_range(0.1..2.0), rng.random_range(-1.0..1.0)],
        Family::ArctanScaling => {
            vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)]
        }
        Family::Logarithmic => {
            vec![rng.random_range(-2.0..2.0), rng.random_range(0.05..2.0), rng.random_range(-1.0..1.0)]
        }
        Family::AlgebraicRoot => {
            vec![sign * rng.random_range(0.2..3.0), rng.random_range(0.3..2.0), rng.random_range(-1.0..1.0)]
        }
        Family::ArctanRegression => {
            vec![rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)]
        }
    };
    for _ in 0..spec.features().len() {
        p.push(rng.random_range(0.1..2.0));
        if spec.inner().weights_per_feature() == 2 {
            p.push(rng.random_range(0.1..5.0));
        }
    }
    p
}

pub fn gradient_check() -> Check {
    let inners = [Inner::TotalNLinear, Inner::PerClassLinear, Inner::PerClassArctan2, Inner::TotalNArctan2];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for family in Family::SCALING_LAWS {
        for inner in inners {
            let spec = ModelSpec::new(family, inner, classes(4)).map_err(|e| e.to_string())?;
            let mut rng = seeded_rng(checked as u64);
            for draw in 0..1000 {
                let p = draw_params(&spec, &mut rng);
                let x = FeatureVector::new(
                    (0..4).map(|_| rng.random_range(0.05..1.0)).collect(),
                    rng.random_range(0.05..1.0),
                    rng.random_range(0.05..1.0),
                );
                let grad = spec.gradient(&ParamVector(p.clone()), &x).map_err(|e| e.to_string())?;
                for i in 0..p.len() {
                    let h = 1e-6 * p[i].abs().max(1.0);
                    let mut up = p.clone();
                    let mut down = p.clone();
                    up[i] += h;
                    down[i] -= h;
                    let fu = spec.evaluate(&ParamVector(up), &x).map_err(|e| e.to_string())?;
                    let fd = spec.evaluate(&ParamVector(down), &x).map_err(|e| e.to_string())?;
                    let numeric = (fu - fd) / (2.0 * h);
                    let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
                    if err > 1e-5 {
                        return Err(format!("{family:?}/{inner:?} draw {draw} param {i}: {} vs {numeric}", grad[i]));
                    }
                    worst = worst.max(err);
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} family/inner pairs x 1000 draws, worst relative error {worst:.1e}"))
}

pub fn candidate_count() -> Check {
    let set = build_candidates(&classes(47)).map_err(|e| e.to_string())?;
    match set.len() {
        1225 => Ok("47 classes give 1225 candidates".into()),
        n => Err(format!("47 classes give {n} candidates")),
    }
}

const SAMPLE: &str = "\
row,accs,plane,car,bird,cat,deer,dog,frog,horse,ship,truck,epochs,total_n
0,0.18,145,31,97,496,1096,307,2382,10,373,63,10,5000
1,0.21,145,31,97,496,1096,307,2382,10,373,63,15,5000
";

pub fn ingestion_anchor() -> Check {
    let table = read_records(SAMPLE.as_bytes()).map_err(|e| e.to_string())?;
    let r = table.records.first().ok_or("no records")?;
    let counts: u64 = r.class_counts.iter().sum();
    if r.accuracy == 0.18 && counts == 5000 && r.total_n == 5000 && r.epoch == 10 && table.class_names.len() == 10 {
        Ok(format!(
            "row 0: acc {}, {} classes summing to {counts}, epoch {}",
            r.accuracy,
            r.class_counts.len(),
            r.epoch
        ))
    } else {
        Err(format!("row 0 parsed as {r:?}"))
    }
}

pub fn evaluation_anchors() -> Check {
    let (_, spec) = reference_model(2, classes(10)).map_err(|e| e.to_string())?;
    let x = FeatureVector::new(vec![0.1; 10], 1.0, 1.0);
    let y = spec.evaluate(&ParamVector(vec![0.27, 0.50, 0.53, 0.96, 0.26]), &x).map_err(|e| e.to_string())?;
    let expected = 0.27 * (0.96f64 + 0.26).sqrt() + 0.53;
    if (y - expected).abs() > 1e-12 {
        return Err(format!("total_n linear model gives {y}, expected {expected}"));
    }

    let spec = ModelSpec::custom(Family::ArctanRegression, classes(1), &["total_n"]).map_err(|e| e.to_string())?;
    let z = spec
        .evaluate(&ParamVector(vec![0.39, 18.25, 0.27, 0.0]), &FeatureVector::new(vec![0.0], 0.0, 0.0))
        .map_err(|e| e.to_string())?;
    let expected_z = 0.39 + 0.27 * 18.25f64.atan();
    if (z - expected_z).abs() > 1e-12 {
        return Err(format!("arctan intercept gives {z}, expected {expected_z}"));
    }
    Ok(format!("total_n linear {y:.6}, arctan intercept {z:.6}"))
}
