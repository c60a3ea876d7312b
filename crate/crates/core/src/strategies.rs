//! Where inside a proposed sweet spot to spend the next expensive evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{maximise, refine, BallRegion, EvoConfig, Region};
use crate::gp::GpModel;
use crate::stats::StreamRng;
use crate::sweetspot::SweetSpot;

/// Rule choosing the evaluation location within a sweet spot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    /// The sweet-spot centre.
    Centre,
    /// Where the posterior variance is largest.
    #[serde(rename = "uncertain")]
    MostUncertain,
    /// Where the posterior mean is largest (the predicted worst case).
    #[serde(rename = "worst")]
    WorstCasePrediction,
    /// A uniform draw from the sweet spot.
    #[serde(rename = "random")]
    UniformRandom,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 4] = [
        SamplingStrategy::Centre,
        SamplingStrategy::MostUncertain,
        SamplingStrategy::WorstCasePrediction,
        SamplingStrategy::UniformRandom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingStrategy::Centre => "centre",
            SamplingStrategy::MostUncertain => "uncertain",
            SamplingStrategy::WorstCasePrediction => "worst",
            SamplingStrategy::UniformRandom => "random",
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centre" | "center" => Ok(SamplingStrategy::Centre),
            "uncertain" | "most-uncertain" | "mostuncertain" => Ok(SamplingStrategy::MostUncertain),
            "worst" | "worst-case" | "worstcase" => Ok(SamplingStrategy::WorstCasePrediction),
            "random" | "uniform" => Ok(SamplingStrategy::UniformRandom),
            other => Err(Error::InvalidInput(format!("unknown sampling strategy '{other}'"))),
        }
    }
}

/// Picks the point of `ss` to evaluate next. The result always lies in the
/// sweet spot (clipped to the box).
pub fn select(
    strategy: SamplingStrategy,
    model: &GpModel,
    ss: &SweetSpot,
    evo: &EvoConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let region = BallRegion(ss);
    let x = match strategy {
        SamplingStrategy::Centre => ss.centre().to_vec(),
        SamplingStrategy::UniformRandom => region.sample(rng),
        SamplingStrategy::MostUncertain => inner_argmax(|x| model.predict(x).1, ss, evo, rng)?,
        SamplingStrategy::WorstCasePrediction => inner_argmax(|x| model.predict_mean(x), ss, evo, rng)?,
    };
    assert!(ss.contains(&x), "selected point {x:?} lies outside the sweet spot");
    Ok(x)
}

fn inner_argmax<F>(f: F, ss: &SweetSpot, evo: &EvoConfig, rng: &mut StreamRng) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let region = BallRegion(ss);
    let found = maximise(&f, &region, &evo.with_seed(rng.random()), &[ss.centre().to_vec()])?;
    // region width is the ball diameter, so these steps are radius/8 .. radius*1e-5
    Ok(refine(&f, &region, found.best, found.value, 1.0 / 16.0, 5e-6).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Bounds;
    use crate::gp::{Dataset, KernelParams};
    use crate::stats::SeedStream;
    use crate::sweetspot::SweetSpotShape;

    fn setup() -> (GpModel, SweetSpot) {
        let bounds = Bounds::cube(0.0, 1.0, 1);
        let data = Dataset::new(vec![vec![0.5], vec![0.05]], vec![0.3, -0.2], bounds.clone()).unwrap();
        let model = GpModel::from_params(data, KernelParams::isotropic(0.2, 1.0, 1e-10)).unwrap();
        let ss = SweetSpot::new(vec![0.5], SweetSpotShape::new(0.125).unwrap(), bounds).unwrap();
        (model, ss)
    }

    #[test]
    fn centre_strategy_returns_centre() {
        let (model, ss) = setup();
        let evo = EvoConfig::for_dim(1, 0);
        let x = select(SamplingStrategy::Centre, &model, &ss, &evo, &mut SeedStream::new(1).rng()).unwrap();
        assert_eq!(x, vec![0.5]);
    }

    #[test]
    fn most_uncertain_goes_to_the_boundary() {
        let (model, ss) = setup();
        let evo = EvoConfig::for_dim(1, 0);
        let x = select(SamplingStrategy::MostUncertain, &model, &ss, &evo, &mut SeedStream::new(2).rng()).unwrap();
        assert!((x[0] - 0.5).abs() >= 0.9 * 0.125, "{x:?}");
        // away from the second data point at 0.05
        assert!((x[0] - 0.625).abs() < 0.01 * 0.125);
    }

    #[test]
    fn worst_case_matches_grid() {
        let (model, ss) = setup();
        let evo = EvoConfig::for_dim(1, 0);
        let x = select(SamplingStrategy::WorstCasePrediction, &model, &ss, &evo, &mut SeedStream::new(3).rng()).unwrap();
        let grid = (0..=2000)
            .map(|i| 0.375 + 0.25 * i as f64 / 2000.0)
            .max_by(|a, b| model.predict_mean(&[*a]).total_cmp(&model.predict_mean(&[*b])))
            .unwrap();
        assert!((x[0] - grid).abs() < 0.01 * 0.125, "{x:?} vs {grid}");
    }

    #[test]
    fn random_is_reproducible_and_inside() {
        let (model, ss) = setup();
        let evo = EvoConfig::for_dim(1, 0);
        let a = select(SamplingStrategy::UniformRandom, &model, &ss, &evo, &mut SeedStream::new(4).rng()).unwrap();
        let b = select(SamplingStrategy::UniformRandom, &model, &ss, &evo, &mut SeedStream::new(4).rng()).unwrap();
        assert_eq!(a, b);
        assert!(ss.contains(&a));
    }

    #[test]
    fn names_round_trip() {
        for s in SamplingStrategy::ALL {
            assert_eq!(s.as_str().parse::<SamplingStrategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.as_str()));
        }
        assert!("nope".parse::<SamplingStrategy>().is_err());
    }
}
