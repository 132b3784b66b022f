use serde::{Deserialize, Serialize};

use super::{SynthError, ViewpointParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Distance,
    Alpha,
    Beta,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Distance => "distance",
            Self::Alpha => "alpha",
            Self::Beta => "beta",
        }
    }
}

impl std::fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// View B is view A with one variable offset by `start, start + step, ...,
/// end`, repeated over `pairs_per_step` scene seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub pairs_per_step: usize,
    pub base: ViewpointParams,
}

impl PairSweepSpec {
    pub fn new(variable: SweepVariable) -> Self {
        Self {
            variable,
            start: 5.0,
            end: 40.0,
            step: 1.0,
            pairs_per_step: 25,
            base: ViewpointParams::new(10.0, 0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.start <= self.end) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(SynthError::InvalidSettings(format!(
                "sweep: start {} must be <= end {}",
                self.start, self.end
            )));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SynthError::InvalidSettings(format!(
                "sweep: step must be > 0, got {}",
                self.step
            )));
        }
        if self.pairs_per_step == 0 {
            return Err(SynthError::InvalidSettings(
                "sweep: pairs_per_step must be >= 1".into(),
            ));
        }
        self.base.validate()
    }

    pub fn offsets(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }

    pub fn view_b(&self, offset: f64) -> ViewpointParams {
        let mut v = self.base;
        match self.variable {
            SweepVariable::Distance => v.distance += offset,
            SweepVariable::Alpha => v.alpha += offset,
            SweepVariable::Beta => v.beta += offset,
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPair {
    pub pair_id: String,
    pub offset: f64,
    pub scene_seed: u64,
    pub view_a: ViewpointParams,
    pub view_b: ViewpointParams,
}

/// All pairs of a sweep, ordered by offset then seed. Pair ids sort in the
/// same order.
pub fn make_pair_sweep(spec: &PairSweepSpec, base_seed: u64) -> Result<Vec<SweepPair>, SynthError> {
    spec.validate()?;
    let mut pairs = Vec::new();
    for offset in spec.offsets() {
        let view_b = spec.view_b(offset);
        view_b.validate()?;
        for k in 0..spec.pairs_per_step {
            pairs.push(SweepPair {
                pair_id: format!("{}_{:07.2}_{:03}", spec.variable, offset, k),
                offset,
                scene_seed: base_seed.wrapping_add(k as u64),
                view_a: spec.base,
                view_b,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_protocol_has_900_pairs() {
        for var in [
            SweepVariable::Distance,
            SweepVariable::Alpha,
            SweepVariable::Beta,
        ] {
            let pairs = make_pair_sweep(&PairSweepSpec::new(var), 0).unwrap();
            assert_eq!(pairs.len(), 900);
            let mut ids: Vec<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
            let sorted = {
                let mut s = ids.clone();
                s.sort_unstable();
                s
            };
            assert_eq!(ids, sorted);
            ids.dedup();
            assert_eq!(ids.len(), 900);
        }
    }

    #[test]
    fn beta_offset_40() {
        let spec = PairSweepSpec::new(SweepVariable::Beta);
        let pairs = make_pair_sweep(&spec, 0).unwrap();
        let last = pairs.last().unwrap();
        assert_eq!(last.offset, 40.0);
        assert_eq!(last.view_b, ViewpointParams::new(10.0, 0.0, 40.0));
        assert_eq!(last.view_a, ViewpointParams::new(10.0, 0.0, 0.0));
    }

    #[test]
    fn offsets_inclusive() {
        let mut spec = PairSweepSpec::new(SweepVariable::Alpha);
        spec.step = 5.0;
        assert_eq!(
            spec.offsets(),
            vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
        );
        spec.start = 50.0;
        assert!(spec.validate().is_err());
    }
}
