use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::wrap;
use crate::error::{Result, StoError};

/// `N ≥ 1` points of 𝕋 representing the empirical measure `(1/N) Σ δ_{x_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParticleEnsemble {
    points: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ParticleEnsemble {
    type Error = StoError;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        ParticleEnsemble::new(points)
    }
}

impl From<ParticleEnsemble> for Vec<f64> {
    fn from(e: ParticleEnsemble) -> Self {
        e.points
    }
}

impl ParticleEnsemble {
    /// Coordinates are reduced mod 1.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(StoError::Domain("particle ensemble is empty".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(StoError::Domain("non-finite particle coordinate".into()));
        }
        Ok(ParticleEnsemble {
            points: points.into_iter().map(wrap).collect(),
        })
    }

    /// Caller guarantees a nonempty vector of coordinates in `[0, 1)`.
    pub(crate) fn from_wrapped(points: Vec<f64>) -> Self {
        debug_assert!(!points.is_empty());
        debug_assert!(points.iter().all(|x| (0.0..1.0).contains(x)));
        ParticleEnsemble { points }
    }

    /// `n` points at `(i + 1/2) / n`.
    pub fn equally_spaced(n: usize) -> Result<Self> {
        ParticleEnsemble::new((0..n).map(|i| (i as f64 + 0.5) / n as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    pub fn sorted_points(&self) -> Vec<f64> {
        let mut p = self.points.clone();
        p.sort_by(f64::total_cmp);
        p
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x"])?;
        for x in &self.points {
            wtr.serialize(x)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let points = rdr
            .deserialize::<f64>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ParticleEnsemble::new(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_rejected() {
        assert!(ParticleEnsemble::new(vec![]).is_err());
    }

    #[test]
    fn coordinates_are_reduced() {
        let e = ParticleEnsemble::new(vec![1.25, -0.25, 0.0]).unwrap();
        assert_eq!(e.points(), &[0.25, 0.75, 0.0]);
    }

    proptest! {
        #[test]
        fn csv_round_trip(points in prop::collection::vec(0.0f64..1.0, 1..50)) {
            let e = ParticleEnsemble::new(points).unwrap();
            let mut buf = Vec::new();
            e.write_csv(&mut buf).unwrap();
            let back = ParticleEnsemble::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
