use smallvec::SmallVec;

use crate::error::{Assumption, Error, Result};

/// One quadrature node of the friction measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub alpha: SmallVec<[f64; 4]>,
    pub weight: f64,
}

/// Finite atomic measure over the friction parameter set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrictionMeasure {
    pub atoms: Vec<Atom>,
}

impl FrictionMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let m = FrictionMeasure { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn param_dim(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.alpha.len())
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.param_dim();
        for (i, atom) in self.atoms.iter().enumerate() {
            let witness = format!("atom {i}: alpha = {:?}, weight = {}", atom.alpha.as_slice(), atom.weight);
            if !atom.weight.is_finite() {
                return Err(Error::validation(Assumption::Measure, "non-finite atom weight", witness));
            }
            if atom.weight < 0.0 {
                return Err(Error::validation(Assumption::Measure, "negative atom weight", witness));
            }
            if atom.weight == 0.0 {
                return Err(Error::validation(Assumption::Measure, "zero atom weight", witness));
            }
            if atom.alpha.len() != dim || atom.alpha.len() > 4 {
                return Err(Error::validation(
                    Assumption::Measure,
                    "all atoms need the same parameter dimension (at most 4)",
                    witness,
                ));
            }
            if atom.alpha.iter().any(|a| !a.is_finite()) {
                return Err(Error::validation(Assumption::Measure, "non-finite atom parameter", witness));
            }
        }
        Ok(())
    }
}
