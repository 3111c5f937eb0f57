use crate::error::{Error, Result};
use crate::eval::SpanScorer;
use crate::model::{BoundaryDistributions, Mode, Model};
use crate::tensor::Real;
use crate::text::{EncodedExample, Encoder};

/// Several independently trained models whose boundary distributions are
/// averaged elementwise before decoding.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Model>,
}

impl Ensemble {
    /// Members must agree on every shape and switch and share both
    /// vocabularies, so their distributions line up index for index.
    pub fn new(members: Vec<Model>) -> Result<Ensemble> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("an ensemble needs at least one model"))?;
        for (i, m) in members.iter().enumerate().skip(1) {
            if !first.config.compatible_with(&m.config) {
                return Err(Error::invalid(format!(
                    "ensemble member {} has an incompatible configuration",
                    i + 1
                )));
            }
            if first.vocab != m.vocab || first.chars != m.chars {
                return Err(Error::invalid(format!(
                    "ensemble member {} uses a different vocabulary",
                    i + 1
                )));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Elementwise mean, accumulated as offsets from the first vector so that
/// identical members reproduce it exactly.
pub fn mean_distribution(parts: &[Vec<Real>]) -> Vec<Real> {
    let k = parts.len() as Real;
    let base = &parts[0];
    (0..base.len())
        .map(|i| base[i] + parts[1..].iter().map(|p| p[i] - base[i]).sum::<Real>() / k)
        .collect()
}

impl SpanScorer for Ensemble {
    fn encoder(&self) -> Encoder<'_> {
        self.members[0].encoder()
    }

    fn distributions(&self, ex: &EncodedExample) -> Result<BoundaryDistributions> {
        let all = self
            .members
            .iter()
            .map(|m| m.forward(ex, Mode::Inference))
            .collect::<Result<Vec<_>>>()?;
        let begins: Vec<_> = all.iter().map(|d| d.p_begin.clone()).collect();
        let ends: Vec<_> = all.iter().map(|d| d.p_end.clone()).collect();
        Ok(BoundaryDistributions {
            p_begin: mean_distribution(&begins),
            p_end: mean_distribution(&ends),
        })
    }
}
