use crate::error::{Error, Result};
use crate::sampler::SampleMatrix;
use crate::selcov::SelectedCov;
use crate::sparse::IndexSet;

/// `(1/N_s) X Xᵀ` on `s`.
pub fn mc_estimate(x: &SampleMatrix, s: &IndexSet) -> Result<SelectedCov> {
    if s.n() > x.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: s.n() });
    }
    let mut values = vec![0.0; s.len()];
    for col in x.columns() {
        for (v, &(i, j)) in values.iter_mut().zip(s.pairs()) {
            *v += col[i] * col[j];
        }
    }
    let inv = 1.0 / x.n_s() as f64;
    values.iter_mut().for_each(|v| *v *= inv);
    let mut out = SelectedCov::new(s.clone(), values, "mc");
    out.set_n_s(x.n_s());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Provenance;

    #[test]
    fn single_outer_product() {
        let x = SampleMatrix::from_columns(3, 1, vec![1.0, 0.0, 0.0], Provenance::External, 0).unwrap();
        let s = IndexSet::explicit(3, &[(0, 0), (1, 0), (2, 2)]).unwrap();
        let c = mc_estimate(&x, &s).unwrap();
        assert_eq!(c.values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn averages_columns() {
        let x = SampleMatrix::from_columns(2, 2, vec![1.0, 2.0, 3.0, -1.0], Provenance::External, 0).unwrap();
        let c = mc_estimate(&x, &IndexSet::explicit(2, &[(0, 0), (1, 0), (1, 1)]).unwrap()).unwrap();
        assert_eq!(c.values(), &[5.0, -0.5, 2.5]);
    }
}
