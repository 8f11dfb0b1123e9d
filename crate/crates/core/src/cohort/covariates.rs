use crate::error::{Error, Result};

/// Left-closed age bin edges in years: [0,55), [55,60), [60,65), [65,70), [70,120).
pub const AGE_EDGES: [f64; 4] = [55.0, 60.0, 65.0, 70.0];
/// Left-closed PSA bin edges in ng/ml: [0,3), [3,5), [5,10), [10,inf).
pub const PSA_EDGES: [f64; 3] = [3.0, 5.0, 10.0];

pub const AGE_BINS: usize = AGE_EDGES.len() + 1;
pub const PSA_BINS: usize = PSA_EDGES.len() + 1;
pub const COVARIATE_DIM: usize = AGE_BINS + PSA_BINS;

pub const AGE_LABELS: [&str; AGE_BINS] = ["<55", "55-60", "60-65", "65-70", "70-100"];
pub const PSA_LABELS: [&str; PSA_BINS] = ["<3", "3-5", "5-10", ">=10"];

/// One-hot age block followed by one-hot PSA block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CovariateVector {
    pub age_bin: usize,
    pub psa_bin: usize,
}

impl CovariateVector {
    pub fn to_array(self) -> [f64; COVARIATE_DIM] {
        let mut v = [0.0; COVARIATE_DIM];
        v[self.age_bin] = 1.0;
        v[AGE_BINS + self.psa_bin] = 1.0;
        v
    }
}

fn bin(value: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| value >= e).count()
}

pub fn age_bin(age_years: f64) -> usize {
    bin(age_years, &AGE_EDGES)
}

pub fn psa_bin(psa_ng_ml: f64) -> usize {
    bin(psa_ng_ml, &PSA_EDGES)
}

pub fn encode_covariates(age_years: f64, psa_ng_ml: f64) -> Result<CovariateVector> {
    if !(age_years > 0.0 && age_years < 120.0) {
        return Err(Error::invalid(format!("age {age_years} outside (0, 120)")));
    }
    if !(psa_ng_ml > 0.0) || !psa_ng_ml.is_finite() {
        return Err(Error::invalid(format!("PSA {psa_ng_ml} must be positive")));
    }
    Ok(CovariateVector {
        age_bin: age_bin(age_years),
        psa_bin: psa_bin(psa_ng_ml),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bin_examples() {
        assert_eq!(encode_covariates(63.0, 4.2).unwrap(), CovariateVector { age_bin: 2, psa_bin: 1 });
        assert_eq!(encode_covariates(55.0, 10.0).unwrap(), CovariateVector { age_bin: 1, psa_bin: 3 });
        assert_eq!(encode_covariates(54.999, 2.999).unwrap(), CovariateVector { age_bin: 0, psa_bin: 0 });
        assert_eq!(encode_covariates(70.0, 0.5).unwrap(), CovariateVector { age_bin: 4, psa_bin: 0 });
    }

    #[test]
    fn rejects_non_positive() {
        assert!(encode_covariates(0.0, 1.0).is_err());
        assert!(encode_covariates(60.0, 0.0).is_err());
        assert!(encode_covariates(60.0, -2.0).is_err());
        assert!(encode_covariates(130.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn exactly_one_indicator_per_block(age in 0.01f64..119.99, psa in 0.01f64..500.0) {
            let v = encode_covariates(age, psa).unwrap().to_array();
            prop_assert_eq!(v[..AGE_BINS].iter().sum::<f64>(), 1.0);
            prop_assert_eq!(v[AGE_BINS..].iter().sum::<f64>(), 1.0);
        }
    }
}
