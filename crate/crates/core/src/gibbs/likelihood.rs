use crate::error::{Error, Result};
use crate::model::{
    allocation_log_probs, gauss_hermite, log_sum_exp, outcome_marginal_loglik, presence_loglik, presence_marginal_loglik, AllocationParams,
    CovFactor, Mode, ModelData, OutcomeParams, PresenceParams,
};

const QUADRATURE_NODES: usize = 30;

/// Parameters needed to evaluate the observed-data likelihood.
pub struct LikelihoodParams<'a> {
    pub alloc: &'a AllocationParams,
    pub outcome: &'a OutcomeParams,
    pub presence: Option<&'a PresenceParams>,
}

/// Per-patient likelihood with the random effects and the class integrated
/// out. In joint mode the presence term is included; a scalar presence
/// random effect is integrated by quadrature, a vector one is conditioned on.
pub struct PatientLikelihood {
    rule: (Vec<f64>, Vec<f64>),
}

impl Default for PatientLikelihood {
    fn default() -> Self {
        Self { rule: gauss_hermite(QUADRATURE_NODES) }
    }
}

impl PatientLikelihood {
    /// Log-likelihood of patient `i` for each class, including the log
    /// allocation probability.
    pub fn class_terms(&self, data: &ModelData, params: &LikelihoodParams, cov: &CovFactor, i: usize) -> Result<Vec<f64>> {
        let pd = &data.patients[i];
        let y = pd.observed_outcome();
        let mut terms = allocation_log_probs(&pd.allocation_covariates, &params.alloc.coef)?;
        for (l, t) in terms.iter_mut().enumerate() {
            *t += outcome_marginal_loglik(&pd.observed, &y, l, params.outcome, cov)?;
            if data.mode == Mode::Joint {
                let design = pd.presence.as_ref().ok_or_else(|| Error::argument("joint mode without presence design"))?;
                let pres = params.presence.ok_or_else(|| Error::argument("joint mode without presence parameters"))?;
                *t += if pres.random_cov.nrows() == 1 {
                    presence_marginal_loglik(design, l, pres, pres.random_cov[(0, 0)], &self.rule)
                } else {
                    presence_loglik(design, l, pres, &pres.random_effects.row(i).transpose())
                };
            }
        }
        Ok(terms)
    }

    /// Log-likelihood of every patient.
    pub fn all(&self, data: &ModelData, params: &LikelihoodParams) -> Result<Vec<f64>> {
        let cov = CovFactor::new(&params.outcome.random_cov)?;
        (0..data.patients.len()).map(|i| Ok(log_sum_exp(&self.class_terms(data, params, &cov, i)?))).collect()
    }
}
