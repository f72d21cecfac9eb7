//! Stored run artifacts and their re-verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::csp::{Csp2Instance, InstanceFile};
use crate::error::{Error, Result};
use crate::oracle::{brute_force_optimum, ENUMERATION_CAP};
use crate::pseudodist::{check_statdist_cov_identity, conditional_variance_decrement, pi_distance, Marginals};
use crate::rounding::RoundingRun;
use crate::sdp::{extract_local_family, MomentData, MomentMatrix, RelaxationConfig, RelaxationProblem, SolveReport};
use crate::spectral::{threshold_rank, SpectralProfile};

/// Version stamped into every artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Residual tolerance applied to stored moment matrices.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub schema_version: u32,
    pub eigenvalues: Vec<f64>,
    /// Threshold rank keyed by the threshold as written.
    pub rank_at: BTreeMap<String, usize>,
}

impl SpectrumSummary {
    pub fn new(profile: &SpectralProfile, taus: &[f64]) -> Self {
        SpectrumSummary {
            schema_version: SCHEMA_VERSION,
            eigenvalues: profile.eigenvalues.clone(),
            rank_at: taus.iter().map(|&t| (format!("{t}"), threshold_rank(profile, t))).collect(),
        }
    }
}

/// A solved relaxation, optionally with a rounding run on top.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub instance: InstanceFile,
    pub config: RelaxationConfig,
    pub solve: SolveReport,
    pub moments: MomentData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding: Option<RoundingRun>,
}

impl RunArtifact {
    pub fn new(instance: &Csp2Instance, config: RelaxationConfig, solve: SolveReport, moments: &MomentMatrix) -> Self {
        RunArtifact {
            schema_version: SCHEMA_VERSION,
            instance: InstanceFile::from_instance(instance),
            config,
            solve,
            moments: moments.to_data(),
            rounding: None,
        }
    }

    /// Parses an artifact, rejecting other schema versions before anything
    /// else is read.
    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        check_schema(&v)?;
        Ok(serde_json::from_value(v)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fails unless `v.schema_version` equals [`SCHEMA_VERSION`].
pub fn check_schema(v: &serde_json::Value) -> Result<()> {
    let found = v.get("schema_version").and_then(|s| s.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: SCHEMA_VERSION,
            found,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(out: &mut Vec<InvariantCheck>, name: &str, passed: bool, detail: String) {
    out.push(InvariantCheck {
        name: name.to_string(),
        passed,
        detail,
    });
}

/// Re-runs every invariant that can be checked from a stored artifact.
pub fn verify_run(run: &RunArtifact) -> Result<Vec<InvariantCheck>> {
    if run.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: SCHEMA_VERSION,
            found: run.schema_version,
        });
    }
    let mut out = Vec::new();
    let instance = run.instance.to_instance()?;
    check(&mut out, "instance", true, format!("n={} k={}", instance.n(), instance.k()));

    let m = MomentMatrix::from_data(run.moments.clone())?;
    let shape_ok = m.n() == instance.n() && m.k() == instance.k() && m.hierarchy() == run.config.hierarchy;
    check(&mut out, "moment_shape", shape_ok, format!("n={} k={} {:?}", m.n(), m.k(), m.hierarchy()));
    check(
        &mut out,
        "moment_consistency",
        m.consistency_violation() <= RESIDUAL_TOL,
        format!("violation {:e}", m.consistency_violation()),
    );
    check(
        &mut out,
        "moment_psd",
        m.psd_violation() <= RESIDUAL_TOL,
        format!("violation {:e}", m.psd_violation()),
    );
    let normalized = m.matrix().nrows() > 0 && (m.matrix()[(0, 0)] - 1.0).abs() <= 1e-7;
    check(&mut out, "moment_normalized", normalized, format!("M[∅,∅] = {}", m.matrix()[(0, 0)]));

    let problem = RelaxationProblem::new(&instance, run.config)?;
    let objective = problem.objective_of_moments(&m)?;
    check(
        &mut out,
        "objective",
        (objective - run.solve.objective).abs() <= 1e-7,
        format!("recomputed {objective}, reported {}", run.solve.objective),
    );
    check(
        &mut out,
        "upper_bound",
        run.solve.upper_bound >= objective - 1e-7,
        format!("upper {} vs objective {objective}", run.solve.upper_bound),
    );

    let family = match extract_local_family(&m) {
        Ok(f) => Some(f),
        Err(e) => {
            check(&mut out, "local_family", false, e.to_string());
            None
        }
    };
    if let Some(f) = &family {
        let (mut worst_id, mut worst_dec, mut worst_pi) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
        for c in instance.constraints() {
            let id = check_statdist_cov_identity(f, c.i, c.j)?;
            worst_id = worst_id.max((id.lhs - id.rhs).abs());
            let d = conditional_variance_decrement(f, c.i, c.j)?;
            worst_dec = worst_dec.max(d.bound - d.decrement);
            if let Some(pi) = &c.pi {
                let p = pi_distance(f, c.i, c.j, pi)?;
                worst_pi = worst_pi.max((p.distance - p.covariance_sum).abs());
            }
        }
        check(&mut out, "statdist_covariance", worst_id <= 1e-9, format!("max gap {worst_id:e}"));
        check(
            &mut out,
            "variance_decrement",
            worst_dec <= 1e-9,
            format!("max bound excess {worst_dec:e}"),
        );
        check(&mut out, "pi_distance", worst_pi <= 1e-9, format!("max gap {worst_pi:e}"));
        let singles_ok = f.singletons().is_ok();
        check(&mut out, "singletons", singles_ok, String::new());
    }

    let small = (instance.k() as f64).powi(instance.n() as i32) <= ENUMERATION_CAP;
    let opt = if small { Some(brute_force_optimum(&instance)?.0) } else { None };
    if let Some(opt) = opt {
        check(
            &mut out,
            "relaxation_bound",
            opt <= run.solve.upper_bound + 1e-6,
            format!("optimum {opt}, certified upper bound {}", run.solve.upper_bound),
        );
    }

    if let Some(r) = &run.rounding {
        check(
            &mut out,
            "rounding_schema",
            r.schema_version == SCHEMA_VERSION,
            format!("version {}", r.schema_version),
        );
        let recomputed = instance.value(&r.best_assignment);
        let value_ok = matches!(&recomputed, Ok(v) if (v - r.best_value).abs() <= 1e-12);
        check(
            &mut out,
            "rounded_value",
            value_ok,
            format!("stored {}, recomputed {:?}", r.best_value, recomputed.ok()),
        );
        let in_range = r.trial_values.iter().chain([&r.best_value]).all(|v| (0.0..=1.0).contains(v));
        let best_is_max = r.trial_values.iter().all(|&v| v <= r.best_value)
            && r.trial_values.get(r.best_trial) == Some(&r.best_value);
        check(&mut out, "trial_values", in_range && best_is_max, format!("{} trials", r.trial_values.len()));
        if let Some(opt) = opt {
            let ok = r.best_value <= opt + 1e-9 && opt <= run.solve.upper_bound + 1e-6;
            check(
                &mut out,
                "sandwich",
                ok,
                format!("rounded {} ≤ optimum {opt} ≤ relaxation {}", r.best_value, run.solve.upper_bound),
            );
            let stored_ok = r.optimum.is_none_or(|o| (o - opt).abs() <= 1e-12);
            check(&mut out, "stored_optimum", stored_ok, format!("stored {:?}", r.optimum));
        }
        let phi_ok = r.potential.iter().all(|&p| (-1e-9..=1.0 + 1e-9).contains(&p))
            && r.potential.windows(2).all(|w| w[1] <= w[0] + 1e-9);
        check(&mut out, "potential", phi_ok, format!("{:?}", r.potential));
        let sdp_ok = (r.sdp_objective - objective).abs() <= 1e-5;
        check(
            &mut out,
            "rounding_objective",
            sdp_ok,
            format!("rounding saw {}, moments give {objective}", r.sdp_objective),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_mismatch_is_rejected() {
        let v = serde_json::json!({"schema_version": 99});
        assert!(matches!(check_schema(&v), Err(Error::Schema { expected: 1, found: 99 })));
    }
}
