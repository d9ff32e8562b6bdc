//! JSON run configuration. Unknown keys are rejected everywhere so typos
//! surface as config errors instead of silently running defaults.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::cli::Mode;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    /// Initial switch times, strictly increasing inside (0, horizon).
    pub schedule: Vec<f64>,
    /// Optional restatement of the positional mode; must agree when present.
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub shooting: ShootingConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub study: StudyConfig,
    /// Output directory; the --out flag takes precedence.
    #[serde(default)]
    pub output: Option<String>,
    /// Sampling seed for certificate mode; the --seed flag takes precedence.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Registry name of a built-in problem.
    pub name: String,
    /// Numeric parameter overrides, e.g. {"horizon": 3.0}.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub steps_per_unit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingConfig {
    #[serde(default)]
    pub tol_res: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Newton start for the unknown initial coordinates; zeros when absent.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// "lbfgs" (default) or "gradient-descent".
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub armijo_c: Option<f64>,
    #[serde(default)]
    pub backtrack_factor: Option<f64>,
    #[serde(default)]
    pub lbfgs_memory: Option<usize>,
    #[serde(default)]
    pub eps_sep: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// 1-based switch index for perturb-switch and remainder modes.
    #[serde(default)]
    pub index: Option<usize>,
    /// Perturbation magnitudes for the perturb-* modes.
    #[serde(default)]
    pub magnitudes: Option<Vec<f64>>,
    /// Switch-time steps for remainder mode.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    /// Terminal perturbation directions; canonical basis plus the extremal
    /// sign pattern when absent.
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
    /// Sampling ball radius for certificate mode.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub sample_count: Option<usize>,
    /// Offset from the solution used as the hypothetical Newton start in
    /// certificate mode; zeros when absent.
    #[serde(default)]
    pub start_offset: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    /// Cross-field checks that do not need the problem instantiated.
    pub fn validate(&self, mode: Mode) -> Result<(), String> {
        if let Some(stated) = &self.mode {
            if stated != mode.as_str() {
                return Err(format!(
                    "config states mode \"{stated}\" but \"{}\" was requested",
                    mode.as_str()
                ));
            }
        }
        match mode {
            Mode::PerturbTerminal | Mode::PerturbSwitch => {
                match &self.study.magnitudes {
                    Some(m) if !m.is_empty() => {}
                    _ => {
                        return Err(format!(
                            "mode {} needs non-empty study.magnitudes",
                            mode.as_str()
                        ))
                    }
                }
                if mode == Mode::PerturbSwitch {
                    let index = self.study.index.unwrap_or(1);
                    if index == 0 || index > self.schedule.len() {
                        return Err(format!(
                            "study.index {index} out of range for {} switch times",
                            self.schedule.len()
                        ));
                    }
                }
            }
            Mode::Remainder => {
                match &self.study.deltas {
                    Some(d) if !d.is_empty() => {}
                    _ => return Err("mode remainder needs non-empty study.deltas".into()),
                }
                let index = self.study.index.unwrap_or(1);
                if index == 0 || index > self.schedule.len() {
                    return Err(format!(
                        "study.index {index} out of range for {} switch times",
                        self.schedule.len()
                    ));
                }
            }
            Mode::Certificate => match self.study.radius {
                Some(r) if r > 0.0 && r.is_finite() => {}
                _ => return Err("mode certificate needs positive study.radius".into()),
            },
            Mode::Solve | Mode::Gradient | Mode::Optimize => {}
        }
        if let Some(method) = &self.optimizer.method {
            if method != "lbfgs" && method != "gradient-descent" {
                return Err(format!(
                    "optimizer.method \"{method}\" is not one of lbfgs, gradient-descent"
                ));
            }
        }
        if let Some(v) = self.optimizer.grad_tol {
            if !(v > 0.0 && v.is_finite()) {
                return Err("optimizer.grad_tol must be positive and finite".into());
            }
        }
        if let Some(v) = self.optimizer.armijo_c {
            if !(v > 0.0 && v <= 0.5) {
                return Err("optimizer.armijo_c must lie in (0, 0.5]".into());
            }
        }
        if let Some(v) = self.optimizer.backtrack_factor {
            if !(v > 0.0 && v < 1.0) {
                return Err("optimizer.backtrack_factor must lie strictly between 0 and 1".into());
            }
        }
        if self.optimizer.lbfgs_memory == Some(0) {
            return Err("optimizer.lbfgs_memory must be at least 1".into());
        }
        if let Some(v) = self.optimizer.eps_sep {
            if !(v > 0.0 && v.is_finite()) {
                return Err("optimizer.eps_sep must be positive and finite".into());
            }
        }
        Ok(())
    }

    pub fn override_pairs(&self) -> Vec<(&str, f64)> {
        self.problem
            .overrides
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"problem": {"name": "switched-integrator"}, "schedule": [1.0]}"#,
        )
        .unwrap();
        assert_eq!(cfg.problem.name, "switched-integrator");
        assert_eq!(cfg.schedule, vec![1.0]);
        assert!(cfg.integrator.steps_per_unit.is_none());
        cfg.validate(Mode::Solve).unwrap();
        cfg.validate(Mode::Gradient).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(RunConfig::from_json(
            r#"{"problem": {"name": "x"}, "schedule": [], "typo": 1}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"problem": {"name": "x", "extra": 2}, "schedule": []}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"problem": {"name": "x"}, "schedule": [], "shooting": {"tol": 1e-9}}"#
        )
        .is_err());
    }

    #[test]
    fn mode_mismatch_is_a_config_error() {
        let cfg = RunConfig::from_json(
            r#"{"problem": {"name": "x"}, "schedule": [], "mode": "solve"}"#,
        )
        .unwrap();
        assert!(cfg.validate(Mode::Solve).is_ok());
        assert!(cfg.validate(Mode::Gradient).is_err());
    }

    #[test]
    fn mode_specific_requirements_are_enforced() {
        let bare = RunConfig::from_json(r#"{"problem": {"name": "x"}, "schedule": [0.5]}"#)
            .unwrap();
        assert!(bare.validate(Mode::PerturbTerminal).is_err());
        assert!(bare.validate(Mode::PerturbSwitch).is_err());
        assert!(bare.validate(Mode::Remainder).is_err());
        assert!(bare.validate(Mode::Certificate).is_err());

        let full = RunConfig::from_json(
            r#"{
                "problem": {"name": "x"},
                "schedule": [0.5],
                "study": {"magnitudes": [1e-6], "deltas": [1e-3], "radius": 0.5, "index": 1}
            }"#,
        )
        .unwrap();
        assert!(full.validate(Mode::PerturbTerminal).is_ok());
        assert!(full.validate(Mode::PerturbSwitch).is_ok());
        assert!(full.validate(Mode::Remainder).is_ok());
        assert!(full.validate(Mode::Certificate).is_ok());

        let bad_index = RunConfig::from_json(
            r#"{
                "problem": {"name": "x"},
                "schedule": [0.5],
                "study": {"magnitudes": [1e-6], "index": 2}
            }"#,
        )
        .unwrap();
        assert!(bad_index.validate(Mode::PerturbSwitch).is_err());
    }

    #[test]
    fn optimizer_method_names_are_checked() {
        let cfg = RunConfig::from_json(
            r#"{
                "problem": {"name": "x"},
                "schedule": [],
                "optimizer": {"method": "newton"}
            }"#,
        )
        .unwrap();
        assert!(cfg.validate(Mode::Optimize).is_err());
    }

    #[test]
    fn optimizer_numeric_ranges_are_checked() {
        for body in [
            r#"{"problem": {"name": "x"}, "schedule": [], "optimizer": {"armijo_c": 0.6}}"#,
            r#"{"problem": {"name": "x"}, "schedule": [], "optimizer": {"backtrack_factor": 1.0}}"#,
            r#"{"problem": {"name": "x"}, "schedule": [], "optimizer": {"lbfgs_memory": 0}}"#,
            r#"{"problem": {"name": "x"}, "schedule": [], "optimizer": {"grad_tol": -1.0}}"#,
        ] {
            let cfg = RunConfig::from_json(body).unwrap();
            assert!(cfg.validate(Mode::Optimize).is_err(), "{body}");
        }
    }
}
