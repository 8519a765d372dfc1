//! Closed-form sample-complexity quantities for optimistic-model learning:
//! the accuracy split, known-set sample size, exploration reward needed for
//! optimism, and the bound on the number of non-near-optimal steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this the implied exploration reward is flagged as impractical.
pub const PRACTICAL_R_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub delta: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub r0_max: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.epsilon, self.delta, self.gamma, self.r0_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Usage("bound inputs must be finite".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Usage(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Usage(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Usage("state and action counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Usage(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.r0_max > 0.0) {
            return Err(Error::Usage(format!("r0_max must be positive, got {}", self.r0_max)));
        }
        Ok(())
    }

    fn pairs(&self) -> f64 {
        self.n_states as f64 * self.n_actions as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundVariant {
    /// Bounds in absolute reward units.
    #[default]
    #[serde(rename = "thm1")]
    Theorem1,
    /// Bounds with the tolerance scaled by the reward bound.
    #[serde(rename = "appxB")]
    AppendixB,
}

impl std::str::FromStr for BoundVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm1" => Ok(Self::Theorem1),
            "appxB" | "appxb" => Ok(Self::AppendixB),
            other => Err(Error::Usage(format!("unknown bound variant '{other}' (expected thm1 or appxB)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOutputs {
    pub variant: BoundVariant,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub horizon: f64,
    pub horizon_ceil: f64,
    pub sample_size: f64,
    pub sample_size_ceil: f64,
    pub beta: f64,
    pub r_max_required: f64,
    pub step_bound: f64,
    pub step_bound_ceil: f64,
    /// Whether `r_max_required` meets the optimism requirement on `beta`.
    pub optimism_holds: bool,
    pub warnings: Vec<String>,
}

/// Known-set sample size giving `epsilon`-accurate transition and
/// reward-weighted estimates of one pair with probability `1 - delta`.
pub fn lemma2_sample_size(epsilon: f64, delta: f64, r0_max: f64) -> f64 {
    2.0 * r0_max.max(1.0).powi(2) / (epsilon * epsilon) * (2.0 / delta).ln()
}

/// Parameter closeness under which every policy's values in two MDPs are
/// within `epsilon` of each other.
pub fn lemma3_closeness(epsilon: f64, n_states: usize, gamma: f64, r0_max: f64) -> f64 {
    (1.0 - gamma).powi(2) * epsilon / (n_states as f64 * (1.0 - gamma + r0_max))
}

/// Horizon after which the truncated discounted value is within `epsilon`
/// of the infinite-horizon value. Zero when even the immediate reward
/// suffices.
pub fn truncation_horizon(epsilon: f64, gamma: f64, r0_max: f64) -> usize {
    let h = (r0_max / (epsilon * (1.0 - gamma))).ln() / (1.0 - gamma);
    if h > 0.0 {
        h.ceil() as usize
    } else {
        0
    }
}

/// Confidence width scale of the optimism argument.
pub fn beta(n_states: usize, n_actions: usize, gamma: f64, r0_max: f64, m: f64, delta: f64) -> f64 {
    let pairs = n_states as f64 * n_actions as f64;
    r0_max / (1.0 - gamma) * (2.0 * (2.0 * pairs * m / delta).ln()).sqrt()
}

fn finish(mut out: BoundOutputs) -> BoundOutputs {
    if out.r_max_required > PRACTICAL_R_MAX {
        out.warnings.push(format!(
            "required R_max {:.3e} is far above practical settings (hundreds to tens of thousands)",
            out.r_max_required
        ));
    }
    out
}

pub fn theorem1_bounds(inp: &BoundInputs) -> Result<BoundOutputs> {
    inp.validate()?;
    let g1 = 1.0 - inp.gamma;
    let r0 = inp.r0_max;
    let eps1 = inp.epsilon / 6.0;
    let log_arg = r0 / (eps1 * g1);
    if log_arg <= 1.0 {
        return Err(Error::Usage(format!(
            "epsilon too large for this reward scale: r0_max / (epsilon1 (1 - gamma)) = {log_arg} must exceed 1"
        )));
    }
    let eps2 = g1 * g1 * eps1 / (inp.n_states as f64 * (g1 + r0));
    let horizon = log_arg.ln() / g1;
    let m = 2.0 * r0.max(1.0).powi(2) / (eps2 * eps2) * (8.0 / inp.delta).ln();
    let log_m = (2.0 * inp.pairs() * m / inp.delta).ln();
    let r_max = 2.0 * r0 * r0 * log_m / (eps1 * g1.powi(3));
    let step = 2.0 * m * inp.pairs() * horizon * r0 / (eps1 * g1) * (4.0 / inp.delta).ln();
    let b = beta(inp.n_states, inp.n_actions, inp.gamma, r0, m, inp.delta);
    let out = BoundOutputs {
        variant: BoundVariant::Theorem1,
        epsilon1: eps1,
        epsilon2: eps2,
        horizon,
        horizon_ceil: f64::ceil(horizon),
        sample_size: m,
        sample_size_ceil: f64::ceil(m),
        beta: b,
        r_max_required: r_max,
        step_bound: step,
        step_bound_ceil: f64::ceil(step),
        optimism_holds: r_max * eps1 >= b * b * (1.0 - 1e-12),
        warnings: Vec::new(),
    };
    Ok(finish(out))
}

pub fn appendix_b_bounds(inp: &BoundInputs) -> Result<BoundOutputs> {
    inp.validate()?;
    let g1 = 1.0 - inp.gamma;
    let r0 = inp.r0_max;
    let eps1 = inp.epsilon / 6.0;
    let log_arg = 1.0 / (eps1 * g1);
    if log_arg <= 1.0 {
        return Err(Error::Usage(format!("epsilon too large: 1 / (epsilon1 (1 - gamma)) = {log_arg} must exceed 1")));
    }
    let eps2 = g1 * g1 * eps1 / inp.n_states as f64;
    let horizon = log_arg.ln() / g1;
    let m = 2.0 / (eps2 * eps2) * (8.0 / inp.delta).ln();
    let log_m = (2.0 * inp.pairs() * m / inp.delta).ln();
    let r_max = 2.0 * r0 * log_m / (eps1 * g1 * g1);
    let step = 2.0 * m * inp.pairs() * horizon / (eps1 * g1) * (4.0 / inp.delta).ln();
    let b = beta(inp.n_states, inp.n_actions, inp.gamma, r0, m, inp.delta);
    // The requirement holds with equality, so compare with a relative margin.
    let need = b * b / (eps1 * r0);
    let out = BoundOutputs {
        variant: BoundVariant::AppendixB,
        epsilon1: eps1,
        epsilon2: eps2,
        horizon,
        horizon_ceil: f64::ceil(horizon),
        sample_size: m,
        sample_size_ceil: f64::ceil(m),
        beta: b,
        r_max_required: r_max,
        step_bound: step,
        step_bound_ceil: f64::ceil(step),
        optimism_holds: r_max >= need * (1.0 - 1e-12),
        warnings: Vec::new(),
    };
    Ok(finish(out))
}

pub fn bounds(inp: &BoundInputs, variant: BoundVariant) -> Result<BoundOutputs> {
    match variant {
        BoundVariant::Theorem1 => theorem1_bounds(inp),
        BoundVariant::AppendixB => appendix_b_bounds(inp),
    }
}

/// The step bound written directly in the MDP parameters. Algebraically
/// identical to [`BoundOutputs::step_bound`]; the cubic dependence on
/// `|X|` and `1/epsilon` is explicit here.
pub fn leading_term(inp: &BoundInputs, variant: BoundVariant) -> Result<f64> {
    inp.validate()?;
    let (x, a, e, d, r0) = (inp.n_states as f64, inp.n_actions as f64, inp.epsilon, inp.delta, inp.r0_max);
    let g1 = 1.0 - inp.gamma;
    let logs = (4.0 / d).ln() * (8.0 / d).ln();
    Ok(match variant {
        BoundVariant::Theorem1 => {
            864.0 * x.powi(3) * a * r0 * r0.max(1.0).powi(2) * (g1 + r0).powi(2) / (e.powi(3) * g1.powi(6))
                * (6.0 * r0 / (e * g1)).ln()
                * logs
        }
        BoundVariant::AppendixB => 864.0 * x.powi(3) * a / (e.powi(3) * g1.powi(6)) * (6.0 / (e * g1)).ln() * logs,
    })
}

/// Human-readable comparison of the exact bound and its order of growth.
pub fn asymptotic_report(inp: &BoundInputs, variant: BoundVariant) -> Result<String> {
    let out = bounds(inp, variant)?;
    let closed = leading_term(inp, variant)?;
    let order = match variant {
        BoundVariant::Theorem1 => "O(|X|^3 |A| R0^5 / (eps^3 (1-gamma)^6) * ln(R0 / (eps (1-gamma))) * ln^2(1/delta))",
        BoundVariant::AppendixB => "O(|X|^3 |A| / (eps^3 (1-gamma)^6) * ln(1 / (eps (1-gamma))) * ln^2(1/delta))",
    };
    let mut s = String::new();
    s.push_str(&format!(
        "inputs: epsilon={} delta={} |X|={} |A|={} gamma={} r0_max={}\n",
        inp.epsilon, inp.delta, inp.n_states, inp.n_actions, inp.gamma, inp.r0_max
    ));
    s.push_str(&format!("epsilon1        = {:.10e}\n", out.epsilon1));
    s.push_str(&format!("epsilon2        = {:.10e}\n", out.epsilon2));
    s.push_str(&format!("horizon H       = {:.10e} (ceil {})\n", out.horizon, out.horizon_ceil));
    s.push_str(&format!("sample size m   = {:.10e} (ceil {:e})\n", out.sample_size, out.sample_size_ceil));
    s.push_str(&format!("beta            = {:.10e}\n", out.beta));
    s.push_str(&format!("R_max required  = {:.10e}\n", out.r_max_required));
    s.push_str(&format!("exact step bound  {:.10e}\n", out.step_bound));
    s.push_str(&format!("closed form       {:.10e}\n", closed));
    s.push_str(&format!("order             {order}\n"));
    for w in &out.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundInputs {
        BoundInputs { epsilon: 0.6, delta: 0.1, n_states: 10, n_actions: 2, gamma: 0.9, r0_max: 1.0 }
    }

    #[test]
    fn epsilon1_is_a_sixth() {
        let e1 = theorem1_bounds(&base()).unwrap().epsilon1;
        assert_eq!(e1, 0.6 / 6.0);
        assert!((e1 - 0.1).abs() <= f64::EPSILON * 0.1);
    }

    #[test]
    fn horizon_example() {
        let h = theorem1_bounds(&base()).unwrap().horizon;
        assert!((h - 10.0 * 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        let mut i = base();
        i.delta = 1.0;
        assert!(theorem1_bounds(&i).is_err());
        let mut i = base();
        i.r0_max = 0.0;
        assert!(theorem1_bounds(&i).is_err());
        let mut i = base();
        i.epsilon = 100.0;
        assert!(matches!(theorem1_bounds(&i), Err(Error::Usage(_))));
    }

    #[test]
    fn closed_form_matches_exact() {
        for variant in [BoundVariant::Theorem1, BoundVariant::AppendixB] {
            let out = bounds(&base(), variant).unwrap();
            let closed = leading_term(&base(), variant).unwrap();
            assert!((closed / out.step_bound - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variant_names() {
        assert_eq!("thm1".parse::<BoundVariant>().unwrap(), BoundVariant::Theorem1);
        assert_eq!("appxB".parse::<BoundVariant>().unwrap(), BoundVariant::AppendixB);
        assert!("lemma".parse::<BoundVariant>().is_err());
    }
}
