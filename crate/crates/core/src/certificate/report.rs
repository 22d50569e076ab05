use super::*;
use std::fmt;

/// Inputs of the `certify` workflow. Unset `c`/`ell` trigger a search.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub p0: f64,
    pub epsilon: f64,
    pub sensing_radius: f64,
    pub safe_radius: f64,
    pub speed: f64,
    pub latency: f64,
    pub delta: f64,
    pub gamma: f64,
    pub prior: Prior,
    pub c: Option<f64>,
    pub ell: Option<f64>,
    pub k_max: usize,
    pub validate: Option<u64>,
    pub seed: u64,
    pub stopping_margin: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            p0: 0.75,
            epsilon: 1e-3,
            sensing_radius: 4.0,
            safe_radius: 4.0,
            speed: 0.35,
            latency: 3.0,
            delta: 0.1,
            gamma: 0.0,
            prior: Prior::Uniform,
            c: None,
            ell: None,
            k_max: K_MAX,
            validate: None,
            seed: 0,
            stopping_margin: 0.0,
        }
    }
}

/// Reference point reported alongside a search.
pub const REFERENCE_C: f64 = 1.0;
pub const REFERENCE_ELL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct KRow {
    pub k: usize,
    pub mts_lhs: f64,
    pub remainder: f64,
    pub expectation_lhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub options: CertifyOptions,
    pub assumptions: crate::sensor::AssumptionReport,
    pub kappa_budget: usize,
    pub c: f64,
    pub ell: f64,
    pub rhs: f64,
    pub rows: Vec<KRow>,
    pub mts: CertificateResult<f64>,
    pub nopm: Option<CertificateResult<f64>>,
    pub search: Option<SearchOutcome>,
    /// Whether the reference point `(1, 0.1)` is feasible within the budget.
    pub reference_feasible: bool,
    /// Smallest `delta` certifiable within the budget over the `l` grid.
    pub tightest_delta: f64,
    pub remainder_at_budget: f64,
    pub certified: bool,
    pub monte_carlo: Option<MonteCarloResult>,
}

/// Runs the certificate workflow: budget, beeline check, observation count,
/// search when `(c, l)` is not given, optional Monte Carlo validation.
pub fn certify(opts: &CertifyOptions) -> Result<CertifyReport, CertificateError> {
    let model = DetectionModel::linear(opts.p0, opts.epsilon, opts.sensing_radius);
    model.validate().map_err(|e| invalid(e.to_string()))?;
    if !(opts.speed > 0.0 && opts.latency > 0.0) {
        return Err(invalid("speed and latency must be positive"));
    }
    if !(opts.gamma >= 0.0 && opts.gamma < 1.0 && opts.delta > 0.0 && opts.delta < 1.0) {
        return Err(invalid("need 0 <= gamma < 1 and 0 < delta < 1"));
    }
    if !(opts.safe_radius > 0.0 && opts.safe_radius <= opts.sensing_radius) {
        return Err(invalid("need 0 < R <= D"));
    }
    let budget = nondimensionalize(opts.speed, opts.latency, opts.sensing_radius, opts.k_max).max(1);
    let remainder_at_budget = miss_probability(budget, &model);

    let search = match (opts.c, opts.ell) {
        (Some(_), Some(_)) => None,
        _ => Some(search_certificate(
            opts.delta,
            opts.gamma,
            budget,
            &model,
            opts.prior,
            opts.safe_radius,
        )),
    };
    let (c, ell) = match (&search, opts.c, opts.ell) {
        (_, Some(c), Some(l)) => (c, l),
        (Some(SearchOutcome::Certified { best, .. }), _, _) => (best.c, best.ell),
        _ => (opts.c.unwrap_or(REFERENCE_C), opts.ell.unwrap_or(REFERENCE_ELL)),
    };
    let params = InverseDistanceParams::new(c, ell)?;
    let prob = CertificateProblem {
        params,
        model,
        safe_radius: opts.safe_radius,
        delta: opts.delta,
        gamma: opts.gamma,
        prior: opts.prior,
        speed: opts.speed,
        latency: opts.latency,
    };
    let within = |p: &CertificateProblem<f64>| (1..=budget).find(|&k| check_mts(k, p).feasible);
    let mts = match within(&prob) {
        Some(k) => check_mts(k, &prob),
        None => check_mts(budget, &prob),
    };
    let reference_feasible = {
        let mut p = prob;
        p.params = InverseDistanceParams::new(REFERENCE_C, REFERENCE_ELL)?;
        within(&p).is_some()
    };
    let nopm = if opts.gamma < opts.delta {
        Some(solve_nopm(&prob, budget)?)
    } else {
        None
    };
    let show = (budget + 2).min(opts.k_max.max(1));
    let rows = (1..=show)
        .map(|k| {
            let t = mts_terms(k, &prob);
            Ok(KRow {
                k,
                mts_lhs: t.lhs,
                remainder: t.remainder,
                expectation_lhs: if k <= budget {
                    expected_inverse_distance(k, &prob).ok()
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>, CertificateError>>()?;
    // delta needed at (c, l, k) is gamma + (l / c) lhs; c cancels.
    let tightest_delta = if model.saturated() {
        opts.gamma + remainder_at_budget
    } else {
        let mut best = f64::INFINITY;
        for &l in &log_grid(-3, 1, 10) {
            let mut p = prob;
            p.params = InverseDistanceParams::new(1.0, l)?;
            for k in 1..=budget {
                best = best.min(opts.gamma + l * mts_terms(k, &p).lhs);
            }
        }
        best
    };
    let certified = match &search {
        Some(s) => s.is_certified() && !matches!(s, SearchOutcome::Trivial { delta, .. } if *delta > opts.delta.max(opts.gamma)),
        None => mts.feasible,
    };
    let monte_carlo = opts
        .validate
        .map(|n| monte_carlo_validate(budget, &model, n, opts.seed, opts.stopping_margin));
    Ok(CertifyReport {
        options: opts.clone(),
        assumptions: model.assumptions(),
        kappa_budget: budget,
        c,
        ell,
        rhs: prob.rhs(),
        rows,
        mts,
        nopm,
        search,
        reference_feasible,
        tightest_delta,
        remainder_at_budget,
        certified,
        monte_carlo,
    })
}

fn yn(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl fmt::Display for CertifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.options;
        writeln!(f, "# certificate report")?;
        writeln!(f, "[inputs]")?;
        writeln!(f, "detection        m(r) = max(0, {} - {} r / D)", o.p0, o.epsilon)?;
        writeln!(f, "sensing_radius   {} m", o.sensing_radius)?;
        writeln!(f, "safe_radius      {} m", o.safe_radius)?;
        writeln!(f, "speed            {} m/s", o.speed)?;
        writeln!(f, "latency          {} s", o.latency)?;
        writeln!(f, "delta            {}", o.delta)?;
        writeln!(f, "gamma            {}", o.gamma)?;
        writeln!(f, "prior            {:?}", o.prior)?;
        let a = &self.assumptions;
        writeln!(
            f,
            "assumptions      bounded_radius={} nondegenerate={} strictly_decreasing={}",
            yn(a.bounded_radius),
            yn(a.nondegenerate),
            yn(a.strictly_decreasing)
        )?;
        writeln!(f)?;
        writeln!(f, "[budget]")?;
        writeln!(f, "kappa_budget     {}", self.kappa_budget)?;
        writeln!(f, "remainder        {:.6}  (all-miss probability at the budget)", self.remainder_at_budget)?;
        writeln!(f, "tightest_delta   {:.6}", self.tightest_delta)?;
        writeln!(f)?;
        writeln!(f, "[per-k at c={} l={}]", self.c, self.ell)?;
        writeln!(f, "{:>4} {:>14} {:>14} {:>14} {:>12} {:>16}", "k", "beeline_lhs", "rhs", "residual", "remainder", "expectation_lhs")?;
        for r in &self.rows {
            let e = r.expectation_lhs.map_or("-".to_string(), |v| format!("{v:.6}"));
            writeln!(
                f,
                "{:>4} {:>14.6} {:>14.6} {:>14.6} {:>12.6} {:>16}",
                r.k,
                r.mts_lhs,
                self.rhs,
                self.rhs - r.mts_lhs,
                r.remainder,
                e
            )?;
        }
        writeln!(f)?;
        writeln!(f, "[result]")?;
        match &self.search {
            Some(SearchOutcome::Trivial { delta, remainder }) => {
                writeln!(f, "certificate      trivial (saturated detector)")?;
                writeln!(f, "delta            {delta:.6}  (gamma + remainder {remainder:.3e}, any c, l)")?;
            }
            Some(SearchOutcome::Certified { best, feasible }) => {
                writeln!(f, "certificate      feasible")?;
                writeln!(f, "feasible_points  {}", feasible.len())?;
                writeln!(f, "chosen           c={} l={} kappa={}", best.c, best.ell, best.kappa.unwrap_or(0))?;
                writeln!(f, "residual         {:.6}  ({:.6} in delta units)", best.residual, best.normalized_residual)?;
            }
            Some(SearchOutcome::Infeasible { best }) => {
                writeln!(f, "certificate      INFEASIBLE within the budget")?;
                writeln!(
                    f,
                    "best_residual    {:.6} at c={} l={} ({:.6} in delta units)",
                    best.residual, best.c, best.ell, best.normalized_residual
                )?;
            }
            None => {
                writeln!(f, "certificate      {}", if self.mts.feasible { "feasible" } else { "INFEASIBLE" })?;
            }
        }
        writeln!(
            f,
            "reference        c={} l={} feasible={}",
            REFERENCE_C,
            REFERENCE_ELL,
            yn(self.reference_feasible)
        )?;
        writeln!(
            f,
            "beeline          kappa={} lhs={:.6} rhs={:.6} residual={:.6}",
            self.mts.kappa, self.mts.lhs, self.mts.rhs, self.mts.residual
        )?;
        if self.mts.feasible {
            writeln!(f, "max_safe_speed   {:.6} m/s", self.mts.max_safe_speed)?;
        }
        if let Some(n) = &self.nopm {
            writeln!(
                f,
                "observations     kappa={} feasible={} lhs={:.6} rhs={:.6}",
                n.kappa,
                yn(n.feasible),
                n.lhs,
                n.rhs
            )?;
        }
        writeln!(f, "certified        {}", yn(self.certified))?;
        if let Some(mc) = &self.monte_carlo {
            writeln!(f)?;
            writeln!(f, "[monte carlo]")?;
            writeln!(f, "trials           {}", mc.trials)?;
            writeln!(f, "unsafe           {}", mc.unsafe_count)?;
            writeln!(f, "unsafe_rate      {:.6}", mc.unsafe_rate)?;
            writeln!(f, "ci95             [{:.6}, {:.6}]", mc.ci_low, mc.ci_high)?;
            writeln!(f, "analytic         {:.6}", self.remainder_at_budget)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_report() {
        let r = certify(&CertifyOptions {
            p0: 1.0,
            epsilon: 1e-3,
            gamma: 0.25,
            ..Default::default()
        })
        .unwrap();
        match r.search {
            Some(SearchOutcome::Trivial { delta, .. }) => assert!((delta - 0.25).abs() < 1e-6),
            ref o => panic!("{o:?}"),
        }
        assert!(r.to_string().contains("trivial"));
    }

    #[test]
    fn fixed_params_skip_search() {
        let r = certify(&CertifyOptions {
            c: Some(1.0),
            ell: Some(0.05),
            ..Default::default()
        })
        .unwrap();
        assert!(r.search.is_none());
        assert!(r.mts.feasible);
        assert_eq!(r.kappa_budget, 3);
    }
}
