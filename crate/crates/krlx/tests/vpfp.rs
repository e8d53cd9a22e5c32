use krlx::equilibrium::{solve_poisson_emden, EquilibriumState, PotentialSpec};
use krlx::phasecore::{bnorm, DistributionField, PhaseGrid};
use krlx::semigroup::{Propagator, PropagatorConfig};
use krlx::vpfp::*;
use krlx::Error;
use proptest::prelude::*;
use statrs::function::beta::beta;

/// Overdamped well `ω = 0.4`: the slowest linear mode is real, so distances
/// relax without oscillation.
fn well(n: usize, nv: usize, eps0: f64) -> (PotentialSpec, EquilibriumState, DistributionField) {
    let g = PhaseGrid::new(1, 20.0, 8.0, n, nv).unwrap();
    let ve = PotentialSpec::quadratic(1, 0.4);
    let eq = solve_poisson_emden(&ve, eps0, &g, 1e-12, 200).unwrap();
    let bump = DistributionField::from_fn(g, |x, v| 1.0 + 0.5 * (x[0] - 0.5 * v[0]).tanh()).unwrap();
    let f0 = eq.m_inf.mul(&bump).unwrap();
    let f0 = f0.scaled(1.0 / f0.mass());
    (ve, eq, f0)
}

fn cfl_dt(g: &PhaseGrid) -> f64 {
    0.9 * g.hx() / g.lv
}

#[test]
fn decoupled_run_is_the_linear_flow() {
    let (ve, _, f0) = well(64, 32, 0.0);
    let dt = cfl_dt(f0.grid());
    let opts = RunOptions::new(1.5, dt).with_snapshot_every(1.5);
    let tr = vpfp_run(&f0, &ve, 0.0, &opts).unwrap();
    let p = Propagator::new(&PropagatorConfig::from_spec(*f0.grid(), &ve, dt).unwrap()).unwrap();
    let lin = p.advance(f0.clone(), 0.0, 1.5).unwrap();
    let diff = tr.last().f.sub(&lin).unwrap().sup_norm();
    assert!(diff <= 1e-12 * tr.steps as f64 * lin.sup_norm(), "{diff:e}");
}

#[test]
fn self_consistent_equilibrium_is_stationary() {
    let g = PhaseGrid::new(1, 8.0, 8.0, 64, 64).unwrap();
    let ve = PotentialSpec::quadratic(1, 1.0);
    let eq = solve_poisson_emden(&ve, 0.05, &g, 1e-13, 300).unwrap();
    let t_end = 2.0;
    let tr = vpfp_run(&eq.m_inf, &ve, 0.05, &RunOptions::new(t_end, cfl_dt(&g))).unwrap();
    for s in &tr.snapshots {
        let drift = bnorm(&s.f.sub(&eq.m_inf).unwrap(), &eq.m_inf).unwrap();
        assert!(drift <= STATIONARY_DRIFT * s.t.max(1e-3), "t={}: {drift:e}", s.t);
    }
    let r = decay_report(&tr, &eq, &FixedPointConfig::for_dimension(1, 0.05), None).unwrap();
    assert!(r.rate_b.is_none() && r.flags.iter().any(|f| f.contains("degenerate")));
}

#[test]
fn perturbed_run_relaxes_exponentially() {
    let (ve, eq, f0) = well(96, 48, 0.05);
    let tr = vpfp_run(&f0, &ve, 0.05, &RunOptions::new(8.0, cfl_dt(f0.grid()))).unwrap();
    let r = decay_report(&tr, &eq, &FixedPointConfig::for_dimension(1, 0.05), None).unwrap();

    let late: Vec<f64> = r.times.iter().zip(&r.b_dist).filter(|(t, _)| **t >= 1.0).map(|(_, b)| *b).collect();
    assert!(late.windows(2).all(|w| w[1] < w[0]), "b_dist not strictly decreasing");
    assert!(r.entropy.iter().all(|h| *h >= -1e-10));
    assert!(r.entropy_nonincreasing_after(1.0, 1e-8));

    let (b, e) = (r.rate_b.as_ref().unwrap(), r.rate_field.as_ref().unwrap());
    assert!(b.rate > 0.0 && e.rate > 0.0 && r.rate_entropy.as_ref().unwrap().rate > 0.0);
    assert!((b.rate / e.rate - 1.0).abs() < 0.3, "{} vs {}", b.rate, e.rate);
    assert!(b.residual < 0.1 && e.residual < 0.1);

    let c = conservation_check(&tr).unwrap();
    assert!(c.passes(), "{c:?}");
    assert!(r.csv().starts_with("t,b_dist,bab_dist,field_dist,entropy,mass_error,min_value,linf_ratio\n"));
    assert!(r.summary().contains("rate_b_dist="));
}

#[test]
fn short_report_omits_rates() {
    let (ve, eq, f0) = well(48, 32, 0.05);
    let tr = vpfp_run(&f0, &ve, 0.05, &RunOptions::new(0.5, cfl_dt(f0.grid()))).unwrap();
    let r = decay_report(&tr, &eq, &FixedPointConfig::for_dimension(1, 0.05), None).unwrap();
    assert!(r.rate_b.is_none() && !r.flags.is_empty());
    let other = solve_poisson_emden(&ve, 0.02, f0.grid(), 1e-10, 200).unwrap();
    assert!(decay_report(&tr, &other, &FixedPointConfig::for_dimension(1, 0.05), None).is_err());
}

#[test]
fn run_rejects_bad_input() {
    let g = PhaseGrid::new(2, 6.0, 6.0, 8, 8).unwrap();
    let ve = PotentialSpec::quadratic(2, 1.0);
    let f = DistributionField::from_fn(g, |x, v| (-(x[0] * x[0] + v[0] * v[0] + x[1] * x[1] + v[1] * v[1])).exp()).unwrap();
    let opts = RunOptions::new(0.1, 0.05);
    assert!(matches!(vpfp_run(&f, &ve, -0.05, &opts), Err(Error::Unsupported(_))));
    assert!(matches!(vpfp_run(&f.scaled(-1.0), &ve, 0.05, &opts), Err(Error::Domain(_))));
    assert!(matches!(vpfp_run(&f, &ve, 0.05, &RunOptions::new(0.1, 1.0)), Err(Error::Cfl(_))));
    let tr = vpfp_run(&f, &ve, 0.05, &opts).unwrap();
    assert_eq!(tr.warnings.len(), 1);
    assert!((tr.last().f.mass() - 1.0).abs() < 1e-12);
}

fn picard(eps0: f64) -> PicardReport {
    let (_, eq, f0) = well(64, 32, eps0);
    let dt = cfl_dt(f0.grid());
    let opts = PicardOptions::new(2.0, 0.1, 0.2).with_dt(dt);
    picard_iterate(&f0, &eq, &FixedPointConfig::for_dimension(1, eps0), &opts, None).unwrap()
}

#[test]
fn uncoupled_picard_is_immediate() {
    let p = picard(0.0);
    assert!(p.converged && p.iterations() == 1);
    assert_eq!(p.z_norms[0], 0.0);
    assert_eq!(p.perturbation(p.times.len() - 1).sup_norm(), 0.0);
}

#[test]
fn picard_contracts_linearly_in_the_coupling() {
    let (full, half) = (picard(0.05), picard(0.025));
    assert!(full.converged && half.converged);
    assert!(full.factors.iter().all(|q| *q < 1.0), "{:?}", full.factors);
    let ratio = full.mean_factor() / half.mean_factor();
    assert!((ratio / 2.0 - 1.0).abs() < 0.3, "{ratio}");
    assert!(full.csv().contains("converged=true"));
}

#[test]
fn picard_solution_matches_the_run() {
    let (ve, eq, f0) = well(64, 32, 0.05);
    let dt = cfl_dt(f0.grid());
    let opts = PicardOptions::new(2.0, 0.1, 0.2).with_dt(dt).with_limiter(krlx::semigroup::Limiter::Off);
    let p = picard_iterate(&f0, &eq, &FixedPointConfig::for_dimension(1, 0.05), &opts, None).unwrap();
    let run = vpfp_run(&f0, &ve, 0.05, &RunOptions::new(2.0, dt).with_limiter(krlx::semigroup::Limiter::Off)).unwrap();
    for t in [1.0, 2.0] {
        let d = bnorm(&p.solution(p.node(t)).sub(&run.at(t).f).unwrap(), &eq.m_inf).unwrap();
        // the force term uses central ∂_v, the run upwinds it: O(h²) apart
        assert!(d < 5e-4, "t={t}: {d:e}");
    }
}

#[test]
fn time_weight_integral_matches_beta_function() {
    // c = 0: t^{γ₁+γ₂-1}B(γ₁,γ₂) + t^{γ₁}/γ₁ + t^{γ₂}/γ₂ + t
    for (g1, g2) in [(0.3f64, 0.5f64), (0.3, 1.0), (1.0, 0.5), (0.7, 0.2)] {
        for t in [1e-3f64, 0.3, 1.0, 20.0] {
            let exact = t.powf(g1 + g2 - 1.0) * beta(g1, g2) + t.powf(g1) / g1 + t.powf(g2) / g2 + t;
            let got = time_weight_integral(g1, g2, 0.0, t).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-11, "{g1} {g2} {t}: {got} vs {exact}");
        }
    }
}

#[test]
fn time_weight_ratio_is_bounded() {
    let s = time_weight_sweep(40).unwrap();
    assert!(s.max.is_finite() && s.max < 10.0, "{}", s.max);
    // the ratio saturates at large t instead of growing
    let tail: Vec<f64> = s.rows.iter().filter(|r| r.2 > 20.0).map(|r| r.3).collect();
    let mid: Vec<f64> = s.rows.iter().filter(|r| r.2 > 5.0 && r.2 < 20.0).map(|r| r.3).collect();
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    assert!(max(&tail) <= 1.05 * max(&mid));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relative_entropy_is_nonnegative(seed in proptest::collection::vec(0.0f64..1.0, 64)) {
        let g = PhaseGrid::new(1, 3.0, 3.0, 8, 8).unwrap();
        let m = DistributionField::new(g, (0..64).map(|i| 0.2 + (i % 7) as f64 * 0.1).collect()).unwrap();
        let m = m.scaled(1.0 / m.mass());
        let f = DistributionField::new(g, seed.iter().map(|s| if *s < 0.2 { 0.0 } else { *s }).collect()).unwrap();
        prop_assume!(f.mass() > 0.0);
        let f = f.scaled(1.0 / f.mass());
        prop_assert!(relative_entropy(&f, &m).unwrap() >= -1e-12);
        prop_assert!(relative_entropy(&m, &m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn accepted_configs_satisfy_the_constraints(
        a in 0.4f64..0.8, alpha in 0.0f64..1.0, beta in 0.0f64..1.2,
        delta in 0.0f64..0.5, sigma in 0.0f64..1.2, eps0 in -1.2f64..1.2,
    ) {
        let cfg = FixedPointConfig { a, alpha, beta, delta, sigma, eps0, gamma_y: a / 3.0 - 0.01,
            ..FixedPointConfig::for_dimension(3, 0.05) };
        if cfg.validate().is_ok() {
            prop_assert!(a > 0.5 && a < 0.75);
            prop_assert!(3.0 * alpha - 1.0 < beta && beta < 1.0);
            prop_assert!(delta > 0.0 && delta < beta / 2.0 - 0.25);
            prop_assert!(sigma > 0.0 && sigma <= 1.0 && eps0.abs() <= 1.0);
        }
    }
}
