use krlx::equilibrium::{
    hessian_sup, initial_potential, maxwellian, solve_poisson_emden, solve_poisson_emden_with, PoissonEmdenOptions,
    PotentialSpec,
};
use krlx::phasecore::{DistributionField, PhaseGrid, SpatialField, SpatialGrid};
use statrs::function::erf::erf;
use std::f64::consts::PI;

#[test]
fn gaussian_potential_closed_form_3d() {
    let g = PhaseGrid::new(3, 7.4, 6.0, 64, 8).unwrap();
    let t = std::time::Instant::now();
    let eq = solve_poisson_emden(&PotentialSpec::quadratic(3, 1.0), 0.0, &g, 1e-10, 5).unwrap();
    let sg = g.spatial();
    let mut err = 0.0f64;
    for i in 0..sg.len() {
        let x = sg.coords(i);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let exact = erf(r / 2f64.sqrt()) / (4.0 * PI * r);
        err = err.max((eq.u_inf.values()[i] - exact).abs());
    }
    eprintln!("closed form err {err:e} in {:?}", t.elapsed());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn repulsive_3d_converges_positive() {
    let g = PhaseGrid::new(3, 7.4, 6.0, 64, 8).unwrap();
    let t = std::time::Instant::now();
    let eq = solve_poisson_emden(&PotentialSpec::quadratic(3, 1.0), 0.05, &g, 1e-7, 200).unwrap();
    eprintln!("iters {} residual {:e} min U {:e} in {:?}", eq.iters, eq.residual, eq.u_inf.min(), t.elapsed());
    assert!(eq.residual < 1e-6);
    assert!(eq.u_inf.min() >= -1e-10);
}

#[test]
fn harmonic_maxwellian_is_a_gaussian_product() {
    let g = PhaseGrid::new(2, 8.0, 8.0, 32, 32).unwrap();
    let v = SpatialField::from_fn(g.spatial(), |x| 0.5 * (x[0] * x[0] + x[1] * x[1]) + 3.0);
    let (m, _) = maxwellian(&v, &g).unwrap();
    let exact = DistributionField::from_fn(g, |x, v| {
        (-(x[0] * x[0] + x[1] * x[1] + v[0] * v[0] + v[1] * v[1]) / 2.0).exp() / (4.0 * PI * PI)
    })
    .unwrap();
    let rel = m.values().iter().zip(exact.values()).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    assert!(rel < 1e-10, "{rel:e}");
}

fn radial_phase(g: PhaseGrid, rho: impl Fn(f64) -> f64 + Sync + Send) -> DistributionField {
    let sv = g.velocity();
    let zv: f64 = (0..sv.len()).map(|j| (-sv.coords(j).iter().map(|c| c * c).sum::<f64>() / 2.0).exp()).sum::<f64>()
        * g.dv_vol();
    DistributionField::from_fn(g, move |x, v| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        rho(r) * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp() / zv
    })
    .unwrap()
}

/// Sup error of the radial field against `-m(r)/(4πr²)` for `r ≤ 4`,
/// relative to the sup of the exact field.
fn newton_error(n: usize) -> f64 {
    let g = PhaseGrid::new(3, 6.0, 4.0, n, 8).unwrap();
    let profile = |r: f64| (1.0 + r * r / 2.0).powi(-4);
    let f0 = radial_phase(g, profile);
    let (u0, e0, report) = initial_potential(&f0).unwrap();
    assert!(report.sup_u > 0.0 && report.sup_grad > 0.0 && report.sup_hess > 0.0);
    assert!(u0.min() >= 0.0);
    // mass inside r by composite Simpson on 4πs²ρ(s)
    let inside = |r: f64| {
        let n = 400;
        let h = r / n as f64;
        let w = |s: f64| 4.0 * PI * s * s * profile(s);
        let weight = |k: usize| if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        (0..=n).map(|k| w(k as f64 * h) * weight(k)).sum::<f64>() * h / 3.0
    };
    let sg = g.spatial();
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for i in 0..sg.len() {
        let x = sg.coords(i);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r > 4.0 {
            continue;
        }
        let radial: f64 = (0..3).map(|k| e0.component(k)[i] * x[k] / r).sum();
        let exact = -inside(r) / (4.0 * PI * r * r);
        err = err.max((radial - exact).abs());
        scale = scale.max(exact.abs());
    }
    err / scale
}

#[test]
fn initial_potential_obeys_newtons_theorem() {
    let (coarse, fine) = (newton_error(16), newton_error(32));
    assert!(fine < 3.5e-2, "{fine:e}");
    assert!((coarse / fine).log2() > 1.7, "{coarse:e} {fine:e}");
}

#[test]
fn initial_potential_trivial_cases() {
    let g = PhaseGrid::new(3, 5.0, 4.0, 16, 8).unwrap();
    let (u, e, _) = initial_potential(&DistributionField::zeros(g)).unwrap();
    assert_eq!(u.sup_norm(), 0.0);
    assert_eq!(e.sup_norm(), 0.0);
    let eq = solve_poisson_emden(&PotentialSpec::quadratic(3, 1.0), 0.0, &g, 1e-10, 3).unwrap();
    let (u, _, _) = initial_potential(&eq.m_inf).unwrap();
    assert!(u.sub(&eq.u_inf).unwrap().sup_norm() < 1e-12 * eq.u_inf.sup_norm());
    let one_d = PhaseGrid::new(1, 5.0, 4.0, 16, 8).unwrap();
    assert!(initial_potential(&DistributionField::zeros(one_d)).is_err());
    assert!(initial_potential(&eq.m_inf.scaled(-1.0)).is_err());
}

fn one_d(eps0: f64, n: usize) -> krlx::equilibrium::EquilibriumState {
    let g = PhaseGrid::new(1, 8.0, 8.0, n, 16).unwrap();
    solve_poisson_emden(&PotentialSpec::quadratic(1, 1.0), eps0, &g, 1e-11, 300).unwrap()
}

#[test]
fn smaller_coupling_contracts_faster() {
    let sweep = [0.4, 0.2, 0.1, 0.05, 0.025];
    let coarse: Vec<_> = sweep.iter().map(|&e| one_d(e, 128)).collect();
    assert!(coarse.windows(2).all(|w| w[1].iters <= w[0].iters), "{:?}", coarse.iter().map(|e| e.iters).collect::<Vec<_>>());
    // Lipschitz factor of the undamped map ~ C|eps0| with C stable in eps0 and grid
    let c: Vec<f64> = coarse.iter().zip(&sweep).map(|(e, s)| e.lipschitz_estimate() / s).collect();
    let fine = one_d(0.05, 256).lipschitz_estimate() / 0.05;
    let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi < 1.5 * lo, "{c:?}");
    assert!((fine / c[3] - 1.0).abs() < 0.1, "{fine} vs {}", c[3]);
}

#[test]
fn residual_certificate_and_smoothness() {
    let g = PhaseGrid::new(1, 8.0, 8.0, 256, 16).unwrap();
    let ve = PotentialSpec::quadratic(1, 1.0);
    let sg = g.spatial();
    let mut grads = Vec::new();
    let mut hess = Vec::new();
    for eps0 in [0.0, 0.05, 0.1] {
        let eq = solve_poisson_emden(&ve, eps0, &g, 1e-9, 300).unwrap();
        assert!(eq.residual <= 1e-8, "eps0 {eps0}: {:e}", eq.residual);
        assert!((eq.m_inf.mass() - 1.0).abs() < 1e-12);
        grads.push(eq.e_inf.sup_norm());
        hess.push(hessian_sup(&sg, eq.u_inf.values()));
    }
    for v in [&grads, &hess] {
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi / lo - 1.0 < 0.05, "{v:?}");
    }
}

#[test]
fn fixed_point_is_independent_of_the_start() {
    let g = PhaseGrid::new(2, 7.0, 6.0, 48, 8).unwrap();
    let ve = PotentialSpec::quadratic(2, 1.0);
    let a = solve_poisson_emden(&ve, 0.1, &g, 1e-11, 300).unwrap();
    let start = SpatialField::from_fn(g.spatial(), |x| 2.0 * (-(x[0] * x[0]) / 3.0).exp() - 0.5 * x[1]);
    let mut opts = PoissonEmdenOptions::new(1e-11, 300);
    opts.initial = Some(start);
    let b = solve_poisson_emden_with(&ve, 0.1, &g, &opts).unwrap();
    assert!(a.u_inf.sub(&b.u_inf).unwrap().sup_norm() < 1e-9);
    let wrong = SpatialField::zeros(SpatialGrid::new(2, 7.0, 16).unwrap(), 1);
    opts.initial = Some(wrong);
    assert!(solve_poisson_emden_with(&ve, 0.1, &g, &opts).is_err());
}
