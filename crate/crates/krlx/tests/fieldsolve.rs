use krlx::equilibrium::{maxwellian, PotentialSpec};
use krlx::fieldsolve::*;
use krlx::phasecore::{project_perp, DistributionField, PhaseGrid, SpatialField, SpatialGrid, WeightedOperatorSet};
use krlx::semigroup::{Limiter, Propagator, PropagatorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;
use std::f64::consts::PI;

fn gaussian_density(sg: SpatialGrid, c: [f64; 3]) -> SpatialField {
    let rho = SpatialField::from_fn(sg, |x| {
        (-(0..sg.d).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>() / 2.0).exp()
    });
    rho.scaled(1.0 / rho.integral())
}

fn equilibrium_weight(g: PhaseGrid) -> DistributionField {
    let v = PotentialSpec::quadratic(g.d, 1.0).sample(&g.spatial()).unwrap();
    maxwellian(&v, &g).unwrap().0
}

#[test]
fn density_of_maxwellian_is_spatial_factor() {
    let g = PhaseGrid::new(1, 8.0, 8.0, 64, 64).unwrap();
    let m = equilibrium_weight(g);
    let rho = density(&m);
    let sg = g.spatial();
    let z: f64 = (0..sg.len()).map(|i| (-sg.coords(i)[0].powi(2) / 2.0).exp()).sum::<f64>() * sg.h();
    let err = (0..sg.len())
        .map(|i| (rho.values()[i] - (-sg.coords(i)[0].powi(2) / 2.0).exp() / z).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err:e}");
    assert!((rho.integral() - m.mass()).abs() < 1e-14);
    assert_eq!(density(&DistributionField::zeros(g)).sup_norm(), 0.0);
}

#[test]
fn radial_field_matches_shell_theorem() {
    let sg = SpatialGrid::new(3, 6.0, 48).unwrap();
    let rho = gaussian_density(sg, [0.0; 3]);
    let e = field_from_density(&rho);
    let mut err = 0.0f64;
    for i in 0..sg.len() {
        let x = sg.coords(i);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r > 4.0 {
            continue;
        }
        let inside = erf(r / 2f64.sqrt()) - (2.0 / PI).sqrt() * r * (-r * r / 2.0).exp();
        let mag = inside / (4.0 * PI * r * r);
        for k in 0..3 {
            err = err.max((e.component(k)[i] + mag * x[k] / r).abs());
        }
    }
    let scale = e.sup_norm();
    assert!(err < 1e-2 * scale, "err {err:e} vs sup {scale:e}");
}

#[test]
fn far_field_is_a_point_charge() {
    for (d, n) in [(2usize, 96usize), (3, 48)] {
        let sg = SpatialGrid::new(d, 6.0, n).unwrap();
        let rho = gaussian_density(sg, [0.0; 3]);
        let e = field_from_density(&rho);
        // cell centre on the first axis closest to 0.9 L
        let i = ((0.9 * 6.0 + 6.0) / sg.h()).floor() as usize;
        let mut m = [n / 2; 3];
        m[0] = i;
        let idx = (0..d).fold(0, |acc, k| acc * n + m[k]);
        let x = sg.coords(idx);
        let r = (0..d).map(|k| x[k] * x[k]).sum::<f64>().sqrt();
        let area = if d == 3 { 4.0 * PI } else { 2.0 * PI };
        let expect = 1.0 / (area * r.powi(d as i32 - 1));
        let got = (0..d).map(|k| e.component(k)[idx].powi(2)).sum::<f64>().sqrt();
        assert!((got / expect - 1.0).abs() < 0.05, "d={d}: {got} vs {expect}");
    }
}

#[test]
fn symmetric_density_gives_antisymmetric_field() {
    let sg = SpatialGrid::new(3, 5.0, 24).unwrap();
    let a = gaussian_density(sg, [1.0, -0.5, 0.25]);
    let b = gaussian_density(sg, [-1.0, 0.5, -0.25]);
    let rho = a.lincomb(1.0, &b, 1.0).unwrap();
    let e = field_from_density(&rho);
    let n = sg.len();
    let mut err = 0.0f64;
    for i in 0..n {
        let j = n - 1 - i; // cell at -x
        for k in 0..3 {
            err = err.max((e.component(k)[i] + e.component(k)[j]).abs());
        }
    }
    assert!(err <= 1e-10 * e.sup_norm(), "{err:e}");
}

fn divergence_error(n: usize) -> f64 {
    let sg = SpatialGrid::new(3, 6.0, n).unwrap();
    let rho = gaussian_density(sg, [0.3, 0.0, -0.2]);
    let e = field_from_density(&rho);
    let h = sg.h();
    let mut err = 0.0f64;
    for i in 0..sg.len() {
        let x = sg.coords(i);
        if x.iter().take(3).any(|c| c.abs() > 3.0) {
            continue;
        }
        let div: f64 = (0..3)
            .map(|k| {
                let s = sg.stride(k);
                (e.component(k)[i + s] - e.component(k)[i - s]) / (2.0 * h)
            })
            .sum();
        err = err.max((-div - rho.values()[i]).abs());
    }
    err
}

#[test]
fn field_divergence_reproduces_density_at_second_order() {
    let (coarse, fine) = (divergence_error(16), divergence_error(32));
    let order = (coarse / fine).log2();
    assert!(order > 1.7, "{coarse:e} {fine:e} order {order}");
}

#[test]
fn h1_norm_is_the_dirichlet_energy() {
    let sg = SpatialGrid::new(2, 3.0, 20).unwrap();
    let u = SpatialField::from_fn(sg, |x| (x[0] - 0.3 * x[1]).sin() * (-(x[0] * x[0] + x[1] * x[1]) / 3.0).exp());
    let (n, h) = (sg.n, sg.h());
    let vals = u.values();
    let l2: f64 = vals.iter().map(|a| a * a).sum::<f64>() * h * h;
    let mut grad = 0.0;
    for i in 0..sg.len() {
        let m = sg.unflatten(i);
        for k in 0..2 {
            let s = sg.stride(k);
            let next = if m[k] + 1 < n { vals[i + s] } else { 0.0 };
            grad += (next - vals[i]).powi(2);
            if m[k] == 0 {
                grad += vals[i].powi(2);
            }
        }
    }
    let energy = (l2 + grad).sqrt();
    let h1 = h_norm(&u, 1.0).unwrap();
    assert!((h1 - energy).abs() < 1e-10 * energy, "{h1} {energy}");
    assert!((h_norm(&u, 0.0).unwrap() - l2.sqrt()).abs() < 1e-12);
}

/// Random smooth bumps, the same functions on every grid.
fn samples(g: PhaseGrid, count: usize) -> Vec<DistributionField> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let (s, c): (f64, f64) = (rng.gen_range(0.5..1.2), rng.gen_range(-1.0..1.0));
            DistributionField::from_fn(g, |x, v| {
                (c + x[0]) * (-((x[0] - a).powi(2) + (v[0] - b).powi(2)) / (2.0 * s * s)).exp()
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn field_bound_ratios_are_stable_under_refinement() {
    let coarse = PhaseGrid::new(1, 7.0, 7.0, 32, 32).unwrap();
    let fine = coarse.refined(2);
    let ops_c = WeightedOperatorSet::new(equilibrium_weight(coarse)).unwrap();
    let ops_f = WeightedOperatorSet::new(equilibrium_weight(fine)).unwrap();
    let mut family = samples(coarse, 20);
    family.push(DistributionField::zeros(coarse));
    let rc = check_field_bounds(&family, 0.1, &ops_c).unwrap();
    let rf = check_field_bounds(&samples(fine, 20), 0.1, &ops_f).unwrap();
    let r = rc.with_refinement(&rf);
    assert!(r.max.is_finite() && r.min > 0.0);
    assert!(r.samples[20].is_none() && r.warnings.len() == 1);
    let growth = r.refinement_growth().unwrap();
    assert!(growth < 2.0 && growth > 0.5, "{growth}");
    assert!(check_field_bounds(&family, 0.0, &ops_c).is_err());
}

#[test]
fn density_sobolev_ratios_are_bounded() {
    let coarse = PhaseGrid::new(1, 7.0, 7.0, 32, 32).unwrap();
    let fine = coarse.refined(2);
    let ops_c = WeightedOperatorSet::new(equilibrium_weight(coarse)).unwrap();
    let ops_f = WeightedOperatorSet::new(equilibrium_weight(fine)).unwrap();
    let max = |r: Vec<Option<f64>>| r.into_iter().flatten().fold(0.0, f64::max);
    for alpha in [0.0, 0.5, 1.0] {
        let c = max(density_sobolev_ratios(&samples(coarse, 20), alpha, &ops_c).unwrap());
        let f = max(density_sobolev_ratios(&samples(fine, 20), alpha, &ops_f).unwrap());
        assert!(c.is_finite() && c > 0.0);
        assert!((0.5..2.0).contains(&(f / c)), "alpha {alpha}: {c} -> {f}");
    }
}

#[test]
fn field_of_perp_flow_decays() {
    let g = PhaseGrid::new(1, 7.0, 7.0, 32, 32).unwrap();
    let cfg = PropagatorConfig::from_spec(g, &PotentialSpec::quadratic(1, 1.0), 0.05).unwrap();
    let p = Propagator::new(&cfg).unwrap();
    let m = p.maxwellian();
    let h0 = project_perp(&samples(g, 1)[0], &m).unwrap();
    let kappa: f64 = 0.25;
    let mut f = p.advance(h0, 0.0, 1.0).unwrap();
    let first = field_from_density(&density(&f)).sup_norm() * kappa.exp();
    for t in 2..=5 {
        f = p.advance(f, (t - 1) as f64, t as f64).unwrap();
        let weighted = field_from_density(&density(&f)).sup_norm() * (kappa * t as f64).exp();
        assert!(weighted <= 2.0 * first, "t={t}: {weighted} vs {first}");
    }
}

fn rough_3d(g: PhaseGrid) -> DistributionField {
    let f = DistributionField::from_fn(g, |x, v| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if s < 1.0 {
            (-r2 / 2.0).exp()
        } else {
            0.0
        }
    })
    .unwrap();
    f.scaled(1.0 / f.mass())
}

#[test]
fn short_time_field_exponent_coarse_3d() {
    let g = PhaseGrid::new(3, 4.0, 4.0, 8, 8).unwrap();
    let f0 = rough_3d(g);
    let ve = PotentialSpec::quadratic(3, 1.0);
    let cfg = low_regularity_config(&f0, &ve, 0.05, 0.05).unwrap().with_limiter(Limiter::Off);
    let p = Propagator::new(&cfg).unwrap();
    let r = short_time_field_check(&f0, 0.55, 0.01, &p, &[]).unwrap();
    assert!(r.passes, "{}", r.csv());
    // the equilibrium of K₀ does not generate a field
    let m0 = p.maxwellian();
    if let Ok(s) = short_time_field_check(&m0, 0.55, 0.01, &p, &[]) {
        // only the truncation drift of the coarse box remains
        let (still, moving) = (s.sup.last().unwrap(), r.sup.last().unwrap());
        assert!(*still < 1e-2 * moving, "{still:e} vs {moving:e}");
    }
    assert!(short_time_field_check(&f0, 0.9, 0.01, &p, &[]).is_err());
}
