use levy_multiscale::control::{Payoff, VolatilityModel};
use levy_multiscale::finance::{bs_oracle, merton_hara_closed_form, merton_hbar, MertonSpec, PricingSpec};
use levy_multiscale::hjb::{effective_solve, pide_solve, sup_norm_gap, CompactBox, Grid1d, SolverGrids};
use levy_multiscale::{ControlProblemSpec, InvariantMeasure, LevyMeasureModel};

fn grids(x: Grid1d, steps: Option<usize>) -> SolverGrids {
    SolverGrids {
        x,
        y: Grid1d::uniform(-4.0, 4.0, 17).unwrap(),
        time_steps: steps,
        snapshots: 5,
    }
}

fn merton() -> MertonSpec {
    MertonSpec::new(0.05, 0.1, VolatilityModel::Constant(0.2), (-3.0, 3.0), 1.0, 0.5, 1.0).unwrap()
}

#[test]
fn effective_merton_matches_closed_form() {
    let spec = merton();
    let mu = InvariantMeasure::point_mass(0.0);
    let h = merton_hbar(&spec, &mu);
    let f = effective_solve(&spec.control_problem(h), &mu, &grids(Grid1d::uniform(0.0, 4.0, 161).unwrap(), Some(100))).unwrap();
    let mut worst: f64 = 0.0;
    for (ti, &t) in f.t_grid.iter().enumerate() {
        for (xi, &w) in f.x_grid.iter().enumerate() {
            if (0.5..=2.0).contains(&w) {
                let exact = merton_hara_closed_form(&spec, &mu, t, w).unwrap();
                worst = worst.max((f.at(ti, 0, xi) - exact).abs() / exact);
            }
        }
    }
    assert!(worst < 1e-3, "relative error {worst}");
}

#[test]
fn effective_constant_and_martingale_payoffs() {
    let mu = InvariantMeasure::two_atom(-1.0, 1.0);
    let g = grids(Grid1d::sinh_stretched(50.0, 200, 5.0).unwrap(), Some(50));
    let pricing = PricingSpec::new(0.05, VolatilityModel::Tanh { base: 0.2, amplitude: 0.05 }, Payoff::Constant(3.0), 1.0)
        .with_discount(0.0);
    let f = effective_solve(&pricing.control_problem(), &mu, &g).unwrap();
    assert!(f.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
    let lin = PricingSpec { payoff: Payoff::Identity, ..pricing.with_discount(0.05) };
    let f = effective_solve(&lin.control_problem(), &mu, &g).unwrap();
    for (ti, _) in f.t_grid.iter().enumerate() {
        for (xi, &x) in f.x_grid.iter().enumerate() {
            // first order in time: drift and discount are split across a step
            assert!((f.at(ti, 0, xi) - x).abs() < 1e-4 * (1.0 + x), "x={x}");
        }
    }
}

#[test]
fn effective_call_matches_black_scholes() {
    let sigma = VolatilityModel::Tanh { base: 0.2, amplitude: 0.05 };
    let mu = InvariantMeasure::two_atom(-1.0, 1.0);
    let spec = PricingSpec::new(0.05, sigma.clone(), Payoff::Call { strike: 1.0 }, 1.0);
    let s = levy_multiscale::finance::effective_vol_quadratic(&sigma, &mu);
    let f = effective_solve(&spec.control_problem(), &mu, &grids(Grid1d::sinh_stretched(50.0, 400, 5.0).unwrap(), Some(200))).unwrap();
    for &x in &[0.5, 1.0, 1.5, 2.0] {
        let v = f.interpolate(0.0, x, 0.0);
        let exact = bs_oracle(&spec, s, 0.0, x);
        assert!((v - exact).abs() < 2e-3, "x={x}: {v} vs {exact}");
    }
}

#[test]
fn terminal_data_and_monotonicity() {
    let model = LevyMeasureModel::symmetric(1.5).unwrap();
    let sigma = VolatilityModel::Tanh { base: 0.2, amplitude: 0.05 };
    let lo = PricingSpec::new(0.05, sigma.clone(), Payoff::Call { strike: 1.2 }, 0.5);
    let hi = PricingSpec { payoff: Payoff::Call { strike: 0.8 }, ..lo.clone() };
    let g = grids(Grid1d::uniform(0.0, 6.0, 61).unwrap(), None);
    let a = pide_solve(&lo.control_problem(), &model, 0.1, &g).unwrap();
    let b = pide_solve(&hi.control_problem(), &model, 0.1, &g).unwrap();
    let last = a.t_grid.len() - 1;
    for yi in 0..a.ny() {
        for (xi, &x) in a.x_grid.iter().enumerate() {
            assert_eq!(a.at(last, yi, xi), lo.payoff.eval(x));
        }
    }
    assert!(a.values.iter().zip(&b.values).all(|(u, v)| u <= v));
    assert!(a.values.iter().all(|v| v.is_finite()));
}

#[test]
fn discount_identity_on_the_pricing_operator() {
    let model = LevyMeasureModel::one_sided(1.5).unwrap();
    let sigma = VolatilityModel::Tanh { base: 0.2, amplitude: 0.05 };
    let base = PricingSpec::new(0.0, sigma, Payoff::Put { strike: 1.0 }, 1.0).with_discount(0.0);
    let disc = base.clone().with_discount(0.3);
    let g = grids(Grid1d::uniform(0.0, 6.0, 61).unwrap(), None);
    let a = pide_solve(&base.control_problem(), &model, 0.5, &g).unwrap();
    let b = pide_solve(&disc.control_problem(), &model, 0.5, &g).unwrap();
    let nyx = a.ny() * a.nx();
    for (ti, &t) in a.t_grid.iter().enumerate() {
        let f = (0.3 * (t - 1.0)).exp();
        for k in ti * nyx..(ti + 1) * nyx {
            assert!((b.values[k] - f * a.values[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn small_epsilon_pricing_field_approaches_the_effective_field() {
    let model = LevyMeasureModel::symmetric(1.5).unwrap();
    let sigma = VolatilityModel::Tanh { base: 0.2, amplitude: 0.1 };
    let spec = PricingSpec::new(0.05, sigma, Payoff::Call { strike: 1.0 }, 1.0);
    let g = SolverGrids {
        x: Grid1d::sinh_stretched(20.0, 120, 4.0).unwrap(),
        y: Grid1d::uniform(-6.0, 6.0, 25).unwrap(),
        time_steps: None,
        snapshots: 3,
    };
    // the limit is taken against the stationary law of the discrete y-operator
    let stencil = levy_multiscale::hjb::YStencil::new(&model, &g.y).unwrap();
    let pi = stencil.stationary().unwrap();
    let pi: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    let weights = pi.iter().map(|p| p / total).collect();
    let mu = InvariantMeasure::new(g.y.points().to_vec(), weights, levy_multiscale::MeasureProvenance::Explicit, 0).unwrap();
    let eff = effective_solve(&spec.control_problem(), &mu, &SolverGrids { time_steps: Some(400), ..g.clone() }).unwrap();
    let bx = CompactBox { t: (0.0, 1.0), x: (0.5, 2.0), y: (-2.0, 2.0) };
    let gaps: Vec<f64> = [1.0, 0.1, 0.01]
        .iter()
        .map(|&e| sup_norm_gap(&pide_solve(&spec.control_problem(), &model, e, &g).unwrap(), &eff, &bx).unwrap())
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 2e-3, "{gaps:?}");
}

#[test]
fn trivial_problem_is_pure_discounting() {
    let spec = ControlProblemSpec::trivial(Payoff::Identity, 0.2, 2.0);
    let mu = InvariantMeasure::point_mass(0.0);
    let f = effective_solve(&spec, &mu, &grids(Grid1d::uniform(0.0, 3.0, 31).unwrap(), Some(40))).unwrap();
    for (ti, &t) in f.t_grid.iter().enumerate() {
        for (xi, &x) in f.x_grid.iter().enumerate() {
            let exact = x * (0.2 * (t - 2.0)).exp();
            // implicit Euler discounting is exact per step: e^{-c dt}
            assert!((f.at(ti, 0, xi) - exact).abs() < 1e-12);
        }
    }
}
