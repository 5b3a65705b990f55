use cohsync::control::*;
use cohsync::signal::{crlb_sigma_r, delta_f_for_sigma};
use cohsync::Error;
use proptest::prelude::*;

/// First-order lag behind a one-step transport delay:
/// `y[n+1] = a·y[n] + (1 - a)·u[n-1]`.
struct DelayedLag {
    a: f64,
    y: f64,
    held: f64,
}

impl Plant for DelayedLag {
    fn reset(&mut self) {
        self.y = 0.0;
        self.held = 0.0;
    }

    fn step(&mut self, input: f64) -> f64 {
        self.y = self.a * self.y + (1.0 - self.a) * self.held;
        self.held = input;
        self.y
    }
}

/// `y[n+1] = y[n] + b·u[n]`.
struct Integrator {
    b: f64,
    y: f64,
}

impl Plant for Integrator {
    fn reset(&mut self) {
        self.y = 0.0;
    }

    fn step(&mut self, input: f64) -> f64 {
        self.y += self.b * input;
        self.y
    }
}

fn state(k_p: f64, t_i: Option<f64>, x_prev: f64, e_prev: f64) -> PiControllerState {
    PiControllerState {
        k_p,
        t_i,
        x_prev,
        e_prev,
        x_min: 0.0,
        x_max: 7.5e6,
        units: ControllerUnits::default(),
    }
}

#[test]
fn lag_plant_ultimate_gain() {
    // characteristic z² - a·z + (1 - a)·K: marginal at K = 1/(1 - a),
    // period 2π/acos(a/2)
    let a = 0.8;
    let mut plant = DelayedLag { a, y: 0.0, held: 0.0 };
    let grid: Vec<f64> = (0..=40).map(|i| 4.0 + 0.05 * i as f64).collect();
    let test = OscillationTest::default();
    let (k_u, t_u) = find_ultimate_gain(&mut plant, &grid, &test).unwrap();
    assert!((k_u - 5.0).abs() <= 0.05 + 1e-9, "{k_u}");
    let period = 2.0 * std::f64::consts::PI / (a / 2.0f64).acos();
    assert!((t_u - period).abs() < 0.1, "{t_u} vs {period}");
}

#[test]
fn integrator_below_two_never_oscillates() {
    let mut plant = Integrator { b: 1.0, y: 0.0 };
    let grid: Vec<f64> = (1..40).map(|i| 0.05 * i as f64).collect();
    assert_eq!(
        find_ultimate_gain(&mut plant, &grid, &OscillationTest::default()),
        Err(Error::NoOscillation)
    );
}

#[test]
fn empty_grid() {
    let mut plant = Integrator { b: 1.0, y: 0.0 };
    assert!(find_ultimate_gain(&mut plant, &[], &OscillationTest::default()).is_err());
}

fn surrogate(rho: f64, target: f64) -> (CrlbRangingPlant, OscillationTest, f64) {
    let units = ControllerUnits::default();
    let mut plant = CrlbRangingPlant::new(rho, 5, 40, units);
    plant.output_in_error_units = true;
    let x_star = 2.0 * delta_f_for_sigma(target, rho, 5).unwrap();
    let test = OscillationTest {
        setpoint: target / units.error_unit_m,
        initial_input: 0.9 * x_star / units.output_unit_hz,
        bias: x_star / units.output_unit_hz,
        error_sign: ErrorSign::OutputMinusSetpoint,
        input_limits: Some((1e-3, 7.5)),
        dt: 21.0,
        ..OscillationTest::default()
    };
    (plant, test, x_star)
}

#[test]
fn surrogate_ranging_plant_matches_its_linearisation() {
    // σ ∝ 1/x, so the loop gain at the operating point is K·σ*/x*
    let target = 0.01;
    let (mut plant, test, x_star) = surrogate(1e6, target);
    let k_u = (x_star / 1e6) / (target / 1e-6);
    let grid: Vec<f64> = (1..=60).map(|i| k_u * (0.5 + 0.02 * i as f64)).collect();
    let (found, t_u) = find_ultimate_gain(&mut plant, &grid, &test).unwrap();
    assert!((found / k_u - 1.0).abs() <= 0.02 + 1e-9, "{found} vs {k_u}");
    assert!((t_u - 42.0).abs() < 1.0, "{t_u}");
}

#[test]
fn tuned_gains_drive_sigma_to_target() {
    let target = 0.01;
    let rho = 1e6;
    let (plant, _, x_star) = surrogate(rho, target);
    let k_u = (x_star / 1e6) / (target / 1e-6);
    let (k_p, t_i) = ziegler_nichols_gains(k_u, 42.0).unwrap();
    let mut st = state(k_p, Some(t_i), 3.48e6, 0.0);
    for _ in 0..80 {
        let sigma = plant.sigma(st.x_prev);
        st = pi_step(&st, sigma - target, 21.0).unwrap().0;
    }
    assert!((st.x_prev / x_star - 1.0).abs() < 0.01, "{} vs {x_star}", st.x_prev);
    let sigma = crlb_sigma_r(st.x_prev / 2.0, rho).unwrap() / 5f64.sqrt();
    assert!((sigma / target - 1.0).abs() < 0.01);
}

#[test]
fn noisy_surrogate_is_reproducible() {
    let mut a = CrlbRangingPlant::new(1e4, 5, 40, ControllerUnits::default()).with_sampling_noise(9);
    let mut b = a.clone();
    let ya: Vec<f64> = (0..20).map(|_| a.step(5.0)).collect();
    let yb: Vec<f64> = (0..20).map(|_| b.step(5.0)).collect();
    assert_eq!(ya, yb);
    a.reset();
    assert_eq!(a.step(5.0), ya[0]);
}

proptest! {
    #[test]
    fn zero_error_is_identity(k_p in 0.0..1e-3f64, t_i in 0.5..100.0f64, x in 0.0..7.5e6f64, dt in 0.1..60.0f64) {
        let st = state(k_p, Some(t_i), x, 0.0);
        let (_, out) = pi_step(&st, 0.0, dt).unwrap();
        prop_assert_eq!(out, x);
    }

    #[test]
    fn output_stays_clamped(e in -1.0..1.0f64, e_prev in -1.0..1.0f64, x in 0.0..7.5e6f64, k_p in 0.0..1.0f64) {
        let st = state(k_p, Some(3.3), x, e_prev);
        let (_, out) = pi_step(&st, e, 21.0).unwrap();
        prop_assert!((0.0..=7.5e6).contains(&out));
    }

    #[test]
    fn velocity_form_equals_positional_form(errors in prop::collection::vec(-5e-3..5e-3f64, 1..40), k_p in 1e-7..1e-5f64, t_i in 1.0..20.0f64) {
        // unclamped: x[n] = x0 + K_p·(e[n] + Δt/T_i·Σe)
        let dt = 1.0;
        let mut st = PiControllerState { x_min: -1e12, x_max: 1e12, ..state(k_p, Some(t_i), 3e6, 0.0) };
        let mut sum = 0.0;
        for &e in &errors {
            st = pi_step(&st, e, dt).unwrap().0;
            sum += e;
            let positional = 3e6 + k_p * 1e6 * (e + dt / t_i * sum) / 1e-6;
            prop_assert!((st.x_prev - positional).abs() < 1e-9 * positional.abs().max(1.0));
        }
    }

    #[test]
    fn larger_sigma_widens_the_tones(e in 1e-6..1e-2f64, x in 1e6..6e6f64) {
        let st = state(1e-5, Some(3.3), x, 0.0);
        let up = pi_step(&st, e, 21.0).unwrap().1;
        let down = pi_step(&st, -e, 21.0).unwrap().1;
        prop_assert!(up > x && down < x);
    }
}
