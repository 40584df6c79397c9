use stiffexp::{integrate, SchemeSpec, SplitSystem};

/// `dy/dt = -y + sin t`, `y(0) = 1`.
struct Forced;

impl Forced {
    fn exact(t: f64) -> f64 {
        1.5 * (-t).exp() + 0.5 * (t.sin() - t.cos())
    }
}

impl SplitSystem for Forced {
    fn dim(&self) -> usize {
        1
    }
    fn stabilized_count(&self) -> usize {
        1
    }
    fn eval_split(&self, t: f64, _y: &[f64], a: &mut [f64], b: &mut [f64]) {
        a[0] = -1.0;
        b[0] = t.sin();
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn horizon(&self) -> f64 {
        3.0
    }
}

/// Two coupled components with a state-dependent linear part on the first.
struct Coupled;

impl SplitSystem for Coupled {
    fn dim(&self) -> usize {
        2
    }
    fn stabilized_count(&self) -> usize {
        1
    }
    fn eval_split(&self, t: f64, y: &[f64], a: &mut [f64], b: &mut [f64]) {
        a[0] = -4.0 - y[1] * y[1];
        b[0] = (2.0 * t).cos() + y[1];
        b[1] = -0.5 * y[1] + y[0];
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![0.3, -0.2]
    }
    fn horizon(&self) -> f64 {
        2.0
    }
}

/// Observed rate between the two finest meshes.
fn slope(errors: &[(usize, f64)]) -> f64 {
    let (m0, e0) = errors[errors.len() - 2];
    let (m1, e1) = errors[errors.len() - 1];
    (e0 / e1).ln() / (m1 as f64 / m0 as f64).ln()
}

const MESHES: [usize; 4] = [96, 192, 384, 768];

#[test]
fn orders_on_forced_linear_problem() {
    let exact = Forced::exact(Forced.horizon());
    for spec in SchemeSpec::catalogue() {
        let errors: Vec<(usize, f64)> = MESHES
            .iter()
            .map(|&m| {
                let run = integrate(&Forced, &spec, m).unwrap();
                (m, (run.last_state()[0] - exact).abs())
            })
            .collect();
        let p = slope(&errors);
        assert!((p - spec.order() as f64).abs() <= 0.2, "{spec}: slope {p}, errors {errors:?}");
    }
}

#[test]
fn orders_on_nonlinear_problem() {
    let fine = integrate(&Coupled, &"RK_4".parse().unwrap(), 768 * 32).unwrap();
    let exact = fine.last_state().to_vec();
    for spec in SchemeSpec::catalogue() {
        let errors: Vec<(usize, f64)> = MESHES
            .iter()
            .map(|&m| {
                let run = integrate(&Coupled, &spec, m).unwrap();
                let err = run.last_state().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                (m, err)
            })
            .collect();
        let p = slope(&errors);
        assert!((p - spec.order() as f64).abs() <= 0.2, "{spec}: slope {p}, errors {errors:?}");
    }
}
