//! Central finite-difference gradient checking.

use super::tape::{Tape, Var};

/// Dense input to a gradient check.
#[derive(Clone, Debug)]
pub struct Input {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Input {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols);
        Input { rows, cols, values }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input index, element, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Floor for the relative-error denominator so that near-zero gradients are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences with the given step, for every input element.
pub fn check_gradients<F>(inputs: &[Input], step: f64, f: F) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .zip(vals)
            .map(|(inp, v)| tape.leaf(inp.rows, inp.cols, v.clone(), false))
            .collect();
        let out = f(&mut tape, &vars);
        tape.scalar(out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|inp| tape.leaf(inp.rows, inp.cols, inp.values.clone(), true))
        .collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out);

    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|i| i.values.clone()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (k, inp) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], inp.values.len());
        for e in 0..inp.values.len() {
            let orig = vals[k][e];
            vals[k][e] = orig + step;
            let plus = eval(&vals);
            vals[k][e] = orig - step;
            let minus = eval(&vals);
            vals[k][e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.checked += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((k, e, a, numeric));
            }
        }
    }
    report
}

/// Fixed pseudo-random projection `sum(out * w)` that turns any output into a
/// scalar with generic gradients.
pub fn project_to_scalar(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    use rand::{Rng, SeedableRng};
    let (n, m) = tape.shape(out);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = tape.constant(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let prod = tape.mul(out, w);
    tape.sum(prod)
}

pub fn random_input(rows: usize, cols: usize, scale: f64, seed: u64) -> Input {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Input::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}
