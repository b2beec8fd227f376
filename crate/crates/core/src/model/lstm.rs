//! One direction of the gated recurrent encoder, with the step caches needed
//! for backpropagation through time.

use ndarray::{s, Array1, Array2, ArrayView1, Zip};

use super::params::LstmWeights;

pub(crate) struct Step {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    o: Array1<f64>,
    g: Array1<f64>,
    tanh_c: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run the recurrence over `inputs` and return the final hidden state. When
/// `steps` is given, per-step caches are pushed onto it.
pub(crate) fn run<'a>(
    w: &LstmWeights,
    inputs: impl Iterator<Item = ArrayView1<'a, f64>>,
    mut steps: Option<&mut Vec<Step>>,
) -> Array1<f64> {
    let d = w.bias.len() / 4;
    let mut h = Array1::<f64>::zeros(d);
    let mut c = Array1::<f64>::zeros(d);
    for x in inputs {
        let z = w.input.dot(&x) + w.recurrent.dot(&h) + &w.bias;
        let i = z.slice(s![0..d]).mapv(sigmoid);
        let f = z.slice(s![d..2 * d]).mapv(sigmoid);
        let o = z.slice(s![2 * d..3 * d]).mapv(sigmoid);
        let g = z.slice(s![3 * d..4 * d]).mapv(f64::tanh);
        let c_next = &f * &c + &i * &g;
        let tanh_c = c_next.mapv(f64::tanh);
        let h_next = &o * &tanh_c;
        if let Some(steps) = steps.as_deref_mut() {
            steps.push(Step {
                x: x.to_owned(),
                h_prev: h,
                c_prev: c,
                i,
                f,
                o,
                g,
                tanh_c,
            });
        }
        h = h_next;
        c = c_next;
    }
    h
}

/// Backpropagate a gradient on the final hidden state. Accumulates weight
/// gradients into `grad` and returns the input gradient of every step, in
/// step order.
pub(crate) fn backward(w: &LstmWeights, steps: &[Step], dh_final: ArrayView1<f64>, grad: &mut LstmWeights) -> Vec<Array1<f64>> {
    let d = w.bias.len() / 4;
    let mut dh = dh_final.to_owned();
    let mut dc = Array1::<f64>::zeros(d);
    let mut dxs = vec![Array1::<f64>::zeros(d); steps.len()];
    let mut dz = Array1::<f64>::zeros(4 * d);
    for (t, st) in steps.iter().enumerate().rev() {
        let d_o = &dh * &st.tanh_c;
        Zip::from(&mut dc)
            .and(&dh)
            .and(&st.o)
            .and(&st.tanh_c)
            .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));
        let d_i = &dc * &st.g;
        let d_g = &dc * &st.i;
        let d_f = &dc * &st.c_prev;
        Zip::from(dz.slice_mut(s![0..d])).and(&d_i).and(&st.i).for_each(|z, &g, &a| *z = g * a * (1.0 - a));
        Zip::from(dz.slice_mut(s![d..2 * d])).and(&d_f).and(&st.f).for_each(|z, &g, &a| *z = g * a * (1.0 - a));
        Zip::from(dz.slice_mut(s![2 * d..3 * d])).and(&d_o).and(&st.o).for_each(|z, &g, &a| *z = g * a * (1.0 - a));
        Zip::from(dz.slice_mut(s![3 * d..4 * d])).and(&d_g).and(&st.g).for_each(|z, &g, &a| *z = g * (1.0 - a * a));

        add_outer(&mut grad.input, &dz, &st.x);
        add_outer(&mut grad.recurrent, &dz, &st.h_prev);
        grad.bias += &dz;
        dxs[t] = w.input.t().dot(&dz);
        dh = w.recurrent.t().dot(&dz);
        dc = &dc * &st.f;
    }
    dxs
}

/// `m += a ⊗ b`
pub(crate) fn add_outer(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}
