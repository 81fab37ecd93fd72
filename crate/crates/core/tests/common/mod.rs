//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use vipgan::tensor::{Tape, Tensor, Var};

/// Relative error used by every gradient check: |a−n| / max(1, |a|, |n|)
/// is too loose for tiny gradients, so the denominator floors at 1e-8.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Central finite differences of a scalar function w.r.t. every element of
/// `inputs[which]`.
pub fn numeric_grad(
    inputs: &[Tensor<f64>],
    which: usize,
    h: f64,
    f: &dyn Fn(&[Tensor<f64>]) -> f64,
) -> Vec<f64> {
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let n = work[which].numel();
    (0..n)
        .map(|i| {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = orig + h;
            let up = f(&work);
            work[which].data_mut()[i] = orig - h;
            let down = f(&work);
            work[which].data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Evaluates `build` on a tape, runs backward, and compares every input's
/// gradient with central finite differences. Returns the worst relative
/// error across all elements (ignoring pairs where both are below `atol`).
pub fn check_gradients(
    inputs: &[Tensor<f64>],
    build: &dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Var,
) -> f64 {
    let owned: Vec<Tensor<f64>> = inputs.iter().map(|t| t.clone().with_requires_grad(true)).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = owned.iter().map(|t| tape.leaf(t)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&owned)
        .map(|(&v, t)| tape.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    drop(tape);

    let eval = |ts: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t)).collect();
        let loss = build(&mut tape, &vars);
        tape.item(loss).unwrap()
    };
    let mut worst = 0.0f64;
    for which in 0..owned.len() {
        let numeric = numeric_grad(&owned, which, 1e-5, &eval);
        for (&a, &n) in analytic[which].iter().zip(&numeric) {
            if a.abs() < 1e-9 && n.abs() < 1e-9 {
                continue;
            }
            worst = worst.max(rel_err(a, n));
        }
    }
    worst
}

/// Deterministic pseudo-random tensor in [-1, 1) for test fixtures.
pub fn fixture(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

use vipgan::layers::{DiscriminatorConfig, GeneratorConfig, GruCellParams, ViewEncoderConfig};
use vipgan::model::{loss_adversarial, loss_center, loss_neighbors, loss_total, NetworkConfig, VipGanParams};

/// Worst relative error of `analytic` against five-point differences of
/// `loss` over every element of every tensor reachable through `tensors`.
fn fd_over_tensors<M>(
    model: &mut M,
    tensors: &dyn Fn(&mut M) -> Vec<&mut Tensor<f64>>,
    analytic: &[Vec<f64>],
    loss: &dyn Fn(&M) -> f64,
) -> f64 {
    let h = 1e-4;
    let mut worst = 0.0f64;
    let count = tensors(model).len();
    assert_eq!(count, analytic.len(), "one analytic gradient per tensor");
    for t in 0..count {
        let n = tensors(model)[t].numel();
        for i in 0..n {
            let orig = tensors(model)[t].data()[i];
            let mut at = |dx: f64| {
                tensors(model)[t].data_mut()[i] = orig + dx;
                loss(model)
            };
            // five-point stencil, fourth-order accurate
            let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            tensors(model)[t].data_mut()[i] = orig;
            let a = analytic[t][i];
            if a.abs() < 1e-9 && numeric.abs() < 1e-9 {
                continue;
            }
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

/// Multiplies every element by `k`; the default init is small enough that
/// many gradients would otherwise sit near the finite-difference noise floor.
fn rescale(ts: Vec<&mut Tensor<f64>>, k: f64) {
    for t in ts {
        t.data_mut().iter_mut().for_each(|v| *v *= k);
    }
}

/// Finite-difference check of one GRU step with respect to the input, the
/// previous hidden state and all nine weight tensors.
pub fn gru_gradient_error() -> f64 {
    struct Gru {
        cell: GruCellParams<f64>,
        x: Tensor<f64>,
        h: Tensor<f64>,
    }
    fn all(m: &mut Gru) -> Vec<&mut Tensor<f64>> {
        let c = &mut m.cell;
        vec![
            &mut m.x, &mut m.h, &mut c.w_z, &mut c.w_r, &mut c.w_h, &mut c.u_z, &mut c.u_r, &mut c.u_h, &mut c.b_z,
            &mut c.b_r, &mut c.b_h,
        ]
    }
    fn run(m: &Gru, grads: bool) -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let b = m.cell.bind(&mut tape);
        let x = tape.leaf(&m.x);
        let h = tape.leaf(&m.h);
        let h1 = b.step(&mut tape, x, h).unwrap();
        let h2 = b.step(&mut tape, x, h1).unwrap();
        let target = tape.constant(&[4], vec![0.3, -0.2, 0.5, 0.1]).unwrap();
        let loss = tape.l2_loss(h2, target).unwrap();
        let value = tape.item(loss).unwrap();
        if !grads {
            return (value, Vec::new());
        }
        tape.backward(loss).unwrap();
        let mut vars = vec![x, h];
        vars.extend(b.vars());
        (value, vars.iter().map(|&v| tape.grad(v).unwrap().to_vec()).collect())
    }
    let mut m = Gru {
        cell: GruCellParams::new(3, 4, 11).unwrap(),
        x: fixture(&[3], 12).with_requires_grad(true),
        h: fixture(&[4], 13).with_requires_grad(true),
    };
    rescale(all(&mut m).split_off(2), 25.0);
    let (_, analytic) = run(&m, true);
    fd_over_tensors(&mut m, &all, &analytic, &|m| run(m, false).0)
}

/// Network small enough to difference every parameter: 8×8 views, 4-d view
/// features, 16-d hidden state, 3-d memory (so the projection is used).
pub fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        encoder: ViewEncoderConfig { resolution: 8, channels: vec![2], d_f: 4 },
        d_h: 16,
        f_dim: 3,
        neighbors: 2,
        generator: GeneratorConfig { seed_channels: 1, channels: vec![3], refine: false },
        discriminator: DiscriminatorConfig { resolution: 8, channels: [2, 2, 2, 2], conditioning: None },
    }
}

/// Finite-difference check of the whole objective `L_U + α·L_R + β·L_D2U`
/// through the view encoder, both RNNs, the projection, U and D, with
/// respect to every parameter and the memory row.
pub fn chain_gradient_error() -> f64 {
    struct Chain {
        params: VipGanParams<f64>,
        row: Tensor<f64>,
        neighbors: Vec<Tensor<f64>>,
        center: Tensor<f64>,
    }
    fn all(m: &mut Chain) -> Vec<&mut Tensor<f64>> {
        let mut v: Vec<&mut Tensor<f64>> = vec![&mut m.row];
        v.extend(m.params.named_tensors_mut().into_iter().map(|(_, t)| t));
        v
    }
    fn run(m: &Chain, grads: bool) -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let g = m.params.bind_generator(&mut tape);
        let d = m.params.bind_discriminator(&mut tape);
        let row = tape.leaf(&m.row);
        let imgs: Vec<Var> = m.neighbors.iter().map(|t| tape.leaf(t)).collect();
        let enc = g.encoder_forward(&mut tape, row, &imgs).unwrap();
        let preds = g.decoder_forward(&mut tape, enc.memory_input, enc.hidden, &enc.features).unwrap();
        let truths: Vec<Var> = imgs.iter().map(|&i| g.encode_view(&mut tape, i).unwrap()).collect();
        let fake = g.generate_center(&mut tape, enc.hidden).unwrap();
        let truth = tape.leaf(&m.center);
        let l_u = loss_center(&mut tape, fake, truth).unwrap();
        let l_r = loss_neighbors(&mut tape, &preds, &truths).unwrap();
        let d_fake = d.discriminate(&mut tape, fake).unwrap();
        let l_d2u = loss_adversarial(&mut tape, d_fake).unwrap();
        let total = loss_total(&mut tape, l_u, l_r, l_d2u, 3.0, 0.5).unwrap();
        let value = tape.item(total).unwrap();
        if !grads {
            return (value, Vec::new());
        }
        tape.backward(total).unwrap();
        let mut vars = vec![row];
        vars.extend(g.vars());
        vars.extend(d.vars());
        let out = vars
            .iter()
            .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
            .collect();
        (value, out)
    }
    let cfg = tiny_network();
    cfg.validate().unwrap();
    let mut params = VipGanParams::<f64>::new(cfg, 21).unwrap();
    rescale(params.named_tensors_mut().into_iter().map(|(_, t)| t).collect(), 15.0);
    let mut m = Chain {
        params,
        row: fixture(&[3], 22).with_requires_grad(true),
        neighbors: vec![fixture(&[3, 8, 8], 23), fixture(&[3, 8, 8], 24)],
        center: Tensor::zeros(&[3, 8, 8]).unwrap(),
    };
    // A target near the current prediction keeps |L| small, which lowers the
    // rounding floor of the differences relative to the gradients.
    let predicted = {
        let mut tape = Tape::new();
        let g = m.params.bind_generator(&mut tape);
        let row = tape.leaf(&m.row);
        let imgs: Vec<Var> = m.neighbors.iter().map(|t| tape.leaf(t)).collect();
        let enc = g.encoder_forward(&mut tape, row, &imgs).unwrap();
        let fake = g.generate_center(&mut tape, enc.hidden).unwrap();
        tape.to_tensor(fake)
    };
    let noise = fixture(&[3, 8, 8], 25);
    let center: Vec<f64> = predicted.data().iter().zip(noise.data()).map(|(p, n)| p + 0.05 * n).collect();
    m.center = Tensor::from_vec(&[3, 8, 8], center).unwrap();
    let (_, analytic) = run(&m, true);
    fd_over_tensors(&mut m, &all, &analytic, &|m| run(m, false).0)
}
