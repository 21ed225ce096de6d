//! Compare reverse-mode gradients of a small network against central
//! finite differences.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use semcom::nn::{softmax_cross_entropy, Activation, Network, NetworkSpec, OutputHead};
use semcom::rng::Rng;

fn loss(net: &Network, x: &[f64], y: usize) -> f64 {
    softmax_cross_entropy(&net.predict(x).unwrap(), y).unwrap().0
}

fn main() -> semcom::Result<()> {
    let mut rng = Rng::new(3, 0);
    let spec = NetworkSpec::uniform(vec![5, 7, 6, 3], Activation::Relu, OutputHead::LinearLogits);
    let net = Network::init(spec.clone(), &mut rng)?;
    let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
    let y = 1;

    let (logits, cache) = net.forward(&x)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, y)?;
    let grads = net.backward(&cache, &dlogits)?;
    let analytic: Vec<f64> = grads
        .weight_grads
        .iter()
        .zip(&grads.bias_grads)
        .flat_map(|(w, b)| w.data().iter().chain(b).copied().collect::<Vec<_>>())
        .collect();

    let flat = net.flat_params();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut p = flat.clone();
        p[i] += h;
        let up = loss(&Network::from_flat_params(spec.clone(), &p)?, &x, y);
        p[i] -= 2.0 * h;
        let down = loss(&Network::from_flat_params(spec.clone(), &p)?, &x, y);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6));
    }
    println!("{} parameters, worst relative error {worst:.2e}", flat.len());

    let mut worst_input: f64 = 0.0;
    for (i, g) in grads.input_grad.iter().enumerate() {
        let mut xp = x.clone();
        xp[i] += h;
        let up = loss(&net, &xp, y);
        xp[i] -= 2.0 * h;
        let fd = (up - loss(&net, &xp, y)) / (2.0 * h);
        worst_input = worst_input.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
    }
    println!("input gradient worst relative error {worst_input:.2e}");
    Ok(())
}
