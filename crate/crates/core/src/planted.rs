//! A toy transceiver where exactly one feature unit carries the label.
//!
//! The encoder is the identity. Unit `LABEL_UNIT` holds `±1` (by class) plus
//! small jitter; every other unit is independent standard normal noise, so
//! all units have comparable spread. The linear decoder reads only the label
//! unit.

use crate::datasets::Dataset;
use crate::nn::{Activation, Network, NetworkSpec, OutputHead, RealMatrix};
use crate::rng::Rng;
use crate::transceiver::{ModelMetadata, TrainConfig, TscModel};

pub const LABEL_UNIT: usize = 0;
const DECODER_GAIN: f64 = 2.0;
const LABEL_JITTER: f64 = 0.3;

pub struct PlantedTask {
    pub model: TscModel,
    pub dataset: Dataset,
}

pub fn planted_task(m: usize, samples: usize, seed: u64) -> PlantedTask {
    assert!(m >= 2 && samples >= 2, "planted task needs m >= 2 and at least two samples");
    let mut w = RealMatrix::zeros(2, m);
    w.set(0, LABEL_UNIT, DECODER_GAIN);
    w.set(1, LABEL_UNIT, -DECODER_GAIN);
    let decoder = Network::from_params(
        NetworkSpec::uniform(vec![m, 2], Activation::Identity, OutputHead::LinearLogits),
        vec![w],
        vec![vec![0.0, 0.0]],
    )
    .expect("planted decoder is well-formed");
    let encoder = Network::identity(m, OutputHead::Feature);

    let mut rng = Rng::new(seed, 0x71A);
    let mut inputs = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let y = i % 2;
        let sign = if y == 0 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..m)
            .map(|k| {
                let g = rng.standard_normal();
                if k == LABEL_UNIT {
                    sign + LABEL_JITTER * g
                } else {
                    g
                }
            })
            .collect();
        inputs.push(x);
        labels.push(y);
    }
    let dataset = Dataset::new(inputs, labels, 2, format!("planted-m{m}-seed{seed}")).expect("planted data is valid");
    let signal_power = TscModel::measure_signal_power(&encoder, &dataset).expect("identity encoder");
    let mut model = TscModel::from_networks(
        encoder,
        decoder,
        TrainConfig::default().train_snr_db,
        signal_power,
        ModelMetadata {
            seed,
            dataset_name: dataset.name.clone(),
            train_config: TrainConfig::default(),
        },
    )
    .expect("planted model is consistent");
    model.freeze();
    PlantedTask { model, dataset }
}
