//! Fits a depth-6 HGF network to the two-dimensional spiral task and prints
//! test accuracy and the mean predicted precision of every layer.
//!
//! cargo run --release --example spiral [seed]

use dhgf::config::PrecisionConfig;
use dhgf::model::{HgfOptions, Method, Model, ModelSpec};
use dhgf_core::{data, Rng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let ds = data::spiral_dataset(&PrecisionConfig::default().spiral(), seed)?;
    let (train, test) = data::split(&ds, 0.8, seed)?;
    let spec = ModelSpec {
        method: Method::Hgf,
        input: 2,
        depth: 6,
        width: 12,
        output: 1,
        lr: 2e-2,
        hgf: HgfOptions::default(),
    };
    let mut rng = Rng::new(seed);
    let mut model = Model::build(&spec, &mut rng)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=20 {
        rng.shuffle(&mut order);
        model.train_epoch(&train, &order, 1)?;
        println!("epoch {epoch:>2}  test accuracy {:.3}", model.accuracy(&test)?);
    }
    if let Model::Hgf { net, .. } = &model {
        for (l, layer) in net.layers.iter().enumerate() {
            let mean = layer.pi_hat.iter().sum::<f64>() / layer.pi_hat.len() as f64;
            println!("layer {l:>2}  width {:>3}  mean pi_hat {mean:.3e}", layer.width());
        }
    }
    Ok(())
}
