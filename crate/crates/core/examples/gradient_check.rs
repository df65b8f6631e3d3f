//! Compares backpropagated gradients with central finite differences for
//! every parameter group on the toy dataset. Parameters that start at zero
//! are jittered first.

use bdhh::cli::graph_for;
use bdhh::dataio::Basket;
use bdhh::model::Model;
use bdhh::objective::HyperParams;
use bdhh::params::{finite_difference, relative_error};
use bdhh::synthetic::toy_dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bdhh::Result<()> {
    let ds = toy_dataset()?;
    let graph = graph_for(&ds)?;
    let split = ds.split();
    let histories: Vec<&[Basket]> = split.train.iter().map(|s| s.history(&ds.sequences)).collect();
    let targets: Vec<&Basket> = split.train.iter().map(|s| s.target_basket(&ds.sequences)).collect();
    for layers in [1, 2] {
        let hp = HyperParams { embed_dim: 8, heads: 2, max_seq_len: 8, encoder_layers: layers, ..HyperParams::default() };
        let mut model = Model::new(&hp, &graph, ds.vocab.item_price_levels())?;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zeros: Vec<_> = model.store.iter().filter(|(_, _, m)| m.iter().all(|&x| x == 0.0)).map(|(id, _, _)| id).collect();
        for id in zeros {
            model.store.get_mut(id).mapv_inplace(|_| rng.gen_range(-0.2..0.2));
        }
        let (loss, grads) = model.loss_and_gradients(&histories, &targets)?;
        println!("encoder_layers={layers} loss={loss:.6}");
        let mut worst: f64 = 0.0;
        for (id, name, _) in model.store.iter() {
            let numeric = finite_difference(&model.store, id, 1e-5, |s| {
                let mut m = model.clone();
                m.store = s.clone();
                m.batch_loss(&histories, &targets).expect("forward")
            });
            let err = relative_error(&grads[id.0], &numeric);
            let norm = numeric.mapv(|x| x * x).sum().sqrt();
            worst = worst.max(err);
            println!("  {name:<28} |g|={norm:.3e} rel_err={err:.2e}");
        }
        println!("  worst relative error {worst:.2e}");
    }
    Ok(())
}
