//! Basket-guided augmentation: pooled basket vectors, the item's attention
//! over its baskets, and the residual update of an embedding table.

use bdhh::augmentation::{augment_embeddings, item_basket_attention, pool_basket};
use ndarray::array;

fn main() -> bdhh::Result<()> {
    let h = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-1.0, 0.2]];
    let baskets = vec![vec![0, 1], vec![1, 2], vec![0, 2, 2]];
    let w_alpha = array![[0.4, -0.3], [0.2, 0.6]];
    let b = array![[1.0], [-0.5]];

    let vecs: Vec<Vec<f64>> = baskets
        .iter()
        .map(|rows| pool_basket(&rows.iter().map(|&r| h.row(r).to_vec()).collect::<Vec<_>>()))
        .collect::<bdhh::Result<_>>()?;
    for (rows, v) in baskets.iter().zip(&vecs) {
        println!("basket {rows:?} -> {v:.3?}");
    }

    let containing: Vec<Vec<f64>> = vec![vecs[0].clone(), vecs[2].clone()];
    let mat = ndarray::Array2::from_shape_vec((2, 2), containing.concat()).expect("shape");
    let (weights, summary) = item_basket_attention(&mat, &w_alpha, &b)?;
    println!("item 0 attends {weights:.3?} -> {summary:.3?}");

    let out = augment_embeddings(&h, &baskets, &w_alpha, &b)?;
    println!("augmented table:\n{out:.3}");
    println!("row 3 appears in no basket and stays {:?}", out.row(3).to_vec());
    Ok(())
}
