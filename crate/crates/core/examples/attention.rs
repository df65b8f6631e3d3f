//! Multi-head price attention over a purchase sequence and the interest
//! channel's product preference.

use bdhh::behavior::{interest_embedding, price_attention, AttentionWeights, InterestWeights, Pooling};
use bdhh::tape::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_shape_fn((r, c), |_| rng.gen_range(-0.5..0.5))
}

fn main() -> bdhh::Result<()> {
    let (m, d, heads) = (5, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h_p = random(&mut rng, m, d);
    let w = AttentionWeights {
        heads,
        query: random(&mut rng, d, d),
        key: random(&mut rng, d, d),
        value: random(&mut rng, d, d),
        output: random(&mut rng, d, d),
    };
    for pooling in [Pooling::Last, Pooling::Mean] {
        let (_, rows, phi) = price_attention(&h_p, &w, pooling)?;
        println!("{pooling:?} phi_p = {phi:.3?}");
        for (i, a) in rows.iter().enumerate() {
            println!("  head {i}, last query row {:.3?}", a.row(m - 1).to_vec());
        }
    }

    let mut iw = InterestWeights::zeros(d, 8);
    for mat in [&mut iw.positions, &mut iw.w_pos, &mut iw.w_item, &mut iw.w_basket, &mut iw.w_out, &mut iw.w_beta] {
        let (r, c) = mat.dim();
        *mat = random(&mut rng, r, c);
    }
    let items: Vec<Vec<f64>> = (0..m).map(|i| h_p.row(i).to_vec()).collect();
    println!("phi_d = {:.3?}", interest_embedding(&items, &iw)?);
    Ok(())
}
