//! An untrained model scored on i.i.d. noise pairs sits near chance.

use mnb::experiments::{build_paired, run_session, Design, ImageStore};
use mnb::model::{init_model, ModelConfig};
use mnb::stimuli::generate_noise_set;

fn main() -> mnb::Result<()> {
    let n = 200;
    let images = generate_noise_set(2 * n, 16, 16, 16, 5)?;
    let mut store = ImageStore::new();
    let ids: Vec<String> = (0..2 * n).map(|i| format!("img{i}")).collect();
    for (id, img) in ids.iter().zip(images) {
        store.insert(id.clone(), img);
    }
    let exp = build_paired(Design::Noise, &ids[..n], &ids[n..], n, 9)?;
    let params = init_model(ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_embed: 64,
        vocab_k: 16,
        seq_len: 256,
        init_seed: 1,
    })?;
    let result = run_session(&params, &exp, &store, 0, 0)?;
    for c in &result.conditions {
        println!("{}: {}/{} correct ({:.3}), ties {}", c.condition, c.n_correct, c.n_trials, c.accuracy, c.ties);
    }
    Ok(())
}
