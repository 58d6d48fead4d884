//! Closed-form and materialized parameter counts for the reference presets.
//!
//! Materializing iGPT-S allocates about 300 MB of f32 weights.

use mnb::model::{init_model, ModelConfig};

fn main() -> mnb::Result<()> {
    let small = ModelConfig::igpt_s(0);
    let mini = ModelConfig::igpt_mini(0);
    for (name, cfg) in [("igpt-s", small), ("igpt-mini", mini)] {
        let params = init_model(cfg)?;
        println!(
            "{name:10} layers={:2} heads={} width={} closed-form={} materialized={}",
            cfg.n_layers,
            cfg.n_heads,
            cfg.d_embed,
            cfg.param_count(),
            params.num_params()
        );
    }
    println!(
        "ratio igpt-s / igpt-mini = {:.2}",
        small.param_count() as f64 / mini.param_count() as f64
    );
    Ok(())
}
