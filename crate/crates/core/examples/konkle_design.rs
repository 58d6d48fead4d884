//! Build the conceptual-distinctiveness design: categories studied with 1 to
//! 16 exemplars each, tested against an unseen exemplar of the same category.

use mnb::experiments::{build_konkle, check_relations, KONKLE_LEVELS};
use mnb::stimuli::synthetic::{object_pool, PoolSpec};

fn main() -> mnb::Result<()> {
    let pool = object_pool(&PoolSpec::konkle_scale(16, 16, 2))?;
    let metas: Vec<_> = pool.into_iter().map(|r| r.meta).collect();
    let exp = build_konkle(&metas, 40, 40, 7)?;
    println!("levels {KONKLE_LEVELS:?}; study items: {}", exp.study.len());
    for cond in exp.design.conditions() {
        println!("{cond}: {} trials", exp.count(*cond));
    }
    println!("relations ok: {}", check_relations(&exp, &metas).is_ok());
    Ok(())
}
