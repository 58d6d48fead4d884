//! Build the full-size study / foil design over a synthetic category pool and
//! verify every trial relation exhaustively.

use mnb::experiments::{build_brady, check_relations};
use mnb::stimuli::synthetic::{object_pool, PoolSpec};

fn main() -> mnb::Result<()> {
    let pool = object_pool(&PoolSpec::brady_scale(16, 16, 1))?;
    let metas: Vec<_> = pool.into_iter().map(|r| r.meta).collect();
    let exp = build_brady(&metas, 2500, 100, 42)?;
    println!("study items: {}", exp.study.len());
    for cond in exp.design.conditions() {
        println!("{cond}: {} trials", exp.count(*cond));
    }
    match check_relations(&exp, &metas) {
        Ok(()) => println!("relation check passed"),
        Err(problems) => println!("relation check failed: {problems:?}"),
    }
    Ok(())
}
