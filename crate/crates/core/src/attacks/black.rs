use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::ScoreOracle;
use crate::dom::DomTree;
use crate::mutation::{add_invisible_element, modification_sites, plan_site, AdditionPool, MutationPlan, Site};

use super::{AttackConfig, AttackError, AttackResult, Level, Run};

fn site_label(site: &Site) -> String {
    match site {
        Site::Attribute { path, attr } => format!("modify {attr} at {path:?}"),
        Site::Term(t) => format!("modify term {t:?}"),
    }
}

/// Attack with no knowledge of the model. Every modifiable node of the seed
/// is modified in document order and kept iff the score drops; then specs
/// drawn uniformly from the pool are added invisibly, `batch` at a time,
/// rolling back any batch that does not lower the score.
pub fn black_box(
    oracle: &mut ScoreOracle,
    page: &DomTree,
    pool: &AdditionPool,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let mut run = Run::start(Level::Black, oracle, page)?;
    run.rng_seed = Some(cfg.rng_seed);
    let no_guard = BTreeSet::new();
    for site in modification_sites(page) {
        if run.evaded() {
            break;
        }
        if let Ok(plan) = plan_site(&run.current, &site, &no_guard) {
            run.try_plan(&plan, plan.len(), site_label(&site));
        }
    }
    run.score_after_modification = Some(run.score);
    if run.evaded() {
        return Ok(run.result());
    }
    let candidates = pool.absent_from(page);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let batch = cfg.batch.max(1);
    while !candidates.is_empty() && !run.evaded() && run.additions < cfg.budget {
        let n = batch.min(cfg.budget - run.additions);
        let mut plan = MutationPlan::new("blind");
        for _ in 0..n {
            let spec = &candidates[rng.gen_range(0..candidates.len())];
            plan.ops.push(add_invisible_element(&run.current, spec));
        }
        run.additions += n;
        run.try_plan(&plan, n, format!("add {n} nodes"));
    }
    let r = run.result();
    if r.success {
        Ok(r)
    } else {
        Err(AttackError::BudgetExhausted(Box::new(r)))
    }
}
