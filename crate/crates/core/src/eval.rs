//! Monte-Carlo evaluation of a victim under an attack/defense condition.
//!
//! Data, attack and defense randomness come from separate streams of one
//! seed, so two conditions evaluated with the same seed see identical
//! transmissions and channel noise.

use crate::attack::{perturb_batch, Perturber};
use crate::defense::Defense;
use crate::error::{Error, Result};
use crate::metrics::Estimate;
use crate::rng::SeedSplitter;
use crate::signal::{PhasePolicy, PhaseSession};
use crate::systems::{score, Victim};
use rayon::prelude::*;

const CHUNK: usize = 2048;

/// What happens between the channel and the receiver.
#[derive(Clone, Copy)]
pub struct Condition<'a> {
    pub attack: Option<&'a dyn Perturber>,
    pub session: PhaseSession,
    pub defense: Option<&'a dyn Defense>,
}

impl<'a> Condition<'a> {
    pub fn clean() -> Self {
        Self {
            attack: None,
            session: PhaseSession::with_theta(PhasePolicy::None, 0.0),
            defense: None,
        }
    }

    pub fn attacked(attack: &'a dyn Perturber, session: PhaseSession) -> Self {
        Self {
            attack: Some(attack),
            session,
            defense: None,
        }
    }

    pub fn defended(mut self, defense: &'a dyn Defense) -> Self {
        self.defense = Some(defense);
        self
    }
}

/// One sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub level_db: f64,
    pub estimate: Estimate,
}

/// Metric of `victim` at `level_db` over `trials` transmissions.
pub fn evaluate(victim: &dyn Victim, level_db: f64, cond: &Condition<'_>, trials: usize, seed: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::invalid("evaluation needs at least one trial"));
    }
    let split = SeedSplitter::new(seed);
    let mut data_rng = split.rng("data");
    let mut attack_rng = split.rng("attack");
    let mut defense_rng = split.rng("defense");
    let (mut events, mut total) = (0u64, 0u64);
    let mut left = trials;
    while left > 0 {
        let n = left.min(CHUNK);
        let mut draw = victim.draw(level_db, n, &mut data_rng)?;
        if let Some(a) = cond.attack {
            perturb_batch(&mut draw.received, a, &cond.session, &mut attack_rng)?;
        }
        if let Some(d) = cond.defense {
            d.apply(&mut draw.received, &mut defense_rng)?;
        }
        let out = victim.receiver().forward(&draw.received)?;
        let (e, t) = score(victim.metric(), &out, &draw.truth)?;
        events += e;
        total += t;
        left -= n;
    }
    Ok(Estimate::wilson(events, total))
}

/// [`evaluate`] at every level, in parallel. Each level gets its own seed
/// derived from `seed`, shared across conditions.
pub fn sweep(
    victim: &dyn Victim,
    levels_db: &[f64],
    cond: &Condition<'_>,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let split = SeedSplitter::new(seed);
    levels_db
        .par_iter()
        .enumerate()
        .map(|(i, &level_db)| {
            Ok(SweepPoint {
                level_db,
                estimate: evaluate(victim, level_db, cond, trials, split.seed(i as u64))?,
            })
        })
        .collect()
}
