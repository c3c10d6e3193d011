use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gridmap::{feature_of_points, FeatureNiche, Placement};

use super::{mutate, Candidate, MoveConstraints, Scorer, SearchBudget};

/// Best placement seen in one niche.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub niche: FeatureNiche,
    pub placement: Placement,
    pub fitness: f64,
    /// Update counter value when this entry was stored.
    pub stamp: u64,
}

/// Niche-indexed elite store.
#[derive(Clone, Debug, Default)]
pub struct Archive {
    elites: Vec<Elite>,
    index: HashMap<FeatureNiche, usize>,
    clock: u64,
}

impl Archive {
    pub fn len(&self) -> usize {
        self.elites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elites.is_empty()
    }

    pub fn elites(&self) -> &[Elite] {
        &self.elites
    }

    pub fn get(&self, niche: &FeatureNiche) -> Option<&Elite> {
        self.index.get(niche).map(|&i| &self.elites[i])
    }

    /// Stores the placement if its niche is empty or it strictly beats the incumbent.
    pub fn offer(&mut self, niche: FeatureNiche, placement: Placement, fitness: f64) -> bool {
        self.clock += 1;
        let elite = Elite {
            niche,
            placement,
            fitness,
            stamp: self.clock,
        };
        match self.index.get(&niche) {
            None => {
                self.index.insert(niche, self.elites.len());
                self.elites.push(elite);
                true
            }
            Some(&i) if self.elites[i].fitness < fitness => {
                self.elites[i] = elite;
                true
            }
            Some(_) => false,
        }
    }

    /// The `k` fittest elites, earlier-stored first on ties.
    pub fn top(&self, k: usize) -> Vec<&Elite> {
        let mut v: Vec<&Elite> = self.elites.iter().collect();
        v.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.stamp.cmp(&b.stamp)));
        v.truncate(k);
        v
    }

    pub fn snapshot(&self) -> Vec<(FeatureNiche, f64)> {
        self.elites.iter().map(|e| (e.niche, e.fitness)).collect()
    }
}

/// Result of one MAP-Elites planning call.
#[derive(Clone, Debug)]
pub struct EliteOutcome {
    /// Highest-fitness archive entries, best first.
    pub top: Vec<Candidate>,
    pub archive: Archive,
    /// Archive contents after the base injection and after every iteration.
    pub trace: Vec<Vec<(FeatureNiche, f64)>>,
    /// Every scored mutation, in generation order.
    pub evaluated: Vec<Candidate>,
}

/// MAP-Elites over ABS placements with niches given by the quantized
/// mean/std of pairwise ABS distances.
///
/// The base placement seeds the archive. The first iteration mutates the
/// base `n_per_iter` times; later iterations mutate archive entries drawn
/// uniformly with replacement. Each batch is scored, then offered to the
/// archive in generation order.
pub fn map_elites<R: Rng + ?Sized>(
    base: &Placement,
    budget: &SearchBudget,
    constraints: &MoveConstraints,
    scorer: &mut Scorer,
    bin_width: f64,
    rng: &mut R,
) -> Result<EliteOutcome> {
    let grid = constraints.grid;
    let niche_of = |p: &Placement| feature_of_points(&p.positions(&grid), bin_width);
    let mut archive = Archive::default();
    let base_fit = scorer.score_batch(std::slice::from_ref(base))?[0];
    archive.offer(niche_of(base)?, base.clone(), base_fit);
    let mut trace = vec![archive.snapshot()];
    let mut evaluated = Vec::with_capacity(budget.n_mutations());

    for it in 0..budget.n_iters {
        let children: Vec<Placement> = (0..budget.n_per_iter)
            .map(|_| {
                let parent = if it == 0 {
                    base
                } else {
                    &archive.elites()[rng.random_range(0..archive.len())].placement
                };
                mutate(parent, budget.rim, constraints, rng)
            })
            .collect();
        let niches = children.iter().map(&niche_of).collect::<Result<Vec<_>>>()?;
        let scores = scorer.score_batch(&children)?;
        for ((child, niche), fit) in children.into_iter().zip(niches).zip(scores) {
            evaluated.push(Candidate {
                placement: child.clone(),
                predicted_cr: fit,
                niche: Some(niche),
            });
            archive.offer(niche, child, fit);
        }
        trace.push(archive.snapshot());
    }

    let top = archive
        .top(budget.top_k)
        .into_iter()
        .map(|e| Candidate {
            placement: e.placement.clone(),
            predicted_cr: e.fitness,
            niche: Some(e.niche),
        })
        .collect();
    Ok(EliteOutcome {
        top,
        archive,
        trace,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn niche(a: u32, b: u32) -> FeatureNiche {
        FeatureNiche {
            mean_bin: a,
            std_bin: b,
        }
    }

    #[test]
    fn strict_improvement_required() {
        let mut a = Archive::default();
        assert!(a.offer(niche(1, 0), Placement::new(vec![1, 2]), 0.5));
        assert!(!a.offer(niche(1, 0), Placement::new(vec![3, 4]), 0.5));
        assert_eq!(a.get(&niche(1, 0)).unwrap().placement.cells, vec![1, 2]);
        assert!(a.offer(niche(1, 0), Placement::new(vec![5, 6]), 0.6));
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn top_ties_prefer_earlier() {
        let mut a = Archive::default();
        a.offer(niche(1, 0), Placement::new(vec![1, 2]), 0.5);
        a.offer(niche(2, 0), Placement::new(vec![3, 4]), 0.7);
        a.offer(niche(3, 0), Placement::new(vec![5, 6]), 0.5);
        let top: Vec<_> = a.top(3).iter().map(|e| e.niche.mean_bin).collect();
        assert_eq!(top, vec![2, 1, 3]);
    }
}
