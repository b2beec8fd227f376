use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Preference, StudyTask, Vote};
use crate::error::{Error, Result};
use crate::explain::Method;

/// Vote counts per preference, model A first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteDistribution {
    pub counts: [usize; 5],
}

impl VoteDistribution {
    pub fn add(&mut self, p: Preference) {
        self.counts[Preference::ALL.iter().position(|&q| q == p).expect("listed")] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn percentages(&self) -> [f64; 5] {
        let total = self.total() as f64;
        self.counts.map(|c| if total > 0.0 { 100.0 * c as f64 / total } else { 0.0 })
    }
}

/// Weighted mean of an A-resolved distribution given in percent (or any
/// nonnegative mass): 1, .75, .5, .25, 0 from definitely-A to definitely-B.
pub fn aggregate_score(distribution: &[f64; 5]) -> Result<f64> {
    let mass: f64 = distribution.iter().sum();
    if distribution.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Invalid(format!("vote distribution {distribution:?} has a negative or non-finite entry")));
    }
    if mass <= 0.0 {
        return Err(Error::NoVotes);
    }
    let weighted: f64 = distribution.iter().zip(Preference::ALL).map(|(p, pref)| p * pref.weight()).sum();
    Ok(weighted / mass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub tasks: usize,
    pub votes: usize,
    pub distribution: BTreeMap<Preference, f64>,
    pub aggregate_score: Option<f64>,
    pub identical_lists: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub total_tasks: usize,
    pub total_votes: usize,
    pub methods: Vec<MethodReport>,
}

/// Fold the vote log over the tasks. Methods appear in first-task order.
pub fn report(tasks: &[StudyTask], votes: &[Vote]) -> StudyReport {
    let by_id: HashMap<&str, &StudyTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut order: Vec<Method> = Vec::new();
    let mut rows: HashMap<Method, (usize, usize, VoteDistribution)> = HashMap::new();
    for t in tasks {
        if !order.contains(&t.method) {
            order.push(t.method);
        }
        let row = rows.entry(t.method).or_default();
        row.0 += 1;
        row.1 += usize::from(t.identical_lists());
    }
    let mut counted = 0;
    for v in votes {
        let Some(task) = by_id.get(v.task_id.as_str()) else {
            continue;
        };
        counted += 1;
        rows.get_mut(&task.method).expect("task method row").2.add(v.choice.resolve(task.model_a));
    }
    StudyReport {
        total_tasks: tasks.len(),
        total_votes: counted,
        methods: order
            .into_iter()
            .map(|method| {
                let (tasks, identical, dist) = &rows[&method];
                let pct = dist.percentages();
                MethodReport {
                    method,
                    tasks: *tasks,
                    votes: dist.total(),
                    distribution: Preference::ALL.into_iter().zip(pct).collect(),
                    aggregate_score: aggregate_score(&dist.counts.map(|c| c as f64)).ok(),
                    identical_lists: *identical,
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_columns() {
        let cases = [
            ([6.0, 13.5, 31.0, 28.0, 21.5], 0.386),
            ([6.5, 17.0, 47.5, 18.5, 10.5], 0.476),
            ([5.0, 11.5, 73.0, 9.0, 1.5], 0.524),
        ];
        for (dist, want) in cases {
            assert!((aggregate_score(&dist).unwrap() - want).abs() <= 0.001);
        }
        assert_eq!(aggregate_score(&[0.0, 0.0, 100.0, 0.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(aggregate_score(&[0.0; 5]), Err(Error::NoVotes)));
    }
}
