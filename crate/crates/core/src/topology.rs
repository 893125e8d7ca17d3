//! Leader/follower pools, loss-ranked recategorization and random pairing.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Leader,
    Follower,
}

/// Role assignment for `m` workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    roles: Vec<Role>,
    follower_count: usize,
    epoch: u64,
}

/// `2·follower_count < m` keeps the leader pool strictly larger.
pub fn check_pool_sizes(m: usize, follower_count: usize) -> Result<()> {
    if follower_count == 0 {
        return Err(invalid("follower_count", "must be at least 1"));
    }
    if 2 * follower_count >= m {
        return Err(invalid(
            "follower_count",
            alloc::format!(
                "{follower_count} followers among {m} workers leaves the leader pool no larger than the follower pool"
            ),
        ));
    }
    Ok(())
}

impl Roster {
    fn from_followers(m: usize, followers: &[usize], follower_count: usize, epoch: u64) -> Self {
        let mut roles = alloc::vec![Role::Leader; m];
        for &f in followers {
            roles[f] = Role::Follower;
        }
        Self {
            roles,
            follower_count,
            epoch,
        }
    }

    pub fn m(&self) -> usize {
        self.roles.len()
    }

    pub fn follower_count(&self) -> usize {
        self.follower_count
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn role(&self, worker: usize) -> Role {
        self.roles[worker]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn leaders(&self) -> Vec<usize> {
        self.with_role(Role::Leader)
    }

    pub fn followers(&self) -> Vec<usize> {
        self.with_role(Role::Follower)
    }

    fn with_role(&self, role: Role) -> Vec<usize> {
        (0..self.m()).filter(|&i| self.roles[i] == role).collect()
    }

    /// Re-rank by `losses`, keeping the pool sizes; the epoch advances.
    pub fn recategorize(&self, losses: &[f64]) -> Result<Roster> {
        let mut next = recategorize(losses, self.follower_count)?;
        next.epoch = self.epoch + 1;
        Ok(next)
    }
}

/// The `follower_count` highest-loss workers become followers. Equal losses
/// are ranked by worker id, lower id first.
pub fn recategorize(losses: &[f64], follower_count: usize) -> Result<Roster> {
    check_pool_sizes(losses.len(), follower_count)?;
    if losses.iter().any(|l| l.is_nan()) {
        return Err(invalid("losses", "NaN loss cannot be ranked"));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    Ok(Roster::from_followers(
        losses.len(),
        &order[..follower_count],
        follower_count,
        1,
    ))
}

/// Uniformly random follower set; epoch 0.
pub fn initial_roster<R: Rng + ?Sized>(m: usize, follower_count: usize, rng: &mut R) -> Result<Roster> {
    check_pool_sizes(m, follower_count)?;
    let followers = rand::seq::index::sample(rng, m, follower_count).into_vec();
    Ok(Roster::from_followers(m, &followers, follower_count, 0))
}

/// Leader → follower assignment for one communication round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    /// Leader id → follower id.
    pub assignments: BTreeMap<usize, usize>,
    /// Follower id → number of leaders assigned to it (0 included).
    pub fan_in: BTreeMap<usize, usize>,
}

impl Pairing {
    /// Leaders assigned to `follower`, ascending.
    pub fn leaders_of(&self, follower: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == follower)
            .map(|(&l, _)| l)
            .collect()
    }
}

/// Each leader independently picks a follower uniformly at random, so
/// several leaders may share one follower.
pub fn draw_pairing<R: Rng + ?Sized>(roster: &Roster, rng: &mut R) -> Pairing {
    let followers = roster.followers();
    let mut fan_in: BTreeMap<usize, usize> = followers.iter().map(|&f| (f, 0)).collect();
    let assignments = roster
        .leaders()
        .into_iter()
        .map(|l| {
            let f = followers[rng.random_range(0..followers.len())];
            *fan_in.get_mut(&f).expect("follower") += 1;
            (l, f)
        })
        .collect();
    Pairing { assignments, fan_in }
}

/// Messages exchanged in one recategorization: every other worker sends its
/// loss to the coordinating worker and receives its new role back.
pub fn recat_message_cost(m: usize) -> (u64, u64) {
    let others = m.saturating_sub(1) as u64;
    (others, others)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::coordinator_stream;
    use alloc::vec;

    #[test]
    fn highest_losses_become_followers() {
        let r = recategorize(&[0.5, 0.9, 0.2, 0.7, 0.4], 2).unwrap();
        assert_eq!(r.followers(), vec![1, 3]);
        assert_eq!(r.leaders(), vec![0, 2, 4]);
    }

    #[test]
    fn ties_go_to_lower_ids() {
        let r = recategorize(&[1.0; 5], 2).unwrap();
        assert_eq!(r.followers(), vec![0, 1]);
    }

    #[test]
    fn recategorize_matches_full_sort_oracle() {
        let mut rng = coordinator_stream(3);
        for _ in 0..50 {
            let losses: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
            let r = recategorize(&losses, 5).unwrap();
            let mut sorted: Vec<(f64, usize)> = losses.iter().copied().zip(0..).collect();
            sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut expect: Vec<usize> = sorted[..5].iter().map(|p| p.1).collect();
            expect.sort_unstable();
            assert_eq!(r.followers(), expect);
            let min_f = r.followers().iter().map(|&i| losses[i]).fold(f64::INFINITY, f64::min);
            let max_l = r.leaders().iter().map(|&i| losses[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(min_f >= max_l);
        }
    }

    #[test]
    fn epoch_advances() {
        let r0 = initial_roster(5, 2, &mut coordinator_stream(1)).unwrap();
        assert_eq!(r0.epoch(), 0);
        let r1 = r0.recategorize(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(r1.epoch(), 1);
        assert_eq!(r1.recategorize(&[0.0; 5]).unwrap().epoch(), 2);
    }

    #[test]
    fn pool_size_constraints() {
        assert!(recategorize(&[0.0; 5], 0).is_err());
        assert!(recategorize(&[0.0; 4], 2).is_err());
        assert!(initial_roster(2, 1, &mut coordinator_stream(0)).is_err());
        assert!(recategorize(&[0.0, f64::NAN, 1.0], 1).is_err());
    }

    #[test]
    fn initial_roster_is_uniform() {
        let mut rng = coordinator_stream(4);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            let r = initial_roster(3, 1, &mut rng).unwrap();
            assert_eq!(r.followers().len(), 1);
            counts[r.followers()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn initial_roster_is_deterministic() {
        let a = initial_roster(15, 5, &mut coordinator_stream(9)).unwrap();
        let b = initial_roster(15, 5, &mut coordinator_stream(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_pair_is_forced() {
        let roster = recategorize(&[0.0, 1.0, 0.0], 1).unwrap();
        // 2 leaders, 1 follower
        let p = draw_pairing(&roster, &mut coordinator_stream(0));
        assert_eq!(p.assignments.values().copied().collect::<Vec<_>>(), vec![1, 1]);
        assert_eq!(p.fan_in[&1], 2);
    }

    #[test]
    fn fan_in_counts_every_leader() {
        let losses: Vec<f64> = (0..15).map(f64::from).collect();
        let roster = recategorize(&losses, 5).unwrap();
        let mut rng = coordinator_stream(5);
        for _ in 0..200 {
            let p = draw_pairing(&roster, &mut rng);
            assert_eq!(p.assignments.len(), 10);
            assert_eq!(p.fan_in.values().sum::<usize>(), 10);
            for (&l, &f) in &p.assignments {
                assert_eq!(roster.role(l), Role::Leader);
                assert_eq!(roster.role(f), Role::Follower);
            }
        }
    }

    #[test]
    fn two_by_two_pairings_are_uniform() {
        let roster = recategorize(&[0.0, 0.0, 1.0, 1.0, 0.0], 2).unwrap();
        // leaders {0, 1, 4}; restrict attention to leaders 0 and 1
        let followers = roster.followers();
        assert_eq!(followers, vec![2, 3]);
        let mut rng = coordinator_stream(6);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            let p = draw_pairing(&roster, &mut rng);
            let a = usize::from(p.assignments[&0] == 3);
            let b = usize::from(p.assignments[&1] == 3);
            counts[2 * a + b] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn fan_in_marginals_within_three_sigma() {
        let losses: Vec<f64> = (0..15).map(f64::from).collect();
        let roster = recategorize(&losses, 5).unwrap();
        let mut rng = coordinator_stream(7);
        let n = 20_000;
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for _ in 0..n {
            for (f, c) in draw_pairing(&roster, &mut rng).fan_in {
                *sums.entry(f).or_default() += c as f64;
            }
        }
        // fan_in ~ Binomial(10, 1/5): mean 2, variance 1.6
        let se = (1.6f64 / n as f64).sqrt();
        for (_, s) in sums {
            assert!((s / n as f64 - 2.0).abs() < 3.0 * se);
        }
    }

    #[test]
    fn message_cost() {
        assert_eq!(recat_message_cost(15), (14, 14));
        assert_eq!(recat_message_cost(2), (1, 1));
    }
}
