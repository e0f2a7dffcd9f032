//! Dominance, non-dominated sorting, crowding distance and a bounded
//! archive of mutually non-dominated `(p_nd, duration)` points.

use serde::{Deserialize, Serialize};

/// Two objective values closer than these are the same point.
pub const P_ND_TIE: f64 = 1e-12;
pub const DURATION_TIE: f64 = 1e-6;

pub const DEFAULT_CAPACITY: usize = 64;

/// Both objectives are minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePair {
    pub p_nd: f64,
    /// Seconds.
    pub duration: f64,
}

impl ObjectivePair {
    pub const fn new(p_nd: f64, duration: f64) -> Self {
        Self { p_nd, duration }
    }

    /// `self` weakly dominates `other` up to the tie tolerances.
    fn covers(&self, other: &ObjectivePair) -> bool {
        self.p_nd <= other.p_nd + P_ND_TIE && self.duration <= other.duration + DURATION_TIE
    }
}

/// `a` is no worse than `b` in both objectives and strictly better in one.
pub fn dominates(a: &ObjectivePair, b: &ObjectivePair) -> bool {
    a.p_nd <= b.p_nd && a.duration <= b.duration && (a.p_nd < b.p_nd || a.duration < b.duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Added without displacing anything.
    Accepted,
    /// Rejected: an entry dominates or ties the candidate.
    Dominated,
    /// Added after removing this many dominated entries.
    Replaced(usize),
}

impl InsertOutcome {
    pub fn changed(self) -> bool {
        !matches!(self, InsertOutcome::Dominated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry<T> {
    pub objectives: ObjectivePair,
    pub payload: T,
}

/// Mutually non-dominated entries sorted by ascending duration, which makes
/// `p_nd` strictly decreasing along the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive<T> {
    entries: Vec<ArchiveEntry<T>>,
    capacity: usize,
}

impl<T> Default for ParetoArchive<T> {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl<T> ParetoArchive<T> {
    /// Capacity below 2 is raised to 2 so both extremes always fit.
    pub fn new(capacity: usize) -> Self {
        Self { entries: Vec::new(), capacity: capacity.max(2) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry<T>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ArchiveEntry<T>> {
        self.entries
    }

    pub fn objectives(&self) -> impl Iterator<Item = ObjectivePair> + '_ {
        self.entries.iter().map(|e| e.objectives)
    }

    /// Lowest `p_nd` reachable within `duration` seconds (plus the duration
    /// tie tolerance), or `None` if every entry takes longer.
    pub fn attainment(&self, duration: f64) -> Option<f64> {
        let idx = self.entries.partition_point(|e| e.objectives.duration <= duration + DURATION_TIE);
        idx.checked_sub(1).map(|i| self.entries[i].objectives.p_nd)
    }

    /// Inserts unless an existing entry dominates or ties the candidate;
    /// entries the candidate dominates or ties are dropped, so no two entries
    /// are within both tie tolerances of one another's cover.
    pub fn insert(&mut self, objectives: ObjectivePair, payload: T) -> InsertOutcome {
        // entries with duration <= candidate's (within tolerance); the last
        // of them has the lowest p_nd among them
        let upto =
            self.entries.partition_point(|e| e.objectives.duration <= objectives.duration + DURATION_TIE);
        if upto > 0 && self.entries[upto - 1].objectives.covers(&objectives) {
            return InsertOutcome::Dominated;
        }
        // nothing covers the candidate, so whatever it covers (ties included)
        // is a contiguous run starting within the duration tie below it
        let start =
            self.entries.partition_point(|e| e.objectives.duration < objectives.duration - DURATION_TIE);
        let mut end = start;
        while end < self.entries.len() && objectives.covers(&self.entries[end].objectives) {
            end += 1;
        }
        let removed = end - start;
        self.entries.splice(start..end, [ArchiveEntry { objectives, payload }]);
        if removed == 0 {
            InsertOutcome::Accepted
        } else {
            InsertOutcome::Replaced(removed)
        }
    }

    /// Shrinks to capacity by repeatedly dropping the interior entry with the
    /// smallest crowding distance. Both extremes are always kept.
    pub fn crowding_prune(&mut self) {
        while self.entries.len() > self.capacity {
            let points: Vec<ObjectivePair> = self.objectives().collect();
            let d = front_crowding(&points, &objective_ranges(&points));
            let victim = (1..points.len() - 1)
                .min_by(|&a, &b| d[a].total_cmp(&d[b]))
                .expect("capacity >= 2 leaves an interior entry");
            self.entries.remove(victim);
        }
    }

    /// Exhaustive pairwise scan; empty when the archive is consistent.
    pub fn dominated_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, a) in self.entries.iter().enumerate() {
            for (j, b) in self.entries.iter().enumerate() {
                if i != j && dominates(&a.objectives, &b.objectives) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// `((p_min, p_max), (d_min, d_max))` over a point set.
pub fn objective_ranges(points: &[ObjectivePair]) -> ((f64, f64), (f64, f64)) {
    points.iter().fold(
        ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY)),
        |((pl, ph), (dl, dh)), o| {
            ((pl.min(o.p_nd), ph.max(o.p_nd)), (dl.min(o.duration), dh.max(o.duration)))
        },
    )
}

fn span((lo, hi): (f64, f64)) -> f64 {
    let s = hi - lo;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Crowding distance along a front already sorted by duration. Extremes get
/// infinity; interior points sum their normalized neighbor gaps.
fn front_crowding(points: &[ObjectivePair], ranges: &((f64, f64), (f64, f64))) -> Vec<f64> {
    let n = points.len();
    let (sp, sd) = (span(ranges.0), span(ranges.1));
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                f64::INFINITY
            } else {
                (points[i + 1].duration - points[i - 1].duration).abs() / sd
                    + (points[i - 1].p_nd - points[i + 1].p_nd).abs() / sp
            }
        })
        .collect()
}

/// Non-domination rank of each point (0 = first front).
pub fn nondominated_ranks(points: &[ObjectivePair]) -> Vec<usize> {
    let n = points.len();
    let mut ranks = vec![usize::MAX; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| j != i && dominates(&points[j], &points[i])))
            .collect();
        for &i in &front {
            ranks[i] = rank;
        }
        remaining.retain(|i| ranks[*i] == usize::MAX);
        rank += 1;
    }
    ranks
}

/// Crowding distance of each point within its own rank, normalized by
/// `ranges`. Points at either end of their rank get infinity.
pub fn crowding_distances(
    points: &[ObjectivePair],
    ranks: &[usize],
    ranges: &((f64, f64), (f64, f64)),
) -> Vec<f64> {
    let (sp, sd) = (span(ranges.0), span(ranges.1));
    let mut out = vec![0.0; points.len()];
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    for r in 0..=max_rank {
        let members: Vec<usize> = (0..points.len()).filter(|&i| ranks[i] == r).collect();
        for (objective, scale) in [(0usize, sp), (1usize, sd)] {
            let key = |i: usize| if objective == 0 { points[i].p_nd } else { points[i].duration };
            let mut sorted = members.clone();
            sorted.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
            let len = sorted.len();
            for (pos, &i) in sorted.iter().enumerate() {
                if pos == 0 || pos + 1 == len {
                    out[i] = f64::INFINITY;
                } else {
                    out[i] += (key(sorted[pos + 1]) - key(sorted[pos - 1])) / scale;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: f64 = 3600.0;

    fn op(p: f64, d: f64) -> ObjectivePair {
        ObjectivePair::new(p, d)
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&op(0.40, 7.5 * H), &op(0.45, 8.0 * H)));
        assert!(!dominates(&op(0.40, 7.5 * H), &op(0.40, 7.5 * H)));
        assert!(!dominates(&op(0.40, 8.0 * H), &op(0.45, 7.5 * H)));
        assert!(!dominates(&op(0.45, 7.5 * H), &op(0.40, 8.0 * H)));
        assert!(dominates(&op(0.40, 7.0 * H), &op(0.40, 7.5 * H)));
    }

    #[test]
    fn insert_examples() {
        let mut a = ParetoArchive::new(10);
        assert_eq!(a.insert(op(0.5, 100.0), 0), InsertOutcome::Accepted);
        assert_eq!(a.insert(op(0.6, 200.0), 1), InsertOutcome::Dominated);
        assert_eq!(a.len(), 1);
        assert_eq!(a.insert(op(0.4, 200.0), 2), InsertOutcome::Accepted);
        assert_eq!(a.insert(op(0.3, 300.0), 3), InsertOutcome::Accepted);
        assert_eq!(a.insert(op(0.2, 400.0), 4), InsertOutcome::Accepted);
        // dominates the three entries at 200, 300, 400
        assert_eq!(a.insert(op(0.1, 150.0), 5), InsertOutcome::Replaced(3));
        assert_eq!(a.len(), 2);
        assert_eq!(a.entries().iter().map(|e| e.payload).collect::<Vec<_>>(), vec![0, 5]);
    }

    #[test]
    fn ties_keep_incumbent() {
        let mut a = ParetoArchive::new(10);
        a.insert(op(0.5, 100.0), "first");
        assert_eq!(a.insert(op(0.5 + 1e-13, 100.0 + 1e-7), "second"), InsertOutcome::Dominated);
        assert_eq!(a.insert(op(0.5, 100.0), "third"), InsertOutcome::Dominated);
        assert_eq!(a.entries()[0].payload, "first");
    }

    #[test]
    fn attainment_is_a_step_function() {
        let mut a = ParetoArchive::new(10);
        a.insert(op(0.9, 0.0), ());
        a.insert(op(0.5, 100.0), ());
        a.insert(op(0.2, 300.0), ());
        assert_eq!(a.attainment(-1.0), None);
        assert_eq!(a.attainment(50.0), Some(0.9));
        assert_eq!(a.attainment(100.0), Some(0.5));
        assert_eq!(a.attainment(299.0), Some(0.5));
        assert_eq!(a.attainment(1e9), Some(0.2));
    }

    #[test]
    fn prune_noop_at_capacity() {
        let mut a = ParetoArchive::new(3);
        for k in 0..3 {
            a.insert(op(1.0 - 0.1 * k as f64, k as f64), k);
        }
        let before = a.clone();
        a.crowding_prune();
        assert_eq!(a, before);
    }

    #[test]
    fn prune_keeps_endpoints_of_collinear_triplet() {
        let mut a = ParetoArchive::new(2);
        for k in 0..3 {
            a.insert(op(1.0 - 0.25 * k as f64, 10.0 * k as f64), k);
        }
        a.crowding_prune();
        assert_eq!(a.entries().iter().map(|e| e.payload).collect::<Vec<_>>(), vec![0, 2]);
    }

    /// Recomputes every crowding distance from scratch at each removal.
    fn prune_oracle(mut pts: Vec<ObjectivePair>, cap: usize) -> Vec<ObjectivePair> {
        while pts.len() > cap {
            let n = pts.len();
            let (p0, p1) = (pts[n - 1].p_nd, pts[0].p_nd);
            let (d0, d1) = (pts[0].duration, pts[n - 1].duration);
            let mut best = (f64::INFINITY, 0);
            for i in 1..n - 1 {
                let c = (pts[i + 1].duration - pts[i - 1].duration) / (d1 - d0)
                    + (pts[i - 1].p_nd - pts[i + 1].p_nd) / (p1 - p0);
                if c < best.0 {
                    best = (c, i);
                }
            }
            pts.remove(best.1);
        }
        pts
    }

    #[test]
    fn prune_random_front_to_thirty() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut a = ParetoArchive::new(30);
        let mut durations: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..36_000.0)).collect();
        durations.sort_by(f64::total_cmp);
        for (k, d) in durations.iter().enumerate() {
            // convex decreasing front with jitter
            let p = (-(d / 9000.0)).exp() + 1e-4 * rng.random::<f64>();
            a.insert(op(p, *d), k);
        }
        let full: Vec<ObjectivePair> = a.objectives().collect();
        let first = full[0];
        let last = *full.last().unwrap();
        // every removal picks an interior minimum of the current distances
        let mut stepwise = a.clone();
        while stepwise.len() > 30 {
            let pts: Vec<ObjectivePair> = stepwise.objectives().collect();
            let d = front_crowding(&pts, &objective_ranges(&pts));
            let min_interior = d[1..pts.len() - 1].iter().copied().fold(f64::INFINITY, f64::min);
            let before = stepwise.len();
            stepwise.capacity = before - 1;
            stepwise.crowding_prune();
            let removed: Vec<usize> =
                (0..before).filter(|&i| !stepwise.objectives().any(|o| o == pts[i])).collect();
            assert_eq!(removed.len(), 1);
            assert_eq!(d[removed[0]], min_interior);
        }
        a.crowding_prune();
        assert_eq!(a.len(), 30);
        let kept: Vec<ObjectivePair> = a.objectives().collect();
        assert_eq!(kept[0], first);
        assert_eq!(*kept.last().unwrap(), last);
        assert_eq!(kept, prune_oracle(full, 30));
    }

    #[test]
    fn ranks_and_crowding() {
        let pts = [op(0.1, 5.0), op(0.5, 1.0), op(0.3, 3.0), op(0.6, 6.0), op(0.4, 4.0)];
        assert_eq!(nondominated_ranks(&pts), vec![0, 0, 0, 2, 1]);
        let ranges = objective_ranges(&pts);
        let c = crowding_distances(&pts, &nondominated_ranks(&pts), &ranges);
        assert!(c[0].is_infinite() && c[1].is_infinite());
        assert!(c[2].is_finite() && c[2] > 0.0);
    }

    proptest! {
        #[test]
        fn archive_stays_consistent(points in proptest::collection::vec((0.0..1.0f64, 0.0..100.0f64), 1..120),
                                    cap in 2usize..20) {
            let mut a = ParetoArchive::new(cap);
            for (k, (p, d)) in points.iter().enumerate() {
                let before = a.clone();
                let o = a.insert(op(*p, *d), k);
                if o == InsertOutcome::Dominated {
                    prop_assert_eq!(&a, &before);
                }
                // idempotent
                prop_assert_eq!(a.insert(op(*p, *d), k), InsertOutcome::Dominated);
                if k % 7 == 0 {
                    a.crowding_prune();
                    prop_assert!(a.len() <= cap);
                }
                prop_assert!(a.dominated_pairs().is_empty());
                let e = a.entries();
                for w in e.windows(2) {
                    prop_assert!(w[0].objectives.duration < w[1].objectives.duration);
                    prop_assert!(w[0].objectives.p_nd > w[1].objectives.p_nd);
                }
            }
        }
    }
}
