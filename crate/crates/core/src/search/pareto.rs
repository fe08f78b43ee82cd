//! Dominance, non-dominated sorting, crowding and hypervolume in
//! (validation MSE, energy) space. Both objectives are minimized.

use serde::{Deserialize, Serialize};

use super::SearchError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub val_mse: f64,
    pub energy_mj: f64,
}

impl Objectives {
    pub fn new(val_mse: f64, energy_mj: f64) -> Self {
        Self { val_mse, energy_mj }
    }

    pub fn is_finite(&self) -> bool {
        self.val_mse.is_finite() && self.energy_mj.is_finite()
    }

    #[inline]
    fn get(&self, k: usize) -> f64 {
        if k == 0 {
            self.val_mse
        } else {
            self.energy_mj
        }
    }
}

#[inline]
pub(crate) fn dominates_unchecked(a: &Objectives, b: &Objectives) -> bool {
    a.val_mse <= b.val_mse && a.energy_mj <= b.energy_mj && (a.val_mse < b.val_mse || a.energy_mj < b.energy_mj)
}

/// `a` is no worse in both objectives and strictly better in one.
pub fn dominates(a: &Objectives, b: &Objectives) -> Result<bool, SearchError> {
    for o in [a, b] {
        if !o.is_finite() {
            return Err(SearchError::NonFinite(*o));
        }
    }
    Ok(dominates_unchecked(a, b))
}

/// Indices of the non-dominated points, ascending in MSE (ties by energy, then index).
/// Points with identical objectives are all kept.
pub fn pareto_indices(points: &[Objectives]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.val_mse.total_cmp(&q.val_mse).then(p.energy_mj.total_cmp(&q.energy_mj)).then(a.cmp(&b))
    });
    let mut out = Vec::new();
    let mut best_energy = f64::INFINITY;
    let mut i = 0;
    while i < idx.len() {
        // Group of equal MSE; its first members hold the group's minimum energy.
        let mse = points[idx[i]].val_mse;
        let e_min = points[idx[i]].energy_mj;
        let mut j = i;
        while j < idx.len() && points[idx[j]].val_mse == mse {
            if points[idx[j]].energy_mj == e_min && e_min < best_energy {
                out.push(idx[j]);
            }
            j += 1;
        }
        best_energy = best_energy.min(e_min);
        i = j;
    }
    out
}

/// Fronts of increasing rank; members of front `k` are dominated only by
/// members of earlier fronts.
pub fn non_dominated_sort(points: &[Objectives]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates_unchecked(&points[i], &points[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each point within one front. Boundary points are
/// infinite; interior points sum the normalized neighbor gaps per objective.
pub fn crowding_distance(front: &[Objectives]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n < 3 {
        return vec![f64::INFINITY; n];
    }
    for k in 0..2 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| front[a].get(k).total_cmp(&front[b].get(k)).then(a.cmp(&b)));
        let lo = front[idx[0]].get(k);
        let hi = front[idx[n - 1]].get(k);
        dist[idx[0]] = f64::INFINITY;
        dist[idx[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = idx[w];
            if dist[i].is_finite() {
                dist[i] += (front[idx[w + 1]].get(k) - front[idx[w - 1]].get(k)) / span;
            }
        }
    }
    dist
}

/// Area dominated by `points` and bounded by `reference`. Points not strictly
/// better than the reference in both objectives contribute nothing.
pub fn hypervolume(points: &[Objectives], reference: Objectives) -> f64 {
    let mut pts: Vec<Objectives> =
        points.iter().copied().filter(|p| p.val_mse < reference.val_mse && p.energy_mj < reference.energy_mj).collect();
    pts.sort_by(|a, b| a.val_mse.total_cmp(&b.val_mse).then(a.energy_mj.total_cmp(&b.energy_mj)));
    let mut area = 0.0;
    let mut ceiling = reference.energy_mj;
    for p in pts {
        if p.energy_mj < ceiling {
            area += (reference.val_mse - p.val_mse) * (ceiling - p.energy_mj);
            ceiling = p.energy_mj;
        }
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(a: f64, b: f64) -> Objectives {
        Objectives::new(a, b)
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&o(0.1, 0.2), &o(0.2, 0.3)).unwrap());
        assert!(!dominates(&o(0.1, 0.5), &o(0.2, 0.3)).unwrap());
        assert!(!dominates(&o(0.2, 0.3), &o(0.1, 0.5)).unwrap());
        assert!(!dominates(&o(0.2, 0.3), &o(0.2, 0.3)).unwrap());
        assert!(dominates(&o(f64::NAN, 0.3), &o(0.2, 0.3)).is_err());
    }

    #[test]
    fn chain_and_antichain() {
        let chain = [o(1.0, 1.0), o(2.0, 2.0), o(3.0, 3.0)];
        assert_eq!(non_dominated_sort(&chain), vec![vec![0], vec![1], vec![2]]);
        let anti = [o(1.0, 3.0), o(2.0, 2.0), o(3.0, 1.0)];
        assert_eq!(non_dominated_sort(&anti), vec![vec![0, 1, 2]]);
        assert_eq!(pareto_indices(&anti), vec![0, 1, 2]);
    }

    #[test]
    fn duplicates_stay_on_front() {
        let pts = [o(1.0, 2.0), o(1.0, 2.0), o(1.0, 3.0), o(0.5, 2.0)];
        assert_eq!(pareto_indices(&pts), vec![3]);
        let pts = [o(1.0, 2.0), o(1.0, 2.0), o(2.0, 1.0)];
        assert_eq!(pareto_indices(&pts), vec![0, 1, 2]);
    }

    #[test]
    fn crowding_hand_values() {
        assert!(crowding_distance(&[o(0.0, 1.0), o(1.0, 0.0)]).iter().all(|d| d.is_infinite()));
        let d = crowding_distance(&[o(0.0, 2.0), o(1.0, 1.0), o(2.0, 0.0)]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert_eq!(d[1], 2.0);
    }

    #[test]
    fn hypervolume_of_staircase() {
        let r = o(4.0, 4.0);
        assert_eq!(hypervolume(&[o(1.0, 3.0), o(2.0, 2.0), o(3.0, 1.0)], r), 3.0 + 2.0 + 1.0);
        assert_eq!(hypervolume(&[o(5.0, 1.0)], r), 0.0);
        assert_eq!(hypervolume(&[], r), 0.0);
    }
}
