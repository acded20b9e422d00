//! Label-switching correction for mixture draws.
//!
//! Each draw's labels are permuted to minimize the squared distance between
//! its one-hot classification matrix and the mean classification matrix,
//! alternating with recomputing that mean until no permutation changes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mcmc::ChainDraw;

const MAX_ROUNDS: usize = 100;

/// Minimum-cost perfect assignment on a square matrix. Returns `assign[row] = col`.
pub fn hungarian(cost: &[Vec<i128>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials formulation, 1-based internally.
    let inf = i128::MAX / 4;
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

fn assignment_cost(cost: &[Vec<i128>], perm: &[usize]) -> i128 {
    perm.iter().enumerate().map(|(k, &l)| cost[k][l]).sum()
}

/// Lexicographically smallest minimum-cost assignment.
pub fn lex_min_assignment(cost: &[Vec<i128>]) -> Vec<usize> {
    let k = cost.len();
    if k <= 1 {
        return vec![0; k];
    }
    // Secondary key: the permutation read as a base-K number. Scaling the
    // primary costs past the largest key makes one solve exact when it fits.
    let spread = cost.iter().flatten().map(|c| c.unsigned_abs()).max().unwrap_or(0) + 1;
    let key_span = (k as u128).checked_pow(k as u32);
    let scaled = key_span.and_then(|span| {
        let bound = spread.checked_mul(span)?.checked_mul(k as u128 * 2)?;
        (bound < i128::MAX as u128 / 4).then_some(span as i128)
    });
    if let Some(scale) = scaled {
        let weights: Vec<i128> = (0..k).map(|r| (k as i128).pow((k - 1 - r) as u32)).collect();
        let c: Vec<Vec<i128>> = (0..k)
            .map(|r| (0..k).map(|l| cost[r][l] * scale + l as i128 * weights[r]).collect())
            .collect();
        return hungarian(&c);
    }
    // Fall back to fixing prefixes one position at a time.
    let best = assignment_cost(cost, &hungarian(cost));
    let mut fixed: Vec<usize> = Vec::with_capacity(k);
    for r in 0..k {
        for l in 0..k {
            if fixed.contains(&l) {
                continue;
            }
            let rows: Vec<usize> = (r + 1..k).collect();
            let cols: Vec<usize> = (0..k).filter(|c| *c != l && !fixed.contains(c)).collect();
            let sub: Vec<Vec<i128>> = rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect();
            let sub_assign = hungarian(&sub);
            let prefix: i128 = fixed.iter().enumerate().map(|(i, &c)| cost[i][c]).sum();
            let total = prefix
                + cost[r][l]
                + sub_assign.iter().enumerate().map(|(i, &c)| sub[i][c]).sum::<i128>();
            if total == best {
                fixed.push(l);
                break;
            }
        }
    }
    fixed
}

/// Result of [`relabel`]. Permutations map old labels to new ones and are
/// 1-based when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelReport {
    #[serde(with = "one_based_perms")]
    pub permutations: Vec<Vec<usize>>,
    pub loss_trajectory: Vec<f64>,
    pub converged: bool,
    pub rounds: usize,
    /// `N × K` classification probabilities under the final labels.
    pub reference_probabilities: Vec<Vec<f64>>,
}

mod one_based_perms {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<usize>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|p| p.iter().map(|&x| x + 1).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<usize>>, D::Error> {
        let raw = Vec::<Vec<usize>>::deserialize(d)?;
        raw.into_iter()
            .map(|p| {
                p.into_iter()
                    .map(|x| x.checked_sub(1).ok_or_else(|| D::Error::custom("labels are 1-based")))
                    .collect()
            })
            .collect()
    }
}

/// Member-by-label counts of the permuted assignments.
fn label_counts(assignments: &[&[usize]], perms: &[Vec<usize>], n: usize, k: usize) -> Vec<i64> {
    let mut counts = vec![0i64; n * k];
    for (z, perm) in assignments.iter().zip(perms) {
        for (i, &label) in z.iter().enumerate() {
            counts[i * k + perm[label]] += 1;
        }
    }
    counts
}

/// `Σ_t ||σ_t(A_t) − Q||²` with `Q = counts / T`.
fn loss(assignments: &[&[usize]], perms: &[Vec<usize>], counts: &[i64], n: usize, k: usize) -> f64 {
    let t = assignments.len() as f64;
    let q = |i: usize, l: usize| counts[i * k + l] as f64 / t;
    let sq: f64 = (0..n).map(|i| (0..k).map(|l| q(i, l).powi(2)).sum::<f64>()).sum();
    let mut total = t * sq;
    for (z, perm) in assignments.iter().zip(perms) {
        for (i, &label) in z.iter().enumerate() {
            total += 1.0 - 2.0 * q(i, perm[label]);
        }
    }
    total
}

/// Relabels raw assignment vectors. Returns per-draw permutations and the report.
pub fn relabel_assignments(assignments: &[&[usize]], k: usize) -> Result<RelabelReport> {
    let n = assignments.first().map_or(0, |z| z.len());
    if let Some(z) = assignments.iter().find(|z| z.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: z.len() });
    }
    if let Some(&bad) = assignments.iter().flat_map(|z| z.iter()).find(|&&z| z >= k) {
        return invalid(format!("label {} exceeds K = {k}", bad + 1));
    }
    let identity: Vec<usize> = (0..k).collect();
    let mut perms = vec![identity; assignments.len()];
    let mut counts = label_counts(assignments, &perms, n, k);
    let mut trajectory = vec![loss(assignments, &perms, &counts, n, k)];
    let mut converged = assignments.is_empty() || k == 1;
    let mut rounds = 0;
    while !converged && rounds < MAX_ROUNDS {
        rounds += 1;
        let next: Vec<Vec<usize>> = assignments
            .par_iter()
            .map(|z| {
                let mut cost = vec![vec![0i128; k]; k];
                for (i, &label) in z.iter().enumerate() {
                    for (l, c) in cost[label].iter_mut().enumerate() {
                        *c -= counts[i * k + l] as i128;
                    }
                }
                lex_min_assignment(&cost)
            })
            .collect();
        converged = next == perms;
        perms = next;
        counts = label_counts(assignments, &perms, n, k);
        trajectory.push(loss(assignments, &perms, &counts, n, k));
    }
    let t = assignments.len().max(1) as f64;
    let reference_probabilities = (0..n)
        .map(|i| (0..k).map(|l| counts[i * k + l] as f64 / t).collect())
        .collect();
    Ok(RelabelReport { permutations: perms, loss_trajectory: trajectory, converged, rounds, reference_probabilities })
}

/// Relabels chain draws; atoms, proportions and assignments move together.
pub fn relabel(draws: &[ChainDraw]) -> Result<(Vec<ChainDraw>, RelabelReport)> {
    let k = draws.first().map_or(1, |d| d.mixture.k_max());
    if let Some(d) = draws.iter().find(|d| d.mixture.k_max() != k) {
        return Err(Error::DimensionMismatch { expected: k, actual: d.mixture.k_max() });
    }
    let z: Vec<&[usize]> = draws.iter().map(|d| d.mixture.assignments.as_slice()).collect();
    let report = relabel_assignments(&z, k)?;
    let out = draws
        .iter()
        .zip(&report.permutations)
        .map(|(d, perm)| {
            let mut d = d.clone();
            d.mixture.permute_labels(perm);
            d
        })
        .collect();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cost: &[Vec<i128>]) -> (i128, Vec<usize>) {
        fn rec(k: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, cost: &[Vec<i128>], best: &mut Option<(i128, Vec<usize>)>) {
            if cur.len() == k {
                let c = assignment_cost(cost, cur);
                // Permutations are generated in lexicographic order; keep the first minimum.
                if best.as_ref().is_none_or(|b| c < b.0) {
                    *best = Some((c, cur.clone()));
                }
                return;
            }
            for l in 0..k {
                if !used[l] {
                    used[l] = true;
                    cur.push(l);
                    rec(k, used, cur, cost, best);
                    cur.pop();
                    used[l] = false;
                }
            }
        }
        let k = cost.len();
        let mut best = None;
        rec(k, &mut vec![false; k], &mut Vec::new(), cost, &mut best);
        best.unwrap()
    }

    #[test]
    fn hungarian_matches_brute_force_with_lexicographic_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..300 {
            let k = 1 + trial % 6;
            // Small integer range makes ties common.
            let cost: Vec<Vec<i128>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(-3..3)).collect()).collect();
            let (best, lex) = brute_force(&cost);
            let h = hungarian(&cost);
            assert_eq!(assignment_cost(&cost, &h), best);
            assert_eq!(lex_min_assignment(&cost), lex, "{cost:?}");
        }
    }

    #[test]
    fn prefix_fallback_agrees_with_scaled_solve() {
        // Costs large enough to overflow the scaled encoding.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let k = 4;
            let cost: Vec<Vec<i128>> = (0..k)
                .map(|_| (0..k).map(|_| rng.random_range(0..3) as i128 * (1i128 << 120)).collect())
                .collect();
            let (_, lex) = brute_force(&cost);
            assert_eq!(lex_min_assignment(&cost), lex);
        }
    }

    fn well_separated(t: usize, n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let truth: Vec<usize> = (0..n).map(|i| i % k).collect();
        (0..t)
            .map(|_| {
                truth
                    .iter()
                    .map(|&z| if rng.random::<f64>() < 0.05 { rng.random_range(0..k) } else { z })
                    .collect()
            })
            .collect()
    }

    fn modal(z: &[Vec<usize>], n: usize, k: usize) -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut c = vec![0; k];
                for d in z {
                    c[d[i]] += 1;
                }
                (0..k).max_by_key(|&l| (c[l], std::cmp::Reverse(l))).unwrap()
            })
            .collect()
    }

    #[test]
    fn recovers_a_randomly_permuted_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (t, n, k) = (400, 30, 4);
        let original = well_separated(t, n, k, &mut rng);
        let scrambled: Vec<Vec<usize>> = original
            .iter()
            .map(|z| {
                let mut perm: Vec<usize> = (0..k).collect();
                perm.shuffle(&mut rng);
                z.iter().map(|&l| perm[l]).collect()
            })
            .collect();
        let refs: Vec<&[usize]> = scrambled.iter().map(|z| z.as_slice()).collect();
        let report = relabel_assignments(&refs, k).unwrap();
        assert!(report.converged);
        assert!(report.loss_trajectory.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let fixed: Vec<Vec<usize>> = scrambled
            .iter()
            .zip(&report.permutations)
            .map(|(z, p)| z.iter().map(|&l| p[l]).collect())
            .collect();
        let (a, b) = (modal(&original, n, k), modal(&fixed, n, k));
        // Same partition: a consistent bijection between labels.
        let mut map = vec![None; k];
        for i in 0..n {
            match map[a[i]] {
                None => map[a[i]] = Some(b[i]),
                Some(m) => assert_eq!(m, b[i]),
            }
        }
        // Every draw is aligned with the original up to that one global map.
        let global: Vec<usize> = map.iter().map(|m| m.unwrap()).collect();
        for (o, f) in original.iter().zip(&fixed) {
            assert!(o.iter().zip(f).all(|(&x, &y)| global[x] == y));
        }
    }

    #[test]
    fn second_pass_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (t, n, k) = (200, 20, 3);
        let z: Vec<Vec<usize>> = (0..t).map(|_| (0..n).map(|_| rng.random_range(0..k)).collect()).collect();
        let refs: Vec<&[usize]> = z.iter().map(|z| z.as_slice()).collect();
        let first = relabel_assignments(&refs, k).unwrap();
        assert!(first.loss_trajectory.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(first.rounds <= MAX_ROUNDS);
        let once: Vec<Vec<usize>> = z
            .iter()
            .zip(&first.permutations)
            .map(|(z, p)| z.iter().map(|&l| p[l]).collect())
            .collect();
        let refs: Vec<&[usize]> = once.iter().map(|z| z.as_slice()).collect();
        let second = relabel_assignments(&refs, k).unwrap();
        let identity: Vec<usize> = (0..k).collect();
        assert!(second.permutations.iter().all(|p| *p == identity));
    }

    #[test]
    fn single_cluster_is_identity() {
        let z = vec![vec![0usize; 5]; 3];
        let refs: Vec<&[usize]> = z.iter().map(|z| z.as_slice()).collect();
        let r = relabel_assignments(&refs, 1).unwrap();
        assert!(r.permutations.iter().all(|p| p == &vec![0]));
        assert!(r.converged);
        assert!(relabel_assignments(&refs[..0], 3).unwrap().permutations.is_empty());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let a = [0usize, 1];
        let b = [0usize];
        assert!(relabel_assignments(&[&a, &b], 2).is_err());
        assert!(relabel_assignments(&[&a], 1).is_err());
    }
}
