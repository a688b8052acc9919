use nalgebra::Vector3;

use super::eigen::{diagonalize_unchecked, Eigensystem};
use super::operators::CMatrix;
use super::{SpinHamiltonian, SpinSystem};

/// Assignment of eigenstates at a new field to previously labelled states.
#[derive(Clone, Debug)]
pub struct LevelMatch {
    /// `permutation[i]` is the index (in the new eigensystem) continuing level `i`.
    pub permutation: Vec<usize>,
    /// Smallest overlap `sum |<prev_i|new_j>|^2` over each level's assigned
    /// degenerate cluster. Values well below 1 mean the continuation is ambiguous.
    pub min_overlap: f64,
}

/// Overlap continuation: greedily pairs previous and new eigenvectors by
/// descending `|<prev_i|new_j>|^2`, each new state used once.
pub fn match_levels(prev: &CMatrix, next: &Eigensystem) -> LevelMatch {
    let n = prev.ncols();
    let overlap = prev.adjoint() * next.vectors();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            candidates.push((overlap[(i, j)].norm_sqr(), i, j));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut permutation = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut assigned = 0;
    for &(_, i, j) in &candidates {
        if permutation[i] == usize::MAX && !taken[j] {
            permutation[i] = j;
            taken[j] = true;
            assigned += 1;
            if assigned == n {
                break;
            }
        }
    }

    // overlap with the degenerate cluster of the assigned state
    let e = next.energies();
    let scale = e.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-9 * scale;
    let mut min_overlap = 1.0f64;
    for (i, &j) in permutation.iter().enumerate() {
        let cluster: f64 = (0..n)
            .filter(|&k| (e[k] - e[j]).abs() <= tol)
            .map(|k| overlap[(i, k)].norm_sqr())
            .sum();
        min_overlap = min_overlap.min(cluster);
    }
    LevelMatch {
        permutation,
        min_overlap,
    }
}

/// Reorders an eigensystem so that column `i` continues `prev` column `i`.
pub(crate) fn relabel(next: &Eigensystem, m: &LevelMatch) -> (Vec<f64>, CMatrix) {
    let n = next.dimension();
    let mut vectors = CMatrix::zeros(n, n);
    let mut energies = vec![0.0; n];
    for (i, &j) in m.permutation.iter().enumerate() {
        energies[i] = next.energies()[j];
        vectors.set_column(i, &next.vectors().column(j));
    }
    (energies, vectors)
}

/// Energies of all levels along a field sweep, labelled by continuity from
/// the first field point (ascending order there).
#[derive(Clone, Debug)]
pub struct LevelSweep {
    pub fields: Vec<f64>,
    /// `energies[k][i]`: level `i` at `fields[k]`, Hz.
    pub energies: Vec<Vec<f64>>,
    /// Worst continuation overlap encountered along the sweep.
    pub min_overlap: f64,
}

pub fn level_sweep(sys: &SpinSystem, direction: &Vector3<f64>, fields: &[f64]) -> LevelSweep {
    let ham = SpinHamiltonian::new(sys);
    let dir = direction.normalize();
    let mut energies = Vec::with_capacity(fields.len());
    let mut current: Option<CMatrix> = None;
    let mut min_overlap = 1.0f64;
    for &b in fields {
        let eig = diagonalize_unchecked(&ham.at_vector(&(dir * b)));
        match &current {
            None => {
                energies.push(eig.energies().to_vec());
                current = Some(eig.vectors().clone());
            }
            Some(prev) => {
                let m = match_levels(prev, &eig);
                min_overlap = min_overlap.min(m.min_overlap);
                let (e, v) = relabel(&eig, &m);
                energies.push(e);
                current = Some(v);
            }
        }
    }
    if min_overlap < 0.5 {
        log::warn!("level continuation ambiguous (min overlap {min_overlap:.3})");
    }
    LevelSweep {
        fields: fields.to_vec(),
        energies,
        min_overlap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::Tensor;

    #[test]
    fn tracks_through_a_true_crossing() {
        // I=3/2 quadrupole doublets crossed by a large nuclear Zeeman term along z:
        // every level is exactly linear in B, sorting by energy would kink
        let sys = SpinSystem::new(
            0.5,
            1.5,
            Tensor::isotropic(2.0),
            Tensor::zero(),
            Tensor::diagonal([-0.2e6, -0.2e6, 0.4e6]),
            1.0,
        )
        .unwrap();
        let fields: Vec<f64> = (0..120).map(|k| 0.05 + k as f64 * 2.1e-3).collect();
        let sweep = level_sweep(&sys, &Vector3::z(), &fields);
        assert!(sweep.min_overlap > 0.99);
        for lvl in 0..8 {
            for k in 1..fields.len() - 1 {
                let d2 = sweep.energies[k + 1][lvl] - 2.0 * sweep.energies[k][lvl]
                    + sweep.energies[k - 1][lvl];
                assert!(d2.abs() < 1.0, "level {lvl} kink at {k}: {d2}");
            }
        }
    }
}
