use ndarray::{Array2, Array3};

use super::{AttentionMaps, MergedSlots, SlotSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

const TIE_TOLERANCE: f64 = 1e-12;
const SMALL_NORM: f64 = 1e-10;
const NORM_EPS: f64 = 1e-12;

/// Pairwise cosine distances `1 - cos(a, b)` between rows.
///
/// Exactly-zero rows are rejected; rows with norm below `1e-10` get `1e-12`
/// added to their norm.
pub fn cosine_distance_matrix<T: Real>(x: &Array2<T>) -> Result<Array2<T>> {
    let n = x.nrows();
    let mut norms = Vec::with_capacity(n);
    for (i, row) in x.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == T::zero() {
            return Err(Error::ZeroNormSlot(i));
        }
        norms.push(if norm < T::lit(SMALL_NORM) {
            norm + T::lit(NORM_EPS)
        } else {
            norm
        });
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let c = x.row(i).dot(&x.row(j)) / (norms[i] * norms[j]);
            let v = T::one() - c;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

struct Cluster<T> {
    members: Vec<usize>,
    sum: ndarray::Array1<T>,
    mask: Array2<T>,
}

/// Average-linkage agglomerative clustering of slots under cosine distance,
/// merging until `k` clusters remain.
///
/// Cluster distances are maintained with the Lance–Williams update for
/// average linkage. Among pairs whose distance is within `1e-12` of the
/// minimum, the pair with the lexicographically smallest (smallest member,
/// smallest member) index pair merges. Merged slots are member means, merged
/// masks are member sums, and groups are returned ordered by smallest member.
pub fn merge_slots<T: Real>(slots: &SlotSet<T>, attention: &AttentionMaps<T>, k: usize) -> Result<MergedSlots<T>> {
    let n = slots.len();
    if attention.n_slots() != n {
        return Err(Error::Shape(format!(
            "{} slots but {} attention maps",
            n,
            attention.n_slots()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot merge {n} slots into {k}")));
    }
    let mut dist = cosine_distance_matrix(&slots.slots)?;
    let mut clusters: Vec<Option<Cluster<T>>> = (0..n)
        .map(|i| {
            Some(Cluster {
                members: vec![i],
                sum: slots.slots.row(i).to_owned(),
                mask: attention.weights.index_axis(ndarray::Axis(0), i).to_owned(),
            })
        })
        .collect();
    // A cluster lives at the index of its smallest member, so scanning
    // indices in order visits pairs in lexicographic order.
    let mut active = n;
    while active > k {
        let live: Vec<usize> = (0..n).filter(|&i| clusters[i].is_some()).collect();
        let mut best = T::infinity();
        for (a, &i) in live.iter().enumerate() {
            for &j in &live[a + 1..] {
                best = best.min(dist[[i, j]]);
            }
        }
        let limit = best + T::lit(TIE_TOLERANCE);
        let (i, j) = live
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| live[a + 1..].iter().map(move |&j| (i, j)))
            .find(|&(i, j)| dist[[i, j]] <= limit)
            .expect("at least one pair");

        let cj = clusters[j].take().expect("live cluster");
        let ci = clusters[i].as_mut().expect("live cluster");
        let (ni, nj) = (T::from_len(ci.members.len()), T::from_len(cj.members.len()));
        for &m in &live {
            if m != i && m != j {
                let v = (ni * dist[[i, m]] + nj * dist[[j, m]]) / (ni + nj);
                dist[[i, m]] = v;
                dist[[m, i]] = v;
            }
        }
        ci.members.extend(cj.members);
        ci.members.sort_unstable();
        ci.sum = &ci.sum + &cj.sum;
        ci.mask = &ci.mask + &cj.mask;
        active -= 1;
    }

    let live: Vec<Cluster<T>> = clusters.into_iter().flatten().collect();
    let d = slots.dim();
    let (h, w) = attention.grid_shape();
    let mut merged = Array2::zeros((k, d));
    let mut masks = Array3::zeros((k, h, w));
    let mut members = Vec::with_capacity(k);
    for (c, cl) in live.into_iter().enumerate() {
        let size = T::from_len(cl.members.len());
        merged.row_mut(c).assign(&cl.sum.mapv(|v| v / size));
        masks.index_axis_mut(ndarray::Axis(0), c).assign(&cl.mask);
        members.push(cl.members);
    }
    Ok(MergedSlots {
        slots: merged,
        masks,
        members,
    })
}
