use super::CsrMatrix;

/// Patterns denser than this fraction are factored in natural order;
/// fill-reduction cannot win anything there and the elimination graph
/// would cost more than the factorization.
const DENSE_FRACTION: f64 = 0.25;

/// Minimum-degree ordering on the symmetrized pattern of `a`.
///
/// Returns `perm` with `perm[k]` = the original index eliminated at step `k`.
/// Ties are broken by the smallest index, so the result is deterministic.
pub fn minimum_degree(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let edges: usize = adj.iter().map(Vec::len).sum();
    if n == 0 || edges as f64 > DENSE_FRACTION * (n * n) as f64 {
        return (0..n).collect();
    }

    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| !eliminated[i])
            .min_by_key(|&i| (adj[i].len(), i))
            .expect("at least one node left");
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &a in &nbrs {
            let merged = merge_without(&adj[a], &nbrs, a, v);
            adj[a] = merged;
        }
    }
    perm
}

/// Sorted union of `a` and `b`, dropping `skip1` and `skip2`.
fn merge_without(a: &[usize], b: &[usize], skip1: usize, skip2: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if next != skip1 && next != skip2 {
            out.push(next);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_matrix_eliminates_hub_last() {
        // Hub at index 0 coupled to every other node.
        let n = 12;
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((0, i, 1.0));
                t.push((i, 0, 1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let perm = minimum_degree(&a);
        // Once a single leaf remains the hub ties with it at degree 1.
        let hub_step = perm.iter().position(|&v| v == 0).unwrap();
        assert!(hub_step >= n - 2);
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dense_pattern_keeps_natural_order() {
        let a = CsrMatrix::from_dense(3, 3, &[1.0; 9]).unwrap();
        assert_eq!(minimum_degree(&a), vec![0, 1, 2]);
    }
}
