use crate::error::{Error, Result};

fn check(ranked: &[u32], held_out: &[u32], k: usize) -> Result<()> {
    if held_out.is_empty() {
        return Err(Error::InvalidArgument("held-out set is empty".into()));
    }
    if k == 0 || ranked.len() < k {
        return Err(Error::InvalidArgument(format!(
            "ranking of {} items cannot be cut at K = {k}",
            ranked.len()
        )));
    }
    Ok(())
}

fn hits<'a>(ranked: &'a [u32], held_out: &'a [u32], k: usize) -> impl Iterator<Item = bool> + 'a {
    ranked[..k].iter().map(move |i| held_out.contains(i))
}

/// `|top-K ∩ held_out| / min(K, |held_out|)`.
pub fn recall_at_k(ranked: &[u32], held_out: &[u32], k: usize) -> Result<f64> {
    check(ranked, held_out, k)?;
    let found = hits(ranked, held_out, k).filter(|&h| h).count();
    Ok(found as f64 / k.min(held_out.len()) as f64)
}

/// Truncated NDCG with binary relevance and `1 / log2(rank + 1)` discounts.
pub fn ndcg_at_k(ranked: &[u32], held_out: &[u32], k: usize) -> Result<f64> {
    check(ranked, held_out, k)?;
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = hits(ranked, held_out, k)
        .enumerate()
        .filter(|(_, h)| *h)
        .map(|(r, _)| discount(r))
        .fold(0.0, |a, b| a + b);
    let idcg: f64 = (0..k.min(held_out.len())).map(discount).sum();
    Ok(dcg / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_cases() {
        assert_eq!(recall_at_k(&[3, 1, 2, 0], &[1, 3], 2).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[3, 1, 2, 0], &[0, 2], 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(&[5, 1, 2], &[5, 6, 7], 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[5, 1, 2], &[1, 6, 7], 3).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg_at_k(&[4, 0, 1], &[4], 3).unwrap(), 1.0);
        let v = ndcg_at_k(&[7, 8, 9], &[7, 9], 3).unwrap();
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.9197).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[1, 2], &[3], 2).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(recall_at_k(&[1, 2], &[], 1).is_err());
        assert!(ndcg_at_k(&[1], &[1], 2).is_err());
    }
}
