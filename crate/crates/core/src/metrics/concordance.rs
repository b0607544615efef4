use crate::error::{check_len, Error, Result};

/// Rank-based concordance (AUC) with ties counted as ½, in O(n log n).
///
/// Counting is done in integers, so the result equals the all-pairs
/// definition up to the final division.
pub fn c_statistic(risks: &[f64], outcomes: &[u8]) -> Result<f64> {
    check_len(risks.len(), outcomes.len())?;
    let events = outcomes.iter().filter(|&&y| y == 1).count() as u128;
    let non_events = outcomes.len() as u128 - events;
    if events == 0 || non_events == 0 {
        return Err(Error::UndefinedConcordance);
    }
    let mut order: Vec<usize> = (0..risks.len()).collect();
    order.sort_unstable_by(|&a, &b| risks[a].total_cmp(&risks[b]));

    // Twice the concordance count: 2 per concordant pair, 1 per tie.
    let mut twice_concordant: u128 = 0;
    let mut non_events_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let value = risks[order[i]];
        let (mut e, mut ne) = (0u128, 0u128);
        while i < order.len() && risks[order[i]] == value {
            if outcomes[order[i]] == 1 {
                e += 1;
            } else {
                ne += 1;
            }
            i += 1;
        }
        twice_concordant += 2 * e * non_events_below + e * ne;
        non_events_below += ne;
    }
    Ok(twice_concordant as f64 / (2 * events * non_events) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied() {
        assert_eq!(c_statistic(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(c_statistic(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert!(matches!(
            c_statistic(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedConcordance)
        ));
    }
}
