//! Reduction of complete data to bin memberships between empirical quantiles.

use super::{RawData, RawGrid};
use crate::error::{Error, Result};

/// Linearly interpolated sample quantile of sorted data (the common "type 7" rule).
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Bins each response between the empirical quantiles at levels `gap/100, 2·gap/100, …`.
pub fn coarsen_to_grid(data: &RawData, gap: u32) -> Result<RawGrid> {
    if gap == 0 || gap >= 100 || 100 % gap != 0 {
        return Err(Error::Config(format!("percentile gap {gap} must divide 100")));
    }
    let c = (100 / gap) as usize;
    let rho: Vec<f64> = (0..=c).map(|l| (l as u32 * gap) as f64 / 100.0).collect();
    let mut sorted = data.ys().to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = rho[1..c].iter().map(|p| sample_quantile(&sorted, *p)).collect();
    if cuts.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!(
            "tied responses give repeated cut values at a {gap}-percentile gap; use a coarser grid"
        )));
    }
    let bins = data
        .ys()
        .iter()
        .map(|y| cuts.partition_point(|cut| cut < y) + 1)
        .collect();
    RawGrid::new(
        data.d(),
        data.xs().to_vec(),
        bins,
        rho,
        cuts,
        sorted[0],
        sorted[sorted.len() - 1],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sequence(n: usize) -> RawData {
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 10.0 + i as f64).collect();
        RawData::new(1, (0..n).map(|i| i as f64).collect(), y).unwrap()
    }

    #[test]
    fn cut_count() {
        assert_eq!(coarsen_to_grid(&sequence(100), 5).unwrap().cuts().len(), 19);
    }

    #[test]
    fn equal_counts_for_distinct_values() {
        let g = coarsen_to_grid(&sequence(100), 20).unwrap();
        let mut counts = [0; 5];
        for i in 0..g.len() {
            counts[g.bin(i) - 1] += 1;
        }
        assert_eq!(counts, [20; 5]);
    }

    #[test]
    fn membership_audit() {
        let data = sequence(137);
        for gap in [5, 10, 20] {
            let g = coarsen_to_grid(&data, gap).unwrap();
            let c = g.num_bins();
            for i in 0..data.len() {
                let (b, y) = (g.bin(i), data.y(i));
                if b > 1 {
                    assert!(y > g.cuts()[b - 2]);
                }
                if b < c {
                    assert!(y <= g.cuts()[b - 1]);
                }
            }
        }
    }

    #[test]
    fn quantile_rule() {
        let s = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(sample_quantile(&s, 0.0), 1.0);
        assert_eq!(sample_quantile(&s, 1.0), 8.0);
        assert!((sample_quantile(&s, 0.5) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_and_bad_gaps_are_errors() {
        let data = RawData::new(1, vec![0.0; 10], vec![1.0; 10]).unwrap();
        assert!(coarsen_to_grid(&data, 10).is_err());
        assert!(coarsen_to_grid(&sequence(50), 7).is_err());
    }
}
