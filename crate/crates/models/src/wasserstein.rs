//! Exact 1-D Wasserstein-1 distance between empirical distributions.

use crate::error::{Error, Result};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `∫₀¹ |F_a⁻¹(u) − F_b⁻¹(u)| du`, walking the merged quantile breakpoints.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let (a, b) = (sorted(a), sorted(b));
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len(), b.len());
    // Quantile breakpoints are i/na and j/nb; compare i·nb with j·na in integers.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0usize; // current position on the common grid, in units of 1/(na·nb)
    let mut total = 0.0;
    while i < na && j < nb {
        let next_a = (i + 1) * nb;
        let next_b = (j + 1) * na;
        let next = next_a.min(next_b);
        total += (next - prev) as f64 * (a[i] - b[j]).abs();
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / (na * nb) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cases() {
        assert_eq!(wasserstein1(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1(&[0.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert!(wasserstein1(&[], &[1.0]).is_err());
    }

    #[test]
    fn unequal_sizes_on_a_point_mass() {
        // {0, 1} against a point at 0.5: every unit of mass moves 0.5.
        assert!((wasserstein1(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
        // {0, 0, 3} vs {0, 3}: one sixth of mass travels 3.
        assert!((wasserstein1(&[0.0, 0.0, 3.0], &[0.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
    }
}
