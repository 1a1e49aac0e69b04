/// Splits `total` so the lowest entries of `base` are lifted to a common
/// level: `C_k = max(0, L - base_k)` with `Σ C_k = total`.
pub fn water_fill(base: &[f64], total: f64) -> Vec<f64> {
    let k = base.len();
    if k == 0 || !(total > 0.0) {
        return vec![0.0; k];
    }
    let mut sorted = base.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut level = sorted[0] + total;
    let mut acc = 0.0;
    for j in 0..k {
        acc += sorted[j];
        let l = (total + acc) / (j + 1) as f64;
        if j + 1 == k || l <= sorted[j + 1] {
            level = l;
            break;
        }
    }
    let mut c: Vec<f64> = base.iter().map(|b| (level - b).max(0.0)).collect();
    // Remove the round-off so the shares never exceed the total.
    let s: f64 = c.iter().sum();
    if s > total {
        c.iter_mut().for_each(|v| *v *= total / s);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_lowest_first() {
        let c = water_fill(&[1.0, 3.0, 2.0], 1.5);
        assert!((c[0] - 1.25).abs() < 1e-12);
        assert!((c[2] - 0.25).abs() < 1e-12);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn equalizes_when_plenty() {
        let base = [1.0, 3.0, 2.0];
        let c = water_fill(&base, 9.0);
        let tot: Vec<f64> = base.iter().zip(&c).map(|(b, c)| b + c).collect();
        assert!(tot.iter().all(|t| (t - 5.0).abs() < 1e-12));
    }

    #[test]
    fn zero_total() {
        assert_eq!(water_fill(&[1.0, 2.0], 0.0), vec![0.0, 0.0]);
    }
}
