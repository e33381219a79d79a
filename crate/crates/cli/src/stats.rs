use serde::{Deserialize, Serialize};

/// Mean and standard error over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(#seeds)`; absent for one seed.
    pub stderr: Option<f64>,
    pub per_seed: Vec<f64>,
}

impl SeedStat {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt() / n.sqrt()
        });
        Self {
            mean,
            stderr,
            per_seed: values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_seed_stderr() {
        let s = SeedStat::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(SeedStat::from_values(vec![4.0]).stderr, None);
    }
}
