//! Finite-difference verification of analytic gradients.
//!
//! Each checked tensor is perturbed one scalar at a time by `±eps`, and the
//! central difference `(L(x+eps) - L(x-eps)) / 2 eps` of a scalar loss is
//! compared against the analytic gradient. Errors are normwise per group:
//! `|a - n|_2 / max(|a|_2, |n|_2, 1e-6)`.

use crate::tensor::Tensor;

pub const ERROR_FLOOR: f32 = 1e-6;

#[derive(Clone, Debug)]
pub struct Probe {
    pub name: String,
    pub analytic: Vec<f32>,
    pub numeric: Vec<f32>,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
}

pub fn relative_error(analytic: &[f32], numeric: &[f32]) -> f32 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| (a - n) as f64));
    let a = norm(&mut analytic.iter().map(|&a| a as f64));
    let n = norm(&mut numeric.iter().map(|&n| n as f64));
    (diff / a.max(n).max(ERROR_FLOOR as f64)) as f32
}

impl GradCheckReport {
    /// Worst error over individual probes.
    pub fn max_rel_error(&self) -> f32 {
        self.probes
            .iter()
            .map(|p| relative_error(&p.analytic, &p.numeric))
            .fold(0.0, f32::max)
    }

    /// Worst error after pooling probes that share `key(name)`, e.g. all
    /// tensors of one layer.
    pub fn max_rel_error_by<'a>(&'a self, key: impl Fn(&'a str) -> &'a str) -> f32 {
        pooled_error(
            self.probes
                .iter()
                .map(|p| (key(&p.name), &p.analytic, &p.numeric)),
        )
    }

    /// Pooled disagreement between the numeric gradients of two checks of
    /// the same points at different step sizes. Large values flag kinks or
    /// strong curvature within the step.
    pub fn numeric_disagreement_by<'a>(
        &'a self,
        other: &'a GradCheckReport,
        key: impl Fn(&'a str) -> &'a str,
    ) -> f32 {
        assert_eq!(
            self.probes.len(),
            other.probes.len(),
            "reports cover the same points"
        );
        pooled_error(
            self.probes
                .iter()
                .zip(&other.probes)
                .map(|(a, b)| (key(&a.name), &a.numeric, &b.numeric)),
        )
    }

    pub fn worst(&self) -> Option<(&str, f32)> {
        self.probes
            .iter()
            .map(|p| (p.name.as_str(), relative_error(&p.analytic, &p.numeric)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn pooled_error<'a>(items: impl Iterator<Item = (&'a str, &'a Vec<f32>, &'a Vec<f32>)>) -> f32 {
    let mut groups: Vec<(&str, Vec<f32>, Vec<f32>)> = Vec::new();
    for (k, a, b) in items {
        let slot = match groups.iter().position(|g| g.0 == k) {
            Some(i) => i,
            None => {
                groups.push((k, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        groups[slot].1.extend_from_slice(a);
        groups[slot].2.extend_from_slice(b);
    }
    groups
        .iter()
        .map(|(_, a, b)| relative_error(a, b))
        .fold(0.0, f32::max)
}

/// Layer name of a dotted parameter path (`"brick1.conv.weight"` to
/// `"brick1.conv"`).
pub fn layer_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(layer, _)| layer)
}

/// Central-difference check of `analytic[i]` against `loss` at `points[i]`.
///
/// `loss` receives all points with exactly one scalar perturbed.
pub fn grad_check(
    points: &[(String, Tensor)],
    analytic: &[Tensor],
    eps: f32,
    mut loss: impl FnMut(&[Tensor]) -> f64,
) -> GradCheckReport {
    assert_eq!(
        points.len(),
        analytic.len(),
        "one analytic gradient per point"
    );
    let mut work: Vec<Tensor> = points.iter().map(|(_, t)| t.clone()).collect();
    let mut report = GradCheckReport::default();
    for (t, (name, _)) in points.iter().enumerate() {
        assert_eq!(
            work[t].shape(),
            analytic[t].shape(),
            "gradient shape for {name}"
        );
        let mut numeric = Vec::with_capacity(work[t].len());
        for i in 0..work[t].len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + eps;
            let plus = loss(&work);
            work[t].data_mut()[i] = orig - eps;
            let minus = loss(&work);
            work[t].data_mut()[i] = orig;
            numeric.push(((plus - minus) / (2.0 * eps as f64)) as f32);
        }
        report.probes.push(Probe {
            name: name.clone(),
            analytic: analytic[t].data().to_vec(),
            numeric,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        let x = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let grad = Tensor::from_vec(&[3], vec![1.0, -2.0, 4.0]).unwrap();
        let report = grad_check(&[("x".into(), x)], &[grad], 1e-3, |ts| {
            ts[0].data().iter().map(|&v| (v as f64).powi(2)).sum()
        });
        assert!(report.max_rel_error() < 1e-3);
    }

    #[test]
    fn wrong_gradient_fails() {
        let x = Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap();
        let grad = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let report = grad_check(&[("x".into(), x)], &[grad], 1e-3, |ts| {
            ts[0].data().iter().map(|&v| (v as f64).powi(2)).sum()
        });
        assert!(report.max_rel_error() > 0.5);
    }

    #[test]
    fn layer_grouping() {
        assert_eq!(layer_of("brick1.conv.weight"), "brick1.conv");
        assert_eq!(layer_of("x"), "x");
    }
}
