use serde::{Deserialize, Serialize};

use super::net::{Cache, Mode};
use super::{mse, Cae};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter with the largest relative error.
    pub worst: String,
    pub checked: usize,
    /// Parameters whose ±h probe crossed a ReLU or max-pool switch.
    pub skipped_kinks: usize,
}

type Signature = (Vec<bool>, Vec<u32>);

fn loss_and_signature(cae: &Cae<f64>, params: &[f64], batch: &[f64], n: usize) -> (f64, Signature) {
    let mut stats = cae.running.clone();
    let (y, trace) = cae.net.forward(
        params,
        &mut stats,
        batch,
        n,
        Mode::Train { update_stats: false },
        0..cae.net.layers.len(),
        true,
    );
    let mut relu = Vec::new();
    let mut pool = Vec::new();
    for c in trace.expect("kept").caches {
        match c {
            Cache::Output(v) => relu.extend(v.iter().map(|x| *x > 0.0)),
            Cache::Pool(a) => pool.extend(a),
            _ => {}
        }
    }
    (mse(&y, batch), (relu, pool))
}

/// Compares the analytic gradient of the training-mode loss with central
/// differences of step `h` for every parameter. Relative errors use
/// `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn gradient_check(cae: &Cae<f64>, batch: &[f64], n: usize, h: f64) -> Result<GradCheckReport> {
    let mut work = cae.clone();
    let (_, analytic) = work.loss_and_grad(batch, n, false)?;
    let (_, base_sig) = loss_and_signature(cae, &cae.params, batch, n);
    let mut params = cae.params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: String::new(),
        checked: 0,
        skipped_kinks: 0,
    };
    for seg in &cae.net.segments {
        for i in seg.offset..seg.offset + seg.len {
            let orig = params[i];
            params[i] = orig + h;
            let (lp, sp) = loss_and_signature(cae, &params, batch, n);
            params[i] = orig - h;
            let (lm, sm) = loss_and_signature(cae, &params, batch, n);
            params[i] = orig;
            if sp != base_sig || sm != base_sig {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{}[{}]", seg.name, i - seg.offset);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::super::{Activation, CaeConfig};
    use super::*;

    fn random_batch(cfg: &CaeConfig, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n * cfg.input_len()).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn tiny_net_matches_finite_differences() {
        let cfg = CaeConfig::tiny();
        let cae = Cae::<f64>::init(cfg, 11).unwrap();
        let batch = random_batch(&cfg, 3, 4);
        let r = gradient_check(&cae, &batch, 3, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.checked > cae.params().len() * 9 / 10, "{r:?}");
    }

    #[test]
    fn linear_variant_is_exact() {
        let cfg = CaeConfig {
            batch_norm: false,
            activation: Activation::Identity,
            squash_output: false,
            ..CaeConfig::tiny()
        };
        let cae = Cae::<f64>::init(cfg, 12).unwrap();
        let batch = random_batch(&cfg, 2, 5);
        let r = gradient_check(&cae, &batch, 2, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn zero_net_bias_gradients() {
        let cfg = CaeConfig::tiny();
        let mut cae = Cae::<f64>::init(cfg, 13).unwrap();
        cae.params_mut().fill(0.0);
        let batch = vec![0.0; 2 * cfg.input_len()];
        let (_, grad) = cae.clone().loss_and_grad(&batch, 2, false).unwrap();
        let h = 1e-4;
        for seg in cae.segments().iter().filter(|s| s.kind == crate::cae::ParamKind::Bias) {
            for i in seg.offset..seg.offset + seg.len {
                let mut p = cae.params().to_vec();
                p[i] += h;
                let lp = cae.loss_with(&p, &batch, 2);
                p[i] -= 2.0 * h;
                let lm = cae.loss_with(&p, &batch, 2);
                let numeric = (lp - lm) / (2.0 * h);
                assert!((grad[i] - numeric).abs() < 1e-6, "{}: {} vs {numeric}", seg.name, grad[i]);
            }
        }
    }
}
