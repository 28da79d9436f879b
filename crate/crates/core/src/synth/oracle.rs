//! Brute-force reference implementations for the test suites.
//!
//! Written directly from the metric definitions and sharing no code with the
//! main implementations.

/// AP by recounting matches in `1..=k` from scratch at every rank.
pub fn oracle_ap(xai: &[String], human: &[String]) -> f64 {
    let n = human.len();
    assert!(n > 0, "empty human ranking");
    let hit = |k: usize| k < xai.len() && xai[k] == human[k];
    let mut sum = 0.0;
    for k in 0..n {
        if !hit(k) {
            continue;
        }
        let matched = (0..=k).filter(|&j| hit(j)).count();
        sum += matched as f64 / (k + 1) as f64;
    }
    sum / n as f64
}

/// Fractional rank by counting: 1 + (number below) + (ties excluding self) / 2.
fn counting_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Spearman's ρ via O(n²) ranks and a two-pass Pearson. `None` when undefined.
pub fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let rx = counting_ranks(x);
    let ry = counting_ranks(y);
    let n = x.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / n;
    let mean_y = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..rx.len() {
        cov += (rx[i] - mean_x) * (ry[i] - mean_y);
        var_x += (rx[i] - mean_x).powi(2);
        var_y += (ry[i] - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some(cov / (var_x * var_y).sqrt())
}

fn smooth(scores: &[f64], eps: f64) -> Vec<f64> {
    if scores.iter().all(|s| *s == 0.0) {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let z: f64 = scores.iter().map(|s| s.abs() + eps).sum();
    scores.iter().map(|s| (s.abs() + eps) / z).collect()
}

/// KL in nats between the smoothed distributions of two raw score vectors.
pub fn oracle_kl(p_scores: &[f64], q_scores: &[f64], eps: f64) -> f64 {
    assert_eq!(p_scores.len(), q_scores.len());
    let p = smooth(p_scores, eps);
    let q = smooth(q_scores, eps);
    let mut kl = 0.0;
    for i in 0..p.len() {
        kl += p[i] * (p[i].ln() - q[i].ln());
    }
    kl
}
