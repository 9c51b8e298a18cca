use crate::autodiff::expectile_weight;
use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("expectile tau must be in (0, 1), got {tau}")));
    }
    Ok(())
}

/// `|tau - 1[u < 0]| · u²`
pub fn expectile_loss<T: Real>(u: T, tau: T) -> Result<T> {
    check_tau(tau.as_f64())?;
    Ok(expectile_weight(u, tau) * u * u)
}

/// The `tau`-expectile of `values`: the minimizer of the mean expectile loss
/// of `values - m`. Solved by iteratively reweighted averaging, which is
/// exact once the sign pattern stops changing.
pub fn expectile(values: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if values.is_empty() {
        return Err(Error::InvalidArgument("expectile of an empty sample".into()));
    }
    let mut m = values.iter().sum::<f64>() / values.len() as f64;
    for _ in 0..10_000 {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in values {
            let w = expectile_weight(x - m, tau);
            num += w * x;
            den += w;
        }
        let next = num / den;
        if next == m {
            break;
        }
        m = next;
    }
    Ok(m)
}
