//! Statistics-based illuminant estimators used as comparison points.
//!
//! Both return gains with `gamma = 1`, so `apply_correction` performs a pure
//! diagonal white balance.

use crate::colorcast::CorrectionParams;
use crate::error::{Error, Result};
use crate::imaging::LinearImage;

/// Grey-world: the scene averages to grey, so channel means are the
/// illuminant. Gains are normalized to unit geometric mean.
pub fn grey_world(img: &LinearImage) -> Result<CorrectionParams> {
    let means = img.channel_means();
    check_nonzero(means, "zero channel mean")?;
    let geo = (means[0] * means[1] * means[2]).cbrt();
    CorrectionParams::new(means[0] / geo, means[1] / geo, means[2] / geo, 1.0)
}

/// White-patch (max-RGB): the brightest value in each channel is the
/// illuminant. Gains are normalized so the largest is 1.
pub fn white_patch(img: &LinearImage) -> Result<CorrectionParams> {
    let maxima = img.channel_maxima();
    check_nonzero(maxima, "zero channel maximum")?;
    let top = maxima[0].max(maxima[1]).max(maxima[2]);
    CorrectionParams::new(maxima[0] / top, maxima[1] / top, maxima[2] / top, 1.0)
}

fn check_nonzero(stats: [f64; 3], reason: &'static str) -> Result<()> {
    match stats.iter().position(|&s| s <= 0.0) {
        Some(channel) => Err(Error::DegenerateChannel { channel, reason }),
        None => Ok(()),
    }
}
