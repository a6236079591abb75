//! Decimal float formatting shared by every CSV surface.
//!
//! All persisted floats carry 9 significant digits. Values produced by the
//! dataset generator are canonicalized through [`round_sig`] before use, so
//! a save/load cycle is value-exact.

/// Format with `sig` significant digits in plain decimal notation.
pub fn format_sig(x: f64, sig: u32) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if exp >= sig as i32 {
        // out of plain-decimal range for the requested precision
        return format!("{:.*e}", sig as usize - 1, x);
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Round to `sig` significant digits by way of the canonical decimal string.
pub fn round_sig(x: f64, sig: u32) -> f64 {
    format_sig(x, sig).parse().unwrap_or(x)
}
