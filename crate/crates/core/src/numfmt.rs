//! Fixed 17-significant-digit decimal text, which round-trips every `f64`.

pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}
