//! Deterministic numeric primitives shared by every module: canonical float
//! formatting, fixed-topology summation, and a stable hash for seed derivation.

/// Format a float with 9 significant digits, `%g`-style.
///
/// Decimal notation for exponents in `[-4, 9)`, scientific otherwise;
/// trailing zeros trimmed; `-0.0` normalizes to `"0"`. Every value written to
/// a file or report goes through this function, which is what makes reruns
/// byte-identical.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    // {:.8e} rounds to exactly 9 significant digits and exposes the exponent.
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };

    let body = if (-4..9).contains(&exp) {
        if exp >= 0 {
            let int_len = (exp + 1) as usize;
            if digits.len() <= int_len {
                format!("{}{}", digits, "0".repeat(int_len - digits.len()))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        }
    } else {
        let (first, rest) = digits.split_at(1);
        if rest.is_empty() {
            format!("{}e{}", first, exp)
        } else {
            format!("{}.{}e{}", first, rest, exp)
        }
    };
    if neg {
        format!("-{}", body)
    } else {
        body
    }
}

/// Snap a float onto the 9-significant-digit grid used by the file formats.
///
/// Simulator outputs are canonicalized at creation so in-memory values equal
/// their written-then-reloaded counterparts exactly.
pub fn canon(x: f64) -> f64 {
    debug_assert!(x.is_finite(), "canon() expects finite values");
    sig9(x).parse().expect("sig9 output parses")
}

/// Sum with a fixed pairwise-tree topology.
///
/// The reduction order depends only on the slice length, never on chunking or
/// thread count, so parallel callers that materialize per-item values in index
/// order get bit-identical results at any worker count.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

/// Arithmetic mean via [`tree_sum`]; 0 for an empty slice.
pub fn tree_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        tree_sum(xs) / xs.len() as f64
    }
}

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike the
/// standard library hasher, so derived seeds never drift.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent stream seed from a master seed and a label path,
/// e.g. `derive_seed(42, &["policy-03", "track-1"])`.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut bytes = Vec::with_capacity(8 + parts.iter().map(|p| p.len() + 1).sum::<usize>());
    bytes.extend_from_slice(&master.to_le_bytes());
    for part in parts {
        bytes.push(0xff); // separator so ("ab","c") != ("a","bc")
        bytes.extend_from_slice(part.as_bytes());
    }
    fnv1a(&bytes)
}
