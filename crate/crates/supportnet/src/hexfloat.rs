//! Hex-float (`%a` style) encoding of f64 values.
//!
//! Serialized networks store every weight as a string like `-0x1.5f3p-4` so
//! that round-trips are bit-exact and diffable. The parser accepts the usual
//! C99 forms (upper/lower case, optional int/frac part, any exponent) and
//! rounds to nearest-even when an input carries more precision than f64.

const MASK52: u64 = (1 << 52) - 1;

pub fn format_hex(v: f64) -> String {
    assert!(v.is_finite(), "hex format only defined for finite values");
    let sign = if v.is_sign_negative() { "-" } else { "" };
    let bits = v.to_bits();
    let frac = bits & MASK52;
    let expf = ((bits >> 52) & 0x7ff) as i64;
    if expf == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (mant, exp) = if expf > 0 {
        (frac, expf - 1023)
    } else {
        // subnormal: normalize so the leading bit is the implicit one
        let shift = frac.leading_zeros() as i64 - 11;
        (frac << shift & MASK52, -1022 - shift)
    };
    if mant == 0 {
        return format!("{sign}0x1p{exp:+}");
    }
    let digits = format!("{mant:013x}");
    let digits = digits.trim_end_matches('0');
    format!("{sign}0x1.{digits}p{exp:+}")
}

pub fn parse_hex(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let (neg, t) = match t.as_bytes().first() {
        Some(b'-') => (true, &t[1..]),
        Some(b'+') => (false, &t[1..]),
        _ => (false, t),
    };
    let t = t
        .strip_prefix("0x")
        .or_else(|| t.strip_prefix("0X"))
        .ok_or_else(|| format!("missing 0x prefix in {s:?}"))?;
    let (mant_str, exp_str) = t
        .split_once(['p', 'P'])
        .ok_or_else(|| format!("missing binary exponent in {s:?}"))?;
    let exp: i64 = exp_str
        .parse()
        .map_err(|_| format!("bad exponent in {s:?}"))?;
    let (int_str, frac_str) = match mant_str.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mant_str, ""),
    };
    if int_str.is_empty() && frac_str.is_empty() {
        return Err(format!("missing mantissa digits in {s:?}"));
    }

    // accumulate up to 28 significant hex digits; anything beyond only
    // matters for the sticky rounding bit
    let mut m: u128 = 0;
    let mut sig = 0usize;
    let mut sticky = false;
    let mut e2 = exp;
    for c in int_str.chars() {
        let d = c.to_digit(16).ok_or_else(|| format!("bad digit in {s:?}"))? as u128;
        if sig < 28 {
            m = m * 16 + d;
            if m != 0 {
                sig += 1;
            }
        } else {
            sticky |= d != 0;
            e2 += 4;
        }
    }
    for c in frac_str.chars() {
        let d = c.to_digit(16).ok_or_else(|| format!("bad digit in {s:?}"))? as u128;
        if sig < 28 {
            m = m * 16 + d;
            e2 -= 4;
            if m != 0 {
                sig += 1;
            }
        } else {
            sticky |= d != 0;
        }
    }
    if m == 0 {
        return Ok(if neg { -0.0 } else { 0.0 });
    }
    assemble(neg, m, e2, sticky).ok_or_else(|| format!("value out of f64 range in {s:?}"))
}

/// Round (-1)^neg * m * 2^e2 (+ sticky tail) to the nearest f64, ties to even.
fn assemble(neg: bool, m: u128, e2: i64, sticky: bool) -> Option<f64> {
    debug_assert!(m != 0);
    let bits = 128 - m.leading_zeros() as i64;
    let ebit = e2 + bits - 1;
    if ebit > 1023 {
        return None;
    }
    let prec = if ebit >= -1022 { 53 } else { 1075 + ebit };
    if prec <= 0 {
        // entirely below half the smallest subnormal, except the exact
        // halfway point which ties to even (zero)
        let up = prec == 0 && (sticky || !m.is_power_of_two());
        let v = if up { f64::from_bits(1) } else { 0.0 };
        return Some(if neg { -v } else { v });
    }
    let drop = bits - prec;
    let kept;
    if drop <= 0 {
        kept = (m << (-drop) as u32) as u64;
    } else {
        let d = drop as u32;
        let k = (m >> d) as u64;
        let round = (m >> (d - 1)) & 1 == 1;
        let rest = sticky || (m & ((1u128 << (d - 1)) - 1)) != 0;
        if round && (rest || k & 1 == 1) {
            if k + 1 == 1 << prec {
                // carry out of the precision window: renormalize and retry
                return assemble(neg, (k as u128) + 1, e2 + drop, false);
            }
            kept = k + 1;
        } else {
            kept = k;
        }
    }
    let out = if ebit >= -1022 {
        debug_assert_eq!(kept >> 52, 1);
        ((ebit + 1023) as u64) << 52 | (kept & MASK52)
    } else {
        kept // subnormal: exponent field 0, kept already scaled to 2^-1074
    };
    let v = f64::from_bits(out);
    Some(if neg { -v } else { v })
}
