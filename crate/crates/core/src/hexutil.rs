//! Strict lowercase hex for digests, keys and signatures.

/// Decodes exactly `N` bytes; rejects uppercase so every value has one spelling.
pub fn decode_array<const N: usize>(s: &str) -> Result<[u8; N], String> {
    decode(s)?
        .try_into()
        .map_err(|v: Vec<u8>| format!("expected {N} bytes, got {}", v.len()))
}

pub fn decode(s: &str) -> Result<Vec<u8>, String> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err("hex must be lowercase".into());
    }
    hex::decode(s).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_decoding() {
        assert_eq!(decode_array::<2>("0aff").unwrap(), [0x0a, 0xff]);
        assert!(decode_array::<2>("0AFF").is_err());
        assert!(decode_array::<2>("0aff00").is_err());
        assert!(decode("0g").is_err());
    }
}
