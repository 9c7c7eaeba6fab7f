//! Lowercase hex encoding for big integers, no leading zeros (`0` is `"0"`).

use num_bigint::BigUint;
use num_traits::Num;
use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

pub fn encode(value: &BigUint) -> String {
    value.to_str_radix(16)
}

pub fn decode(text: &str) -> Option<BigUint> {
    if text.is_empty()
        || (text.len() > 1 && text.starts_with('0'))
        || !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return None;
    }
    BigUint::from_str_radix(text, 16).ok()
}

pub fn serialize<S: Serializer>(value: &BigUint, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&encode(value))
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BigUint, D::Error> {
    let text = String::deserialize(deserializer)?;
    decode(&text).ok_or_else(|| D::Error::custom(format!("invalid hex integer {text:?}")))
}

pub mod vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[BigUint], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&encode(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<BigUint>, D::Error> {
        let texts = Vec::<String>::deserialize(deserializer)?;
        texts.iter().map(|t| decode(t).ok_or_else(|| D::Error::custom(format!("invalid hex integer {t:?}")))).collect()
    }
}
