//! Serde adapters: 0-based indices in memory, 1-based on disk.

pub mod one_based {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| x + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        raw.into_iter()
            .map(|x| x.checked_sub(1).ok_or_else(|| D::Error::custom("indices are 1-based")))
            .collect()
    }
}

pub mod one_based_scalar {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        (v + 1).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        usize::deserialize(d)?
            .checked_sub(1)
            .ok_or_else(|| D::Error::custom("indices are 1-based"))
    }
}

pub mod one_based_option {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|x| x + 1).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Option::<usize>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Err(D::Error::custom("indices are 1-based")),
            Some(x) => Ok(Some(x - 1)),
        }
    }
}
