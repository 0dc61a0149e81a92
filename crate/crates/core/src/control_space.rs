//! The 30-channel facial control vocabulary.
//!
//! Channel order is the reading order of the rig's range table (Jaw Pitch
//! first, Neck Roll last). Every vector, manifest record and prediction
//! file in this crate uses that order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CONTROLS: usize = 30;

/// Expression-relevant unit a control belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Brows,
    Lids,
    Gaze,
    Nose,
    Mouth,
    Head,
    Neck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlChannel {
    pub name: String,
    pub abbrev: String,
    pub min: f64,
    pub max: f64,
    pub neutral: f64,
    pub group: Group,
}

impl ControlChannel {
    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, value: f64) -> f64 {
        self.max.min(self.min.max(value))
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

// (name, abbrev, min, max, neutral, group)
const STANDARD: [(&str, &str, f64, f64, f64, Group); NUM_CONTROLS] = [
    ("Jaw Pitch", "JP", 0.0, 1.0, 1.0, Group::Mouth),
    ("Jaw Yaw", "JY", 0.0, 1.0, 0.5, Group::Mouth),
    ("Lip Bottom Curl", "LBC", 0.0, 1.0, 0.46, Group::Mouth),
    ("Lip Bottom Depress Left", "LBDL", 0.0, 1.0, 0.56, Group::Mouth),
    ("Lip Bottom Depress Middle", "LBDM", 0.0, 1.0, 0.43, Group::Mouth),
    ("Lip Bottom Depress Right", "LBDR", 0.0, 1.0, 0.54, Group::Mouth),
    ("Lip Corner Raise Left", "LCRL", 0.0, 1.0, 0.47, Group::Mouth),
    ("Lip Corner Raise Right", "LCRR", 0.0, 1.0, 0.62, Group::Mouth),
    ("Lip Corner Stretch Left", "LCSL", 0.0, 1.0, 0.64, Group::Mouth),
    ("Lip Corner Stretch Right", "LCSR", 0.0, 1.0, 0.31, Group::Mouth),
    ("Lip Top Curl", "LTC", 0.0, 1.0, 0.41, Group::Mouth),
    ("Lip Top Raise Left", "LTRL", 0.0, 1.0, 0.48, Group::Mouth),
    ("Lip Top Raise Middle", "LTRM", 0.0, 1.0, 0.3, Group::Mouth),
    ("Lip Top Raise Right", "LTRR", 0.0, 1.0, 0.45, Group::Mouth),
    ("Nose Wrinkle", "NW", 0.0, 1.0, 0.0, Group::Nose),
    ("Brow Inner Left", "BIL", 0.0, 1.0, 0.5, Group::Brows),
    ("Brow Inner Right", "BIR", 0.0, 1.0, 0.5, Group::Brows),
    ("Brow Outer Left", "BOL", 0.0, 1.0, 0.5, Group::Brows),
    ("Brow Outer Right", "BOR", 0.0, 1.0, 0.5, Group::Brows),
    ("Eyelid Lower Left", "ELL", -1.0, 2.0, 1.0, Group::Lids),
    ("Eyelid Lower Right", "ELR", -1.0, 2.0, 1.0, Group::Lids),
    ("Eyelid Upper Left", "EUL", -1.0, 2.0, 1.0, Group::Lids),
    ("Eyelid Upper Right", "EUR", -1.0, 2.0, 1.0, Group::Lids),
    ("Gaze Target Phi", "GTP", -2.3, 2.3, 0.0, Group::Gaze),
    ("Gaze Target Theta", "GTT", -1.1, 1.1, 0.0, Group::Gaze),
    ("Head Pitch", "HP", -0.5, 0.3, 0.0, Group::Head),
    ("Head Roll", "HR", -0.3, 0.3, 0.0, Group::Head),
    ("Head Yaw", "HY", -0.5, 0.5, 0.0, Group::Head),
    ("Neck Pitch", "NP", -0.3, 0.5, 0.0, Group::Neck),
    ("Neck Roll", "NR", -0.3, 0.3, 0.0, Group::Neck),
];

/// Channel indices, in registry order.
pub mod idx {
    pub const JP: usize = 0;
    pub const JY: usize = 1;
    pub const LBC: usize = 2;
    pub const LBDL: usize = 3;
    pub const LBDM: usize = 4;
    pub const LBDR: usize = 5;
    pub const LCRL: usize = 6;
    pub const LCRR: usize = 7;
    pub const LCSL: usize = 8;
    pub const LCSR: usize = 9;
    pub const LTC: usize = 10;
    pub const LTRL: usize = 11;
    pub const LTRM: usize = 12;
    pub const LTRR: usize = 13;
    pub const NW: usize = 14;
    pub const BIL: usize = 15;
    pub const BIR: usize = 16;
    pub const BOL: usize = 17;
    pub const BOR: usize = 18;
    pub const ELL: usize = 19;
    pub const ELR: usize = 20;
    pub const EUL: usize = 21;
    pub const EUR: usize = 22;
    pub const GTP: usize = 23;
    pub const GTT: usize = 24;
    pub const HP: usize = 25;
    pub const HR: usize = 26;
    pub const HY: usize = 27;
    pub const NP: usize = 28;
    pub const NR: usize = 29;
}

/// A full 30-value control configuration in registry order.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlVector(pub [f64; NUM_CONTROLS]);

impl ControlVector {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_CONTROLS] = values.try_into().map_err(|_| Error::Dimension {
            expected: NUM_CONTROLS,
            actual: values.len(),
        })?;
        Ok(ControlVector(arr))
    }

    pub fn values(&self) -> &[f64; NUM_CONTROLS] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.0[index] = value;
    }
}

impl fmt::Debug for ControlVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl std::ops::Index<usize> for ControlVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Ordered, immutable set of the 30 control channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlRegistry {
    channels: Vec<ControlChannel>,
    by_name: HashMap<String, usize>,
}

impl Default for ControlRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl ControlRegistry {
    /// The rig's 30 channels with their legal ranges and rest-pose values.
    pub fn standard() -> Self {
        let channels = STANDARD
            .iter()
            .map(|&(name, abbrev, min, max, neutral, group)| ControlChannel {
                name: name.to_string(),
                abbrev: abbrev.to_string(),
                min,
                max,
                neutral,
                group,
            })
            .collect();
        Self::from_channels(channels).expect("built-in channel table is valid")
    }

    pub fn from_channels(channels: Vec<ControlChannel>) -> Result<Self> {
        if channels.len() != NUM_CONTROLS {
            return Err(Error::Dimension {
                expected: NUM_CONTROLS,
                actual: channels.len(),
            });
        }
        let mut by_name = HashMap::with_capacity(NUM_CONTROLS);
        for (i, ch) in channels.iter().enumerate() {
            if !(ch.min < ch.max) {
                return Err(Error::Structure(format!(
                    "channel `{}` has empty range [{}, {}]",
                    ch.name, ch.min, ch.max
                )));
            }
            if !ch.contains(ch.neutral) {
                return Err(Error::Structure(format!(
                    "channel `{}` neutral {} outside [{}, {}]",
                    ch.name, ch.neutral, ch.min, ch.max
                )));
            }
            if by_name.insert(ch.name.clone(), i).is_some() {
                return Err(Error::Structure(format!("duplicate channel name `{}`", ch.name)));
            }
        }
        Ok(ControlRegistry { channels, by_name })
    }

    pub fn channels(&self) -> &[ControlChannel] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &ControlChannel {
        &self.channels[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&ControlChannel> {
        self.index_of(name).map(|i| &self.channels[i])
    }

    pub fn neutral_vector(&self) -> ControlVector {
        let mut out = [0.0; NUM_CONTROLS];
        for (o, ch) in out.iter_mut().zip(&self.channels) {
            *o = ch.neutral;
        }
        ControlVector(out)
    }

    pub fn clamp(&self, v: &ControlVector) -> ControlVector {
        self.clamp_counting(v).0
    }

    /// Clamps `v` and reports how many entries had to move.
    pub fn clamp_counting(&self, v: &ControlVector) -> (ControlVector, usize) {
        let mut out = *v;
        let mut moved = 0;
        for (o, ch) in out.0.iter_mut().zip(&self.channels) {
            let c = ch.clamp(*o);
            if c != *o {
                moved += 1;
            }
            *o = c;
        }
        (out, moved)
    }

    pub fn clamp_slice(&self, values: &[f64]) -> Result<ControlVector> {
        Ok(self.clamp(&ControlVector::from_slice(values)?))
    }

    /// Errors on the first non-finite or out-of-range entry.
    pub fn validate(&self, v: &ControlVector) -> Result<()> {
        for (value, ch) in v.0.iter().zip(&self.channels) {
            if !ch.contains(*value) {
                return Err(Error::Contract(format!(
                    "`{}` = {} outside [{}, {}]",
                    ch.name, value, ch.min, ch.max
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.channels).expect("channels serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let channels: Vec<ControlChannel> =
            serde_json::from_str(text).map_err(|e| Error::parse("registry", e.to_string()))?;
        Self::from_channels(channels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ranges_and_neutrals() {
        let r = ControlRegistry::standard();
        let gtp = r.by_name("Gaze Target Phi").unwrap();
        assert_eq!((gtp.min, gtp.max), (-2.3, 2.3));
        let hp = r.by_name("Head Pitch").unwrap();
        assert_eq!((hp.min, hp.max, hp.neutral), (-0.5, 0.3, 0.0));
        let jp = r.by_name("Jaw Pitch").unwrap();
        assert_eq!((jp.min, jp.max, jp.neutral), (0.0, 1.0, 1.0));
        assert_eq!(r.by_name("Nose Wrinkle").unwrap().neutral, 0.0);
        assert_eq!(r.by_name("Brow Inner Left").unwrap().neutral, 0.5);
        assert_eq!(r.channel(idx::NR).name, "Neck Roll");
        assert_eq!(r.channel(idx::GTT).abbrev, "GTT");
    }

    #[test]
    fn abbreviations_are_word_initials() {
        for ch in ControlRegistry::standard().channels() {
            let initials: String = ch.name.split(' ').filter_map(|w| w.chars().next()).collect();
            assert_eq!(initials, ch.abbrev);
        }
    }

    #[test]
    fn neutral_inside_range_and_round_trip() {
        let r = ControlRegistry::standard();
        for (i, ch) in r.channels().iter().enumerate() {
            assert!(ch.min < ch.max);
            assert!(ch.min <= ch.neutral && ch.neutral <= ch.max);
            assert_eq!(r.index_of(&ch.name), Some(i));
            assert_eq!(r.channel(r.index_of(&ch.name).unwrap()).name, ch.name);
        }
        let n = r.neutral_vector();
        assert_eq!(r.clamp(&n), n);
        assert!(r.validate(&n).is_ok());
    }

    #[test]
    fn clamp_examples() {
        let r = ControlRegistry::standard();
        let mut v = r.neutral_vector();
        v.set(idx::JP, 1.5);
        v.set(idx::ELL, 0.0);
        v.set(idx::GTP, -3.0);
        let (c, moved) = r.clamp_counting(&v);
        assert_eq!(c[idx::JP], 1.0);
        assert_eq!(c[idx::ELL], 0.0);
        assert_eq!(c[idx::GTP], -2.3);
        assert_eq!(moved, 2);
        assert!(r.validate(&v).is_err());
    }

    #[test]
    fn wrong_length_is_dimension_error() {
        let r = ControlRegistry::standard();
        let err = r.clamp_slice(&[0.0; 29]).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 30,
                actual: 29
            }
        ));
    }

    #[test]
    fn json_export_round_trips() {
        let r = ControlRegistry::standard();
        let json = r.to_json();
        assert!(json.contains("\"abbrev\": \"LBDM\""));
        assert_eq!(ControlRegistry::from_json(&json).unwrap(), r);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut chans = ControlRegistry::standard().channels().to_vec();
        chans[3].name = chans[2].name.clone();
        assert!(ControlRegistry::from_channels(chans).is_err());
        let mut chans = ControlRegistry::standard().channels().to_vec();
        chans[0].neutral = 2.0;
        assert!(ControlRegistry::from_channels(chans).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_vector() -> impl Strategy<Value = ControlVector> {
            proptest::array::uniform30(-5.0f64..5.0).prop_map(ControlVector)
        }

        proptest! {
            #[test]
            fn clamp_idempotent(v in any_vector()) {
                let r = ControlRegistry::standard();
                let once = r.clamp(&v);
                prop_assert_eq!(r.clamp(&once), once);
                prop_assert!(r.validate(&once).is_ok());
            }

            #[test]
            fn clamp_is_identity_in_range(fracs in proptest::array::uniform30(0.0f64..=1.0)) {
                let r = ControlRegistry::standard();
                let mut v = r.neutral_vector();
                for (i, f) in fracs.iter().enumerate() {
                    let ch = r.channel(i);
                    v.set(i, (ch.min + f * ch.span()).min(ch.max));
                }
                prop_assert_eq!(r.clamp(&v), v);
            }
        }
    }
}
