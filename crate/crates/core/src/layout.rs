//! Channel layouts and the five cortical regions used to group electrodes.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    F,
    C,
    P,
    O,
    T,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::F, Region::C, Region::P, Region::O, Region::T];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::F => "F",
            Region::C => "C",
            Region::P => "P",
            Region::O => "O",
            Region::T => "T",
        }
    }

    /// Region implied by a 10-10 electrode label prefix.
    ///
    /// Fp/AF/F/FC map to frontal, C to central, CP/P to parietal, PO/O to
    /// occipital and T/TP/FT to temporal.
    pub fn from_label(label: &str) -> Option<Region> {
        const PREFIXES: [(&str, Region); 12] = [
            ("Fp", Region::F),
            ("FP", Region::F),
            ("AF", Region::F),
            ("FC", Region::F),
            ("FT", Region::T),
            ("CP", Region::P),
            ("PO", Region::O),
            ("TP", Region::T),
            ("F", Region::F),
            ("C", Region::C),
            ("P", Region::P),
            ("O", Region::O),
        ];
        if label.starts_with('T') {
            return Some(Region::T);
        }
        PREFIXES
            .iter()
            .find(|(p, _)| label.starts_with(p))
            .map(|&(_, r)| r)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered channel names with a cortical region for every channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct ChannelLayout {
    names: Vec<String>,
    regions: Vec<Region>,
}

#[derive(Serialize, Deserialize)]
struct RawLayout {
    names: Vec<String>,
    regions: Vec<Region>,
}

impl TryFrom<RawLayout> for ChannelLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        ChannelLayout::new(raw.names, raw.regions)
    }
}

impl From<ChannelLayout> for RawLayout {
    fn from(l: ChannelLayout) -> Self {
        RawLayout {
            names: l.names,
            regions: l.regions,
        }
    }
}

const DEFAULT_LAYOUT_JSON: &str = include_str!("../data/layout_61.json");

impl ChannelLayout {
    pub fn new(names: Vec<String>, regions: Vec<Region>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Layout("layout has no channels".into()));
        }
        if names.len() != regions.len() {
            return Err(Error::Layout(format!(
                "{} channel names but {} region assignments",
                names.len(),
                regions.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Layout(format!("duplicate channel name `{n}`")));
            }
        }
        Ok(Self { names, regions })
    }

    /// Builds a layout by assigning each label the region of its 10-10 prefix.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let names: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        let regions = names
            .iter()
            .map(|n| {
                Region::from_label(n)
                    .ok_or_else(|| Error::Layout(format!("no region for channel `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(names, regions)
    }

    /// The shipped 61-electrode layout.
    ///
    /// Prefix convention throughout, except the midline FCz (central) and
    /// POz (parietal) electrodes.
    pub fn default_61() -> Self {
        serde_json::from_str(DEFAULT_LAYOUT_JSON).expect("shipped layout is valid")
    }

    /// `n` channels named `Ch0..`, regions assigned round-robin over F, C, P, O, T.
    pub fn generic(n: usize) -> Self {
        let names = (0..n).map(|i| format!("Ch{i}")).collect();
        let regions = (0..n).map(|i| Region::ALL[i % 5]).collect();
        Self::new(names, regions).expect("generic layout is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region_of(&self, channel: usize) -> Option<Region> {
        self.regions.get(channel).copied()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("layout serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_shape() {
        let l = ChannelLayout::default_61();
        assert_eq!(l.len(), 61);
        let mut counts = [0usize; 5];
        for r in l.regions() {
            counts[r.index()] += 1;
        }
        assert_eq!(counts, [21, 8, 17, 9, 6]);
        assert_eq!(l.region_of(l.index_of("FCz").unwrap()), Some(Region::C));
        assert_eq!(l.region_of(l.index_of("POz").unwrap()), Some(Region::P));
        assert_eq!(l.region_of(l.index_of("FT7").unwrap()), Some(Region::T));
        assert_eq!(l.region_of(l.index_of("CP3").unwrap()), Some(Region::P));
    }

    #[test]
    fn prefix_convention() {
        let cases = [
            ("Fp1", Region::F),
            ("AF4", Region::F),
            ("FC5", Region::F),
            ("F8", Region::F),
            ("Cz", Region::C),
            ("CPz", Region::P),
            ("P7", Region::P),
            ("PO8", Region::O),
            ("Oz", Region::O),
            ("T7", Region::T),
            ("TP8", Region::T),
            ("FT7", Region::T),
        ];
        for (label, region) in cases {
            assert_eq!(Region::from_label(label), Some(region), "{label}");
        }
        assert_eq!(Region::from_label("EOG"), None);
    }

    #[test]
    fn rejects_duplicates_and_mismatch() {
        assert!(ChannelLayout::new(vec!["A".into(), "A".into()], vec![Region::F; 2]).is_err());
        assert!(ChannelLayout::new(vec!["A".into()], vec![Region::F; 2]).is_err());
        assert!(ChannelLayout::from_labels(&["Cz", "X1"]).is_err());
    }

    #[test]
    fn json_roundtrip_validates() {
        let l = ChannelLayout::generic(3);
        let s = serde_json::to_string(&l).unwrap();
        let back: ChannelLayout = serde_json::from_str(&s).unwrap();
        assert_eq!(l, back);
        let bad = r#"{"names":["a","a"],"regions":["F","C"]}"#;
        assert!(serde_json::from_str::<ChannelLayout>(bad).is_err());
        assert_eq!(l.hash(), back.hash());
    }
}
