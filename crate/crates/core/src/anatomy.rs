use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Anatomical landmark regions of the distal femur tracked by the navigation system.
/// Declaration order is the tie-break order wherever regions compete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnatomicalRegion {
    IntercondylarNotch,
    MedialCondyle,
    LateralCondyle,
    SupracondylarArea,
    PclOrigin,
}

impl AnatomicalRegion {
    pub const ALL: [AnatomicalRegion; 5] = [
        AnatomicalRegion::IntercondylarNotch,
        AnatomicalRegion::MedialCondyle,
        AnatomicalRegion::LateralCondyle,
        AnatomicalRegion::SupracondylarArea,
        AnatomicalRegion::PclOrigin,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AnatomicalRegion::IntercondylarNotch => "intercondylar_notch",
            AnatomicalRegion::MedialCondyle => "medial_condyle",
            AnatomicalRegion::LateralCondyle => "lateral_condyle",
            AnatomicalRegion::SupracondylarArea => "supracondylar_area",
            AnatomicalRegion::PclOrigin => "pcl_origin",
        }
    }
}

impl fmt::Display for AnatomicalRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnatomicalRegion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown anatomical region '{s}'")))
    }
}

/// Per-region pixel or entry counts, indexed by [`AnatomicalRegion::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionHistogram(pub [usize; 5]);

impl RegionHistogram {
    pub fn get(&self, r: AnatomicalRegion) -> usize {
        self.0[r.index()]
    }

    pub fn add(&mut self, r: AnatomicalRegion, n: usize) {
        self.0[r.index()] += n;
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Region with the largest count; ties go to declaration order. `None` when all zero.
    pub fn dominant(&self) -> Option<AnatomicalRegion> {
        let mut best: Option<(AnatomicalRegion, usize)> = None;
        for r in AnatomicalRegion::ALL {
            let c = self.get(r);
            if c > 0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((r, c));
            }
        }
        best.map(|(r, _)| r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for r in AnatomicalRegion::ALL {
            assert_eq!(r.name().parse::<AnatomicalRegion>().unwrap(), r);
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(json, format!("\"{}\"", r.name()));
        }
        assert!("femur".parse::<AnatomicalRegion>().is_err());
    }

    #[test]
    fn dominant_tie_breaks_by_declaration_order() {
        let mut h = RegionHistogram::default();
        h.add(AnatomicalRegion::PclOrigin, 4);
        h.add(AnatomicalRegion::MedialCondyle, 4);
        assert_eq!(h.dominant(), Some(AnatomicalRegion::MedialCondyle));
        assert_eq!(RegionHistogram::default().dominant(), None);
    }
}
