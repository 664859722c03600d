//! Atomic propositions and labeled regions of the domain.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;

/// A set of atomic propositions as a bitmask over a proposition list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelSet(pub u32);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn single(prop: usize) -> Self {
        LabelSet(1 << prop)
    }

    pub fn from_props(props: &[usize]) -> Self {
        LabelSet(props.iter().fold(0, |m, &p| m | (1 << p)))
    }

    #[inline]
    pub fn contains(self, prop: usize) -> bool {
        self.0 & (1 << prop) != 0
    }

    #[inline]
    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&p| self.contains(p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRegion {
    pub region: Region,
    pub labels: LabelSet,
}

/// Regions of interest `R` with their label sets over the propositions `Π`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub props: Vec<String>,
    pub regions: Vec<LabeledRegion>,
}

impl LabelMap {
    pub fn new(props: Vec<String>, regions: Vec<LabeledRegion>) -> Result<Self> {
        if props.len() > 31 {
            return Err(Error::InvalidArgument("at most 31 propositions are supported".into()));
        }
        let universe = (1u32 << props.len()) - 1;
        for (i, r) in regions.iter().enumerate() {
            if r.labels.0 & !universe != 0 {
                return Err(Error::InvalidArgument("label set uses an undeclared proposition".into()));
            }
            if regions[..i].iter().any(|o| o.region.overlaps_interior(&r.region)) {
                return Err(Error::InvalidArgument("labeled regions overlap".into()));
            }
        }
        Ok(LabelMap { props, regions })
    }

    pub fn empty() -> Self {
        LabelMap::default()
    }

    pub fn prop_index(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p == name)
    }

    /// Labels of the point `x`: union over regions containing it.
    pub fn label_of(&self, x: &[f64]) -> LabelSet {
        self.regions.iter().filter(|r| r.region.contains(x)).fold(LabelSet::EMPTY, |l, r| l.union(r.labels))
    }

    /// Labels of a box that lies inside or outside each region (interiors).
    pub fn label_of_region(&self, cell: &Region) -> LabelSet {
        self.regions
            .iter()
            .filter(|r| r.region.overlaps_interior(cell))
            .fold(LabelSet::EMPTY, |l, r| l.union(r.labels))
    }
}
