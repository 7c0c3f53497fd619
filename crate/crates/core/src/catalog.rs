//! The eight named families compared throughout the crate, built with the
//! EU DR8/DR9 parameters.

use std::fmt;
use std::str::FromStr;

use crate::correlation::{PairAveraging, ReportOptions};
use crate::families::{
    adapt_to_lr_fhss, build_driver_family, build_hash_family, build_lempel_greenberger_family, build_li_fan_base,
    merge_families, DriverCase, FamilyError, FhsFamily, GridLayout, LiFanMode, Result,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyKind {
    LemGreen,
    LemGreen2x,
    LiFan2l,
    LiFan2l4x,
    LiFan3l,
    LiFan3l4x,
    Hash,
    Driver,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 8] = [
        FamilyKind::LemGreen,
        FamilyKind::LemGreen2x,
        FamilyKind::LiFan2l,
        FamilyKind::LiFan2l4x,
        FamilyKind::LiFan3l,
        FamilyKind::LiFan3l4x,
        FamilyKind::Hash,
        FamilyKind::Driver,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::LemGreen => "lem-green",
            FamilyKind::LemGreen2x => "lem-green-2x",
            FamilyKind::LiFan2l => "li-fan-2l",
            FamilyKind::LiFan2l4x => "li-fan-2l-4x",
            FamilyKind::LiFan3l => "li-fan-3l",
            FamilyKind::LiFan3l4x => "li-fan-3l-4x",
            FamilyKind::Hash => "hash",
            FamilyKind::Driver => "driver",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }

    fn li_fan(self) -> Option<(LiFanMode, &'static [usize])> {
        const SINGLE: &[usize] = &[281];
        const QUAD: &[usize] = &[277, 281, 283, 287];
        match self {
            FamilyKind::LiFan2l => Some((LiFanMode::TwoEll, SINGLE)),
            FamilyKind::LiFan2l4x => Some((LiFanMode::TwoEll, QUAD)),
            FamilyKind::LiFan3l => Some((LiFanMode::ThreeEll, SINGLE)),
            FamilyKind::LiFan3l4x => Some((LiFanMode::ThreeEll, QUAD)),
            _ => None,
        }
    }

    /// Lempel-Greenberger families have a fixed period of 31.
    pub fn max_length(self) -> Option<usize> {
        match self {
            FamilyKind::LemGreen | FamilyKind::LemGreen2x => Some(LEM_GREEN_PERIOD),
            _ => None,
        }
    }

    /// Correlation options under which a family is scored. Driver and hash
    /// members are grid positions that a frame places on one of the layout's
    /// grids at random, so distinct members are weighted by the chance of
    /// sharing a grid.
    pub fn report_options(self, layout: GridLayout) -> ReportOptions {
        let grid_embedding = match self {
            FamilyKind::Driver | FamilyKind::Hash => Some(layout.grid_count),
            _ => None,
        };
        ReportOptions { pairing: PairAveraging::WithSelf, grid_embedding }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = FamilyError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            FamilyError::InvalidParameter(format!("unknown family `{s}`; valid names: {}", Self::valid_names()))
        })
    }
}

const LEM_GREEN_PERIOD: usize = 31;
const LEM_GREEN_POLYNOMIALS: [u32; 2] = [0x12, 0x14];
const LI_FAN_STEP: usize = 8;
const HASH_FAMILY_SIZE: usize = 384;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogOptions {
    pub layout: GridLayout,
    /// Li-Fan hops at or above this value are discarded.
    pub li_fan_channels: usize,
    /// Hops per sequence.
    pub length: usize,
}

impl CatalogOptions {
    /// Settings of the correlation comparison: Li-Fan keeps channels 0..=280.
    pub fn correlation() -> Self {
        Self { layout: GridLayout::EU137, li_fan_channels: 281, length: 31 }
    }

    /// Settings for simulation: Li-Fan hops must be valid OBW indices.
    pub fn simulation(layout: GridLayout) -> Self {
        Self { layout, li_fan_channels: layout.obw_count(), length: 31 }
    }

    pub fn with_length(self, length: usize) -> Self {
        Self { length, ..self }
    }
}

pub fn build_family(kind: FamilyKind, opts: &CatalogOptions) -> Result<FhsFamily> {
    let family = match kind {
        FamilyKind::LemGreen | FamilyKind::LemGreen2x => {
            let count = if kind == FamilyKind::LemGreen { 1 } else { 2 };
            let parts = LEM_GREEN_POLYNOMIALS[..count]
                .iter()
                .map(|&p| build_lempel_greenberger_family(2, 5, 5, p))
                .collect::<Result<Vec<_>>>()?;
            let merged = merge_families(kind.name(), &parts)?;
            if opts.length == merged.period() {
                merged
            } else {
                merged.truncated(opts.length)?
            }
        }
        FamilyKind::Hash => build_hash_family(HASH_FAMILY_SIZE, opts.length, opts.layout.channels_per_grid)?,
        FamilyKind::Driver => build_driver_family(DriverCase::get(1)?, opts.layout.channels_per_grid, opts.length)?,
        _ => {
            let (mode, ells) = kind.li_fan().expect("remaining kinds are li-fan");
            let bases = ells.iter().map(|&l| build_li_fan_base(l, LI_FAN_STEP, mode)).collect::<Result<Vec<_>>>()?;
            adapt_to_lr_fhss(kind.name(), &bases, opts.li_fan_channels, opts.length)?
        }
    };
    Ok(family.renamed(kind.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in FamilyKind::ALL {
            assert_eq!(kind.name().parse::<FamilyKind>().unwrap(), kind);
        }
        let err = "nope".parse::<FamilyKind>().unwrap_err().to_string();
        assert!(err.contains("li-fan-2l-4x"), "{err}");
    }

    #[test]
    fn correlation_catalog_sizes() {
        let opts = CatalogOptions::correlation();
        let sizes: Vec<usize> = FamilyKind::ALL.iter().map(|&k| build_family(k, &opts).unwrap().size()).collect();
        assert_eq!(sizes, [32, 64, 18, 71, 27, 107, 384, 384]);
    }

    #[test]
    fn simulation_catalog_fits_obws() {
        let opts = CatalogOptions::simulation(GridLayout::EU137);
        let fam = build_family(FamilyKind::LiFan2l, &opts).unwrap();
        assert_eq!(fam.channel_count(), 280);
        assert_eq!(fam.size(), 18);
        let hash = build_family(FamilyKind::Hash, &opts).unwrap();
        assert_eq!(hash.channel_count(), 35);
    }

    #[test]
    fn lengths() {
        let opts = CatalogOptions::correlation().with_length(86);
        assert_eq!(build_family(FamilyKind::Driver, &opts).unwrap().period(), 86);
        assert_eq!(build_family(FamilyKind::LiFan2l, &opts).unwrap().size(), 6);
        assert!(build_family(FamilyKind::LemGreen, &opts).is_err());
        let short = CatalogOptions::correlation().with_length(10);
        assert_eq!(build_family(FamilyKind::LemGreen2x, &short).unwrap().period(), 10);
    }
}
