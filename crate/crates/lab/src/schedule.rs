//! Valuation schedules of the four session types and the named valuation
//! structures.

use std::fmt;

use alpha_core::prob::q;
use alpha_core::{AuctionSpec, Role, Q};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Raw item values for one period. Both subjects value item A the same; the
/// contested item B is worth `item_b_low` to LV and `item_b_high` to HV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodValues {
    pub item_a: u32,
    pub item_b_low: u32,
    pub item_b_high: u32,
}

impl PeriodValues {
    pub const fn new(item_a: u32, item_b_low: u32, item_b_high: u32) -> Self {
        Self {
            item_a,
            item_b_low,
            item_b_high,
        }
    }

    pub fn bid_cap(&self) -> u32 {
        self.item_b_high
    }

    pub fn item_b(&self, role: Role) -> u32 {
        match role {
            Role::Low => self.item_b_low,
            Role::High => self.item_b_high,
        }
    }

    /// Reduced valuations `(v_l, v_h)`.
    pub fn reduced(&self) -> (u32, u32) {
        (self.item_b_low - self.item_a, self.item_b_high - self.item_a)
    }

    /// The reduced game, with ties going to HV.
    pub fn spec(&self, alpha: Q) -> Result<AuctionSpec> {
        let (vl, vh) = self.reduced();
        Ok(AuctionSpec::with_values(alpha, vl, vh, self.bid_cap())?)
    }

    pub fn structure(&self) -> Option<Structure> {
        Structure::ALL.into_iter().find(|s| {
            let (vl, vh, cap) = s.reduced();
            self.reduced() == (vl, vh) && self.bid_cap() == cap
        })
    }
}

/// Named valuation structures; `2A`/`4` and `2B`/`3` share reduced values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Structure {
    S1A,
    S1B,
    S2A,
    S2B,
    S3,
    S4,
}

impl Structure {
    pub const ALL: [Structure; 6] = [
        Structure::S1A,
        Structure::S1B,
        Structure::S2A,
        Structure::S2B,
        Structure::S3,
        Structure::S4,
    ];

    pub fn values(self) -> PeriodValues {
        match self {
            Structure::S1A => PeriodValues::new(100, 120, 160),
            Structure::S1B => PeriodValues::new(100, 120, 320),
            Structure::S2A | Structure::S4 => PeriodValues::new(50, 250, 290),
            Structure::S2B | Structure::S3 => PeriodValues::new(50, 250, 450),
        }
    }

    /// `(v_l, v_h, p_max)`.
    pub fn reduced(self) -> (u32, u32, u32) {
        let v = self.values();
        let (vl, vh) = v.reduced();
        (vl, vh, v.bid_cap())
    }

    pub fn spec(self, alpha: Q) -> Result<AuctionSpec> {
        self.values().spec(alpha)
    }

    pub fn label(self) -> &'static str {
        match self {
            Structure::S1A => "1A",
            Structure::S1B => "1B",
            Structure::S2A => "2A",
            Structure::S2B => "2B",
            Structure::S3 => "3",
            Structure::S4 => "4",
        }
    }

    pub fn parse(s: &str) -> Option<Structure> {
        Structure::ALL
            .into_iter()
            .find(|x| x.label().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SessionType {
    One,
    Two,
    Three,
    Four,
}

impl SessionType {
    pub const ALL: [SessionType; 4] = [
        SessionType::One,
        SessionType::Two,
        SessionType::Three,
        SessionType::Four,
    ];

    pub fn number(self) -> u8 {
        match self {
            SessionType::One => 1,
            SessionType::Two => 2,
            SessionType::Three => 3,
            SessionType::Four => 4,
        }
    }

    /// Values in `period` (1-based). Types 1 and 2 switch structures after
    /// period 20.
    pub fn values(self, period: u32) -> PeriodValues {
        let late = period > 20;
        let s = match (self, late) {
            (SessionType::One, false) => Structure::S1A,
            (SessionType::One, true) => Structure::S1B,
            (SessionType::Two, false) => Structure::S2A,
            (SessionType::Two, true) => Structure::S2B,
            (SessionType::Three, _) => Structure::S3,
            (SessionType::Four, _) => Structure::S4,
        };
        s.values()
    }

    pub fn default_point_rate(self) -> Q {
        match self {
            SessionType::One => q(13, 100),
            _ => q(1, 10),
        }
    }
}

impl TryFrom<u8> for SessionType {
    type Error = LabError;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(SessionType::One),
            2 => Ok(SessionType::Two),
            3 => Ok(SessionType::Three),
            4 => Ok(SessionType::Four),
            _ => Err(LabError::Config(format!("session type must be 1-4, got {n}"))),
        }
    }
}

impl From<SessionType> for u8 {
    fn from(t: SessionType) -> u8 {
        t.number()
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}
