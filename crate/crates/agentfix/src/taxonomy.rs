//! The closed fix-pattern and agent-component taxonomies.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// One of the 23 fix patterns. The short identifiers double as the on-disk
/// rule-store keys and the names agents use to request rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FixPatternId {
    /// Add New Attribute
    Ana,
    /// Remove Attribute
    Ra,
    /// Addition of Precondition Check
    Aopc,
    /// Change Version
    Cv,
    /// Install Library
    Il,
    /// Addition of Operations
    Aoo,
    /// Removal of Operations
    Roo,
    /// Change Data Type
    Cdt,
    /// Change Prompt
    Cp,
    /// Fix Syntax
    Fs,
    /// Change Reference
    Cr,
    /// Use Different Module
    UdMo,
    /// Change External Resources
    Cer,
    /// Change Function
    Cf,
    /// Add Exception Handling
    Aeh,
    /// Fix Attribute Name
    Fan,
    /// Change Parameter Value
    Cpv,
    /// Change Input Data
    Cid,
    /// Add Input Data
    Aid,
    /// Use Different Model
    Udm,
    /// Change Parameter Order
    Cpo,
    /// Move Code to Different Scope
    Mctds,
    /// Fix Data Access
    Fda,
}

impl FixPatternId {
    pub const ALL: [FixPatternId; 23] = [
        FixPatternId::Ana,
        FixPatternId::Ra,
        FixPatternId::Aopc,
        FixPatternId::Cv,
        FixPatternId::Il,
        FixPatternId::Aoo,
        FixPatternId::Roo,
        FixPatternId::Cdt,
        FixPatternId::Cp,
        FixPatternId::Fs,
        FixPatternId::Cr,
        FixPatternId::UdMo,
        FixPatternId::Cer,
        FixPatternId::Cf,
        FixPatternId::Aeh,
        FixPatternId::Fan,
        FixPatternId::Cpv,
        FixPatternId::Cid,
        FixPatternId::Aid,
        FixPatternId::Udm,
        FixPatternId::Cpo,
        FixPatternId::Mctds,
        FixPatternId::Fda,
    ];

    /// Short identifier, e.g. `CV`.
    pub fn abbrev(self) -> &'static str {
        match self {
            FixPatternId::Ana => "ANA",
            FixPatternId::Ra => "RA",
            FixPatternId::Aopc => "AOPC",
            FixPatternId::Cv => "CV",
            FixPatternId::Il => "IL",
            FixPatternId::Aoo => "AOO",
            FixPatternId::Roo => "ROO",
            FixPatternId::Cdt => "CDT",
            FixPatternId::Cp => "CP",
            FixPatternId::Fs => "FS",
            FixPatternId::Cr => "CR",
            FixPatternId::UdMo => "UDMo",
            FixPatternId::Cer => "CER",
            FixPatternId::Cf => "CF",
            FixPatternId::Aeh => "AEH",
            FixPatternId::Fan => "FAN",
            FixPatternId::Cpv => "CPV",
            FixPatternId::Cid => "CID",
            FixPatternId::Aid => "AID",
            FixPatternId::Udm => "UDM",
            FixPatternId::Cpo => "CPO",
            FixPatternId::Mctds => "MCTDS",
            FixPatternId::Fda => "FDA",
        }
    }

    /// Human-readable name, e.g. `Addition of Operations`.
    pub fn display_name(self) -> &'static str {
        match self {
            FixPatternId::Ana => "Add New Attribute",
            FixPatternId::Ra => "Remove Attribute",
            FixPatternId::Aopc => "Addition of Precondition Check",
            FixPatternId::Cv => "Change Version",
            FixPatternId::Il => "Install Library",
            FixPatternId::Aoo => "Addition of Operations",
            FixPatternId::Roo => "Removal of Operations",
            FixPatternId::Cdt => "Change Data Type",
            FixPatternId::Cp => "Change Prompt",
            FixPatternId::Fs => "Fix Syntax",
            FixPatternId::Cr => "Change Reference",
            FixPatternId::UdMo => "Use Different Module",
            FixPatternId::Cer => "Change External Resources",
            FixPatternId::Cf => "Change Function",
            FixPatternId::Aeh => "Add Exception Handling",
            FixPatternId::Fan => "Fix Attribute Name",
            FixPatternId::Cpv => "Change Parameter Value",
            FixPatternId::Cid => "Change Input Data",
            FixPatternId::Aid => "Add Input Data",
            FixPatternId::Udm => "Use Different Model",
            FixPatternId::Cpo => "Change Parameter Order",
            FixPatternId::Mctds => "Move Code to Different Scope",
            FixPatternId::Fda => "Fix Data Access",
        }
    }

    /// Case-insensitive lookup by abbreviation or display name.
    pub fn lookup(name: &str) -> Option<FixPatternId> {
        let needle = name.trim();
        Self::ALL.iter().copied().find(|p| {
            p.abbrev().eq_ignore_ascii_case(needle) || p.display_name().eq_ignore_ascii_case(needle)
        })
    }
}

impl fmt::Display for FixPatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for FixPatternId {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixPatternId::lookup(s).ok_or_else(|| UnknownPattern(s.to_string()))
    }
}

// serialized as the abbreviation so corpus files and rule stores use the
// same keys agents do
impl Serialize for FixPatternId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.abbrev())
    }
}

impl<'de> Deserialize<'de> for FixPatternId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        FixPatternId::lookup(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown fix pattern: {name}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown fix pattern: {0}")]
pub struct UnknownPattern(pub String);

/// The agent subsystem a bug (or fix) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentComponent {
    Reasoning,
    Memory,
    Planning,
    Tool,
}

impl AgentComponent {
    pub const ALL: [AgentComponent; 4] = [
        AgentComponent::Reasoning,
        AgentComponent::Memory,
        AgentComponent::Planning,
        AgentComponent::Tool,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentComponent::Reasoning => "Reasoning",
            AgentComponent::Memory => "Memory",
            AgentComponent::Planning => "Planning",
            AgentComponent::Tool => "Tool",
        }
    }

    pub fn lookup(name: &str) -> Option<AgentComponent> {
        let needle = name.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(needle))
    }
}

impl fmt::Display for AgentComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn exactly_23_patterns() {
        assert_eq!(FixPatternId::ALL.len(), 23);
        let abbrevs: HashSet<_> = FixPatternId::ALL.iter().map(|p| p.abbrev()).collect();
        assert_eq!(abbrevs.len(), 23);
        let names: HashSet<_> = FixPatternId::ALL.iter().map(|p| p.display_name()).collect();
        assert_eq!(names.len(), 23);
    }

    #[test]
    fn abbrev_round_trips() {
        for p in FixPatternId::ALL {
            assert_eq!(FixPatternId::lookup(p.abbrev()), Some(p));
            assert_eq!(FixPatternId::lookup(p.display_name()), Some(p));
        }
    }

    #[test]
    fn lookup_is_case_insensitive() {
        assert_eq!(FixPatternId::lookup("cv"), Some(FixPatternId::Cv));
        assert_eq!(
            FixPatternId::lookup("change version"),
            Some(FixPatternId::Cv)
        );
        assert_eq!(FixPatternId::lookup("Retrain Model"), None);
    }

    #[test]
    fn exactly_4_components() {
        assert_eq!(AgentComponent::ALL.len(), 4);
        assert_eq!(AgentComponent::lookup("tool"), Some(AgentComponent::Tool));
        assert_eq!(AgentComponent::lookup("Embedding"), None);
    }
}
