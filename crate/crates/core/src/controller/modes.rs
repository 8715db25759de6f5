use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Proposed,
    NoRs,
    NoInterim,
    NoImpactMap,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::NoRs, Variant::NoInterim, Variant::NoImpactMap, Variant::Proposed];

    pub fn uses_interim(self) -> bool {
        matches!(self, Variant::Proposed | Variant::NoImpactMap)
    }

    pub fn uses_impact_map(self) -> bool {
        matches!(self, Variant::Proposed | Variant::NoInterim)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::NoRs => "no_rs",
            Variant::NoInterim => "no_interim",
            Variant::NoImpactMap => "no_impact_map",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ante,
    Interim,
    Post,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ante => "ante",
            Mode::Interim => "interim",
            Mode::Post => "post",
        }
    }
}

/// Next mode given the reported detection flags. `interim_steps` is the
/// number of control steps already spent in the interim mode.
pub fn next_mode(variant: Variant, mode: Mode, flags: &[bool], interim_steps: usize, interim_len: usize) -> Mode {
    match mode {
        Mode::Ante => {
            let any = flags.iter().any(|f| *f);
            let all = !flags.is_empty() && flags.iter().all(|f| *f);
            if variant.uses_interim() {
                if any {
                    Mode::Interim
                } else {
                    Mode::Ante
                }
            } else if all {
                Mode::Post
            } else {
                Mode::Ante
            }
        }
        Mode::Interim if interim_steps >= interim_len => Mode::Post,
        other => other,
    }
}
