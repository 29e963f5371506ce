use serde::{Deserialize, Serialize};

/// AAMI heartbeat groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BeatClass {
    /// Non-ectopic.
    N,
    /// Supraventricular ectopic.
    S,
    /// Ventricular ectopic.
    V,
    /// Fusion.
    F,
    /// Unclassifiable or paced.
    Q,
}

impl BeatClass {
    pub const ALL: [BeatClass; 5] = [
        BeatClass::N,
        BeatClass::S,
        BeatClass::V,
        BeatClass::F,
        BeatClass::Q,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            BeatClass::N => 'N',
            BeatClass::S => 'S',
            BeatClass::V => 'V',
            BeatClass::F => 'F',
            BeatClass::Q => 'Q',
        }
    }
}

impl std::fmt::Display for BeatClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Maps an MIT annotation symbol to its AAMI group; `None` for non-beat
/// symbols (rhythm changes, noise, comments) and anything unknown.
pub fn map_symbol_to_class(symbol: char) -> Option<BeatClass> {
    match symbol {
        'N' | 'L' | 'R' | 'e' | 'j' => Some(BeatClass::N),
        'A' | 'a' | 'J' | 'S' => Some(BeatClass::S),
        'V' | 'E' => Some(BeatClass::V),
        'F' => Some(BeatClass::F),
        '/' | 'f' | 'Q' => Some(BeatClass::Q),
        _ => None,
    }
}
