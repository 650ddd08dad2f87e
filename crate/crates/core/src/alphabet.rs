//! Output symbol space and the CTC collapse map.
//!
//! Letters get ids `0..len()` in declaration order; the CTC blank always
//! takes the id right after the last letter.

use std::fmt;

use crate::{Error, Result};

/// Display token for the space symbol.
pub const SPACE_TOKEN: &str = "<sp>";
/// Display token for the CTC blank.
pub const BLANK_TOKEN: &str = "<blank>";

const FINGERSPELLING_SYMBOLS: [char; 31] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', ' ', '&', '\'', '.', '@',
];

/// A blank-free letter sequence, stored as symbol ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transcript(pub Vec<usize>);

impl Transcript {
    pub fn new(labels: Vec<usize>) -> Self {
        Transcript(labels)
    }

    pub fn empty() -> Self {
        Transcript(Vec::new())
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of adjacent equal pairs; each needs a separating blank frame.
    pub fn repeat_count(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Fewest frames any CTC alignment of this transcript needs.
    pub fn min_frames(&self) -> usize {
        self.len() + self.repeat_count()
    }
}

impl From<Vec<usize>> for Transcript {
    fn from(labels: Vec<usize>) -> Self {
        Transcript(labels)
    }
}

/// A frame-level labeling over letters plus blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path(pub Vec<usize>);

impl Path {
    pub fn frame_labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Merge consecutive duplicates, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Transcript {
    let mut out = Vec::with_capacity(path.len());
    let mut prev = None;
    for &label in path {
        if Some(label) != prev && label != blank {
            out.push(label);
        }
        prev = Some(label);
    }
    Transcript(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::fingerspelling()
    }
}

impl Alphabet {
    /// The 26 letters followed by space, `&`, `'`, `.` and `@`.
    pub fn fingerspelling() -> Self {
        Alphabet {
            symbols: FINGERSPELLING_SYMBOLS.to_vec(),
        }
    }

    /// A custom alphabet; symbols must be unique lowercase-stable characters.
    pub fn new(symbols: Vec<char>) -> Result<Self> {
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate symbol {c:?} in alphabet"
                )));
            }
            if c.to_lowercase().ne(std::iter::once(*c)) {
                return Err(Error::InvalidParameter(format!(
                    "alphabet symbol {c:?} is not lowercase"
                )));
            }
        }
        if symbols.is_empty() {
            return Err(Error::Empty("alphabet"));
        }
        Ok(Alphabet { symbols })
    }

    /// Number of letters, excluding blank.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Letters plus blank.
    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn id_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    pub fn symbol(&self, id: usize) -> Option<char> {
        self.symbols.get(id).copied()
    }

    /// Whitespace-free display token: `<sp>` for space, `<blank>` for blank.
    pub fn token(&self, id: usize) -> Option<String> {
        if id == self.blank_id() {
            return Some(BLANK_TOKEN.to_string());
        }
        self.symbol(id).map(|c| match c {
            ' ' => SPACE_TOKEN.to_string(),
            c => c.to_string(),
        })
    }

    /// Inverse of [`Alphabet::token`].
    pub fn id_of_token(&self, token: &str) -> Option<usize> {
        match token {
            BLANK_TOKEN => Some(self.blank_id()),
            SPACE_TOKEN => self.id_of(' '),
            t => {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => self.id_of(c),
                    _ => None,
                }
            }
        }
    }

    /// Space-separated tokens of all letters followed by the blank token.
    pub fn header_tokens(&self) -> Vec<String> {
        (0..self.num_classes())
            .map(|i| self.token(i).expect("id in range"))
            .collect()
    }

    /// Rebuild an alphabet from [`Alphabet::header_tokens`] output. The blank
    /// token must come last.
    pub fn from_header_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let (last, letters) = tokens
            .split_last()
            .ok_or(Error::Empty("alphabet header"))?;
        if last.as_ref() != BLANK_TOKEN {
            return Err(Error::InvalidParameter(format!(
                "alphabet header must end with {BLANK_TOKEN}"
            )));
        }
        let symbols = letters
            .iter()
            .map(|t| match t.as_ref() {
                SPACE_TOKEN => Ok(' '),
                s => {
                    let mut chars = s.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => Ok(c),
                        _ => Err(Error::InvalidParameter(format!(
                            "bad alphabet token {s:?}"
                        ))),
                    }
                }
            })
            .collect::<Result<Vec<char>>>()?;
        Alphabet::new(symbols)
    }

    /// Case-folds `text` and maps each character to its id.
    pub fn encode(&self, text: &str) -> Result<Transcript> {
        let mut labels = Vec::with_capacity(text.len());
        for (position, ch) in text.chars().enumerate() {
            let mut lower = ch.to_lowercase();
            let folded = match (lower.next(), lower.next()) {
                (Some(c), None) => c,
                _ => ch,
            };
            let id = self
                .id_of(folded)
                .ok_or(Error::UnknownSymbol { ch, position })?;
            labels.push(id);
        }
        Ok(Transcript(labels))
    }

    pub fn decode(&self, transcript: &Transcript) -> Result<String> {
        transcript
            .0
            .iter()
            .map(|&id| {
                self.symbol(id).ok_or(Error::InvalidSymbolId {
                    id,
                    size: self.len(),
                })
            })
            .collect()
    }

    /// Fails when some id is blank or out of range.
    pub fn validate(&self, transcript: &Transcript) -> Result<()> {
        match transcript.0.iter().find(|&&id| id >= self.len()) {
            Some(&id) => Err(Error::InvalidSymbolId {
                id,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn collapse(&self, path: &Path) -> Transcript {
        collapse(&path.0, self.blank_id())
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.header_tokens().join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: usize = 0;
    const B: usize = 1;
    const BLANK: usize = 31;

    #[test]
    fn fingerspelling_layout() {
        let a = Alphabet::fingerspelling();
        assert_eq!(a.len(), 31);
        assert_eq!(a.num_classes(), 32);
        assert_eq!(a.blank_id(), 31);
        assert_eq!(a.id_of(' '), Some(26));
        assert_eq!(a.id_of('@'), Some(30));
        assert_eq!(a.token(26).unwrap(), "<sp>");
        assert_eq!(a.token(31).unwrap(), "<blank>");
        let header = a.header_tokens();
        assert_eq!(Alphabet::from_header_tokens(&header).unwrap(), a);
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse(&[A, A, BLANK, B, B], BLANK), Transcript(vec![A, B]));
        assert_eq!(collapse(&[A, BLANK, A], BLANK), Transcript(vec![A, A]));
        assert_eq!(collapse(&[BLANK, BLANK, BLANK], BLANK), Transcript::empty());
    }

    #[test]
    fn encode_decode_examples() {
        let a = Alphabet::fingerspelling();
        let t = a.encode("nad").unwrap();
        assert_eq!(t, Transcript(vec![13, 0, 3]));
        assert_eq!(a.decode(&t).unwrap(), "nad");
        assert_eq!(a.encode("").unwrap(), Transcript::empty());
        assert_eq!(a.decode(&Transcript::empty()).unwrap(), "");
        assert!(matches!(
            a.encode("n?d"),
            Err(Error::UnknownSymbol { ch: '?', position: 1 })
        ));
        assert_eq!(a.encode("N A.D").unwrap(), a.encode("n a.d").unwrap());
        assert_eq!(a.decode(&a.encode("rock & roll").unwrap()).unwrap(), "rock & roll");
    }

    #[test]
    fn validate_rejects_blank() {
        let a = Alphabet::fingerspelling();
        assert!(a.validate(&Transcript(vec![0, 30])).is_ok());
        assert!(a.validate(&Transcript(vec![0, 31])).is_err());
    }

    #[test]
    fn custom_alphabet_checks() {
        assert!(Alphabet::new(vec!['a', 'a']).is_err());
        assert!(Alphabet::new(vec!['A']).is_err());
        assert!(Alphabet::new(vec![]).is_err());
        let a = Alphabet::new(vec!['x', 'y']).unwrap();
        assert_eq!(a.blank_id(), 2);
    }

    fn enumerate_paths(t: usize, classes: usize) -> impl Iterator<Item = Vec<usize>> {
        (0..classes.pow(t as u32)).map(move |mut code| {
            (0..t)
                .map(|_| {
                    let c = code % classes;
                    code /= classes;
                    c
                })
                .collect()
        })
    }

    #[test]
    fn preimage_nonempty_iff_enough_frames() {
        // two letters + blank, paths up to length 5
        for t in 0..=5 {
            let images: std::collections::HashSet<Transcript> =
                enumerate_paths(t, 3).map(|p| collapse(&p, 2)).collect();
            for len in 0..=t + 1 {
                for code in 0..2usize.pow(len as u32) {
                    let w = Transcript((0..len).map(|i| (code >> i) & 1).collect());
                    assert_eq!(images.contains(&w), t >= w.min_frames(), "{w:?} T={t}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn collapse_shrinks_and_fixes_clean_paths(path in prop::collection::vec(0usize..4, 0..20)) {
            let out = collapse(&path, 3);
            prop_assert!(out.len() <= path.len());
            prop_assert!(out.0.iter().all(|&l| l != 3));
            let clean = out.repeat_count() == 0;
            if clean {
                prop_assert_eq!(collapse(&out.0, 3), out.clone());
            }
        }

        #[test]
        fn round_trip(text in "[a-z &'.@]{0,30}") {
            let a = Alphabet::fingerspelling();
            prop_assert_eq!(a.decode(&a.encode(&text).unwrap()).unwrap(), text);
        }
    }
}
