//! The 20 canonical amino acids plus the ambiguity code `X`.
//!
//! Residues are stored internally as indices in `0..=20`, with the canonical
//! residues in the fixed profile order `ARNDCQEGHILKMFPSTWYV` and `X` at 20.

use std::fmt;

/// Canonical residue letters in internal index order.
pub const RESIDUE_ORDER: &[u8; 20] = b"ARNDCQEGHILKMFPSTWYV";

/// Number of canonical residues.
pub const CANONICAL: usize = 20;

/// Alphabet size including `X`.
pub const ALPHABET_SIZE: usize = 21;

/// Internal index of the ambiguity residue.
pub const X_INDEX: u8 = 20;

const INVALID: u8 = 0xFF;

const ENCODE: [u8; 256] = {
    let mut table = [INVALID; 256];
    let mut i = 0;
    while i < CANONICAL {
        let c = RESIDUE_ORDER[i];
        table[c as usize] = i as u8;
        table[c.to_ascii_lowercase() as usize] = i as u8;
        i += 1;
    }
    table[b'X' as usize] = X_INDEX;
    table[b'x' as usize] = X_INDEX;
    table
};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AminoAcid(u8);

impl AminoAcid {
    pub const X: AminoAcid = AminoAcid(X_INDEX);

    /// Maps a letter to its residue; lowercase maps like uppercase.
    /// Returns `None` for anything outside the 21-letter alphabet.
    pub fn from_letter(letter: u8) -> Option<Self> {
        match ENCODE[letter as usize] {
            INVALID => None,
            idx => Some(AminoAcid(idx)),
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        (index <= X_INDEX).then_some(AminoAcid(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn letter(self) -> u8 {
        index_to_letter(self.0)
    }

    pub fn is_canonical(self) -> bool {
        self.0 < X_INDEX
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter() as char)
    }
}

#[inline]
pub fn index_to_letter(index: u8) -> u8 {
    if (index as usize) < CANONICAL {
        RESIDUE_ORDER[index as usize]
    } else {
        b'X'
    }
}

/// Encodes letters into residue indices. Unknown letters become `X`; the
/// second value is how many were replaced.
pub fn encode(letters: &[u8]) -> (Vec<u8>, usize) {
    let mut unknown = 0;
    let residues = letters
        .iter()
        .map(|&c| match ENCODE[c as usize] {
            INVALID => {
                unknown += 1;
                X_INDEX
            }
            idx => idx,
        })
        .collect();
    (residues, unknown)
}

/// Strict encoding: `None` if any byte is outside the alphabet.
pub fn encode_strict(letters: &[u8]) -> Option<Vec<u8>> {
    letters
        .iter()
        .map(|&c| match ENCODE[c as usize] {
            INVALID => None,
            idx => Some(idx),
        })
        .collect()
}

pub fn decode(residues: &[u8]) -> String {
    residues.iter().map(|&r| index_to_letter(r) as char).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_index_bijection() {
        let mut seen = std::collections::HashSet::new();
        for c in RESIDUE_ORDER.iter().chain(b"X") {
            let aa = AminoAcid::from_letter(*c).unwrap();
            assert_eq!(aa.letter(), *c);
            assert_eq!(AminoAcid::from_index(aa.index()), Some(aa));
            seen.insert(aa.index());
        }
        assert_eq!(seen.len(), ALPHABET_SIZE);
        assert_eq!(AminoAcid::from_index(21), None);
    }

    #[test]
    fn lowercase_maps_like_uppercase() {
        for c in RESIDUE_ORDER.iter().chain(b"X") {
            assert_eq!(
                AminoAcid::from_letter(c.to_ascii_lowercase()),
                AminoAcid::from_letter(*c)
            );
        }
    }

    #[test]
    fn unknown_letters_become_x() {
        let (res, unknown) = encode(b"ABZJUO*");
        assert_eq!(unknown, 6);
        assert_eq!(decode(&res), "AXXXXXX");
        assert!(encode_strict(b"AB").is_none());
        assert_eq!(encode_strict(b"ax").unwrap(), vec![0, X_INDEX]);
    }
}
