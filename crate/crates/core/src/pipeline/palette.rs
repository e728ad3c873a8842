use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaletteEntry {
    pub id: u8,
    pub name: String,
    pub color: [u8; 3],
}

/// Class ids, names and display colours. Label 0 is always background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPalette")]
pub struct Palette {
    pub classes: Vec<PaletteEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPalette {
    classes: Vec<PaletteEntry>,
}

impl TryFrom<RawPalette> for Palette {
    type Error = Error;

    fn try_from(raw: RawPalette) -> Result<Self> {
        Palette::new(raw.classes)
    }
}

impl Default for Palette {
    fn default() -> Self {
        let entry = |id, name: &str, color| PaletteEntry {
            id,
            name: name.into(),
            color,
        };
        Palette {
            classes: vec![
                entry(1, "tumour", [214, 39, 40]),
                entry(2, "stroma", [255, 127, 14]),
                entry(3, "inflammatory", [31, 119, 180]),
                entry(4, "necrosis", [148, 103, 189]),
                entry(5, "others", [44, 160, 44]),
            ],
        }
    }
}

impl Palette {
    pub fn new(classes: Vec<PaletteEntry>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("palette needs at least one class"));
        }
        let mut seen = [false; 256];
        for c in &classes {
            if c.id == 0 {
                return Err(Error::invalid("class id 0 is reserved for background"));
            }
            if std::mem::replace(&mut seen[c.id as usize], true) {
                return Err(Error::invalid(format!("duplicate class id {}", c.id)));
            }
        }
        Ok(Palette { classes })
    }

    pub fn contains(&self, id: u8) -> bool {
        self.classes.iter().any(|c| c.id == id)
    }

    pub fn get(&self, id: u8) -> Option<&PaletteEntry> {
        self.classes.iter().find(|c| c.id == id)
    }

    /// 256 RGB triples for an indexed PNG: background black, classes in
    /// their colours, unused indices mid-grey.
    pub fn png_palette(&self) -> Vec<u8> {
        let mut table = vec![128u8; 256 * 3];
        table[..3].copy_from_slice(&[0, 0, 0]);
        for c in &self.classes {
            let i = c.id as usize * 3;
            table[i..i + 3].copy_from_slice(&c.color);
        }
        table
    }
}
