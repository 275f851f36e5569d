//! Precomputed item-by-painting matrices and their `AFIX` file format.
//!
//! `AFIX` layout (little endian): magic `AFIX`, version byte, engine byte,
//! semantics byte, `u32` rows, `u32` cols, row ids then column ids (each a
//! `u32` byte length plus UTF-8), build info as a length-prefixed JSON
//! string, `rows * cols` row-major `f32` values, and a trailing `u64`
//! checksum of all preceding bytes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::checksum::{checksum64, put_string, verify_trailer, Reader};
use crate::error::{Error, Result};

pub const AFIX_MAGIC: &[u8; 4] = b"AFIX";
pub const AFIX_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mozart,
    Haydn,
    Salieri,
    Visual,
}

impl Engine {
    pub const ALL: [Engine; 4] = [
        Engine::Mozart,
        Engine::Haydn,
        Engine::Salieri,
        Engine::Visual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Mozart => "mozart",
            Engine::Haydn => "haydn",
            Engine::Salieri => "salieri",
            Engine::Visual => "visual",
        }
    }

    fn code(self) -> u8 {
        match self {
            Engine::Mozart => 0,
            Engine::Haydn => 1,
            Engine::Salieri => 2,
            Engine::Visual => 3,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.code() == code)
    }

    /// The visual baseline works from painting ratings; the others from music.
    pub fn is_cross_domain(self) -> bool {
        self != Engine::Visual
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown engine `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    Distance,
    Similarity,
}

impl Semantics {
    fn code(self) -> u8 {
        match self {
            Semantics::Distance => 0,
            Semantics::Similarity => 1,
        }
    }
}

/// Matrix of distances or similarities between rated items (rows) and
/// candidate paintings (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityIndex {
    engine: Engine,
    semantics: Semantics,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    values: Array2<f64>,
    build_info: BTreeMap<String, String>,
    row_lookup: HashMap<String, usize>,
}

impl SimilarityIndex {
    pub fn new(
        engine: Engine,
        semantics: Semantics,
        row_ids: Vec<String>,
        col_ids: Vec<String>,
        values: Array2<f64>,
        build_info: BTreeMap<String, String>,
    ) -> Result<Self> {
        if values.dim() != (row_ids.len(), col_ids.len()) {
            return Err(Error::Shape(format!(
                "values {:?} vs {} rows and {} columns",
                values.dim(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        for &v in values.iter() {
            let ok = v.is_finite()
                && match semantics {
                    Semantics::Distance => v >= 0.0,
                    Semantics::Similarity => (-1.0..=1.0).contains(&v),
                };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "{semantics:?} index holds invalid value {v}"
                )));
            }
        }
        let mut row_lookup = HashMap::with_capacity(row_ids.len());
        for (i, id) in row_ids.iter().enumerate() {
            if row_lookup.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &col_ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            engine,
            semantics,
            row_ids,
            col_ids,
            values,
            build_info,
            row_lookup,
        })
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn semantics(&self) -> Semantics {
        self.semantics
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn build_info(&self) -> &BTreeMap<String, String> {
        &self.build_info
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.row_lookup.get(id).copied()
    }

    /// Entry as a distance: similarities become `1 - s`.
    pub fn distance(&self, row: usize, col: usize) -> f64 {
        let v = self.values[[row, col]];
        match self.semantics {
            Semantics::Distance => v,
            Semantics::Similarity => 1.0 - v,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(AFIX_MAGIC);
        out.push(AFIX_VERSION);
        out.push(self.engine.code());
        out.push(self.semantics.code());
        out.extend_from_slice(&(self.row_ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.col_ids.len() as u32).to_le_bytes());
        for id in self.row_ids.iter().chain(&self.col_ids) {
            put_string(&mut out, id);
        }
        put_string(
            &mut out,
            &serde_json::to_string(&self.build_info).expect("map serializes"),
        );
        for &v in self.values.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let sum = checksum64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != AFIX_MAGIC {
            return Err(Error::Format("not an AFIX index".into()));
        }
        let payload = verify_trailer(bytes, "AFIX index")?;
        let mut r = Reader::new(payload, "AFIX index");
        r.take(4)?;
        let version = r.u8()?;
        if version != AFIX_VERSION {
            return Err(Error::Format(format!("unsupported AFIX version {version}")));
        }
        let engine =
            Engine::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown engine tag".into()))?;
        let semantics = match r.u8()? {
            0 => Semantics::Distance,
            1 => Semantics::Similarity,
            other => return Err(Error::Format(format!("unknown semantics tag {other}"))),
        };
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let row_ids = (0..rows).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let col_ids = (0..cols).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let build_info: BTreeMap<String, String> = serde_json::from_str(&r.string()?)
            .map_err(|e| Error::Format(format!("AFIX build info: {e}")))?;
        if r.remaining() != rows * cols * 4 {
            return Err(Error::Format(format!(
                "AFIX value block has {} bytes, expected {}",
                r.remaining(),
                rows * cols * 4
            )));
        }
        let data = (0..rows * cols)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let values =
            Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(engine, semantics, row_ids, col_ids, values, build_info)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// CSV mirror: header `id,<col ids...>`, one line per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "id")?;
        for c in &self.col_ids {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            write!(out, "{id}")?;
            for v in self.values.row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Same index restricted to the given columns, in their original order.
    pub fn select_columns(&self, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let cols: Vec<usize> = (0..self.col_ids.len())
            .filter(|&j| keep(&self.col_ids[j]))
            .collect();
        let values = self.values.select(ndarray::Axis(1), &cols);
        Self::new(
            self.engine,
            self.semantics,
            self.row_ids.clone(),
            cols.iter().map(|&j| self.col_ids[j].clone()).collect(),
            values,
            self.build_info.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> SimilarityIndex {
        SimilarityIndex::new(
            Engine::Haydn,
            Semantics::Distance,
            vec!["m1".into(), "m2".into()],
            vec!["p1".into(), "p2".into(), "p3".into()],
            array![[0.1, 0.2, 0.3], [1.0, 0.0, 0.5]],
            BTreeMap::from([("sigma".to_string(), "0.5".to_string())]),
        )
        .unwrap()
    }

    #[test]
    fn afix_round_trip_and_corruption() {
        let idx = toy();
        let bytes = idx.encode();
        let back = SimilarityIndex::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.col_ids(), idx.col_ids());
        let mut bad = bytes.clone();
        let at = bad.len() - 12;
        bad[at] ^= 1;
        assert!(matches!(
            SimilarityIndex::decode(&bad),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn validates_values() {
        let bad = SimilarityIndex::new(
            Engine::Salieri,
            Semantics::Similarity,
            vec!["a".into()],
            vec!["b".into()],
            array![[1.5]],
            BTreeMap::new(),
        );
        assert!(bad.is_err());
        let bad = SimilarityIndex::new(
            Engine::Haydn,
            Semantics::Distance,
            vec!["a".into()],
            vec!["b".into()],
            array![[-0.1]],
            BTreeMap::new(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn csv_mirror() {
        let mut out = Vec::new();
        toy().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "id,p1,p2,p3");
        assert_eq!(text.lines().nth(2).unwrap(), "m2,1,0,0.5");
    }

    #[test]
    fn engine_names() {
        assert_eq!("Haydn".parse::<Engine>().unwrap(), Engine::Haydn);
        assert!("bach".parse::<Engine>().is_err());
    }
}
