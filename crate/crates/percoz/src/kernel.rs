//! Sparse kernels on lattice displacements.
//!
//! A kernel is a map from displacements to nonnegative reals with a
//! declared truncation support; it houses the direct and full
//! connectivity functions (empirical or synthetic) and everything the
//! renewal machinery produces. JSON schema:
//! `{dim, kind, entries: [{x: [...], value, std_error?}]}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    H,
    F,
    G,
    HBar,
    FBar,
    HTilde,
    FTilde,
    TwoPoint,
    Synthetic,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::H => "h",
            KernelKind::F => "f",
            KernelKind::G => "g",
            KernelKind::HBar => "h_bar",
            KernelKind::FBar => "f_bar",
            KernelKind::HTilde => "h_tilde",
            KernelKind::FTilde => "f_tilde",
            KernelKind::TwoPoint => "two_point",
            KernelKind::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl KernelEntry {
    pub fn exact(value: f64) -> Self {
        KernelEntry { value, std_error: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    dim: usize,
    kind: KernelKind,
    entries: BTreeMap<Point, KernelEntry>,
}

impl Kernel {
    pub fn new(dim: usize, kind: KernelKind) -> Self {
        Kernel { dim, kind, entries: BTreeMap::new() }
    }

    pub fn from_entries<I>(dim: usize, kind: KernelKind, it: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Point, KernelEntry)>,
    {
        let mut k = Kernel::new(dim, kind);
        for (x, e) in it {
            k.insert(x, e)?;
        }
        Ok(k)
    }

    /// Point mass `w` at `x`.
    pub fn point_mass(x: Point, w: f64) -> Result<Self> {
        let dim = x.dim();
        let mut k = Kernel::new(dim, KernelKind::Synthetic);
        k.insert(x, KernelEntry::exact(w))?;
        Ok(k)
    }

    /// The identity element of convolution.
    pub fn delta(dim: usize) -> Self {
        let mut k = Kernel::new(dim, KernelKind::Synthetic);
        k.entries.insert(Point::zero(dim), KernelEntry::exact(1.0));
        k
    }

    pub fn insert(&mut self, x: Point, e: KernelEntry) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::KernelContract(format!(
                "entry dimension {} does not match kernel dimension {}",
                x.dim(),
                self.dim
            )));
        }
        if !(e.value >= 0.0) {
            return Err(Error::KernelContract(format!(
                "kernel values must be nonnegative, got {} at {:?}",
                e.value, x.0
            )));
        }
        self.entries.insert(x, e);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: KernelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.entries.get(x).map_or(0.0, |e| e.value)
    }

    pub fn entry(&self, x: &Point) -> Option<&KernelEntry> {
        self.entries.get(x)
    }

    /// Entries in lexicographic displacement order (deterministic).
    pub fn iter(&self) -> impl Iterator<Item = (&Point, &KernelEntry)> {
        self.entries.iter()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().map(|e| e.value).sum()
    }

    /// Declared truncation support: the largest L-inf radius present.
    pub fn support_radius(&self) -> i64 {
        self.entries.keys().map(|x| x.linf()).max().unwrap_or(0)
    }

    /// Enforce the origin conventions `h(0) = 1`, `f(0) = 0`.
    pub fn check_conventions(&self) -> Result<()> {
        let zero = Point::zero(self.dim);
        match self.kind {
            KernelKind::H => {
                if (self.value(&zero) - 1.0).abs() > 1e-12 {
                    return Err(Error::KernelContract("h(0) must equal 1".into()));
                }
            }
            KernelKind::F => {
                if self.value(&zero) != 0.0 {
                    return Err(Error::KernelContract("f(0) must equal 0".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_json(&self) -> KernelJson {
        KernelJson {
            dim: self.dim,
            kind: self.kind,
            entries: self
                .entries
                .iter()
                .map(|(x, e)| KernelEntryJson {
                    x: x.0.clone(),
                    value: e.value,
                    std_error: e.std_error,
                })
                .collect(),
        }
    }

    pub fn from_json(j: &KernelJson) -> Result<Self> {
        Kernel::from_entries(
            j.dim,
            j.kind,
            j.entries.iter().map(|e| {
                (Point(e.x.clone()), KernelEntry { value: e.value, std_error: e.std_error })
            }),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelJson {
    pub dim: usize,
    pub kind: KernelKind,
    pub entries: Vec<KernelEntryJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelEntryJson {
    pub x: Vec<i64>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_error: Option<f64>,
}
