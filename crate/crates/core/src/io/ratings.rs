//! Delimiter-separated rating triples (`user<sep>item<sep>rating[<sep>timestamp]`)
//! with dense id remapping and train/test splitting.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::dense::seeded_rng;
use crate::error::{Error, Result};
use crate::sparse::SampledMatrix;

pub const DEFAULT_SEPARATOR: &str = "::";

#[derive(Clone, Debug, PartialEq)]
pub struct RatingsDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    triples: Vec<(usize, usize, f64)>,
    provenance: String,
}

impl RatingsDataset {
    /// Builds a dataset from already-dense indices. Original ids become the
    /// decimal index strings.
    pub fn from_triples(
        nusers: usize,
        nitems: usize,
        triples: Vec<(usize, usize, f64)>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::InvalidParameter("ratings dataset is empty".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(triples.len());
        for &(u, i, r) in &triples {
            if u >= nusers || i >= nitems {
                return Err(Error::Dimension(format!(
                    "rating ({u}, {i}) outside {nusers} users x {nitems} items"
                )));
            }
            if !r.is_finite() {
                return Err(Error::NonFinite("rating"));
            }
            if !seen.insert((u, i)) {
                return Err(Error::Pattern(format!("duplicate rating for user {u}, item {i}")));
            }
        }
        Ok(Self {
            user_ids: (0..nusers).map(|u| u.to_string()).collect(),
            item_ids: (0..nitems).map(|i| i.to_string()).collect(),
            triples,
            provenance: provenance.into(),
        })
    }

    pub fn nusers(&self) -> usize {
        self.user_ids.len()
    }

    pub fn nitems(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[(usize, usize, f64)] {
        &self.triples
    }

    /// Original id of each dense user index.
    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Observed `(min, max)` rating. The scale is recorded, never enforced.
    pub fn rating_range(&self) -> (f64, f64) {
        self.triples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t.2), hi.max(t.2))
            })
    }

    pub fn to_sampled(&self) -> Result<SampledMatrix> {
        SampledMatrix::from_triplets(self.nusers(), self.nitems(), self.triples.clone())
    }

    /// Writes `index,original_id` tables for users and items.
    pub fn write_mappings(&self, users: impl AsRef<Path>, items: impl AsRef<Path>) -> Result<()> {
        for (path, ids) in [(users.as_ref(), &self.user_ids), (items.as_ref(), &self.item_ids)] {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["index", "original_id"])?;
            for (k, id) in ids.iter().enumerate() {
                w.write_record([k.to_string().as_str(), id.as_str()])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

fn intern(map: &mut HashMap<String, usize>, ids: &mut Vec<String>, key: &str) -> usize {
    match map.entry(key.to_string()) {
        Entry::Occupied(e) => *e.get(),
        Entry::Vacant(e) => {
            ids.push(key.to_string());
            *e.insert(ids.len() - 1)
        }
    }
}

/// Reads rating lines. Ids are remapped densely in order of first
/// appearance; blank lines are skipped, anything else malformed is an error.
pub fn read_ratings(path: impl AsRef<Path>, separator: &str) -> Result<RatingsDataset> {
    let path = path.as_ref();
    if separator.is_empty() {
        return Err(Error::InvalidParameter("ratings separator must not be empty".into()));
    }
    let parse = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let reader = BufReader::new(File::open(path)?);
    let (mut users, mut items) = (HashMap::new(), HashMap::new());
    let (mut user_ids, mut item_ids) = (Vec::new(), Vec::new());
    let mut seen = HashMap::new();
    let mut triples = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let ln = k + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(separator).map(str::trim).collect();
        if fields.len() < 3 {
            return Err(parse(
                ln,
                format!("expected user{separator}item{separator}rating, found {text:?}"),
            ));
        }
        for (name, f) in [("user", fields[0]), ("item", fields[1])] {
            if f.parse::<i64>().is_err() {
                return Err(parse(ln, format!("non-numeric {name} id {f:?}")));
            }
        }
        let rating: f64 = fields[2]
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite())
            .ok_or_else(|| parse(ln, format!("invalid rating {:?}", fields[2])))?;
        let u = intern(&mut users, &mut user_ids, fields[0]);
        let i = intern(&mut items, &mut item_ids, fields[1]);
        if let Some(first) = seen.insert((u, i), ln) {
            return Err(parse(
                ln,
                format!(
                    "duplicate rating for user {} item {} (first on line {first})",
                    fields[0], fields[1]
                ),
            ));
        }
        triples.push((u, i, rating));
    }
    if triples.is_empty() {
        return Err(parse(0, "no ratings found".into()));
    }
    Ok(RatingsDataset {
        user_ids,
        item_ids,
        triples,
        provenance: format!("read from {}", path.display()),
    })
}

/// Writes `user<sep>item<sep>rating` lines using the original ids.
pub fn write_ratings(ds: &RatingsDataset, path: impl AsRef<Path>, separator: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &(u, i, r) in &ds.triples {
        writeln!(w, "{}{separator}{}{separator}{r:?}", ds.user_ids[u], ds.item_ids[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform random split into disjoint train and test sets sharing the
/// `nusers x nitems` frame. The train size is `round(fraction * n)`, clamped
/// so neither side is empty.
pub fn split_ratings(ds: &RatingsDataset, train_fraction: f64, seed: u64) -> Result<(SampledMatrix, SampledMatrix)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two ratings to split".into()));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&k| ds.triples[k]).collect::<Vec<_>>();
    let train = SampledMatrix::from_triplets(ds.nusers(), ds.nitems(), pick(&order[..n_train]))?;
    let test = SampledMatrix::from_triplets(ds.nusers(), ds.nitems(), pick(&order[n_train..]))?;
    Ok((train, test))
}
