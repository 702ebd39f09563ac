//! Ordinal response data and univariate cutpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_quantile;

/// An n×d matrix of ordinal responses, item j taking values in `0..K_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    n: usize,
    d: usize,
    values: Vec<u8>,
    categories: Vec<usize>,
    names: Vec<String>,
}

impl ResponseMatrix {
    /// Builds a matrix from rows. Category counts default to `max + 1` per item.
    pub fn new(
        rows: &[Vec<usize>],
        categories: Option<Vec<usize>>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Data(format!(
                    "row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
            for &y in r {
                let y =
                    u8::try_from(y).map_err(|_| Error::Data(format!("category {y} too large")))?;
                values.push(y);
            }
        }
        Self::from_flat(n, d, values, categories, names)
    }

    /// Builds a matrix from row-major values.
    pub fn from_flat(
        n: usize,
        d: usize,
        values: Vec<u8>,
        categories: Option<Vec<usize>>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 respondents, got {n}")));
        }
        if d < 3 {
            return Err(Error::Data(format!("need at least 3 items, got {d}")));
        }
        if values.len() != n * d {
            return Err(Error::Data(format!(
                "{} values for a {n}x{d} matrix",
                values.len()
            )));
        }
        let observed: Vec<usize> = (0..d)
            .map(|j| {
                (0..n)
                    .map(|i| values[i * d + j] as usize)
                    .max()
                    .unwrap_or(0)
                    + 1
            })
            .collect();
        let categories = match categories {
            Some(k) => {
                if k.len() != d {
                    return Err(Error::Data(format!(
                        "{} category counts for {d} items",
                        k.len()
                    )));
                }
                for j in 0..d {
                    if k[j] < observed[j] {
                        return Err(Error::Data(format!(
                            "item {j} has value {} but only {} categories",
                            observed[j] - 1,
                            k[j]
                        )));
                    }
                }
                k
            }
            None => observed,
        };
        let names = match names {
            Some(nm) if nm.len() != d => {
                return Err(Error::Data(format!(
                    "{} item names for {d} items",
                    nm.len()
                )));
            }
            Some(nm) => nm,
            None => (1..=d).map(|j| format!("Y{j}")).collect(),
        };
        Ok(ResponseMatrix {
            n,
            d,
            values,
            categories,
            names,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.values[i * self.d + j] as usize
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    pub fn item_names(&self) -> &[String] {
        &self.names
    }

    /// Frequency of each category of item `j`.
    pub fn counts(&self, j: usize) -> Vec<usize> {
        let mut c = vec![0; self.categories[j]];
        for r in self.rows() {
            c[r[j] as usize] += 1;
        }
        c
    }

    /// K_j × K_k contingency table of items `j` and `k`.
    pub fn crosstab(&self, j: usize, k: usize) -> Vec<Vec<usize>> {
        let mut t = vec![vec![0; self.categories[k]]; self.categories[j]];
        for r in self.rows() {
            t[r[j] as usize][r[k] as usize] += 1;
        }
        t
    }

    /// Distinct response patterns with their multiplicities, in lexicographic order.
    pub fn unique_rows(&self) -> Vec<(Vec<u8>, usize)> {
        let mut m: BTreeMap<&[u8], usize> = BTreeMap::new();
        for r in self.rows() {
            *m.entry(r).or_default() += 1;
        }
        m.into_iter().map(|(r, c)| (r.to_vec(), c)).collect()
    }

    /// Matrix restricted to the given rows, keeping the declared category counts.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::from_flat(
            idx.len(),
            self.d,
            values,
            Some(self.categories.clone()),
            Some(self.names.clone()),
        )
    }
}

/// Per-item cutpoints `0 = a_0 < a_1 < … < a_K = 1` and their normal images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCutpoints")]
pub struct CutpointSet {
    a: Vec<Vec<f64>>,
    #[serde(skip)]
    alpha: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawCutpoints {
    a: Vec<Vec<f64>>,
}

impl TryFrom<RawCutpoints> for CutpointSet {
    type Error = Error;
    fn try_from(raw: RawCutpoints) -> Result<Self> {
        CutpointSet::new(raw.a)
    }
}

impl CutpointSet {
    pub fn new(a: Vec<Vec<f64>>) -> Result<Self> {
        for (j, aj) in a.iter().enumerate() {
            if aj.len() < 3 {
                return Err(Error::Data(format!("item {j} needs at least 2 categories")));
            }
            if aj[0] != 0.0 || *aj.last().unwrap() != 1.0 {
                return Err(Error::Data(format!(
                    "item {j} cutpoints must start at 0 and end at 1"
                )));
            }
            if !aj.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Data(format!(
                    "item {j} cutpoints not strictly increasing: {aj:?}"
                )));
            }
        }
        let alpha = a
            .iter()
            .map(|aj| aj.iter().map(|&x| norm_quantile(x)).collect())
            .collect();
        Ok(CutpointSet { a, alpha })
    }

    /// Equal-probability cutpoints `k/K` for every item.
    pub fn uniform(d: usize, k: usize) -> Result<Self> {
        Self::new(vec![(0..=k).map(|i| i as f64 / k as f64).collect(); d])
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn item(&self, j: usize) -> &[f64] {
        &self.a[j]
    }

    pub fn alpha(&self, j: usize) -> &[f64] {
        &self.alpha[j]
    }

    pub fn categories(&self, j: usize) -> usize {
        self.a[j].len() - 1
    }

    pub fn all(&self) -> &[Vec<f64>] {
        &self.a
    }

    /// Marginal probability of category `y` of item `j`.
    pub fn prob(&self, j: usize, y: usize) -> f64 {
        self.a[j][y + 1] - self.a[j][y]
    }

    pub fn check_matches(&self, data: &ResponseMatrix) -> Result<()> {
        if self.d() != data.d() {
            return Err(Error::InvalidInput(format!(
                "cutpoints for {} items, data has {}",
                self.d(),
                data.d()
            )));
        }
        for j in 0..data.d() {
            if self.categories(j) < data.categories()[j] {
                return Err(Error::InvalidInput(format!(
                    "item {j}: {} cutpoint categories but data declares {}",
                    self.categories(j),
                    data.categories()[j]
                )));
            }
        }
        Ok(())
    }
}

/// Policy for categories with no observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyCategoryPolicy {
    #[default]
    Reject,
    MergeAdjacent,
}

/// One category that was folded into its neighbour by the merge policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedCategory {
    pub item: usize,
    pub category: usize,
}

/// Cumulative sample proportions, rejecting unobserved categories.
pub fn estimate_cutpoints(data: &ResponseMatrix) -> Result<CutpointSet> {
    let mut a = Vec::with_capacity(data.d());
    for j in 0..data.d() {
        let counts = data.counts(j);
        check_item(j, &counts)?;
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "item {j}: category {k} is never observed"
            )));
        }
        a.push(cumulative(&counts, data.n()));
    }
    CutpointSet::new(a)
}

/// Like [`estimate_cutpoints`], but unobserved categories are removed and the
/// data recoded so that categories stay contiguous.
pub fn estimate_cutpoints_merging(
    data: &ResponseMatrix,
) -> Result<(ResponseMatrix, CutpointSet, Vec<MergedCategory>)> {
    let d = data.d();
    let mut remap: Vec<Vec<u8>> = Vec::with_capacity(d);
    let mut merged = Vec::new();
    let mut new_k = Vec::with_capacity(d);
    for j in 0..d {
        let counts = data.counts(j);
        check_item(j, &counts)?;
        let mut map = Vec::with_capacity(counts.len());
        let mut next = 0u8;
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                warn!("item {j}: merging unobserved category {k} into its neighbour");
                merged.push(MergedCategory {
                    item: j,
                    category: k,
                });
            }
            map.push(next);
            if c > 0 {
                next += 1;
            }
        }
        new_k.push(next as usize);
        remap.push(map);
    }
    let values: Vec<u8> = data
        .rows()
        .flat_map(|r| r.iter().enumerate().map(|(j, &y)| remap[j][y as usize]))
        .collect();
    let recoded = ResponseMatrix::from_flat(
        data.n(),
        d,
        values,
        Some(new_k),
        Some(data.item_names().to_vec()),
    )?;
    let cut = estimate_cutpoints(&recoded)?;
    Ok((recoded, cut, merged))
}

pub fn estimate_cutpoints_with(
    data: &ResponseMatrix,
    policy: EmptyCategoryPolicy,
) -> Result<(ResponseMatrix, CutpointSet, Vec<MergedCategory>)> {
    match policy {
        EmptyCategoryPolicy::Reject => Ok((data.clone(), estimate_cutpoints(data)?, Vec::new())),
        EmptyCategoryPolicy::MergeAdjacent => estimate_cutpoints_merging(data),
    }
}

fn check_item(j: usize, counts: &[usize]) -> Result<()> {
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Data(format!(
            "item {j} is degenerate: fewer than two observed categories"
        )));
    }
    Ok(())
}

fn cumulative(counts: &[usize], n: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(counts.len() + 1);
    a.push(0.0);
    let mut acc = 0usize;
    for &c in &counts[..counts.len() - 1] {
        acc += c;
        a.push(acc as f64 / n as f64);
    }
    a.push(1.0);
    a
}

/// For each item, the original labels in the order they were mapped to `0, 1, …`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub items: Vec<ItemLabels>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLabels {
    pub name: String,
    pub labels: Vec<i64>,
}

impl LabelMap {
    /// True when every item already used the labels `0..K`.
    pub fn is_identity(&self) -> bool {
        self.items
            .iter()
            .all(|it| it.labels.iter().enumerate().all(|(k, &l)| l == k as i64))
    }
}

/// Reads a CSV with a header of item names and one integer-coded row per
/// respondent. Labels of each item are remapped, in increasing order, to
/// `0..K_j`.
pub fn read_csv<R: Read>(reader: R) -> Result<(ResponseMatrix, LabelMap)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let d = names.len();
    let mut raw: Vec<i64> = Vec::new();
    let mut n = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, cell) in rec.iter().enumerate() {
            let v: i64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "row {}, column '{}': '{cell}' is not an integer",
                    i + 1,
                    names[j]
                ))
            })?;
            raw.push(v);
        }
        n += 1;
    }
    if d == 0 {
        return Err(Error::Data("CSV has no columns".into()));
    }
    let mut items = Vec::with_capacity(d);
    let mut lookup: Vec<BTreeMap<i64, u8>> = Vec::with_capacity(d);
    for j in 0..d {
        let labels: BTreeSet<i64> = (0..n).map(|i| raw[i * d + j]).collect();
        if labels.len() > 255 {
            return Err(Error::Data(format!(
                "column '{}' has more than 255 distinct labels",
                names[j]
            )));
        }
        let labels: Vec<i64> = labels.into_iter().collect();
        lookup.push(
            labels
                .iter()
                .enumerate()
                .map(|(k, &l)| (l, k as u8))
                .collect(),
        );
        items.push(ItemLabels {
            name: names[j].clone(),
            labels,
        });
    }
    let values = raw
        .iter()
        .enumerate()
        .map(|(idx, v)| lookup[idx % d][v])
        .collect();
    let data = ResponseMatrix::from_flat(n, d, values, None, Some(names))?;
    Ok((data, LabelMap { items }))
}

pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<(ResponseMatrix, LabelMap)> {
    read_csv(std::fs::File::open(path)?)
}

pub fn write_csv<W: Write>(writer: W, data: &ResponseMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.item_names())?;
    let mut buf = Vec::with_capacity(data.d());
    for r in data.rows() {
        buf.clear();
        buf.extend(r.iter().map(|y| y.to_string()));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}
