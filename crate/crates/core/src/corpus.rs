//! Loading and joining the three relational tables: labeled (or test) instances,
//! product descriptions and product attributes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductId(pub u64);

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductRecord {
    pub product_uid: ProductId,
    pub title: String,
    pub description: String,
    /// Source order is preserved.
    pub attributes: Vec<Attribute>,
}

impl ProductRecord {
    /// Attribute text as indexed: `name value` pairs joined in source order.
    pub fn attribute_text(&self) -> String {
        let mut out = String::new();
        for attr in &self.attributes {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&attr.name);
            out.push(' ');
            out.push_str(&attr.value);
        }
        out
    }
}

/// One (query, product) pair. `relevance` is absent for rows from the test table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub id: u64,
    pub product_uid: ProductId,
    pub search_term: String,
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub instances: Vec<LabeledInstance>,
    pub products: BTreeMap<ProductId, ProductRecord>,
}

impl Corpus {
    pub fn product(&self, uid: ProductId) -> &ProductRecord {
        &self.products[&uid]
    }

    pub fn labeled(&self) -> impl Iterator<Item = &LabeledInstance> {
        self.instances.iter().filter(|i| i.relevance.is_some())
    }
}

/// Loads the training table and joins it with descriptions and attributes.
pub fn load_tables(
    train_path: impl AsRef<Path>,
    descriptions_path: impl AsRef<Path>,
    attributes_path: impl AsRef<Path>,
) -> Result<Corpus> {
    load_corpus(
        &[train_path.as_ref()],
        descriptions_path.as_ref(),
        attributes_path.as_ref(),
    )
}

/// Loads any number of instance tables (train and/or test) against one product corpus.
///
/// Only products referenced by some instance are kept. Titles come from the instance tables.
pub fn load_corpus(
    instance_paths: &[&Path],
    descriptions_path: &Path,
    attributes_path: &Path,
) -> Result<Corpus> {
    let mut instances = Vec::new();
    let mut titles: HashMap<ProductId, String> = HashMap::new();
    for path in instance_paths {
        read_instances(path, &mut instances, &mut titles)?;
    }

    let mut descriptions = read_descriptions(descriptions_path)?;
    let mut attributes = read_attributes(attributes_path)?;

    let mut products = BTreeMap::new();
    for inst in &instances {
        let uid = inst.product_uid;
        if products.contains_key(&uid) {
            continue;
        }
        let description = descriptions
            .remove(&uid)
            .ok_or(Error::MissingDescription(uid.0))?;
        products.insert(
            uid,
            ProductRecord {
                product_uid: uid,
                title: titles.remove(&uid).unwrap_or_default(),
                description,
                attributes: attributes.remove(&uid).unwrap_or_default(),
            },
        );
    }
    Ok(Corpus {
        instances,
        products,
    })
}

struct Table {
    reader: csv::Reader<std::fs::File>,
    columns: HashMap<String, usize>,
    path: std::path::PathBuf,
}

impl Table {
    fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(file);
        let headers = reader
            .byte_headers()
            .map_err(|e| csv_error(path, e))?
            .clone();
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let name = String::from_utf8_lossy(h);
                (name.trim_start_matches('\u{feff}').trim().to_lowercase(), i)
            })
            .collect();
        Ok(Table {
            reader,
            columns,
            path: path.to_path_buf(),
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn {
                path: self.path.clone(),
                column: name.to_string(),
            })
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.columns.get(name).copied()
    }

    /// Visits every record with its 1-based starting line number.
    fn for_each(&mut self, mut f: impl FnMut(&Row<'_>) -> Result<()>) -> Result<()> {
        let mut record = csv::ByteRecord::new();
        loop {
            match self.reader.read_byte_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    f(&Row {
                        record: &record,
                        line,
                        path: &self.path,
                    })?;
                }
                Err(e) => return Err(csv_error(&self.path, e)),
            }
        }
    }
}

struct Row<'a> {
    record: &'a csv::ByteRecord,
    line: u64,
    path: &'a Path,
}

impl Row<'_> {
    fn text(&self, col: usize) -> Result<String> {
        self.record
            .get(col)
            .map(|b| String::from_utf8_lossy(b).into_owned())
            .ok_or_else(|| self.malformed(format!("missing field {col}")))
    }

    fn integer(&self, col: usize) -> Result<u64> {
        let raw = self.text(col)?;
        raw.trim()
            .parse()
            .map_err(|_| self.malformed(format!("`{raw}` is not an integer")))
    }

    fn malformed(&self, reason: String) -> Error {
        Error::MalformedRow {
            path: self.path.to_path_buf(),
            line: self.line,
            reason,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: format!("{other:?}"),
        },
    }
}

fn read_instances(
    path: &Path,
    instances: &mut Vec<LabeledInstance>,
    titles: &mut HashMap<ProductId, String>,
) -> Result<()> {
    let mut table = Table::open(path)?;
    let id_col = table.column("id")?;
    let uid_col = table.column("product_uid")?;
    let title_col = table.column("product_title")?;
    let term_col = table.column("search_term")?;
    let relevance_col = table.optional_column("relevance");
    table.for_each(|row| {
        let id = row.integer(id_col)?;
        let uid = ProductId(row.integer(uid_col)?);
        let relevance = match relevance_col {
            Some(col) => {
                let raw = row.text(col)?;
                let value: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| row.malformed(format!("`{raw}` is not a number")))?;
                if !(1.0..=3.0).contains(&value) {
                    return Err(Error::RelevanceOutOfRange { id, value });
                }
                Some(value)
            }
            None => None,
        };
        titles
            .entry(uid)
            .or_insert_with(|| row.text(title_col).unwrap_or_default());
        instances.push(LabeledInstance {
            id,
            product_uid: uid,
            search_term: row.text(term_col)?,
            relevance,
        });
        Ok(())
    })
}

fn read_descriptions(path: &Path) -> Result<HashMap<ProductId, String>> {
    let mut table = Table::open(path)?;
    let uid_col = table.column("product_uid")?;
    let desc_col = table.column("product_description")?;
    let mut out = HashMap::new();
    table.for_each(|row| {
        let uid = row.integer(uid_col)?;
        if out.insert(ProductId(uid), row.text(desc_col)?).is_some() {
            return Err(Error::DuplicateProduct(uid));
        }
        Ok(())
    })?;
    Ok(out)
}

fn read_attributes(path: &Path) -> Result<HashMap<ProductId, Vec<Attribute>>> {
    let mut table = Table::open(path)?;
    let uid_col = table.column("product_uid")?;
    let name_col = table.column("name")?;
    let value_col = table.column("value")?;
    let mut out: HashMap<ProductId, Vec<Attribute>> = HashMap::new();
    table.for_each(|row| {
        // The public attribute table ends with blank padding rows.
        let raw_uid = row.text(uid_col)?;
        if raw_uid.trim().is_empty() {
            return Ok(());
        }
        let uid = ProductId(row.integer(uid_col)?);
        out.entry(uid).or_default().push(Attribute {
            name: row.text(name_col)?,
            value: row.text(value_col)?,
        });
        Ok(())
    })?;
    Ok(out)
}
