//! Per-field term statistics: term frequencies, collection frequencies, document
//! frequencies and lengths. One index is built per product field.
//!
//! ## Cache layout
//!
//! All integers are little-endian. Strings are a `u32` byte length followed by UTF-8.
//!
//! ```text
//! magic        12 bytes  "PRODREL-IDX\0"
//! version      u32       1
//! fingerprint  string    digest of the pipeline configuration and product texts
//! fields       u32       number of field sections
//! per field:
//!   name       string    "title" | "description" | "attributes"
//!   docs       u32       then per document, ascending uid: uid u64, length u32
//!   terms      u32       then per term, ascending: term string, postings u32,
//!                        then per posting, ascending uid: uid u64, tf u32
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ProductId, ProductRecord};
use crate::error::{Error, Result};
use crate::text::{preprocess, PipelineConfig, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Description,
    Attributes,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Title, Field::Description, Field::Attributes];

    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Description => "description",
            Field::Attributes => "attributes",
        }
    }

    pub fn text(self, product: &ProductRecord) -> std::borrow::Cow<'_, str> {
        match self {
            Field::Title => product.title.as_str().into(),
            Field::Description => product.description.as_str().into(),
            Field::Attributes => product.attribute_text().into(),
        }
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::CacheFormat(format!("unknown field `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldIndex {
    field: Field,
    postings: HashMap<String, BTreeMap<ProductId, u32>>,
    doc_length: BTreeMap<ProductId, u32>,
    ctf: HashMap<String, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionStats {
    pub collection_length: u64,
    pub num_documents: usize,
    pub avg_doc_length: f64,
}

impl FieldIndex {
    /// Builds from already-preprocessed documents.
    pub fn from_documents<I>(field: Field, docs: I) -> Result<(Self, CollectionStats)>
    where
        I: IntoIterator<Item = (ProductId, TokenSeq)>,
    {
        let mut postings: HashMap<String, BTreeMap<ProductId, u32>> = HashMap::new();
        let mut doc_length = BTreeMap::new();
        for (uid, tokens) in docs {
            doc_length.insert(uid, tokens.len() as u32);
            for t in tokens.iter() {
                *postings
                    .entry(t.clone())
                    .or_default()
                    .entry(uid)
                    .or_default() += 1;
            }
        }
        Self::assemble(field, postings, doc_length)
    }

    fn assemble(
        field: Field,
        postings: HashMap<String, BTreeMap<ProductId, u32>>,
        doc_length: BTreeMap<ProductId, u32>,
    ) -> Result<(Self, CollectionStats)> {
        if doc_length.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let ctf = postings
            .iter()
            .map(|(t, p)| (t.clone(), p.values().map(|&c| u64::from(c)).sum()))
            .collect();
        let index = FieldIndex {
            field,
            postings,
            doc_length,
            ctf,
        };
        let stats = index.stats();
        Ok((index, stats))
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn stats(&self) -> CollectionStats {
        let collection_length: u64 = self.doc_length.values().map(|&l| u64::from(l)).sum();
        let num_documents = self.doc_length.len();
        CollectionStats {
            collection_length,
            num_documents,
            avg_doc_length: collection_length as f64 / num_documents as f64,
        }
    }

    pub fn tf(&self, term: &str, uid: ProductId) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.get(&uid))
            .copied()
            .unwrap_or(0)
    }

    pub fn ctf(&self, term: &str) -> u64 {
        self.ctf.get(term).copied().unwrap_or(0)
    }

    pub fn df(&self, term: &str) -> u32 {
        self.postings.get(term).map_or(0, |p| p.len() as u32)
    }

    pub fn doc_length(&self, uid: ProductId) -> u32 {
        self.doc_length.get(&uid).copied().unwrap_or(0)
    }

    pub fn contains_doc(&self, uid: ProductId) -> bool {
        self.doc_length.contains_key(&uid)
    }

    pub fn postings(&self, term: &str) -> Option<&BTreeMap<ProductId, u32>> {
        self.postings.get(term)
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn documents(&self) -> impl Iterator<Item = (ProductId, u32)> + '_ {
        self.doc_length.iter().map(|(&u, &l)| (u, l))
    }
}

/// Preprocesses one field of every product and indexes it. Tokenization runs in
/// parallel; counts are merged in uid order.
pub fn build_index(
    products: &BTreeMap<ProductId, ProductRecord>,
    field: Field,
    config: &PipelineConfig,
) -> Result<(FieldIndex, CollectionStats)> {
    let docs: Vec<(ProductId, TokenSeq)> = products
        .par_iter()
        .map(|(&uid, p)| (uid, preprocess(&field.text(p), config)))
        .collect();
    FieldIndex::from_documents(field, docs)
}

pub fn tf(index: &FieldIndex, term: &str, uid: ProductId) -> u32 {
    index.tf(term, uid)
}

/// The three per-field indexes used for feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldIndexes {
    pub title: FieldIndex,
    pub description: FieldIndex,
    pub attributes: FieldIndex,
}

impl FieldIndexes {
    pub fn build(
        products: &BTreeMap<ProductId, ProductRecord>,
        config: &PipelineConfig,
    ) -> Result<Self> {
        Ok(FieldIndexes {
            title: build_index(products, Field::Title, config)?.0,
            description: build_index(products, Field::Description, config)?.0,
            attributes: build_index(products, Field::Attributes, config)?.0,
        })
    }

    pub fn get(&self, field: Field) -> &FieldIndex {
        match field {
            Field::Title => &self.title,
            Field::Description => &self.description,
            Field::Attributes => &self.attributes,
        }
    }

    /// Loads a cache when it exists and matches both `config` and the product
    /// texts; otherwise builds and writes it.
    pub fn load_or_build(
        cache: &Path,
        products: &BTreeMap<ProductId, ProductRecord>,
        config: &PipelineConfig,
    ) -> Result<Self> {
        let key = cache_key(products, config);
        match read_cache(cache, &key) {
            Ok(found) => return Ok(found),
            Err(Error::Io { .. }) | Err(Error::CacheStale) => {}
            Err(e) => return Err(e),
        }
        let built = Self::build(products, config)?;
        write_cache(cache, &built, &key)?;
        Ok(built)
    }
}

/// Digest of the pipeline configuration and every indexed product field.
pub fn cache_key(products: &BTreeMap<ProductId, ProductRecord>, config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.fingerprint().as_bytes());
    for (uid, p) in products {
        h.update(uid.0.to_le_bytes());
        for field in Field::ALL {
            let text = field.text(p);
            h.update((text.len() as u64).to_le_bytes());
            h.update(text.as_bytes());
        }
    }
    h.finalize()
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect()
}

const MAGIC: &[u8; 12] = b"PRODREL-IDX\0";
const VERSION: u32 = 1;

pub fn write_cache(path: &Path, indexes: &FieldIndexes, fingerprint: &str) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_str(&mut buf, fingerprint);
    put_u32(&mut buf, 3);
    for field in Field::ALL {
        let index = indexes.get(field);
        put_str(&mut buf, field.name());
        put_u32(&mut buf, index.doc_length.len() as u32);
        for (uid, len) in &index.doc_length {
            buf.extend_from_slice(&uid.0.to_le_bytes());
            put_u32(&mut buf, *len);
        }
        let mut terms: Vec<&String> = index.postings.keys().collect();
        terms.sort();
        put_u32(&mut buf, terms.len() as u32);
        for term in terms {
            put_str(&mut buf, term);
            let postings = &index.postings[term];
            put_u32(&mut buf, postings.len() as u32);
            for (uid, tf) in postings {
                buf.extend_from_slice(&uid.0.to_le_bytes());
                put_u32(&mut buf, *tf);
            }
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path, expected_fingerprint: &str) -> Result<FieldIndexes> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CacheFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CacheFormat(format!("unsupported version {version}")));
    }
    if r.string()? != expected_fingerprint {
        return Err(Error::CacheStale);
    }
    let n_fields = r.u32()?;
    let mut found: BTreeMap<Field, FieldIndex> = BTreeMap::new();
    for _ in 0..n_fields {
        let field: Field = r.string()?.parse()?;
        let mut doc_length = BTreeMap::new();
        for _ in 0..r.u32()? {
            let uid = ProductId(r.u64()?);
            doc_length.insert(uid, r.u32()?);
        }
        let mut postings = HashMap::new();
        for _ in 0..r.u32()? {
            let term = r.string()?;
            let mut list = BTreeMap::new();
            for _ in 0..r.u32()? {
                let uid = ProductId(r.u64()?);
                list.insert(uid, r.u32()?);
            }
            postings.insert(term, list);
        }
        found.insert(field, FieldIndex::assemble(field, postings, doc_length)?.0);
    }
    if r.pos != bytes.len() {
        return Err(Error::CacheFormat("trailing bytes".into()));
    }
    let mut take = |f: Field| {
        found
            .remove(&f)
            .ok_or_else(|| Error::CacheFormat(format!("missing field {}", f.name())))
    };
    Ok(FieldIndexes {
        title: take(Field::Title)?,
        description: take(Field::Description)?,
        attributes: take(Field::Attributes)?,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CacheFormat("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CacheFormat("invalid utf-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use proptest::prelude::*;

    pub(crate) fn toy() -> (FieldIndex, CollectionStats) {
        FieldIndex::from_documents(
            Field::Description,
            [
                (ProductId(1), tokenize("red red door")),
                (ProductId(2), tokenize("red paint")),
            ],
        )
        .unwrap()
    }

    #[test]
    fn toy_counts() {
        let (idx, stats) = toy();
        assert_eq!(idx.ctf("red"), 3);
        assert_eq!(idx.df("red"), 2);
        assert_eq!(idx.tf("red", ProductId(1)), 2);
        assert_eq!(stats.collection_length, 5);
        assert_eq!(stats.num_documents, 2);
        assert_eq!(stats.avg_doc_length, 2.5);
        assert_eq!(idx.tf("blue", ProductId(1)), 0);
        assert_eq!(idx.tf("red", ProductId(9)), 0);
    }

    #[test]
    fn single_empty_document() {
        let (idx, stats) =
            FieldIndex::from_documents(Field::Attributes, [(ProductId(1), TokenSeq::default())])
                .unwrap();
        assert_eq!(idx.doc_length(ProductId(1)), 0);
        assert_eq!(idx.num_terms(), 0);
        assert_eq!(stats.collection_length, 0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: Vec<(ProductId, TokenSeq)> = Vec::new();
        assert!(matches!(
            FieldIndex::from_documents(Field::Title, empty),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn cache_round_trip_and_staleness() {
        let products: BTreeMap<ProductId, ProductRecord> = [
            (
                1,
                "Angle Bracket",
                "galvanized steel angle",
                vec![("Color", "Silver")],
            ),
            (2, "Exterior Paint", "one coat paint", vec![]),
        ]
        .into_iter()
        .map(|(id, t, d, a)| {
            (
                ProductId(id),
                ProductRecord {
                    product_uid: ProductId(id),
                    title: t.into(),
                    description: d.into(),
                    attributes: a
                        .into_iter()
                        .map(|(n, v)| crate::corpus::Attribute {
                            name: n.into(),
                            value: v.into(),
                        })
                        .collect(),
                },
            )
        })
        .collect();
        let cfg = PipelineConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let built = FieldIndexes::load_or_build(&path, &products, &cfg).unwrap();
        let key = cache_key(&products, &cfg);
        let loaded = read_cache(&path, &key).unwrap();
        assert_eq!(built, loaded);
        assert_eq!(loaded.attributes.tf("silver", ProductId(1)), 1);
        let other = PipelineConfig {
            stem: false,
            ..cfg.clone()
        };
        assert!(matches!(
            read_cache(&path, &cache_key(&products, &other)),
            Err(Error::CacheStale)
        ));
        let mut edited = products.clone();
        edited
            .get_mut(&ProductId(2))
            .unwrap()
            .description
            .push_str(" gloss");
        assert!(matches!(
            read_cache(&path, &cache_key(&edited, &cfg)),
            Err(Error::CacheStale)
        ));
        let rebuilt = FieldIndexes::load_or_build(&path, &edited, &cfg).unwrap();
        assert_eq!(rebuilt.description.tf("gloss", ProductId(2)), 1);
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(
            read_cache(&path, &key),
            Err(Error::CacheFormat(_))
        ));
    }

    proptest! {
        #[test]
        fn matches_naive_rescan(docs in proptest::collection::vec(
            proptest::collection::vec(0u8..8, 0..12), 1..10)
        ) {
            let corpus: Vec<(ProductId, Vec<String>)> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| (ProductId(i as u64), d.iter().map(|t| format!("t{t}")).collect()))
                .collect();
            let (idx, stats) = FieldIndex::from_documents(
                Field::Title,
                corpus.iter().map(|(u, d)| (*u, TokenSeq::from_tokens(d.clone()))),
            ).unwrap();
            let rebuilt = FieldIndex::from_documents(
                Field::Title,
                corpus.iter().map(|(u, d)| (*u, TokenSeq::from_tokens(d.clone()))),
            ).unwrap();
            prop_assert_eq!(&idx, &rebuilt.0);
            let mut total = 0u64;
            for (uid, doc) in &corpus {
                prop_assert_eq!(idx.doc_length(*uid) as usize, doc.len());
                total += doc.len() as u64;
            }
            prop_assert_eq!(stats.collection_length, total);
            for t in 0u8..9 {
                let term = format!("t{t}");
                let tfs: Vec<u32> = corpus
                    .iter()
                    .map(|(_, d)| d.iter().filter(|x| **x == term).count() as u32)
                    .collect();
                for ((uid, _), &expected) in corpus.iter().zip(&tfs) {
                    prop_assert_eq!(idx.tf(&term, *uid), expected);
                }
                prop_assert_eq!(idx.ctf(&term), tfs.iter().map(|&x| u64::from(x)).sum::<u64>());
                prop_assert_eq!(idx.df(&term) as usize, tfs.iter().filter(|&&x| x > 0).count());
            }
        }
    }
}
